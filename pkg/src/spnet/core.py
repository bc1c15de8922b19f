"""Run-time plumbing shared by the instance classes: packets, marks, lineage, indices."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

from .errors import SPNetError
from .records import Record

Triplet = tuple[int, int, int]
Index = tuple[Triplet, ...]


def format_index(idx: Iterable[Triplet]) -> str:
    return "[" + ";".join(f"({x},{y},{z})" for x, y, z in idx) + "]"


def format_functional(f: Iterable[int]) -> str:
    return "[" + ";".join(str(x) for x in f) + "]"


def functional(idx: Iterable[Triplet]) -> tuple[int, ...]:
    return tuple(t[0] for t in idx)


def parse_index(text: str) -> tuple:
    """Parse ``[(x,y,z);...]`` into triplets or ``[1;2;*]`` into a functional index."""
    s = text.strip()
    if not (s.startswith("[") and s.endswith("]")):
        raise ValueError(f"bad network index {text!r}")
    body = s[1:-1].strip()
    if not body:
        return ()
    parts = [p.strip() for p in body.split(";")]
    if all(p.startswith("(") for p in parts):
        out = []
        for p in parts:
            nums = [int(v) for v in p.strip("()").split(",")]
            if len(nums) != 3:
                raise ValueError(f"bad triplet {p!r}")
            out.append(tuple(nums))
        return tuple(out)
    return tuple(p if p == "*" else int(p) for p in parts)


@dataclass(frozen=True)
class Lineage:
    """Causal ancestry of a record: the external input it stems from plus output positions."""
    root: int
    causal: int = 0
    parent: "Lineage | None" = None

    def chain(self) -> tuple[int, ...]:
        out = []
        n = self
        while n.parent is not None:
            out.append(n.causal)
            n = n.parent
        return (self.root,) + tuple(reversed(out))

    def __str__(self) -> str:
        return ".".join(str(c) for c in self.chain())


class XfnException(SPNetError):
    """Exception raised inside a running network (fault, Violation, Exhaustion, ...)."""

    def __init__(self, kind: str, requirement: str | None = None, origin: Index = (),
                 lineage: Lineage | None = None, detail: str = ""):
        self.kind = kind
        self.requirement = requirement
        self.origin = tuple(origin)
        self.lineage = lineage
        self.detail = detail
        super().__init__(str(self))

    @property
    def name(self) -> str:
        return f"{self.kind}({self.requirement})" if self.requirement else self.kind

    def matches(self, type_name: str) -> bool:
        return type_name in (self.kind, self.name)

    def __str__(self) -> str:
        s = f"{self.name} at {format_index(self.origin)}"
        if self.lineage is not None:
            s += f" lineage {self.lineage}"
        if self.detail:
            s += f": {self.detail}"
        return s


Mark = tuple["Scope", object]


class Packet:
    """A record travelling through the instance tree with its scope marks and index context."""
    __slots__ = ("record", "marks", "idx")

    def __init__(self, record: Record, marks: tuple = (), idx: Index = ()):
        self.record = record
        self.marks = marks
        self.idx = idx

    def push(self, t: Triplet) -> "Packet":
        return Packet(self.record, self.marks, self.idx + (t,))

    def pop(self) -> "Packet":
        return Packet(self.record, self.marks, self.idx[:-1])

    def with_record(self, r: Record) -> "Packet":
        return Packet(r, self.marks, self.idx)

    def key_of(self, scope: "Scope"):
        for s, k in self.marks:
            if s is scope:
                return k
        return None

    def __repr__(self) -> str:
        return f"Packet({self.record!r}, {format_index(self.idx)})"


class Scope:
    """In-flight counters per key; ``on_quiescent(key)`` fires when a key drains.

    A packet entering the scope is stamped with ``(scope, key)``.  A leaf
    turning one packet into ``n`` outputs adjusts every mark on it by n-1,
    and leaving the scope removes the mark.
    """

    def __init__(self, on_quiescent: Callable[[object], None]):
        self.counts: dict = {}
        self.on_quiescent = on_quiescent

    def stamp(self, pkt: Packet, key) -> Packet:
        self.counts[key] = self.counts.get(key, 0) + 1
        return Packet(pkt.record, pkt.marks + ((self, key),), pkt.idx)

    def unstamp(self, pkt: Packet) -> tuple[Packet, object]:
        for i, (s, k) in enumerate(pkt.marks):
            if s is self:
                return Packet(pkt.record, pkt.marks[:i] + pkt.marks[i + 1:], pkt.idx), k
        raise SPNetError("packet leaves a scope it never entered")

    def adjust(self, key, delta: int) -> None:
        if key not in self.counts:
            return
        n = self.counts[key] + delta
        if n <= 0:
            del self.counts[key]
            self.on_quiescent(key)
        else:
            self.counts[key] = n

    def release(self, key) -> None:
        self.adjust(key, -1)

    def inflight(self, key) -> int:
        return self.counts.get(key, 0)

    def forget(self, key) -> None:
        self.counts.pop(key, None)


def consume(pkt: Packet, n: int) -> None:
    """Account for ``pkt`` being replaced by ``n`` packets carrying the same marks."""
    if n == 1:
        return
    for s, k in reversed(pkt.marks):
        s.adjust(k, n - 1)
