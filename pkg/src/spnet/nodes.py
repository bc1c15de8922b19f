"""Specification trees: network nodes, box signatures and transducer specs.

All nodes are frozen dataclasses compared structurally.  Run-time code
identifies a node by its *spec path* (tuple of child positions from the
root), never by object identity, because equal subtrees may occur twice.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields
from typing import Iterator

from .expr import Expr
from .records import GuardPattern, RecordType


# --- boxes ----------------------------------------------------------------

@dataclass(frozen=True)
class PosType:
    """Positional record type as written in a box signature: ``(a, b, <t>)``."""
    labels: tuple[str, ...] = ()
    tag: str | None = None

    @property
    def rtype(self) -> RecordType:
        return RecordType(frozenset(self.labels), self.tag)

    def __str__(self) -> str:
        parts = list(self.labels) + ([f"<{self.tag}>"] if self.tag else [])
        return "(" + ",".join(parts) + ")"


@dataclass(frozen=True)
class BoxSignature:
    input: PosType
    outputs: tuple[PosType, ...]

    def __str__(self) -> str:
        return f"({self.input} -> {' | '.join(str(o) for o in self.outputs)})"


@dataclass(frozen=True)
class BoxEmit:
    expr: Expr
    count: Expr | None = None
    cond: Expr | None = None


@dataclass(frozen=True)
class BoxCost:
    duration: int = 1000     # virtual ns per activation
    storage: int = 0         # bytes held while active
    power: int = 0           # milliwatts while active


@dataclass(frozen=True)
class BoxFaultClause:
    name: str
    when: Expr


@dataclass(frozen=True)
class BoxDecl:
    name: str
    signature: BoxSignature
    script: tuple[BoxEmit, ...] | None = None
    cost: BoxCost | None = None
    faults: tuple[BoxFaultClause, ...] = ()


# --- transducers ----------------------------------------------------------

@dataclass(frozen=True)
class Pattern:
    """Exact-match record pattern, e.g. ``{a, n=0}<p>``."""
    items: tuple[tuple[str, int | None], ...] = ()
    tag: tuple[str, int | None] | None = None

    @property
    def rtype(self) -> RecordType:
        return RecordType(frozenset(k for k, _ in self.items), self.tag[0] if self.tag else None)

    def __str__(self) -> str:
        body = ", ".join(k if v is None else f"{k}={v}" for k, v in self.items)
        s = "{" + body + "}"
        if self.tag:
            s += f"<{self.tag[0]}>" if self.tag[1] is None else f"<{self.tag[0]}={self.tag[1]}>"
        return s


@dataclass(frozen=True)
class PatternGuard:
    pattern: Pattern
    rest: str | None = None


@dataclass(frozen=True)
class RemainderGuard:
    var: str


@dataclass(frozen=True)
class GuardRef:
    name: str
    index: Expr
    rest: str | None = None


@dataclass(frozen=True)
class EmptyGuard:
    pass


Guard = PatternGuard | RemainderGuard | GuardRef | EmptyGuard


@dataclass(frozen=True)
class Emit:
    expr: Expr


@dataclass(frozen=True)
class AssignHold:
    name: str
    index: Expr | None
    expr: Expr


@dataclass(frozen=True)
class Reset:
    targets: tuple[tuple[str, Expr | None], ...]


Action = Emit | AssignHold | Reset


@dataclass(frozen=True)
class StateName:
    name: str


@dataclass(frozen=True)
class StateExpr:
    expr: Expr


@dataclass(frozen=True)
class BitPat:
    """``s[i]`` / ``~s[i]`` / ``s[lo..hi]``: a set of bits required set (or clear)."""
    negate: bool
    array: str
    lo: Expr
    hi: Expr | None = None


@dataclass(frozen=True)
class AnyState:
    pass


LabelPat = StateName | StateExpr | BitPat | AnyState


@dataclass(frozen=True)
class LabelDecl:
    kind: str                  # "named" | "range" | "bits"
    lo: int = 0
    hi: int = 0
    name: str | None = None    # bit-array name
    size: int = 0              # bit count


@dataclass(frozen=True)
class Transition:
    origin: LabelPat
    guard: Guard
    actions: tuple[Action, ...]
    result: LabelPat | None = None
    iterator: tuple[str, int, int] | None = None


@dataclass(frozen=True)
class TransducerSpec:
    label_decl: LabelDecl
    hold_decls: tuple[tuple[str, int], ...] = ()
    guard_decls: tuple[tuple[str, tuple[Pattern, ...]], ...] = ()
    transitions: tuple[Transition, ...] = ()
    states: tuple[str, ...] = ()           # named states in declaration order
    sugar_origin: tuple[Pattern, ...] | None = field(default=None, compare=False)
    array_holds: frozenset[str] = frozenset()


# --- extra-functional parameters -----------------------------------------

@dataclass(frozen=True)
class BudgetSpec:
    kind: str                  # mp mc mfl mll mti mto mdla mdaa mdpa
    ratio: float | None = None
    amount: float | None = None  # base units: mW, bytes, ns, records/s, count
    text: str = ""

    def __str__(self) -> str:
        return f"{self.kind}({self.text})"


@dataclass(frozen=True)
class AssignSpec:
    mode: str                  # share | split
    selector: str              # "/0/1", "/0/*", "*", "[kind=core]"

    def __str__(self) -> str:
        return f"{self.mode}({self.selector})"


@dataclass(frozen=True)
class EnvFunction:
    kind: str
    label: str | None = None
    index: tuple[int, ...] = ()
    granularity: int = 1
    prop: str | None = None

    def __str__(self) -> str:
        if self.kind == "time":
            return f"time({self.granularity})"
        idx = "[" + ";".join(str(i) for i in self.index) + "]"
        args = [self.label or "", idx]
        if self.kind == "h":
            args.append(self.prop or "")
        elif self.kind not in ("dla", "daa", "dpa"):
            args.append(str(self.granularity))
        return f"{self.kind}({','.join(args)})"


# --- network nodes --------------------------------------------------------

class Node:
    """Base class for network specification nodes."""

    def children(self) -> tuple["Node", ...]:
        return ()

    def replace_children(self, kids: tuple["Node", ...]) -> "Node":
        return self


@dataclass(frozen=True)
class Box(Node):
    name: str
    signature: BoxSignature | None = None


@dataclass(frozen=True)
class Transduce(Node):
    spec: TransducerSpec
    source: str = field(default="", compare=False)


@dataclass(frozen=True)
class EnvObserve(Node):
    tag: str | None
    field: str | None
    env_fn: EnvFunction


class _Nary(Node):
    def children(self):
        return self.items

    def replace_children(self, kids):
        return type(self)(tuple(kids))


@dataclass(frozen=True)
class Comp(_Nary):
    items: tuple[Node, ...]


@dataclass(frozen=True)
class Select(_Nary):
    items: tuple[Node, ...]


class _Unary(Node):
    def children(self):
        return (self.inner,)

    def replace_children(self, kids):
        vals = {f.name: getattr(self, f.name) for f in dc_fields(self)}
        vals["inner"] = kids[0]
        return type(self)(**vals)


@dataclass(frozen=True)
class StarComp(_Unary):
    guard: GuardPattern
    inner: Node


@dataclass(frozen=True)
class BangStar(_Unary):
    tag_r: str
    tag_p: str
    inner: Node


@dataclass(frozen=True)
class Reorder(_Unary):
    inner: Node


@dataclass(frozen=True)
class ReplSelect(_Unary):
    tag_c: str
    policy: str
    inner: Node


@dataclass(frozen=True)
class Label(_Unary):
    label: str
    inner: Node


@dataclass(frozen=True)
class ExcHandle(_Unary):
    selector: str | None
    exc_label: str
    exc_type: str
    inner: Node


@dataclass(frozen=True)
class Isolate(_Unary):
    selector: str | None
    property: str
    plus: bool
    inner: Node


@dataclass(frozen=True)
class Budget(_Unary):
    selector: str | None
    budget: BudgetSpec
    inner: Node


@dataclass(frozen=True)
class Project(_Unary):
    selector: str | None
    kind: str                  # ge | gr
    inner: Node


@dataclass(frozen=True)
class Lifetime(_Unary):
    selector: str | None
    kind: str                  # to | te
    inner: Node


@dataclass(frozen=True)
class Assign(_Unary):
    target_sel: str | None
    origin_sel: str | None
    assignment: AssignSpec | None
    inner: Node


XFUN_SELECTING = (ExcHandle, Isolate, Budget, Project, Lifetime, Assign)
REPLICATING = (StarComp, BangStar, ReplSelect)
# nodes that do not add a level to network indices
TRANSPARENT = (Reorder, Label) + XFUN_SELECTING


def walk(node: Node, path: tuple[int, ...] = ()) -> Iterator[tuple[tuple[int, ...], Node]]:
    yield path, node
    for i, c in enumerate(node.children()):
        yield from walk(c, path + (i,))


def node_at(root: Node, path: tuple[int, ...]) -> Node:
    n = root
    for i in path:
        n = n.children()[i]
    return n


def selector_of(node: Node) -> str | None:
    if isinstance(node, Assign):
        return node.target_sel
    return getattr(node, "selector", None)


def erase_xfun(node: Node) -> Node:
    """Drop the functionally neutral nodes (labels, isolation, budgets,
    projections, lifetimes, assignments), keeping everything else."""
    if isinstance(node, (Label, Isolate, Budget, Project, Lifetime, Assign)):
        return erase_xfun(node.inner)
    kids = node.children()
    if not kids:
        return node
    return node.replace_children(tuple(erase_xfun(k) for k in kids))
