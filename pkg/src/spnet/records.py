"""Records, record types, subtyping, flow inheritance and the record text codec."""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .errors import EvalError, ParseError, SPNetTypeError

INT64_MIN = -(2 ** 63)
INT64_MAX = 2 ** 63 - 1

LABEL_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")

_ref_ids = itertools.count(1)


def check_scalar(v: int) -> int:
    if not INT64_MIN <= v <= INT64_MAX:
        raise EvalError(f"scalar overflow: {v}")
    return v


def check_label(name: str) -> str:
    if not isinstance(name, str) or not LABEL_RE.match(name):
        raise ValueError(f"invalid field label {name!r}")
    return name


@dataclass(frozen=True)
class Ref:
    """Opaque handle to a box-language value.  Coordination never looks inside."""
    id: int
    payload: object = field(default=None, compare=False, repr=False)

    @classmethod
    def fresh(cls, payload: object = None) -> "Ref":
        return cls(next(_ref_ids), payload)


Value = int | Ref


@dataclass(frozen=True)
class Tag:
    label: str
    value: int = 0


class Record:
    """Immutable set of label/value fields plus at most one tag.

    Equality ignores the runtime-assigned ``id`` and ``lineage``.
    """

    __slots__ = ("_fields", "tag", "id", "lineage")
    _ids = itertools.count()

    def __init__(self, fields: Mapping[str, Value] | Iterable[tuple[str, Value]] = (),
                 tag: Tag | None = None, lineage=None):
        items = dict(fields)
        for k, v in items.items():
            check_label(k)
            if isinstance(v, bool) or not isinstance(v, (int, Ref)):
                raise SPNetTypeError(f"field {k!r}: unsupported value {v!r}")
            if isinstance(v, int):
                check_scalar(v)
        if tag is not None:
            check_label(tag.label)
            check_scalar(tag.value)
            if tag.label in items:
                raise SPNetTypeError(f"tag <{tag.label}> collides with a field label")
        object.__setattr__(self, "_fields", items)
        object.__setattr__(self, "tag", tag)
        object.__setattr__(self, "id", next(Record._ids))
        object.__setattr__(self, "lineage", lineage)

    def __setattr__(self, name, value):
        raise AttributeError("Record is immutable")

    @property
    def fields(self) -> Mapping[str, Value]:
        return dict(self._fields)

    @property
    def labels(self) -> frozenset[str]:
        return frozenset(self._fields)

    def __getitem__(self, label: str) -> Value:
        return self._fields[label]

    def __contains__(self, label: str) -> bool:
        return label in self._fields

    def get(self, label: str, default=None):
        return self._fields.get(label, default)

    def items(self):
        return self._fields.items()

    def __len__(self) -> int:
        return len(self._fields)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Record):
            return NotImplemented
        return self._fields == other._fields and self.tag == other.tag

    def __hash__(self) -> int:
        return hash((frozenset(self._fields.items()), self.tag))

    def __repr__(self) -> str:
        return f"Record({encode_record(self)})"

    def with_fields(self, **updates: Value) -> "Record":
        d = dict(self._fields)
        d.update(updates)
        return Record(d, self.tag, self.lineage)

    def with_tag(self, tag: Tag | None) -> "Record":
        return Record(self._fields, tag, self.lineage)

    def with_lineage(self, lineage) -> "Record":
        r = Record(self._fields, self.tag)
        object.__setattr__(r, "lineage", lineage)
        return r

    def without(self, labels: Iterable[str]) -> "Record":
        drop = set(labels)
        return Record({k: v for k, v in self._fields.items() if k not in drop}, self.tag, self.lineage)

    @property
    def rtype(self) -> "RecordType":
        return RecordType(self.labels, self.tag.label if self.tag else None)


@dataclass(frozen=True)
class RecordType:
    labels: frozenset[str] = frozenset()
    tag_label: str | None = None

    @classmethod
    def of(cls, *labels: str, tag: str | None = None) -> "RecordType":
        return cls(frozenset(labels), tag)

    def __str__(self) -> str:
        parts = sorted(self.labels)
        if self.tag_label:
            parts.append(f"<{self.tag_label}>")
        return "{" + ",".join(parts) + "}"


@dataclass(frozen=True)
class TypeSignature:
    """Ordered list of (input type, output types) variants."""
    variants: tuple[tuple[RecordType, tuple[RecordType, ...]], ...]

    @property
    def inputs(self) -> list[RecordType]:
        return [v[0] for v in self.variants]

    @property
    def outputs(self) -> list[RecordType]:
        out: list[RecordType] = []
        for _, outs in self.variants:
            for o in outs:
                if o not in out:
                    out.append(o)
        return out

    def __str__(self) -> str:
        parts = []
        for i, outs in self.variants:
            parts.append(f"{i} -> " + (" | ".join(str(o) for o in outs) if outs else "()"))
        return "; ".join(parts)


@dataclass(frozen=True)
class GuardPattern:
    type: RecordType
    predicate: object = None  # expr.Expr, evaluated over the record's scalars

    def __str__(self) -> str:
        s = str(self.type)
        if self.predicate is not None:
            s += f" where {self.predicate}"
        return s


def matches(r: Record, t: RecordType, strict_tag: bool = True) -> bool:
    if not t.labels <= r.labels:
        return False
    if t.tag_label is not None:
        return r.tag is not None and r.tag.label == t.tag_label
    return r.tag is None or not strict_tag


def subtype(t1: RecordType, t2: RecordType) -> bool:
    """True iff ``t1`` is a subtype of ``t2`` (has at least t2's labels, same tag)."""
    return t2.labels <= t1.labels and t1.tag_label == t2.tag_label


def flow_inherit(input: Record, matched: RecordType, produced: Record) -> Record:
    extra = {k: v for k, v in input.items()
             if k not in matched.labels and k not in produced}
    if not extra:
        return produced
    if produced.tag is not None and produced.tag.label in extra:
        del extra[produced.tag.label]
    d = dict(produced.items())
    d.update(extra)
    return Record(d, produced.tag, produced.lineage)


def scalar_env(r: Record) -> dict[str, Value]:
    env = dict(r.items())
    if r.tag is not None:
        env[r.tag.label] = r.tag.value
    return env


def guard_match(r: Record, g: GuardPattern, strict_tag: bool = True,
                evaluate: Callable | None = None) -> bool:
    if not matches(r, g.type, strict_tag):
        return False
    if g.predicate is None:
        return True
    if evaluate is None:
        from .expr import eval_predicate as evaluate
    return bool(evaluate(g.predicate, scalar_env(r)))


def record_union(a: Record, b: Record) -> Record:
    d = dict(a.items())
    for k, v in b.items():
        d.setdefault(k, v)
    tag = a.tag if a.tag is not None else b.tag
    if tag is not None and tag.label in d:
        raise SPNetTypeError(f"union: tag <{tag.label}> collides with a field")
    return Record(d, tag, a.lineage)


# --- text codec -----------------------------------------------------------

def _fmt_value(v: Value) -> str:
    return f"&{v.id}" if isinstance(v, Ref) else str(v)


def encode_record(r: Record) -> str:
    body = ", ".join(f"{k}={_fmt_value(v)}" for k, v in r.items())
    s = "{" + body + "}"
    if r.tag is not None:
        s += f"<{r.tag.label}={r.tag.value}>"
    return s


_TOKEN = re.compile(r"\s*(?:(?P<int>-?\d+)|(?P<id>[A-Za-z][A-Za-z0-9_]*)|(?P<p>[{}<>=,&]))")


class _Cursor:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def peek(self):
        m = _TOKEN.match(self.text, self.pos)
        if not m:
            rest = self.text[self.pos:]
            if rest.strip() == "":
                return None, None, len(self.text)
            col = self.pos + (len(rest) - len(rest.lstrip()))
            raise ParseError(f"unexpected character {self.text[col]!r}", 1, col + 1)
        kind = m.lastgroup
        return kind, m.group(kind), m.start(kind)

    def next(self, expect_kind=None, expect_val=None, what=""):
        kind, val, start = self.peek()
        if kind is None or (expect_kind and kind != expect_kind) or (expect_val and val != expect_val):
            got = "end of input" if kind is None else repr(val)
            raise ParseError(f"expected {what or expect_val or expect_kind}, got {got}",
                             1, start + 1, frozenset([what or expect_val or expect_kind]))
        m = _TOKEN.match(self.text, self.pos)
        self.pos = m.end()
        return val


def decode_record(text: str) -> Record:
    """Parse one line of record text, e.g. ``{a=1, b=&3}<t=2>``.

    References decode to fresh opaque handles (``&id`` names are not reused).
    """
    c = _Cursor(text.strip("\r\n"))
    c.next("p", "{")
    fields: dict[str, Value] = {}
    refs: dict[int, Ref] = {}
    kind, val, start = c.peek()
    if val != "}":
        while True:
            kind, val, start = c.peek()
            label = c.next("id", what="field label")
            if label in fields:
                raise ParseError(f"duplicate field {label!r}", 1, start + 1)
            c.next("p", "=")
            kind, val, vstart = c.peek()
            if val == "&":
                c.next()
                rid = int(c.next("int", what="reference id"))
                fields[label] = refs.setdefault(rid, Ref.fresh())
            else:
                try:
                    fields[label] = check_scalar(int(c.next("int", what="integer value")))
                except EvalError as e:
                    raise ParseError(str(e), 1, vstart + 1) from None
            kind, val, start = c.peek()
            if val == ",":
                c.next()
                continue
            break
    c.next("p", "}")
    tag = None
    kind, val, start = c.peek()
    if val == "<":
        c.next()
        tlabel = c.next("id", what="tag label")
        tval = 0
        kind, val, start = c.peek()
        if val == "=":
            c.next()
            tval = int(c.next("int", what="tag scalar"))
        c.next("p", ">")
        if tlabel in fields:
            raise ParseError(f"tag <{tlabel}> collides with a field", 1, start + 1)
        tag = Tag(tlabel, tval)
    kind, val, start = c.peek()
    if kind is not None:
        raise ParseError(f"trailing input {val!r}", 1, start + 1, frozenset(["end of input"]))
    try:
        return Record(fields, tag)
    except (SPNetTypeError, EvalError) as e:
        raise ParseError(str(e), 1, 1) from None


def rec(_tag: Tag | tuple | None = None, **fields: Value) -> Record:
    """Shorthand constructor: ``rec(a=1)``, ``rec(("t", 3), a=1)``."""
    if isinstance(_tag, tuple):
        _tag = Tag(*_tag)
    return Record(fields, _tag)
