"""Expression language shared by transducer actions, scripted boxes and guard predicates.

Closed set: integer literals, ``input``/``input.f``, hold and remainder
names (optionally indexed and field-accessed), ``+ - * / mod`` on
scalars, record literals, record ``+`` (left operand wins on collisions),
``union(h)``, tag construction ``<t=e>``, comparisons and ``and/or/not``.
Division and ``mod`` follow floor semantics.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .errors import EvalError, HoldError, SPNetTypeError
from .records import Record, Ref, Tag, check_scalar, record_union


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Int(Expr):
    value: int

    def __str__(self):
        return str(self.value)


@dataclass(frozen=True)
class Input(Expr):
    def __str__(self):
        return "input"


@dataclass(frozen=True)
class Name(Expr):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Index(Expr):
    name: str
    index: Expr

    def __str__(self):
        return f"{self.name}[{self.index}]"


@dataclass(frozen=True)
class Field(Expr):
    base: Expr
    label: str

    def __str__(self):
        return f"{self.base}.{self.label}"


@dataclass(frozen=True)
class RecordLit(Expr):
    # value None means "copy this label from input"
    items: tuple[tuple[str, Expr | None], ...] = ()
    tag: tuple[str, Expr] | None = None

    def __str__(self):
        body = ", ".join(k if v is None else f"{k}={v}" for k, v in self.items)
        s = "{" + body + "}"
        if self.tag is not None:
            s += f"<{self.tag[0]}={self.tag[1]}>"
        return s


@dataclass(frozen=True)
class TagLit(Expr):
    label: str
    value: Expr = Int(0)

    def __str__(self):
        return f"<{self.label}={self.value}>"


@dataclass(frozen=True)
class UnionOf(Expr):
    name: str

    def __str__(self):
        return f"union({self.name})"


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Not(Expr):
    operand: Expr

    def __str__(self):
        return f"not {self.operand}"


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr

    def __str__(self):
        return f"-{self.operand}"


@dataclass
class Env:
    """Evaluation context.

    ``fields_as_names`` makes unbound bare names resolve to fields of
    ``input`` (scripted boxes and guard predicates).
    """
    input: Record | None = None
    names: dict[str, object] = field(default_factory=dict)
    holds: Mapping[str, list] = field(default_factory=dict)
    fields_as_names: bool = False


ARITH = {"+", "-", "*", "/", "mod"}
COMPARE = {"=", "!=", "<", "<=", ">", ">="}


def _scalar(v, what: str) -> int:
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, int):
        return v
    if isinstance(v, Ref):
        raise EvalError(f"{what}: references do not take part in arithmetic")
    raise EvalError(f"{what}: expected a scalar, got a record")


def _hold(env: Env, name: str, idx: int | None):
    slots = env.holds[name]
    i = 0 if idx is None else idx
    if not 0 <= i < len(slots):
        raise EvalError(f"hold index {name}[{i}] out of range")
    v = slots[i]
    if v is None:
        raise HoldError(f"read of empty hold variable {name}" + ("" if idx is None else f"[{i}]"))
    return v


def _field_of(v, label: str, what: str):
    if isinstance(v, Record):
        if label in v:
            return v[label]
        if v.tag is not None and v.tag.label == label:
            return v.tag.value
        raise EvalError(f"{what} has no field {label!r}")
    raise EvalError(f"{what} is not a record")


def evaluate(e: Expr, env: Env):
    if isinstance(e, Int):
        return e.value
    if isinstance(e, Input):
        if env.input is None:
            raise EvalError("'input' is not available in an empty transition")
        return env.input
    if isinstance(e, Name):
        if e.name in env.names:
            return env.names[e.name]
        if e.name in env.holds:
            if len(env.holds[e.name]) != 1:
                raise EvalError(f"hold array {e.name} needs an index")
            return _hold(env, e.name, None)
        if env.fields_as_names and env.input is not None:
            return _field_of(env.input, e.name, "input")
        raise EvalError(f"unbound name {e.name!r}")
    if isinstance(e, Index):
        i = _scalar(evaluate(e.index, env), "index")
        if e.name not in env.holds:
            raise EvalError(f"unknown hold array {e.name!r}")
        return _hold(env, e.name, i)
    if isinstance(e, Field):
        return _field_of(evaluate(e.base, env), e.label, str(e.base))
    if isinstance(e, RecordLit):
        d = {}
        for k, v in e.items:
            if v is None:
                if env.input is None:
                    raise EvalError(f"bare label {k!r} needs an input record")
                d[k] = _field_of(env.input, k, "input")
            else:
                val = evaluate(v, env)
                if isinstance(val, Record):
                    raise EvalError(f"field {k!r}: records cannot be nested")
                d[k] = check_scalar(val) if isinstance(val, int) else val
        tag = None
        if e.tag is not None:
            tag = Tag(e.tag[0], check_scalar(_scalar(evaluate(e.tag[1], env), "tag")))
        try:
            return Record(d, tag)
        except SPNetTypeError as err:
            raise EvalError(str(err)) from None
    if isinstance(e, TagLit):
        return Record({}, Tag(e.label, check_scalar(_scalar(evaluate(e.value, env), "tag"))))
    if isinstance(e, UnionOf):
        slots = env.holds.get(e.name)
        if slots is None:
            raise EvalError(f"unknown hold array {e.name!r}")
        acc = Record()
        for s in slots:
            if s is not None:
                acc = record_union(acc, s)
        return acc
    if isinstance(e, Neg):
        return check_scalar(-_scalar(evaluate(e.operand, env), "negation"))
    if isinstance(e, Not):
        return not truthy(evaluate(e.operand, env))
    if isinstance(e, BinOp):
        if e.op == "and":
            return truthy(evaluate(e.left, env)) and truthy(evaluate(e.right, env))
        if e.op == "or":
            return truthy(evaluate(e.left, env)) or truthy(evaluate(e.right, env))
        a = evaluate(e.left, env)
        b = evaluate(e.right, env)
        if e.op == "+" and isinstance(a, Record) and isinstance(b, Record):
            try:
                return record_union(a, b)
            except SPNetTypeError as err:
                raise EvalError(str(err)) from None
        x = _scalar(a, e.op)
        y = _scalar(b, e.op)
        if e.op in COMPARE:
            return {"=": x == y, "!=": x != y, "<": x < y, "<=": x <= y,
                    ">": x > y, ">=": x >= y}[e.op]
        if e.op == "+":
            return check_scalar(x + y)
        if e.op == "-":
            return check_scalar(x - y)
        if e.op == "*":
            return check_scalar(x * y)
        if y == 0:
            raise EvalError("division by zero")
        return check_scalar(x // y if e.op == "/" else x % y)
    raise EvalError(f"cannot evaluate {e!r}")


def truthy(v) -> bool:
    if isinstance(v, (bool, int)):
        return bool(v)
    raise EvalError("condition must be scalar")


def eval_predicate(e: Expr, scalars: Mapping[str, object]) -> bool:
    """Evaluate a guard/fault predicate whose bare names are the record's scalars."""
    for k, v in scalars.items():
        if isinstance(v, Ref) and k in free_names(e):
            raise EvalError(f"predicate reads reference field {k!r}")
    return truthy(evaluate(e, Env(names=dict(scalars))))


def free_names(e: Expr) -> set[str]:
    """Bare names referenced by an expression (used by static checks)."""
    out: set[str] = set()

    def walk(x):
        if isinstance(x, Name):
            out.add(x.name)
        elif isinstance(x, (Index, UnionOf)):
            out.add(x.name)
            if isinstance(x, Index):
                walk(x.index)
        elif isinstance(x, Field):
            walk(x.base)
        elif isinstance(x, RecordLit):
            for _, v in x.items:
                if v is not None:
                    walk(v)
            if x.tag:
                walk(x.tag[1])
        elif isinstance(x, TagLit):
            walk(x.value)
        elif isinstance(x, BinOp):
            walk(x.left)
            walk(x.right)
        elif isinstance(x, (Not, Neg)):
            walk(x.operand)
    walk(e)
    return out


def uses_input(e: Expr) -> bool:
    if isinstance(e, Input):
        return True
    if isinstance(e, RecordLit):
        return any(v is None or uses_input(v) for _, v in e.items) or (
            e.tag is not None and uses_input(e.tag[1]))
    if isinstance(e, Field):
        return uses_input(e.base)
    if isinstance(e, Index):
        return uses_input(e.index)
    if isinstance(e, TagLit):
        return uses_input(e.value)
    if isinstance(e, BinOp):
        return uses_input(e.left) or uses_input(e.right)
    if isinstance(e, (Not, Neg)):
        return uses_input(e.operand)
    return False


def substitute(e: Expr, var: str, value: int) -> Expr:
    """Replace iterator variable ``var`` by a literal (label-iterator expansion)."""
    if isinstance(e, Name) and e.name == var:
        return Int(value)
    if isinstance(e, Index):
        return Index(e.name, substitute(e.index, var, value))
    if isinstance(e, Field):
        return Field(substitute(e.base, var, value), e.label)
    if isinstance(e, RecordLit):
        return RecordLit(tuple((k, None if v is None else substitute(v, var, value)) for k, v in e.items),
                         None if e.tag is None else (e.tag[0], substitute(e.tag[1], var, value)))
    if isinstance(e, TagLit):
        return TagLit(e.label, substitute(e.value, var, value))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, var, value), substitute(e.right, var, value))
    if isinstance(e, Not):
        return Not(substitute(e.operand, var, value))
    if isinstance(e, Neg):
        return Neg(substitute(e.operand, var, value))
    return e


def const_value(e: Expr) -> int | None:
    """Fold an input-free scalar expression built from literals, else None."""
    try:
        v = evaluate(e, Env())
    except Exception:
        return None
    return v if isinstance(v, int) and not isinstance(v, bool) else None
