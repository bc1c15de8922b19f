"""Execution of expanded transducer specifications."""
from __future__ import annotations

from dataclasses import dataclass

from .analysis import expand_transducer, initial_label, is_expanded, label_of
from .errors import EvalError, HoldError, NonTermination
from .expr import Env, evaluate
from .nodes import (AssignHold, Emit, EmptyGuard, PatternGuard, RemainderGuard, Reset,
                    TransducerSpec, Transition)
from .records import Record


@dataclass
class ActionResult:
    emitted: list[Record]
    new_label: object
    matched: bool = True


def _bind(t: Transition, r: Record) -> dict | None:
    """Match ``r`` against the guard of ``t``; returns the name bindings or None."""
    g = t.guard
    if isinstance(g, RemainderGuard):
        return {g.var: r}
    if not isinstance(g, PatternGuard):
        return None
    p = g.pattern
    want = {k for k, _ in p.items}
    if g.rest is None:
        if r.labels != want:
            return None
    elif not want <= r.labels:
        return None
    if p.tag is None:
        if r.tag is not None and g.rest is None:
            return None
    else:
        if r.tag is None or r.tag.label != p.tag[0]:
            return None
        if p.tag[1] is not None and r.tag.value != p.tag[1]:
            return None
    for k, v in p.items:
        if v is not None and r[k] != v:
            return None
    if g.rest is None:
        return {}
    rest = r.without(want)
    if p.tag is not None:
        rest = rest.with_tag(None)
    return {g.rest: rest}


class TransducerInstance:
    """Run-time state of one transducer: current label plus hold variables."""

    def __init__(self, spec: TransducerSpec, debug: bool = False):
        if not is_expanded(spec):
            spec = expand_transducer(spec)
        self.spec = spec
        self.debug = debug
        self.table: dict[object, list[Transition]] = {}
        for t in spec.transitions:
            self.table.setdefault(label_of(t.origin), []).append(t)
        self.initial = initial_label(spec)
        self.label = self.initial
        self.holds: dict[str, list[Record | None]] = {n: [None] * s for n, s in spec.hold_decls}
        self._nstates = max(len(self.table), 1)

    # --- queries -------------------------------------------------------------
    def is_inactive(self) -> bool:
        return self.label == self.initial and all(v is None for slots in self.holds.values() for v in slots)

    def is_terminated(self) -> bool:
        return not self.table.get(self.label)

    def label_text(self) -> str:
        d = self.spec.label_decl
        if d.kind == "bits":
            return format(self.label, f"0{d.size}b")
        return str(self.label)

    def full_holds(self) -> list[tuple[str, Record]]:
        out = []
        for name, slots in self.holds.items():
            for i, v in enumerate(slots):
                if v is not None:
                    out.append((name if len(slots) == 1 and name not in self.spec.array_holds
                                else f"{name}[{i}]", v))
        return out

    # --- execution -------------------------------------------------------------
    def accepts(self, r: Record) -> bool:
        return any(_bind(t, r) is not None for t in self.table.get(self.label, ())
                   if not isinstance(t.guard, EmptyGuard))

    def step(self, r: Record) -> ActionResult:
        for t in self.table.get(self.label, ()):
            if isinstance(t.guard, EmptyGuard):
                continue
            names = _bind(t, r)
            if names is None:
                continue
            out = self._fire(t, r, names)
            out.extend(self._settle())
            return ActionResult(out, self.label)
        return ActionResult([r], self.label, matched=False)

    def _fire(self, t: Transition, r: Record | None, names: dict) -> list[Record]:
        env = Env(input=r, names=names, holds=self.holds)
        out: list[Record] = []
        for a in t.actions:
            if isinstance(a, Emit):
                v = evaluate(a.expr, env)
                if not isinstance(v, Record):
                    raise EvalError(f"emit needs a record, got {v!r}")
                out.append(v)
            elif isinstance(a, AssignHold):
                v = evaluate(a.expr, env)
                if not isinstance(v, Record):
                    raise EvalError(f"hold {a.name} can only hold records")
                i = 0 if a.index is None else a.index.value
                if self.holds[a.name][i] is not None and self.debug:
                    raise HoldError(f"assignment to full hold variable {a.name}[{i}]")
                self.holds[a.name][i] = v
            elif isinstance(a, Reset):
                for name, ie in a.targets:
                    idxs = range(len(self.holds[name])) if ie is None else [ie.value]
                    for i in idxs:
                        if self.holds[name][i] is None and self.debug:
                            raise HoldError(f"reset of empty hold variable {name}[{i}]")
                        self.holds[name][i] = None
        self.label = label_of(t.result)
        return out

    def _settle(self) -> list[Record]:
        out: list[Record] = []
        for _ in range(self._nstates + 1):
            t = next((t for t in self.table.get(self.label, ()) if isinstance(t.guard, EmptyGuard)), None)
            if t is None:
                return out
            out.extend(self._fire(t, None, {}))
        raise NonTermination("empty transitions do not reach a fixpoint")

    # --- checkpointing -------------------------------------------------------
    def snapshot(self) -> "TransducerSnapshot":
        return TransducerSnapshot(self, self.label, {k: tuple(v) for k, v in self.holds.items()})


@dataclass(frozen=True)
class TransducerSnapshot:
    owner: TransducerInstance
    label: object
    holds: dict


def instantiate(spec: TransducerSpec, debug: bool = False) -> TransducerInstance:
    return TransducerInstance(spec, debug)


def step(inst: TransducerInstance, r: Record) -> ActionResult:
    return inst.step(r)


def is_inactive(inst: TransducerInstance) -> bool:
    return inst.is_inactive()


def is_terminated(inst: TransducerInstance) -> bool:
    return inst.is_terminated()


def snapshot(inst: TransducerInstance) -> TransducerSnapshot:
    return inst.snapshot()


def restore(blob: TransducerSnapshot) -> TransducerInstance:
    """A fresh instance in the captured state (the source instance is untouched)."""
    src = blob.owner
    inst = TransducerInstance.__new__(TransducerInstance)
    inst.spec, inst.debug, inst.table = src.spec, src.debug, src.table
    inst.initial, inst._nstates = src.initial, src._nstates
    inst.label = blob.label
    inst.holds = {k: list(v) for k, v in blob.holds.items()}
    return inst
