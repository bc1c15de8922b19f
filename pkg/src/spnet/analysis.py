"""Static analysis: transducer expansion and verification, type-signature
inference, selection routing tables and selector resolution."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from . import expr as E
from .errors import RangeError
from .nodes import (Assign, AssignHold, BangStar, BitPat, Box, BoxDecl, Budget, Comp, Emit,
                    EmptyGuard, EnvObserve, ExcHandle, GuardRef, Isolate, Label, Lifetime, Node,
                    Pattern, PatternGuard, Project, RemainderGuard, Reorder, ReplSelect, Reset,
                    Select, StarComp, StateExpr, StateName, TransducerSpec, Transduce, Transition,
                    XFUN_SELECTING, node_at, walk)
from .records import Record, RecordType, TypeSignature, guard_match

MAX_BITS = 16
STAR_FIXPOINT_ROUNDS = 16


@dataclass(frozen=True)
class Diagnostic:
    severity: str           # error | warning | info
    code: str
    message: str
    line: int = 1
    col: int = 1

    def format(self, file: str = "<input>") -> str:
        return f"{self.severity.upper()}\t{file}:{self.line}:{self.col}\t{self.code}\t{self.message}"


# --- transducer expansion -------------------------------------------------------

def label_space(spec: TransducerSpec) -> list:
    d = spec.label_decl
    if d.kind == "named":
        return list(spec.states)
    if d.kind == "range":
        return list(range(d.lo, d.hi + 1))
    if d.size > MAX_BITS:
        raise RangeError(f"bit-array label {d.name}[{d.size}] exceeds {MAX_BITS} bits")
    return list(range(1 << d.size))


def initial_label(spec: TransducerSpec):
    d = spec.label_decl
    if d.kind == "named":
        return spec.states[0] if spec.states else None
    return d.lo if d.kind == "range" else 0


def _const(e: E.Expr, env: dict[str, int], what: str) -> int:
    for k, v in env.items():
        e = E.substitute(e, k, v)
    v = E.const_value(e)
    if v is None:
        raise RangeError(f"{what} must be a constant, got {e}")
    return v


def _check_indices(e: E.Expr, holds: Mapping[str, int]) -> None:
    """Range-check constant hold indices appearing inside an expression."""
    if isinstance(e, E.Index):
        v = E.const_value(e.index)
        if v is not None and e.name in holds and not 0 <= v < holds[e.name]:
            raise RangeError(f"hold index {e.name}[{v}] outside 0..{holds[e.name] - 1}")
        _check_indices(e.index, holds)
    elif isinstance(e, E.Field):
        _check_indices(e.base, holds)
    elif isinstance(e, E.RecordLit):
        for _, v in e.items:
            if v is not None:
                _check_indices(v, holds)
        if e.tag:
            _check_indices(e.tag[1], holds)
    elif isinstance(e, E.TagLit):
        _check_indices(e.value, holds)
    elif isinstance(e, E.BinOp):
        _check_indices(e.left, holds)
        _check_indices(e.right, holds)
    elif isinstance(e, (E.Not, E.Neg)):
        _check_indices(e.operand, holds)


def _subst(e: E.Expr, env: dict[str, int]) -> E.Expr:
    for k, v in env.items():
        e = E.substitute(e, k, v)
    return e


def _bit_mask(p: BitPat, env, size: int) -> int:
    lo = _const(p.lo, env, "bit index")
    hi = lo if p.hi is None else _const(p.hi, env, "bit index")
    if not (0 <= lo <= hi < size):
        raise RangeError(f"bit range {p.array}[{lo}..{hi}] outside 0..{size - 1}")
    return ((1 << (hi - lo + 1)) - 1) << lo


def expand_transducer(spec: TransducerSpec) -> TransducerSpec:
    """Expand iterators, bit patterns and guard-array references into concrete transitions.

    Origins and results become ``StateName`` (named spaces) or
    ``StateExpr(Int(label))``; a missing result means "stay".
    """
    d = spec.label_decl
    space = label_space(spec)
    in_space = set(space)
    guards = dict(spec.guard_decls)
    holds = dict(spec.hold_decls)
    out: list[Transition] = []

    def concrete(lbl):
        return StateName(lbl) if d.kind == "named" else StateExpr(E.Int(lbl))

    def check(lbl, what):
        if lbl not in in_space:
            raise RangeError(f"{what} label {lbl} outside the declared label space")
        return lbl

    for t in spec.transitions:
        if t.iterator is None:
            envs = [{}]
        else:
            var, lo, hi = t.iterator
            envs = [{var: v} for v in range(lo, hi + 1)]
        for env in envs:
            # origins
            o = t.origin
            if isinstance(o, StateName):
                origins = [check(o.name if d.kind == "named" else _named_int(o.name), "origin")]
            elif isinstance(o, StateExpr):
                origins = [check(_const(o.expr, env, "state label"), "origin")]
            elif isinstance(o, BitPat):
                if d.kind != "bits":
                    raise RangeError("bit pattern used without a bit-array label")
                m = _bit_mask(o, env, d.size)
                origins = [lbl for lbl in space if (lbl & m) == (0 if o.negate else m)]
            else:
                origins = list(space)
            # guard
            g = t.guard
            if isinstance(g, GuardRef):
                pats = guards[g.name]
                i = _const(g.index, env, "guard index")
                if not 0 <= i < len(pats):
                    raise RangeError(f"guard index {g.name}[{i}] outside 0..{len(pats) - 1}")
                g = PatternGuard(pats[i], g.rest)
            # actions
            acts = []
            for a in t.actions:
                if isinstance(a, Emit):
                    ex = _subst(a.expr, env)
                    _check_indices(ex, holds)
                    acts.append(Emit(ex))
                elif isinstance(a, AssignHold):
                    idx = None
                    if a.index is not None:
                        iv = _const(a.index, env, "hold index")
                        if not 0 <= iv < holds[a.name]:
                            raise RangeError(f"hold index {a.name}[{iv}] outside 0..{holds[a.name] - 1}")
                        idx = E.Int(iv)
                    elif holds[a.name] != 1:
                        raise RangeError(f"assignment to hold array {a.name} needs an index")
                    ex = _subst(a.expr, env)
                    _check_indices(ex, holds)
                    acts.append(AssignHold(a.name, idx, ex))
                elif isinstance(a, Reset):
                    tg = []
                    for name, ie in a.targets:
                        if ie is None:
                            tg.append((name, None))
                            continue
                        iv = _const(ie, env, "hold index")
                        if not 0 <= iv < holds[name]:
                            raise RangeError(f"hold index {name}[{iv}] outside 0..{holds[name] - 1}")
                        tg.append((name, E.Int(iv)))
                    acts.append(Reset(tuple(tg)))
            # results per origin
            for lbl in origins:
                r = t.result
                if r is None:
                    res = lbl
                elif isinstance(r, StateName):
                    res = check(r.name if d.kind == "named" else _named_int(r.name), "result")
                elif isinstance(r, StateExpr):
                    res = check(_const(r.expr, env, "state label"), "result")
                elif isinstance(r, BitPat):
                    if d.kind != "bits":
                        raise RangeError("bit pattern used without a bit-array label")
                    m = _bit_mask(r, env, d.size)
                    res = (lbl & ~m) if r.negate else (lbl | m)
                else:
                    res = lbl
                out.append(Transition(concrete(lbl), g, tuple(acts), concrete(res)))
    return replace(spec, transitions=tuple(out))


def _named_int(name: str) -> int:
    try:
        return int(name)
    except ValueError:
        raise RangeError(f"state name {name!r} used in a numeric label space") from None


def label_of(p) -> object:
    """Concrete label carried by an expanded origin/result pattern."""
    if isinstance(p, StateName):
        return p.name
    return p.expr.value


def is_expanded(spec: TransducerSpec) -> bool:
    for t in spec.transitions:
        if t.iterator is not None or isinstance(t.guard, GuardRef):
            return False
        for p in (t.origin, t.result):
            if isinstance(p, BitPat) or p is None:
                return False
            if isinstance(p, StateExpr) and not isinstance(p.expr, E.Int):
                return False
    return True


# --- transducer verification -----------------------------------------------------

EMPTY, FULL = 1, 2


@dataclass
class TransducerReport:
    diagnostics: list[Diagnostic] = field(default_factory=list)
    accepted: dict = field(default_factory=dict)     # label -> [RecordType | None]
    reachable: list = field(default_factory=list)
    hold_states: dict = field(default_factory=dict)  # label -> {slot: mask}

    @property
    def ok(self) -> bool:
        return not any(d.severity == "error" for d in self.diagnostics)


def _hold_slots(spec: TransducerSpec) -> list[tuple[str, int]]:
    return [(n, i) for n, size in spec.hold_decls for i in range(size)]


def _expr_reads(e: E.Expr, holds: Mapping[str, int]) -> list[tuple[str, int | None]]:
    """Hold slots read by an expression; ``None`` index means "some slot"."""
    out = []

    def go(x):
        if isinstance(x, E.Name):
            if x.name in holds:
                out.append((x.name, 0 if holds[x.name] == 1 else None))
        elif isinstance(x, E.Index):
            if x.name in holds:
                out.append((x.name, E.const_value(x.index)))
            go(x.index)
        elif isinstance(x, E.Field):
            go(x.base)
        elif isinstance(x, E.RecordLit):
            for _, v in x.items:
                if v is not None:
                    go(v)
            if x.tag:
                go(x.tag[1])
        elif isinstance(x, E.TagLit):
            go(x.value)
        elif isinstance(x, E.BinOp):
            go(x.left)
            go(x.right)
        elif isinstance(x, (E.Not, E.Neg)):
            go(x.operand)
    go(e)
    return out


def _guard_binds(g) -> set[str]:
    if isinstance(g, RemainderGuard):
        return {g.var}
    if isinstance(g, (PatternGuard, GuardRef)) and g.rest:
        return {g.rest}
    return set()


def _guard_type(g) -> RecordType | None:
    if isinstance(g, PatternGuard):
        return g.pattern.rtype
    return None


def check_transducer(spec: TransducerSpec, line: int = 1, col: int = 1) -> TransducerReport:
    """Verify hold discipline, empty-transition cycles, reachability and name binding."""
    rep = TransducerReport()
    seen: set[tuple[str, str]] = set()

    def diag(sev, code, msg):
        if (code, msg) not in seen:
            seen.add((code, msg))
            rep.diagnostics.append(Diagnostic(sev, code, msg, line, col))

    try:
        if not is_expanded(spec):
            spec = expand_transducer(spec)
    except RangeError as e:
        diag("error", "FSM009", str(e))
        return rep
    holds = dict(spec.hold_decls)
    slots = _hold_slots(spec)
    by_origin: dict = {}
    for t in spec.transitions:
        by_origin.setdefault(label_of(t.origin), []).append(t)

    # name binding and empty-guard input use
    for t in spec.transitions:
        bound = set(holds) | _guard_binds(t.guard)
        for a in t.actions:
            exprs = [a.expr] if isinstance(a, (Emit, AssignHold)) else []
            for ex in exprs:
                for n in E.free_names(ex) - bound:
                    diag("error", "FSM007", f"unbound name {n!r} in state {label_of(t.origin)}")
                if isinstance(t.guard, EmptyGuard) and E.uses_input(ex):
                    diag("error", "FSM006",
                         f"empty transition from {label_of(t.origin)} reads the input record")

    # shadowed guards
    for lbl, ts in by_origin.items():
        for i, t in enumerate(ts):
            for prev in ts[:i]:
                if prev.guard == t.guard or isinstance(prev.guard, RemainderGuard) and not isinstance(t.guard, EmptyGuard):
                    diag("warning", "FSM008", f"transition {i} from state {lbl} can never fire (shadowed)")
                    break

    # empty-transition cycles
    empty_edges: dict = {}
    for t in spec.transitions:
        if isinstance(t.guard, EmptyGuard):
            empty_edges.setdefault(label_of(t.origin), []).append(label_of(t.result))
    color: dict = {}

    def dfs(u, stack):
        color[u] = 1
        stack.append(u)
        for v in empty_edges.get(u, ()):
            if color.get(v) == 1:
                cyc = stack[stack.index(v):] + [v]
                diag("error", "FSM002", "cycle of empty transitions: " + " -> ".join(map(str, cyc)))
            elif v not in color:
                dfs(v, stack)
        stack.pop()
        color[u] = 2
    for u in list(empty_edges):
        if u not in color:
            dfs(u, [])

    # abstract hold states: fixpoint over the transition graph
    init = initial_label(spec)
    start = {s: EMPTY for s in slots}
    states: dict = {init: start}
    work = [init]
    while work:
        lbl = work.pop()
        hs = states[lbl]
        for t in by_origin.get(lbl, ()):
            cur = dict(hs)
            for a in t.actions:
                if isinstance(a, (Emit, AssignHold)):
                    for name, idx in _expr_reads(a.expr, holds):
                        cand = [(name, idx)] if idx is not None else [(name, i) for i in range(holds[name])]
                        for s in cand:
                            if cur.get(s, FULL) & EMPTY:
                                diag("error", "FSM004",
                                     f"read of possibly-empty hold {_slot(s, holds)} in state {lbl}")
                if isinstance(a, AssignHold):
                    s = (a.name, 0 if a.index is None else a.index.value)
                    if cur[s] & FULL:
                        diag("error", "FSM003",
                             f"assignment to possibly-full hold {_slot(s, holds)} in state {lbl}")
                    cur[s] = FULL
                elif isinstance(a, Reset):
                    for name, ie in a.targets:
                        targets = [(name, i) for i in range(holds[name])] if ie is None else [(name, ie.value)]
                        for s in targets:
                            if cur[s] & EMPTY:
                                diag("error", "FSM005",
                                     f"reset of possibly-empty hold {_slot(s, holds)} in state {lbl}")
                            cur[s] = EMPTY
            dst = label_of(t.result)
            old = states.get(dst)
            new = cur if old is None else {s: old[s] | cur[s] for s in slots}
            if new != old:
                states[dst] = new
                work.append(dst)
    rep.reachable = sorted(states, key=str)
    rep.hold_states = states
    for lbl in by_origin:
        if lbl not in states:
            diag("warning", "FSM001", f"state {lbl} is unreachable")
    for lbl, ts in by_origin.items():
        rep.accepted[lbl] = [_guard_type(t.guard) for t in ts if not isinstance(t.guard, EmptyGuard)]
    return rep


def _slot(s: tuple[str, int], holds: Mapping[str, int]) -> str:
    name, i = s
    return name if holds[name] == 1 else f"{name}[{i}]"


# --- type signatures ------------------------------------------------------------

@dataclass(frozen=True)
class Variant:
    """One input type of a network with the output types it may produce.

    ``mode`` is ``width`` (subtype match, flow inheritance), ``exact``
    (transducer pattern) or ``any`` (remainder guard / pass-through).
    ``bypass`` marks inputs accepted only by passing an earlier stage.
    """
    input: RecordType
    outputs: tuple[RecordType, ...] = ()
    mode: str = "width"
    bypass: bool = False

    def accepts_type(self, t: RecordType) -> bool:
        if self.mode == "any":
            return True
        if self.input.tag_label != t.tag_label:
            return False
        if self.mode == "exact":
            return self.input.labels == t.labels
        return self.input.labels <= t.labels

    def accepts(self, r: Record) -> bool:
        return self.accepts_type(r.rtype)

    @property
    def specificity(self) -> int:
        return -1 if self.mode == "any" else len(self.input.labels)


def best_variant(variants: Iterable[Variant], t: RecordType) -> Variant | None:
    best = None
    for v in variants:
        if v.accepts_type(t) and (best is None or v.specificity > best.specificity):
            best = v
    return best


def _dedupe(xs):
    out = []
    for x in xs:
        if x not in out:
            out.append(x)
    return tuple(out)


def _through(variants: list[Variant], t: RecordType) -> tuple[RecordType, ...]:
    v = best_variant(variants, t)
    if v is None:
        return (t,)
    if v.mode != "width":
        return v.outputs
    excess = t.labels - v.input.labels
    return tuple(RecordType(o.labels | (excess - {o.tag_label}), o.tag_label) for o in v.outputs)


def _etype(e: E.Expr, inp: RecordType | None, holds: dict[str, RecordType | None], rest: set[str]):
    if isinstance(e, E.RecordLit):
        return RecordType(frozenset(k for k, _ in e.items), e.tag[0] if e.tag else None)
    if isinstance(e, E.TagLit):
        return RecordType(frozenset(), e.label)
    if isinstance(e, E.Input):
        return inp
    if isinstance(e, E.Name):
        if e.name in rest:
            return None
        return holds.get(e.name)
    if isinstance(e, E.Index):
        return holds.get(e.name)
    if isinstance(e, E.UnionOf):
        return holds.get(e.name)
    if isinstance(e, E.BinOp) and e.op == "+":
        a = _etype(e.left, inp, holds, rest)
        b = _etype(e.right, inp, holds, rest)
        if a is None or b is None:
            return None
        return RecordType(a.labels | b.labels, a.tag_label or b.tag_label)
    return None


def transducer_variants(spec: TransducerSpec) -> list[Variant]:
    if not is_expanded(spec):
        spec = expand_transducer(spec)
    hold_types: dict[str, RecordType | None] = {}
    # two passes so holds filled from other holds settle
    for _ in range(2):
        for t in spec.transitions:
            inp = t.guard.pattern.rtype if isinstance(t.guard, PatternGuard) and not t.guard.rest else None
            for a in t.actions:
                if isinstance(a, AssignHold):
                    ty = _etype(a.expr, inp, hold_types, _guard_binds(t.guard))
                    prev = hold_types.get(a.name)
                    if ty is not None:
                        hold_types[a.name] = ty if prev is None else RecordType(
                            prev.labels | ty.labels, prev.tag_label or ty.tag_label)
    empty_outs: list[RecordType] = []
    by_input: dict = {}
    for t in spec.transitions:
        inp = None
        if isinstance(t.guard, PatternGuard):
            inp = t.guard.pattern.rtype
        outs = []
        for a in t.actions:
            if isinstance(a, Emit):
                ty = _etype(a.expr, inp if isinstance(t.guard, PatternGuard) and not t.guard.rest else None,
                            hold_types, _guard_binds(t.guard))
                if ty is not None:
                    outs.append(ty)
        if isinstance(t.guard, EmptyGuard):
            empty_outs.extend(outs)
            continue
        if isinstance(t.guard, RemainderGuard):
            key = (RecordType(), "any")
        else:
            key = (inp, "width" if t.guard.rest else "exact")
        by_input.setdefault(key, []).extend(outs)
    return [Variant(k[0], _dedupe(outs + empty_outs), k[1]) for k, outs in by_input.items()]


@dataclass
class AnalysisReport:
    signatures: dict = field(default_factory=dict)      # path -> list[Variant]
    diagnostics: list[Diagnostic] = field(default_factory=list)
    routing: dict = field(default_factory=dict)         # path -> RoutingTable
    targets: dict = field(default_factory=dict)         # path -> [paths]
    origins: dict = field(default_factory=dict)         # path -> path | None
    observed: dict = field(default_factory=dict)        # EnvObserve path -> (label path, target path)
    transducers: dict = field(default_factory=dict)     # path -> (expanded spec, TransducerReport)

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def type_signature(self, path: tuple = ()) -> TypeSignature:
        vs = [v for v in self.signatures[path] if not v.bypass]
        return TypeSignature(tuple((v.input, v.outputs) for v in vs))


class _Inference:
    def __init__(self, boxes: Mapping[str, BoxDecl], positions=None, report=None):
        self.boxes = boxes
        self.positions = positions or {}
        self.rep = report or AnalysisReport()

    def pos(self, node):
        return self.positions.get(id(node), (1, 1))

    def diag(self, node, sev, code, msg):
        line, col = self.pos(node)
        d = Diagnostic(sev, code, msg, line, col)
        if d not in self.rep.diagnostics:
            self.rep.diagnostics.append(d)

    def sig(self, n: Node, path: tuple) -> list[Variant]:
        vs = self._sig(n, path)
        self.rep.signatures[path] = vs
        return vs

    def _sig(self, n: Node, path: tuple) -> list[Variant]:
        if isinstance(n, Box):
            decl = self.boxes.get(n.name)
            bs = decl.signature if decl else n.signature
            if bs is None:
                self.diag(n, "error", "SIG001", f"box {n.name!r} is not declared")
                return [Variant(RecordType(), (), "any")]
            return [Variant(bs.input.rtype, tuple(o.rtype for o in bs.outputs))]
        if isinstance(n, Transduce):
            line, col = self.pos(n)
            try:
                spec = expand_transducer(n.spec)
            except RangeError as e:
                self.diag(n, "error", "FSM009", str(e))
                return [Variant(RecordType(), (), "any")]
            trep = check_transducer(spec, line, col)
            self.rep.transducers[path] = (spec, trep)
            for d in trep.diagnostics:
                if d not in self.rep.diagnostics:
                    self.rep.diagnostics.append(d)
            return transducer_variants(spec)
        if isinstance(n, EnvObserve):
            return [Variant(RecordType(), (), "any")]
        kids = n.children()
        if isinstance(n, Comp):
            vs = self.sig(kids[0], path + (0,))
            for i, c in enumerate(kids[1:], 1):
                right = self.sig(c, path + (i,))
                new = [replace(v, outputs=_dedupe(o2 for o in v.outputs for o2 in _through(right, o)))
                       for v in vs]
                for rv in right:
                    if not any(lv.accepts_type(rv.input) for lv in vs) and rv.mode != "any":
                        new.append(replace(rv, bypass=True))
                vs = new
            return vs
        if isinstance(n, Select):
            out: list[Variant] = []
            for i, c in enumerate(kids):
                for v in self.sig(c, path + (i,)):
                    if v not in out:
                        out.append(v)
            self.rep.routing[path] = routing_table(n, [self.rep.signatures[path + (i,)]
                                                       for i in range(len(kids))])
            return out
        if isinstance(n, StarComp):
            inner = self.sig(kids[0], path + (0,))
            g = n.guard.type
            exits: list[RecordType] = [g]
            frontier = [o for v in inner for o in v.outputs]
            seen: list[RecordType] = []
            for _ in range(STAR_FIXPOINT_ROUNDS):
                nxt = []
                for t in frontier:
                    if t in seen:
                        continue
                    seen.append(t)
                    if g.labels <= t.labels and g.tag_label == t.tag_label:
                        if t not in exits:
                            exits.append(t)
                    elif best_variant(inner, t) is not None:
                        nxt.extend(_through(inner, t))
                frontier = nxt
                if not frontier:
                    break
            outs = tuple(exits)
            return [Variant(g, (g,))] + [replace(v, outputs=outs) for v in inner]
        inner = self.sig(kids[0], path + (0,))
        if isinstance(n, (BangStar, ReplSelect)):
            return inner + [Variant(RecordType(), (), "any")]
        return inner


def infer_signature(spec: Node, boxes: Mapping[str, BoxDecl] | None = None,
                    positions=None) -> AnalysisReport:
    """Bottom-up type signatures for every node (keyed by spec path)."""
    inf = _Inference(boxes or {}, positions)
    top = inf.sig(spec, ())
    in_tags = {v.input.tag_label for v in top if v.input.tag_label}
    for v in top:
        for o in v.outputs:
            if o.tag_label and o.tag_label not in in_tags:
                inf.diag(spec, "error", "TYP001",
                         f"tagged records {o} can reach the network output without a consumer")
    return inf.rep


# --- routing -------------------------------------------------------------------

@dataclass(frozen=True)
class RoutingTable:
    """Ordered (branch index, input variants); records matching none bypass."""
    entries: tuple[tuple[int, tuple[Variant, ...]], ...]

    def choose(self, r: Record) -> int | None:
        t = r.rtype
        best, best_spec = None, None
        for i, vs in self.entries:
            v = best_variant(vs, t)
            if v is not None and (best is None or v.specificity > best_spec):
                best, best_spec = i, v.specificity
        return best


def routing_table(select: Node, branch_sigs: list[list[Variant]] | None = None,
                  boxes: Mapping[str, BoxDecl] | None = None) -> RoutingTable:
    if not isinstance(select, Select):
        raise TypeError("routing tables are defined for selections only")
    if branch_sigs is None:
        inf = _Inference(boxes or {})
        branch_sigs = [inf.sig(c, (i,)) for i, c in enumerate(select.items)]
    return RoutingTable(tuple((i, tuple(vs)) for i, vs in enumerate(branch_sigs)))


def accepts(variants: Iterable[Variant], r: Record) -> bool:
    return any(v.accepts(r) for v in variants)


# --- selectors -------------------------------------------------------------------

def outermost_labelled(node: Node, label: str, path: tuple) -> list[tuple]:
    """Paths of the outermost ``Label(label, ...)`` nodes at or below ``node``."""
    if isinstance(node, Label) and node.label == label:
        return [path]
    out = []
    for i, c in enumerate(node.children()):
        out.extend(outermost_labelled(c, label, path + (i,)))
    return out


def innermost_outer(root: Node, path: tuple, label: str) -> tuple | None:
    """Path of the innermost ``Label(label)`` at or above ``path``."""
    for k in range(len(path), -1, -1):
        n = node_at(root, path[:k])
        if isinstance(n, Label) and n.label == label:
            return path[:k]
    return None


def descend_functional(root: Node, start: tuple, findex: Iterable[int]) -> tuple | None:
    """Follow a functional index from the node at ``start``; None if it leaves the tree.

    Comp/Select consume one component (child slot); replicating combinators
    consume one component (replica position, subsequence or tag value) and
    enter their inner network; other nodes are transparent.
    """
    path = tuple(start)
    node = node_at(root, path)
    idx = list(findex)
    while True:
        while not isinstance(node, (Comp, Select, StarComp, BangStar, ReplSelect)) and idx \
                and node.children():
            node = node.children()[0]
            path += (0,)
        if not idx:
            return path
        if not isinstance(node, (Comp, Select, StarComp, BangStar, ReplSelect)):
            return None
        k = idx.pop(0)
        if isinstance(node, (Comp, Select)):
            if not 0 <= k < len(node.items):
                return None
            node = node.items[k]
            path += (k,)
        else:
            node = node.inner
            path += (0,)


def resolve_selectors(spec: Node, positions=None, report: AnalysisReport | None = None) -> AnalysisReport:
    rep = report or AnalysisReport()
    positions = positions or {}

    def diag(node, sev, code, msg):
        line, col = positions.get(id(node), (1, 1))
        d = Diagnostic(sev, code, msg, line, col)
        if d not in rep.diagnostics:
            rep.diagnostics.append(d)

    for path, n in walk(spec):
        if isinstance(n, XFUN_SELECTING):
            sel = n.target_sel if isinstance(n, Assign) else n.selector
            if sel is None:
                rep.targets[path] = [path + (0,)]
            else:
                tg = outermost_labelled(n.inner, sel, path + (0,))
                rep.targets[path] = tg
                if not tg:
                    diag(n, "warning", "SEL001", f"selector {sel!r} matches no labelled network")
            if isinstance(n, Assign):
                if n.origin_sel is not None:
                    o = innermost_outer(spec, path[:-1], n.origin_sel) if path else None
                    rep.origins[path] = o
                    if o is None:
                        diag(n, "warning", "SEL002", f"origin {n.origin_sel!r} has no enclosing labelled network")
                else:
                    rep.origins[path] = None
        elif isinstance(n, EnvObserve) and n.env_fn.label is not None:
            lp = innermost_outer(spec, path, n.env_fn.label)
            if lp is None:
                diag(n, "warning", "SEL003", f"environment label {n.env_fn.label!r} has no enclosing network")
                continue
            tp = descend_functional(spec, lp, n.env_fn.index)
            rep.observed[path] = (lp, tp)
            if tp is None:
                diag(n, "warning", "SEL004",
                     f"index {list(n.env_fn.index)} does not resolve under {n.env_fn.label!r}")
    return rep


def analyze(spec: Node, boxes: Mapping[str, BoxDecl] | None = None, positions=None) -> AnalysisReport:
    rep = infer_signature(spec, boxes, positions)
    resolve_selectors(spec, positions, rep)
    check_budgets(spec, rep, positions)
    return rep


def check_budgets(spec: Node, rep: AnalysisReport, positions=None, root_budgets=None) -> None:
    """A ratio budget needs a finite budget of the same kind somewhere above it."""
    root_budgets = root_budgets or {}
    positions = positions or {}
    for path, n in walk(spec):
        if isinstance(n, Budget) and n.budget.ratio is not None:
            kind = n.budget.kind
            finite = kind in root_budgets
            for k in range(len(path)):
                a = node_at(spec, path[:k])
                if isinstance(a, Budget) and a.budget.kind == kind:
                    finite = True
            if not finite:
                line, col = positions.get(id(n), (1, 1))
                d = Diagnostic("error", "XFN001",
                               f"ratio budget {n.budget} has no finite enclosing {kind} budget", line, col)
                if d not in rep.diagnostics:
                    rep.diagnostics.append(d)
