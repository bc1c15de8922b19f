"""Rendering of specification trees: algebraic form and concrete source."""
from __future__ import annotations

from .nodes import (AnyState, Assign, AssignHold, BangStar, BitPat, Box, Budget, Comp, Emit,
                    EmptyGuard, EnvObserve, ExcHandle, GuardRef, Isolate, Label, Lifetime, Node,
                    PatternGuard, Project, RemainderGuard, Reorder, ReplSelect, Reset, Select,
                    StarComp, StateExpr, StateName, TransducerSpec, Transduce, Transition)
from .records import GuardPattern


def _guard(g: GuardPattern) -> str:
    labels = sorted(g.type.labels)
    body = "{" + ", ".join(labels) + "}"
    if g.type.tag_label:
        body += f"<{g.type.tag_label}>"
    if g.predicate is not None:
        body += f" where {g.predicate}"
    return body


def _sel(s: str | None) -> str:
    return s or ""


def algebraic_form(n: Node) -> str:
    """Render in the algebraic notation, e.g. ``C(Box(A), S(Box(B), Box(C)))``."""
    a = algebraic_form
    if isinstance(n, Box):
        return f"Box({n.name})"
    if isinstance(n, Transduce):
        return f"Transduce({n.source or transducer_source(n.spec)})"
    if isinstance(n, EnvObserve):
        target = (f"<{n.tag}>" if n.tag else "") + ("." if n.tag and n.field else "") + (n.field or "")
        return f"δ_{target}={n.env_fn}"
    if isinstance(n, Comp):
        return "C(" + ", ".join(a(c) for c in n.items) + ")"
    if isinstance(n, Select):
        return "S(" + ", ".join(a(c) for c in n.items) + ")"
    if isinstance(n, StarComp):
        return f"C*_{_guard(n.guard)}({a(n.inner)})"
    if isinstance(n, BangStar):
        return f"C!_<{n.tag_r}>,<{n.tag_p}>({a(n.inner)})"
    if isinstance(n, Reorder):
        return f"R({a(n.inner)})"
    if isinstance(n, ReplSelect):
        return f"S*_<{n.tag_c}>,{n.policy}({a(n.inner)})"
    if isinstance(n, Label):
        return f"α_{n.label}({a(n.inner)})"
    if isinstance(n, ExcHandle):
        return f"β_{_sel(n.selector)},{n.exc_label},{n.exc_type}({a(n.inner)})"
    if isinstance(n, Isolate):
        return f"θ{'+' if n.plus else ''}_{_sel(n.selector)},{n.property}({a(n.inner)})"
    if isinstance(n, Budget):
        return f"ρ_{_sel(n.selector)},{n.budget}({a(n.inner)})"
    if isinstance(n, Project):
        return f"γ{n.kind[1]}_{_sel(n.selector)}({a(n.inner)})"
    if isinstance(n, Lifetime):
        kind = "ω" if n.kind == "to" else "ε"
        return f"τ{kind}_{_sel(n.selector)}({a(n.inner)})"
    if isinstance(n, Assign):
        asg = "" if n.assignment is None else f",{n.assignment}"
        return f"φ_{_sel(n.target_sel)},{_sel(n.origin_sel)}{asg}({a(n.inner)})"
    raise TypeError(f"not a network node: {n!r}")


# --- concrete syntax --------------------------------------------------------

def _atomic(n: Node) -> str:
    s = to_source(n)
    # a where-predicate would swallow a following suffix
    if isinstance(n, (Comp, Select)) or (isinstance(n, StarComp) and n.guard.predicate is not None):
        return f"({s})"
    return s


def to_source(n: Node) -> str:
    """Render as parseable network source; ``parse_network(to_source(n)) == n``."""
    if isinstance(n, Box):
        return n.name
    if isinstance(n, Transduce):
        return transducer_source(n.spec)
    if isinstance(n, EnvObserve):
        if n.tag and n.field:
            target = f"<{n.tag}>.{n.field}"
        elif n.tag:
            target = f"<{n.tag}>"
        else:
            target = n.field
        return f"[{target}={n.env_fn}]"
    if isinstance(n, Comp):
        return " .. ".join(_seq_item(c) for c in n.items)
    if isinstance(n, Select):
        return " | ".join(_sel_item(c) for c in n.items)
    if isinstance(n, Reorder):
        return f"?{to_source(n.inner)}#"
    inner = _atomic(n.inner)
    if isinstance(n, StarComp):
        return f"{inner}*{_guard(n.guard)}"
    if isinstance(n, BangStar):
        return f"{inner}!*<{n.tag_r}><{n.tag_p}>"
    if isinstance(n, ReplSelect):
        return f"{inner}!<{n.tag_c}>{n.policy}"
    if isinstance(n, Label):
        return f"{inner}'{n.label}"
    if isinstance(n, ExcHandle):
        return f"{inner}${_sel(n.selector)}({n.exc_label}={n.exc_type})"
    if isinstance(n, Isolate):
        return f"{inner}/{_sel(n.selector)}/{'+' if n.plus else ''}{n.property}"
    if isinstance(n, Budget):
        return f"{inner}/{_sel(n.selector)}:{n.budget}"
    if isinstance(n, (Project, Lifetime)):
        return f"{inner}/{_sel(n.selector)}!{n.kind}"
    if isinstance(n, Assign):
        origin = f" {n.origin_sel}" if n.origin_sel else ""
        asg = "" if n.assignment is None else f":{n.assignment}"
        return f"{inner}/{_sel(n.target_sel)}@{origin}{asg}"
    raise TypeError(f"not a network node: {n!r}")


def _seq_item(n: Node) -> str:
    s = to_source(n)
    return f"({s})" if isinstance(n, (Comp, Select)) else s


def _sel_item(n: Node) -> str:
    s = to_source(n)
    return f"({s})" if isinstance(n, Select) else s


# --- transducers --------------------------------------------------------------

def _label_pat(p) -> str:
    if isinstance(p, StateName):
        return p.name
    if isinstance(p, StateExpr):
        return str(p.expr)
    if isinstance(p, BitPat):
        rng = f"{p.lo}" if p.hi is None else f"{p.lo}..{p.hi}"
        return f"{'~' if p.negate else ''}{p.array}[{rng}]"
    if isinstance(p, AnyState):
        return "_"
    raise TypeError(p)


def _guard_src(g) -> str:
    if isinstance(g, PatternGuard):
        return str(g.pattern) + (f"+{g.rest}" if g.rest else "")
    if isinstance(g, RemainderGuard):
        return g.var
    if isinstance(g, GuardRef):
        return f"{g.name}[{g.index}]" + (f"+{g.rest}" if g.rest else "")
    if isinstance(g, EmptyGuard):
        return ""
    raise TypeError(g)


def _action(a) -> str:
    if isinstance(a, Emit):
        return f"emit {a.expr}"
    if isinstance(a, AssignHold):
        tgt = a.name if a.index is None else f"{a.name}[{a.index}]"
        return f"{tgt} := {a.expr}"
    if isinstance(a, Reset):
        return "reset " + ", ".join(n if i is None else f"{n}[{i}]" for n, i in a.targets)
    raise TypeError(a)


def transition_source(t: Transition, stateless: bool = False) -> str:
    parts = []
    if t.iterator:
        v, lo, hi = t.iterator
        parts.append(f"{v}={lo}..{hi}/ ")
    if not stateless:
        parts.append(_label_pat(t.origin) + ": ")
    g = _guard_src(t.guard)
    parts.append((g + " " if g else "") + "-> [" + "; ".join(_action(a) for a in t.actions) + "]")
    if t.result is not None and not stateless:
        parts.append(" " + _label_pat(t.result))
    return "".join(parts)


def transducer_source(spec: TransducerSpec) -> str:
    if spec.sugar_origin is not None:
        return "[| " + ", ".join(str(p) for p in spec.sugar_origin) + " |]"
    decls = []
    ld = spec.label_decl
    stateless = (ld.kind == "range" and ld.lo == ld.hi
                 and all(t.result is None for t in spec.transitions))
    if ld.kind == "range" and not stateless:
        decls.append(f"label [{ld.lo}..{ld.hi}];")
    elif ld.kind == "range" and ld.lo != 0:
        decls.append(f"label [{ld.lo}..{ld.hi}];")
    elif ld.kind == "bits":
        decls.append(f"label {ld.name}[{ld.size}];")
    if spec.hold_decls:
        decls.append("var " + ", ".join(
            n if (s == 1 and n not in spec.array_holds) else f"{n}[{s}]"
            for n, s in spec.hold_decls) + ";")
    for name, pats in spec.guard_decls:
        decls.append(f"guard {name}[{len(pats)}] = " + ", ".join(str(p) for p in pats) + ";")
    body = " ".join(transition_source(t, stateless) + ";" for t in spec.transitions)
    return "[| " + " ".join(decls + [body]) + " |]"
