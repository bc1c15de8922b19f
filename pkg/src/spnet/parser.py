"""Recursive-descent parser for .spnet programs, network expressions and transducers.

Precedence: postfix suffixes (``*G``, ``!*<r><p>``, ``!<c>p``, ``'X``,
``$X(a=E)``, ``/...``) bind tightest, then ``..``, then ``|``.
``?N#`` and parentheses group.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import expr as E
from .errors import DuplicateDeclError, ParseError
from .lexer import Token, tokenize
from .nodes import (AnyState, Assign, AssignHold, AssignSpec, BangStar, BitPat, Box, BoxCost,
                    BoxDecl, BoxEmit, BoxFaultClause, BoxSignature, Budget, BudgetSpec, Comp,
                    Emit, EmptyGuard, EnvFunction, EnvObserve, ExcHandle, GuardRef, Isolate,
                    Label, LabelDecl, Lifetime, Node, Pattern, PatternGuard, PosType, Project,
                    RemainderGuard, Reorder, ReplSelect, Reset, Select, StarComp, StateExpr,
                    StateName, TransducerSpec, Transduce, Transition)
from .records import INT64_MAX, GuardPattern, RecordType

POLICIES = ("e", "lr", "la", "ha")
ISOLATION = ("f", "b", "s", "p")
BUDGET_KINDS = ("mp", "mc", "mfl", "mll", "mti", "mto", "mdla", "mdaa", "mdpa")
ENV_KINDS = ("time", "c", "p", "ti", "to", "fl", "ll", "dla", "daa", "dpa", "h")
KEYWORDS = {"box", "net", "emit", "reset", "var", "guard", "label", "input", "union",
            "and", "or", "not", "mod", "where", "when", "times", "if", "cost", "fault"}

UNITS = {
    "ns": 1, "us": 1_000, "ms": 1_000_000, "s": 1_000_000_000,
    "B": 1, "KB": 1024, "MB": 1024 ** 2, "GB": 1024 ** 3,
    "mW": 1, "W": 1000,
}


@dataclass
class Program:
    boxes: dict[str, BoxDecl]
    nets: dict[str, Node]
    network: Node
    source: str = ""
    # id(node) -> (line, col) of the node's first token
    positions: dict[int, tuple[int, int]] = field(default_factory=dict)

    def position(self, node: Node) -> tuple[int, int]:
        return self.positions.get(id(node), (1, 1))


@dataclass
class _TState:
    """Per-transducer parsing context."""
    label: LabelDecl | None = None
    holds: dict[str, int] = field(default_factory=dict)
    array_holds: set[str] = field(default_factory=set)
    guards: dict[str, tuple[Pattern, ...]] = field(default_factory=dict)
    iter_vars: set[str] = field(default_factory=set)


class Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.boxes: dict[str, BoxDecl] = {}
        self.nets: dict[str, Node] = {}
        self.positions: dict[int, tuple[int, int]] = {}

    def _mark(self, node, tok: Token):
        self.positions.setdefault(id(node), (tok.line, tok.col))
        return node

    # --- token helpers ---------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, expected=(), tok: Token | None = None):
        t = tok or self.tok
        got = "end of input" if t.kind == "eof" else repr(t.value)
        raise ParseError(f"{msg}, got {got}", t.line, t.col, frozenset(expected))

    def at(self, value: str) -> bool:
        return self.tok.kind in ("punct", "ident") and self.tok.value == value

    def accept(self, value: str) -> bool:
        if self.at(value):
            self.i += 1
            return True
        # '>=' / '>.' style splits for tag brackets
        if value == ">" and self.tok.kind == "punct" and self.tok.value == ">=":
            self._split(">", "=")
            self.i += 1
            return True
        return False

    def _split(self, first: str, second: str):
        t = self.tok
        self.toks[self.i] = Token("punct", first, t.line, t.col, t.offset)
        self.toks.insert(self.i + 1, Token("punct", second, t.line, t.col + 1, t.offset + 1))

    def expect(self, value: str) -> Token:
        t = self.tok
        if not self.accept(value):
            self.error(f"expected {value!r}", [value])
        return t

    def ident(self, what: str = "identifier") -> str:
        t = self.tok
        if t.kind != "ident":
            self.error(f"expected {what}", [what])
        self.i += 1
        return t.value

    def integer(self, what: str = "integer") -> int:
        neg = self.accept("-")
        t = self.tok
        if t.kind != "int":
            self.error(f"expected {what}", [what])
        self.i += 1
        v = int(t.value)
        if v > INT64_MAX:
            raise ParseError("integer literal out of 64-bit range", t.line, t.col)
        return -v if neg else v

    # --- programs ----------------------------------------------------------
    def program(self) -> Program:
        while True:
            if self.at("box") and self.peek().kind == "ident":
                d = self.box_decl()
                if d.name in self.boxes:
                    t = self.toks[self.i - 1]
                    raise DuplicateDeclError(f"box {d.name!r} declared twice", t.line, t.col)
                self.boxes[d.name] = d
            elif self.at("net") and self.peek().kind == "ident":
                self.net_def()
            else:
                break
        node = self.network()
        if self.tok.kind != "eof":
            self.error("expected end of input", ["..", "|", "end of input"])
        return Program(self.boxes, self.nets, node, self.text, self.positions)

    def net_def(self):
        self.expect("net")
        t = self.tok
        name = self.ident("net name")
        if name in self.nets or name in self.boxes:
            raise DuplicateDeclError(f"net {name!r} declared twice", t.line, t.col)
        self.expect("{")
        body = self.network()
        self.expect("}")
        self.accept(";")
        self.nets[name] = Label(name, body)

    def pos_type(self) -> PosType:
        self.expect("(")
        labels: list[str] = []
        tag = None
        if not self.at(")"):
            while True:
                if self.accept("<"):
                    if tag is not None:
                        self.error("a type carries at most one tag")
                    tag = self.ident("tag label")
                    self.expect(">")
                else:
                    t = self.tok
                    lab = self.ident("field label")
                    if lab in labels:
                        raise ParseError(f"duplicate label {lab!r}", t.line, t.col)
                    labels.append(lab)
                if not self.accept(","):
                    break
        self.expect(")")
        return PosType(tuple(labels), tag)

    def box_signature(self) -> BoxSignature:
        inp = self.pos_type()
        self.expect("->")
        outs = [self.pos_type()]
        while self.accept("|"):
            outs.append(self.pos_type())
        return BoxSignature(inp, tuple(outs))

    def box_decl(self) -> BoxDecl:
        self.expect("box")
        name = self.ident("box name")
        self.expect("(")
        sig = self.box_signature()
        self.expect(")")
        script = None
        cost = None
        faults: list[BoxFaultClause] = []
        if self.accept("="):
            self.expect("{")
            stmts = []
            while not self.at("}"):
                self.expect("emit")
                e = self.expression()
                count = cond = None
                if self.accept("times"):
                    count = self.expression()
                if self.accept("if"):
                    cond = self.expression()
                stmts.append(BoxEmit(e, count, cond))
                if not self.accept(";"):
                    break
            self.expect("}")
            script = tuple(stmts)
        while True:
            if self.accept("cost"):
                self.expect("(")
                vals = {}
                while True:
                    t = self.tok
                    k = self.ident("cost key")
                    if k not in ("duration", "storage", "power"):
                        raise ParseError(f"unknown cost key {k!r}", t.line, t.col,
                                         frozenset(["duration", "storage", "power"]))
                    self.expect("=")
                    vals[k] = int(self.quantity()[0])
                    if not self.accept(","):
                        break
                self.expect(")")
                cost = BoxCost(**vals)
            elif self.accept("fault"):
                fname = self.ident("fault name")
                self.expect("when")
                faults.append(BoxFaultClause(fname, self.expression()))
            else:
                break
        self.expect(";")
        return BoxDecl(name, sig, script, cost, tuple(faults))

    def quantity(self) -> tuple[float, bool, str]:
        """INT [unit | %] -> (base-unit amount or ratio, is_ratio, text)."""
        start = self.tok
        v = self.integer("quantity")
        if self.accept("%"):
            return v / 100.0, True, f"{v}%"
        if self.tok.kind == "ident" and self.tok.value in UNITS and self.tok.offset == start.offset + len(str(abs(v))) + (v < 0):
            u = self.ident()
            return v * UNITS[u], False, f"{v}{u}"
        return float(v), False, str(v)

    # --- network expressions ----------------------------------------------
    def network(self) -> Node:
        start = self.tok
        items = [self.sequence()]
        while self.accept("|"):
            items.append(self.sequence())
        return items[0] if len(items) == 1 else self._mark(Select(tuple(items)), start)

    def sequence(self) -> Node:
        start = self.tok
        items = [self.postfix()]
        while self.accept(".."):
            items.append(self.postfix())
        return items[0] if len(items) == 1 else self._mark(Comp(tuple(items)), start)

    def primary(self) -> Node:
        t = self.tok
        if self.accept("("):
            n = self.network()
            self.expect(")")
            return n
        if self.accept("?"):
            n = self.network()
            self.expect("#")
            return Reorder(n)
        if self.at("[|"):
            start = t.offset
            spec = self.transducer()
            return Transduce(spec, self.text[start:self.toks[self.i - 1].offset + 2])
        if self.accept("["):
            return self.delta()
        if t.kind == "ident" and t.value not in KEYWORDS:
            self.i += 1
            if t.value in self.nets:
                return self.nets[t.value]
            d = self.boxes.get(t.value)
            return Box(t.value, d.signature if d else None)
        self.error("expected a network", ["(", "?", "[|", "[", "name"])

    def postfix(self) -> Node:
        start = self.tok
        n = self._mark(self.primary(), start)
        while True:
            self._mark(n, start)
            if self.accept("*"):
                n = StarComp(self.guard_pattern(), n)
            elif self.accept("!*"):
                self.expect("<")
                r = self.ident("constructor tag")
                self.expect(">")
                self.expect("<")
                p = self.ident("payload tag")
                self.expect(">")
                n = BangStar(r, p, n)
            elif self.at("!") and self.peek().value == "<":
                self.i += 1
                self.expect("<")
                c = self.ident("selection tag")
                self.expect(">")
                policy = "e"
                if self.tok.kind == "ident" and self.tok.value not in KEYWORDS:
                    t = self.tok
                    policy = self.ident()
                    if policy not in POLICIES:
                        raise ParseError(f"unknown selection policy {policy!r}", t.line, t.col,
                                         frozenset(POLICIES))
                n = ReplSelect(c, policy, n)
            elif self.accept("'"):
                n = Label(self.ident("network label"), n)
            elif self.accept("$"):
                sel = None
                if self.tok.kind == "ident":
                    sel = self.ident()
                self.expect("(")
                a = self.ident("exception label")
                self.expect("=")
                etype = self.ident("exception type")
                if self.accept("("):
                    etype += "(" + self.ident("requirement") + ")"
                    self.expect(")")
                self.expect(")")
                n = ExcHandle(sel, a, etype, n)
            elif self.accept("/"):
                n = self.slash_suffix(n)
            else:
                return n

    def slash_suffix(self, n: Node) -> Node:
        sel = None
        if self.tok.kind == "ident":
            sel = self.ident()
        t = self.tok
        if self.accept("/"):
            plus = self.accept("+")
            t = self.tok
            prop = self.ident("isolation property")
            if prop not in ISOLATION:
                raise ParseError(f"unknown isolation property {prop!r}", t.line, t.col,
                                 frozenset(ISOLATION))
            return Isolate(sel, prop, plus, n)
        if self.accept(":"):
            return Budget(sel, self.budget(), n)
        if self.accept("!"):
            t = self.tok
            k = self.ident("projection or lifetime")
            if k in ("ge", "gr"):
                return Project(sel, k, n)
            if k in ("to", "te"):
                return Lifetime(sel, k, n)
            raise ParseError(f"unknown projection {k!r}", t.line, t.col,
                             frozenset(["ge", "gr", "to", "te"]))
        if self.accept("@"):
            origin = None
            if self.tok.kind == "ident" and not self.at("share") and not self.at("split"):
                origin = self.ident()
            assign = None
            if self.accept(":"):
                assign = self.assignment()
            return Assign(sel, origin, assign, n)
        self.error("expected '/', ':', '!' or '@' after '/'", ["/", ":", "!", "@"])

    def budget(self) -> BudgetSpec:
        t = self.tok
        kind = self.ident("budget kind")
        if kind not in BUDGET_KINDS:
            raise ParseError(f"unknown budget {kind!r}", t.line, t.col, frozenset(BUDGET_KINDS))
        self.expect("(")
        amount, is_ratio, text = self.quantity()
        self.expect(")")
        if is_ratio:
            if not 0 < amount <= 1:
                raise ParseError("budget ratio must lie in (0%, 100%]", t.line, t.col)
            return BudgetSpec(kind, ratio=amount, text=text)
        if amount < 0:
            raise ParseError("budget must be nonnegative", t.line, t.col)
        return BudgetSpec(kind, amount=amount, text=text)

    def assignment(self) -> AssignSpec:
        t = self.tok
        mode = self.ident("share or split")
        if mode not in ("share", "split"):
            raise ParseError(f"unknown assignment {mode!r}", t.line, t.col,
                             frozenset(["share", "split"]))
        self.expect("(")
        parts = []
        if self.accept("["):
            k = self.ident("metadata key")
            self.expect("=")
            v = str(self.integer()) if self.tok.kind in ("int",) or self.at("-") else self.ident("metadata value")
            self.expect("]")
            parts.append(f"[{k}={v}]")
        elif self.accept("*"):
            parts.append("*")
        else:
            while self.accept("/"):
                if self.accept("*"):
                    parts.append("/*")
                    break
                parts.append(f"/{self.integer('child index')}")
            if not parts:
                self.error("expected resource selector", ["/", "*", "["])
        self.expect(")")
        return AssignSpec(mode, "".join(parts))

    def guard_pattern(self) -> GuardPattern:
        self.expect("{")
        labels = []
        tag = None
        if not self.at("}"):
            while True:
                if self.accept("<"):
                    tag = self.ident("tag label")
                    self.expect(">")
                else:
                    labels.append(self.ident("field label"))
                if not self.accept(","):
                    break
        self.expect("}")
        if self.accept("<"):
            if tag is not None:
                self.error("a guard carries at most one tag")
            tag = self.ident("tag label")
            self.expect(">")
        pred = None
        if self.accept("where"):
            pred = self.expression()
        return GuardPattern(RecordType(frozenset(labels), tag), pred)

    def delta(self) -> Node:
        tag = fld = None
        if self.accept("<"):
            tag = self.ident("tag label")
            self.expect(">")
            if self.accept("."):
                fld = self.ident("field label")
        elif self.tok.kind == "ident":
            fld = self.ident()
        else:
            self.error("expected '<tag>' or field label", ["<", "field label"])
        self.expect("=")
        fn = self.env_function()
        self.expect("]")
        return EnvObserve(tag, fld, fn)

    def env_function(self) -> EnvFunction:
        t = self.tok
        kind = self.ident("environment function")
        if kind not in ENV_KINDS:
            raise ParseError(f"unknown environment function {kind!r}", t.line, t.col,
                             frozenset(ENV_KINDS))
        self.expect("(")
        if kind == "time":
            g = self.integer("granularity")
            self.expect(")")
            if g <= 0:
                raise ParseError("granularity must be positive", t.line, t.col)
            return EnvFunction("time", granularity=g)
        label = self.ident("network label")
        self.expect(",")
        self.expect("[")
        idx = []
        if not self.at("]"):
            while True:
                idx.append(self.integer("index"))
                if not (self.accept(";") or self.accept(",")):
                    break
        self.expect("]")
        g, prop = 1, None
        if kind == "h":
            self.expect(",")
            prop = self.ident("property name")
        elif kind not in ("dla", "daa", "dpa"):
            self.expect(",")
            g = self.integer("granularity")
            if g <= 0:
                raise ParseError("granularity must be positive", t.line, t.col)
        self.expect(")")
        return EnvFunction(kind, label, tuple(idx), g, prop)

    # --- expressions ---------------------------------------------------------
    def expression(self) -> E.Expr:
        return self.or_expr()

    def or_expr(self):
        e = self.and_expr()
        while self.accept("or"):
            e = E.BinOp("or", e, self.and_expr())
        return e

    def and_expr(self):
        e = self.not_expr()
        while self.accept("and"):
            e = E.BinOp("and", e, self.not_expr())
        return e

    def not_expr(self):
        if self.accept("not"):
            return E.Not(self.not_expr())
        return self.comparison()

    def comparison(self):
        e = self.additive()
        for op in ("=", "!=", "<=", ">=", "<", ">"):
            if self.at(op):
                self.i += 1
                return E.BinOp(op, e, self.additive())
        return e

    def additive(self):
        e = self.term()
        while self.at("+") or self.at("-"):
            op = self.tok.value
            self.i += 1
            e = E.BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.at("*") or self.at("/") or self.at("mod"):
            op = self.tok.value
            self.i += 1
            e = E.BinOp(op, e, self.unary())
        return e

    def unary(self):
        if self.accept("-"):
            inner = self.unary()
            if isinstance(inner, E.Int):
                return E.Int(-inner.value)
            return E.Neg(inner)
        return self.postfix_expr()

    def postfix_expr(self):
        e = self.atom()
        while self.at(".") and self.peek().kind == "ident":
            self.i += 1
            e = E.Field(e, self.ident())
        return e

    def atom(self):
        t = self.tok
        if t.kind == "int":
            self.i += 1
            v = int(t.value)
            if v > INT64_MAX:
                raise ParseError("integer literal out of 64-bit range", t.line, t.col)
            return E.Int(v)
        if self.accept("("):
            e = self.expression()
            self.expect(")")
            return e
        if self.at("{"):
            return self.record_literal()
        if self.accept("<"):
            lab = self.ident("tag label")
            val = E.Int(0)
            if self.accept("="):
                val = self.additive()
            self.expect(">")
            return E.TagLit(lab, val)
        if self.accept("input"):
            return E.Input()
        if self.at("union") and self.peek().value == "(":
            self.i += 2
            name = self.ident("hold array")
            self.expect(")")
            return E.UnionOf(name)
        if t.kind == "ident" and t.value not in KEYWORDS:
            self.i += 1
            if self.accept("["):
                idx = self.expression()
                self.expect("]")
                return E.Index(t.value, idx)
            return E.Name(t.value)
        self.error("expected an expression", ["integer", "name", "(", "{", "<", "input"])

    def record_literal(self) -> E.RecordLit:
        self.expect("{")
        items: list[tuple[str, E.Expr | None]] = []
        tag = None
        seen = set()
        if not self.at("}"):
            while True:
                if self.accept("<"):
                    lab = self.ident("tag label")
                    val = E.Int(0)
                    if self.accept("="):
                        val = self.additive()
                    self.expect(">")
                    if tag is not None:
                        self.error("a record carries at most one tag")
                    tag = (lab, val)
                else:
                    t = self.tok
                    lab = self.ident("field label")
                    if lab in seen:
                        raise ParseError(f"duplicate field {lab!r}", t.line, t.col)
                    seen.add(lab)
                    val = self.expression() if self.accept("=") else None
                    items.append((lab, val))
                if not self.accept(","):
                    break
        self.expect("}")
        if self.at("<") and self.peek().kind == "ident" and self.peek(2).value in ("=", ">", ">="):
            if tag is not None:
                self.error("a record carries at most one tag")
            self.i += 1
            lab = self.ident()
            val = E.Int(0)
            if self.accept("="):
                val = self.additive()
            self.expect(">")
            tag = (lab, val)
        return E.RecordLit(tuple(items), tag)

    # --- transducers ---------------------------------------------------------
    def pattern(self) -> Pattern:
        self.expect("{")
        items: list[tuple[str, int | None]] = []
        tag = None
        seen = set()
        if not self.at("}"):
            while True:
                if self.accept("<"):
                    lab = self.ident("tag label")
                    v = self.integer() if self.accept("=") else None
                    self.expect(">")
                    if tag is not None:
                        self.error("a pattern carries at most one tag")
                    tag = (lab, v)
                else:
                    t = self.tok
                    lab = self.ident("field label")
                    if lab in seen:
                        raise ParseError(f"duplicate field {lab!r}", t.line, t.col)
                    seen.add(lab)
                    v = self.integer() if self.accept("=") else None
                    items.append((lab, v))
                if not self.accept(","):
                    break
        self.expect("}")
        if self.at("<") and self.peek().kind == "ident":
            if tag is not None:
                self.error("a pattern carries at most one tag")
            self.i += 1
            lab = self.ident()
            v = self.integer() if self.accept("=") else None
            self.expect(">")
            tag = (lab, v)
        if tag is not None and tag[0] in seen:
            self.error(f"tag <{tag[0]}> collides with a field")
        return Pattern(tuple(items), tag)

    def transducer(self) -> TransducerSpec:
        self.expect("[|")
        st = _TState()
        # sugar: [| {a},{b},{c} |]
        if self.at("{"):
            save = self.i
            pats = [self.pattern()]
            if self.at(",") or self.at("|]"):
                while self.accept(","):
                    pats.append(self.pattern())
                self.expect("|]")
                return desugar_sync(tuple(pats))
            self.i = save
        self.declarations(st)
        items: list[tuple[bool, Transition]] = []
        while not self.at("|]"):
            items.append(self.transition(st))
            if not self.accept(";"):
                break
        self.expect("|]")
        return self.finish_transducer(st, items)

    def declarations(self, st: _TState):
        while True:
            t = self.tok
            if self.accept("label"):
                if st.label is not None:
                    raise DuplicateDeclError("label space declared twice", t.line, t.col)
                if self.accept("["):
                    lo = self.integer()
                    self.expect("..")
                    hi = self.integer()
                    self.expect("]")
                    if hi < lo:
                        raise ParseError("empty label range", t.line, t.col)
                    st.label = LabelDecl("range", lo, hi)
                else:
                    name = self.ident("bit-array name")
                    self.expect("[")
                    size = self.integer("bit count")
                    self.expect("]")
                    if size < 1:
                        raise ParseError("bit array needs at least one bit", t.line, t.col)
                    st.label = LabelDecl("bits", 0, (1 << min(size, 62)) - 1, name, size)
                self.expect(";")
            elif self.accept("var"):
                while True:
                    t = self.tok
                    name = self.ident("hold variable")
                    size = 1
                    if self.accept("["):
                        size = self.integer("array size")
                        self.expect("]")
                        if size < 1:
                            raise ParseError("hold array size must be >= 1", t.line, t.col)
                        st.array_holds.add(name)
                    if name in st.holds or name in st.guards:
                        raise DuplicateDeclError(f"{name!r} declared twice", t.line, t.col)
                    st.holds[name] = size
                    if not self.accept(","):
                        break
                self.expect(";")
            elif self.accept("guard"):
                t = self.tok
                name = self.ident("guard array")
                if name in st.guards or name in st.holds:
                    raise DuplicateDeclError(f"{name!r} declared twice", t.line, t.col)
                self.expect("[")
                size = self.integer("array size")
                self.expect("]")
                self.expect("=")
                pats = [self.pattern()]
                while self.accept(","):
                    pats.append(self.pattern())
                if len(pats) != size:
                    raise ParseError(f"guard array {name} declares {size} patterns, got {len(pats)}",
                                     t.line, t.col)
                st.guards[name] = tuple(pats)
                self.expect(";")
            else:
                return

    def label_pat(self, st: _TState):
        t = self.tok
        if self.at("~") or (st.label is not None and st.label.kind == "bits"
                            and t.kind == "ident" and t.value == st.label.name):
            neg = self.accept("~")
            arr = self.ident("bit array")
            if st.label is None or st.label.kind != "bits" or arr != st.label.name:
                raise ParseError(f"{arr!r} is not the declared bit array", t.line, t.col)
            self.expect("[")
            lo = self.additive()
            hi = None
            if self.accept(".."):
                hi = self.additive()
            self.expect("]")
            return BitPat(neg, arr, lo, hi)
        if st.label is None or st.label.kind == "named":
            if t.kind == "ident" and t.value not in KEYWORDS and t.value not in st.iter_vars:
                self.i += 1
                return StateName(t.value)
            if t.kind == "int":
                self.i += 1
                return StateName(t.value)
            self.error("expected a state name", ["state name"])
        return StateExpr(self.additive())

    def transition(self, st: _TState) -> tuple[bool, Transition]:
        iterator = None
        if self.tok.kind == "ident" and self.peek().value == "=" and self.peek(2).kind in ("int",) \
                or (self.tok.kind == "ident" and self.peek().value == "=" and self.peek(2).value == "-"):
            var = self.ident()
            self.expect("=")
            lo = self.integer()
            self.expect("..")
            hi = self.integer()
            self.expect("/")
            if hi < lo:
                self.error("empty iterator range")
            iterator = (var, lo, hi)
            st.iter_vars.add(var)
        # optional "origin :"
        origin = AnyState()
        has_origin = False
        save = self.i
        try:
            cand = self.label_pat(st)
            if self.accept(":"):
                origin, has_origin = cand, True
            else:
                self.i = save
        except ParseError:
            self.i = save
        guard = self.guard(st)
        self.expect("->")
        self.expect("[")
        actions = []
        if not self.at("]"):
            while True:
                actions.append(self.action(st))
                if not self.accept(";"):
                    break
        self.expect("]")
        result = None
        if not (self.at(";") or self.at("|]")):
            result = self.label_pat(st)
        if iterator is not None:
            st.iter_vars.discard(iterator[0])
        return has_origin, Transition(origin, guard, tuple(actions), result, iterator)

    def guard(self, st: _TState):
        t = self.tok
        if self.at("->"):
            return EmptyGuard()
        if self.at("{"):
            p = self.pattern()
            rest = self.ident("remainder variable") if self.accept("+") else None
            return PatternGuard(p, rest)
        if t.kind == "ident" and t.value in st.guards:
            self.i += 1
            self.expect("[")
            idx = self.expression()
            self.expect("]")
            rest = self.ident("remainder variable") if self.accept("+") else None
            return GuardRef(t.value, idx, rest)
        if t.kind == "ident" and t.value not in KEYWORDS:
            self.i += 1
            return RemainderGuard(t.value)
        self.error("expected a guard", ["{", "remainder variable", "->"])

    def action(self, st: _TState):
        t = self.tok
        if self.accept("emit"):
            return Emit(self.expression())
        if self.accept("reset"):
            targets = []
            while True:
                t2 = self.tok
                name = self.ident("hold variable")
                if name not in st.holds:
                    raise ParseError(f"unknown hold variable {name!r}", t2.line, t2.col)
                idx = None
                if self.accept("["):
                    idx = self.expression()
                    self.expect("]")
                targets.append((name, idx))
                if not self.accept(","):
                    break
            return Reset(tuple(targets))
        if t.kind == "ident" and t.value not in KEYWORDS:
            name = self.ident()
            if name not in st.holds:
                raise ParseError(f"unknown hold variable {name!r}", t.line, t.col)
            idx = None
            if self.accept("["):
                idx = self.expression()
                self.expect("]")
            self.expect(":=")
            return AssignHold(name, idx, self.expression())
        self.error("expected an action", ["emit", "reset", "hold variable"])

    def finish_transducer(self, st: _TState, items) -> TransducerSpec:
        label = st.label
        states: list[str] = []
        if not any(h for h, _ in items):
            # stateless filter: one state, self transitions
            if label is not None and label.kind != "range":
                self.error("a stateless transducer cannot declare a bit-array label")
            label = label or LabelDecl("range", 0, 0)
            lo = E.Int(label.lo)
            trans = [replace(tr, origin=StateExpr(lo)) for _, tr in items]
            return TransducerSpec(label, tuple(st.holds.items()), tuple(st.guards.items()),
                                  tuple(trans), (), None, frozenset(st.array_holds))
        if not items[0][0]:
            t = self.toks[self.i - 1]
            raise ParseError("the first transition needs an origin state", t.line, t.col)
        trans = []
        origin = None
        for has, tr in items:
            # transitions without an origin share the previous one
            if has:
                origin = tr.origin
            else:
                tr = replace(tr, origin=origin)
            trans.append(tr)
        if label is None:
            label = LabelDecl("named")
            for tr in trans:
                for lp in (tr.origin, tr.result):
                    if isinstance(lp, StateName) and lp.name not in states:
                        states.append(lp.name)
        return TransducerSpec(label, tuple(st.holds.items()), tuple(st.guards.items()),
                              tuple(trans), tuple(states), None, frozenset(st.array_holds))


def desugar_sync(pats: tuple[Pattern, ...]) -> TransducerSpec:
    """``[| {a},{b},{c} |]`` -> bit-array synchronizer merging one of each, in any order."""
    n = len(pats)
    i = E.Name("i")
    trans = (
        Transition(BitPat(True, "s", i), GuardRef("t", i), (AssignHold("h", i, E.Input()),),
                   BitPat(False, "s", i), ("i", 0, n - 1)),
        Transition(BitPat(False, "s", E.Int(0), E.Int(n - 1)), EmptyGuard(),
                   (Emit(E.UnionOf("h")), Reset((("h", None),))),
                   BitPat(True, "s", E.Int(0), E.Int(n - 1))),
    )
    return TransducerSpec(LabelDecl("bits", 0, (1 << n) - 1, "s", n), (("h", n),), (("t", pats),),
                          trans, (), pats, frozenset({"h"}))


def _run(fn):
    try:
        return fn()
    except RecursionError:
        raise ParseError("expression nested too deeply", 1, 1) from None


def parse_program(text: str) -> Program:
    return _run(lambda: Parser(text).program())


def parse_network(text: str) -> Node:
    return parse_program(text).network


def parse_transducer(text: str) -> TransducerSpec:
    def go():
        p = Parser(text)
        spec = p.transducer()
        if p.tok.kind != "eof":
            p.error("expected end of input", ["end of input"])
        return spec
    return _run(go)


def parse_box_decl(text: str) -> tuple[str, BoxSignature]:
    def go():
        p = Parser(text)
        d = p.box_decl()
        if p.tok.kind != "eof":
            p.error("expected end of input", ["end of input"])
        return d
    d = _run(go)
    return d.name, d.signature


def parse_box(text: str) -> BoxDecl:
    p = Parser(text)
    return _run(p.box_decl)


def parse_expression(text: str) -> E.Expr:
    def go():
        p = Parser(text)
        e = p.expression()
        if p.tok.kind != "eof":
            p.error("expected end of input", ["end of input"])
        return e
    return _run(go)
