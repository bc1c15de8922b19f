"""Box registry and invocation: host callbacks and scripted boxes with cost annotations."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .errors import ConfigError, DuplicateBox, EvalError, SPNetError, SPNetTypeError
from .expr import Env, evaluate, truthy
from .nodes import BoxCost, BoxDecl, BoxEmit, BoxFaultClause, BoxSignature, PosType
from .records import Record, Tag, Value


class BoxFault(SPNetError):
    """A box activation failed with a named fault."""

    def __init__(self, name: str, detail: str = ""):
        self.name = name
        self.detail = detail
        super().__init__(f"{name}: {detail}" if detail else name)


HostFn = Callable[..., Iterable]


@dataclass
class BoxImpl:
    """A resolved box: either a host callback or a scripted body."""
    name: str
    signature: BoxSignature
    fn: HostFn | None = None
    script: tuple[BoxEmit, ...] | None = None
    cost: BoxCost = field(default_factory=BoxCost)
    faults: tuple[BoxFaultClause, ...] = ()

    def marshal_in(self, r: Record) -> list[Value]:
        sig = self.signature.input
        args = [r[k] for k in sig.labels]
        if sig.tag is not None:
            args.append(r.tag.value)
        return args

    def marshal_out(self, variant: int, values: Sequence[Value]) -> Record:
        outs = self.signature.outputs
        if not 0 <= variant < len(outs):
            raise SPNetTypeError(f"box {self.name}: no output variant {variant}")
        pt = outs[variant]
        want = len(pt.labels) + (pt.tag is not None)
        if len(values) != want:
            raise SPNetTypeError(f"box {self.name}: variant {pt} needs {want} values, got {len(values)}")
        fields = dict(zip(pt.labels, values))
        tag = Tag(pt.tag, values[-1]) if pt.tag is not None else None
        return Record(fields, tag)

    def check_output(self, r: Record) -> Record:
        for pt in self.signature.outputs:
            if set(pt.labels) == set(r.labels) and pt.tag == (r.tag.label if r.tag else None):
                return r
        declared = " | ".join(str(o) for o in self.signature.outputs)
        raise SPNetTypeError(f"box {self.name}: output {r.rtype} violates declared outputs {declared}")

    def invoke(self, r: Record) -> list[Record]:
        """Run one activation; flow inheritance is left to the caller."""
        env = Env(input=r, fields_as_names=True)
        for f in self.faults:
            if truthy(evaluate(f.when, env)):
                raise BoxFault(f.name, f"box {self.name} on {r.rtype}")
        if self.script is not None:
            return self._run_script(r, env)
        if self.fn is None:
            raise ConfigError(f"box {self.name} has no implementation")
        out = []
        for item in self.fn(*self.marshal_in(r)):
            if isinstance(item, Record):
                out.append(self.check_output(item))
            elif isinstance(item, dict):
                out.append(self.check_output(Record(item)))
            else:
                variant, values = item
                out.append(self.marshal_out(variant, values))
        return out

    def _run_script(self, r: Record, env: Env) -> list[Record]:
        out = []
        for stmt in self.script:
            if stmt.cond is not None and not truthy(evaluate(stmt.cond, env)):
                continue
            n = 1
            if stmt.count is not None:
                n = evaluate(stmt.count, env)
                if not isinstance(n, int) or isinstance(n, bool) or n < 0:
                    raise EvalError(f"box {self.name}: emit count must be a nonnegative scalar")
            for i in range(n):
                env.names["i"] = i
                v = evaluate(stmt.expr, env)
                if not isinstance(v, Record):
                    raise EvalError(f"box {self.name}: emit needs a record")
                out.append(self.check_output(v))
            env.names.pop("i", None)
        return out


def _norm(sig: BoxSignature) -> str:
    return str(sig)


class BoxRegistry:
    """Host-registered box implementations, looked up by name."""

    def __init__(self, check_purity: bool = False):
        self._boxes: dict[str, BoxImpl] = {}
        self.check_purity = check_purity

    def register_box(self, name: str, signature: BoxSignature | str, impl: HostFn,
                     cost: BoxCost | None = None) -> None:
        if name in self._boxes:
            raise DuplicateBox(f"box {name!r} already registered")
        if isinstance(signature, str):
            from .parser import parse_box_decl
            _, signature = parse_box_decl(f"box {name} ({signature});")
        self._boxes[name] = BoxImpl(name, signature, fn=impl, cost=cost or BoxCost())

    def __contains__(self, name: str) -> bool:
        return name in self._boxes

    def get(self, name: str) -> BoxImpl | None:
        return self._boxes.get(name)

    def resolve(self, decl: BoxDecl | None, name: str) -> BoxImpl:
        """Bind a declaration to its implementation (scripted bodies win)."""
        if decl is not None and decl.script is not None:
            return BoxImpl(name, decl.signature, script=decl.script,
                           cost=decl.cost or BoxCost(), faults=decl.faults)
        impl = self._boxes.get(name)
        if impl is None:
            raise ConfigError(f"box {name!r} has no implementation")
        if decl is not None:
            if _norm(decl.signature) != _norm(impl.signature):
                raise ConfigError(f"box {name!r}: declared {_norm(decl.signature)} "
                                  f"but registered {_norm(impl.signature)}")
            if decl.cost is not None or decl.faults:
                impl = BoxImpl(impl.name, impl.signature, fn=impl.fn,
                               cost=decl.cost or impl.cost, faults=decl.faults)
        return impl


_default = BoxRegistry()


def register_box(name: str, signature, impl: HostFn, cost: BoxCost | None = None,
                 registry: BoxRegistry | None = None) -> None:
    (registry or _default).register_box(name, signature, impl, cost)


def default_registry() -> BoxRegistry:
    return _default


def invoke_box(impl: BoxImpl, r: Record, check_purity: bool = False) -> list[Record]:
    out = impl.invoke(r)
    if check_purity and impl.fn is not None:
        again = impl.invoke(r)
        if again != out:
            raise SPNetError(f"box {impl.name} is not functionally pure")
    return out


def pos_type(labels: Sequence[str], tag: str | None = None) -> PosType:
    return PosType(tuple(labels), tag)
