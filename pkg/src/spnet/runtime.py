"""Seeded virtual-time scheduler and the public handle over a running network."""
from __future__ import annotations

import copy
import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .analysis import AnalysisReport, analyze, check_budgets, expand_transducer, label_space
from .boxes import BoxImpl, BoxRegistry, default_registry
from .core import (Lineage, Packet, XfnException, consume, format_index, functional)
from .errors import ConfigError, NonTermination, SPNetError, UnknownIndex
from .instances import Inst, Leaf, make_instance
from .nodes import (Assign, BangStar, Box, BoxDecl, EnvObserve, ExcHandle, Node, ReplSelect,
                    Transduce, node_at, walk)
from .records import Record, encode_record
from .resources import ResourceNode
from . import xfun
from .xfun import LatencyMonitor, LedgerBudget, LifetimePolicy, ProjectPolicy

ARITY_KINDS = ("liveness", "activity", "depth", "agent")


@dataclass
class RunConfig:
    seed: int = 0
    budgets: dict = field(default_factory=dict)    # kind -> amount in base units
    collect_zombies: bool = False
    smoothing: str = "0.5"                         # alpha, or "window:N"
    depth_limit: int = 2 ** 20
    bangstar_cap: int = 10_000
    workers: int | None = None
    debug: bool = False
    check_purity: bool = False
    max_events: int = 5_000_000
    resources: ResourceNode | None = None

    def public(self) -> dict:
        """The JSON-safe part recorded in trace headers."""
        return {"seed": self.seed, "budgets": self.budgets, "collect_zombies": self.collect_zombies,
                "smoothing": self.smoothing, "depth_limit": self.depth_limit,
                "bangstar_cap": self.bangstar_cap, "workers": self.workers, "debug": self.debug}


@dataclass(frozen=True)
class TraceEvent:
    time: int
    kind: str
    index: tuple
    payload: str

    def line(self) -> str:
        return f"{self.time}\t{self.kind}\t{format_index(self.index)}\t{self.payload}"


class Ledger:
    """Smoothed per-instance observations (rates and latencies)."""

    def __init__(self, smoothing: str):
        self.window = None
        self.alpha = 0.5
        if smoothing.startswith("window:"):
            self.window = int(smoothing.split(":", 1)[1])
        else:
            self.alpha = float(smoothing)
        self.values: dict[str, object] = {}
        self.last: dict[str, int] = {}

    def value(self, kind: str, v: float) -> None:
        if self.window is not None:
            buf = self.values.setdefault(kind, deque(maxlen=self.window))
            buf.append(v)
        elif kind in self.values:
            self.values[kind] = self.alpha * v + (1 - self.alpha) * self.values[kind]
        else:
            self.values[kind] = float(v)

    def sample(self, kind: str, now: int) -> None:
        last = self.last.get(kind)
        self.last[kind] = now
        if last is not None and now > last:
            self.value(kind, 1e9 / (now - last))

    def get(self, kind: str) -> float:
        v = self.values.get(kind)
        if v is None:
            return 0.0
        if isinstance(v, deque):
            return sum(v) / len(v) if v else 0.0
        return v


class Runtime:
    """A live network instance driven by one seeded logical scheduler."""

    def __init__(self, program, registry: BoxRegistry | None = None,
                 config: RunConfig | None = None, boxes: dict[str, BoxDecl] | None = None):
        from .parser import Program
        if isinstance(program, Program):
            spec, boxes, positions = program.network, program.boxes, program.positions
            self.source = program.source
        else:
            spec, positions = program, None
            boxes = boxes or {}
            self.source = ""
        self.spec: Node = spec
        self.boxes = dict(boxes or {})
        self.config = config or RunConfig()
        self.registry = registry or default_registry()
        self.report: AnalysisReport = analyze(spec, self.boxes, positions)
        check_budgets(spec, self.report, positions, self.config.budgets)
        errs = self.report.errors
        if errs:
            raise ConfigError("static errors: " + "; ".join(f"{d.code} {d.message}" for d in errs))
        self.impls: dict[str, BoxImpl] = {}
        for _, n in walk(spec):
            if isinstance(n, Box) and n.name not in self.impls:
                self.impls[n.name] = self.registry.resolve(self.boxes.get(n.name), n.name)
        needs_tree = any(isinstance(n, Assign) and n.assignment is not None for _, n in walk(spec))
        if needs_tree and self.config.resources is None:
            raise ConfigError("placement needs a resource tree (--resources)")
        self.resources = copy.deepcopy(self.config.resources)
        self.targeted_by: dict[tuple, list[tuple]] = {}
        for xp, tps in sorted(self.report.targets.items(), key=lambda kv: len(kv[0])):
            for tp in tps:
                self.targeted_by.setdefault(tp, []).append(xp)
        self.watch: set[tuple] = set()
        for p, (lp, tp) in self.report.observed.items():
            if tp is not None and node_at(spec, p).env_fn.kind in ("ti", "to", "fl", "ll"):
                self.watch.add(tp)
        seed = self.config.seed
        self.rng = random.Random(seed)
        self.pick_rng = random.Random(f"pick:{seed}")
        self.picks: list[int] = []
        self.heap: list = []
        self.cancelled: set[int] = set()
        self.seq = 0
        self.now = 0
        self.events = 0
        self.failed: SPNetError | None = None
        self.trace_events: list[TraceEvent] = []
        self.inputs: deque[Record] = deque()
        self.outputs: list[Record] = []
        self.next_input = 0
        self.agents: dict[int, tuple[Inst, tuple]] = {}
        self.next_aid = 0
        self.running: set[Leaf] = set()
        self.waiters: list = []
        self.ledgers: dict[Inst, Ledger] = {}
        self._stateful: dict[tuple, bool] = {}
        self.root_policies = tuple(LedgerBudget(self, None, None, k, float(v))
                                   for k, v in sorted(self.config.budgets.items()) if k in ("mc", "mp"))
        self.root: Inst = make_instance(self, spec, (), None, None, 0, ())
        self.root.out = self._output

    # --- scheduling -----------------------------------------------------------------
    def at(self, t: int, cb) -> int:
        """Schedule ``cb`` at virtual time ``t``; returns a handle for :meth:`cancel`."""
        seq = self.seq
        heapq.heappush(self.heap, (int(t), self.rng.random(), seq, cb))
        self.seq += 1
        return seq

    def after(self, delay: int, cb) -> int:
        return self.at(self.now + int(delay), cb)

    def cancel(self, handle: int) -> None:
        self.cancelled.add(handle)

    def wait(self, cb) -> None:
        self.waiters.append(cb)

    def pick(self, n: int) -> int:
        k = self.pick_rng.randrange(n)
        self.picks.append(k)
        return k

    def feed(self, r: Record) -> None:
        self.inputs.append(r.with_lineage(Lineage(self.next_input)))
        self.next_input += 1

    def drain(self) -> list[Record]:
        out, self.outputs = self.outputs, []
        return out

    def _deliver_inputs(self) -> None:
        while self.inputs and self.failed is None:
            r = self.inputs.popleft()
            self.trace("input", (), r)
            self.root.receive(Packet(r))
            self._retry_waiters()

    def run_to_quiescence(self, until: int | None = None) -> None:
        """Advance until nothing is runnable (or the virtual clock passes ``until``)."""
        self._deliver_inputs()
        while self.heap and self.failed is None:
            t = self.heap[0][0]
            if until is not None and t > until:
                break
            _, _, seq, cb = heapq.heappop(self.heap)
            if seq in self.cancelled:
                self.cancelled.discard(seq)
                continue
            self.now = t
            cb()
            self._retry_waiters()
            self.events += 1
            if self.events > self.config.max_events:
                self.fail(NonTermination(f"more than {self.config.max_events} events"))
        if until is not None and self.failed is None and self.now < until:
            self.now = until
        if self.failed is not None:
            raise self.failed

    def _retry_waiters(self) -> None:
        if not self.waiters:
            return
        ws, self.waiters = self.waiters, []
        for w in ws:
            if self.failed is not None:
                return
            w()

    @property
    def quiescent(self) -> bool:
        return not self.inputs and all(e[2] in self.cancelled for e in self.heap)

    def _output(self, pkt: Packet) -> None:
        self.trace("output", pkt.idx, pkt.record)
        self.outputs.append(pkt.record)

    # --- tracing -------------------------------------------------------------------
    def trace(self, kind: str, idx: tuple, payload) -> None:
        text = encode_record(payload) if isinstance(payload, Record) else str(payload)
        self.trace_events.append(TraceEvent(self.now, kind, tuple(idx), text))

    def trace_lines(self) -> list[str]:
        return [e.line() for e in self.trace_events]

    # --- marks and exceptions -------------------------------------------------------
    def discard(self, pkt: Packet) -> None:
        consume(pkt, 0)

    def fail(self, exc: SPNetError) -> None:
        if self.failed is None:
            self.failed = exc

    def raise_exc(self, exc: XfnException, inst: Inst, pkt: Packet) -> None:
        if self.failed is not None:
            return
        self.trace("exception", exc.origin, exc.name)
        paths = []
        a = inst
        while a is not None:
            if isinstance(a, xfun.BetaInst) and a is not inst:
                if a.catches(exc, pkt, paths):
                    return
            paths.append(a.path)
            a = a.parent
        self.fail(exc)

    # --- lifecycle -------------------------------------------------------------------
    def check_dead(self, inst: Inst) -> None:
        if inst.removed or not inst.alive or not inst.terminated or inst.has_work():
            return
        if inst.is_active() and not self.config.collect_zombies:
            return
        self.collect(inst)

    def collect(self, inst: Inst, force: bool = False) -> None:
        if inst.removed:
            return
        inst.removed = True
        if not inst.transparent:
            idx = inst.cur_index() if isinstance(inst, Leaf) else inst.idx0
            self.trace("gc", idx, "")
        inst.detach()
        if inst.parent is not None:
            inst.parent.remove_child(inst)

    def gc_pass(self) -> int:
        """Collect every dead (and, if configured, zombie) instance; returns the count."""
        n = 0
        for inst in list(self.root.subtree()):
            if inst is self.root or inst.removed:
                continue
            before = inst.removed
            self.check_dead(inst)
            n += inst.removed and not before
        return n

    # --- policies, gates and agents -------------------------------------------------------
    def attach_policies(self, inst: Inst) -> None:
        for xp in self.targeted_by.get(inst.path, ()):
            owner = next((a for a in inst.ancestors() if a.path == xp), None)
            if isinstance(owner, xfun.XfunInst):
                inst.policies.extend(owner.make_policies(inst))
        if inst.path in self.watch:
            inst.policies.append(LatencyMonitor(self, inst))

    def agent_mode(self, leaf: Leaf) -> tuple[str, str]:
        proj, life = "ge", "to"
        for p in leaf.env:
            if isinstance(p, ProjectPolicy):
                proj = p.mode
            elif isinstance(p, LifetimePolicy):
                life = p.mode
        return proj, life

    def may_create(self, inst: Inst) -> bool:
        try:
            return all(p.gate_create(inst) for p in inst.env)
        except XfnException:
            return True

    def check_create(self, inst: Inst) -> None:
        for p in inst.env:
            p.gate_create(inst)

    def agent_gates(self, inst: Inst) -> bool:
        return all(p.gate_agent(inst) for p in inst.env)

    def can_start(self, leaf: Leaf) -> bool:
        if self.config.workers is not None and len(self.running) >= self.config.workers:
            return False
        if not all(p.gate_start(leaf) for p in leaf.env):
            return False
        if leaf.uses_agent and leaf.proj == "ge" and leaf.agent is None and not self.agent_gates(leaf):
            return False
        return True

    def on_start(self, leaf: Leaf, aidx: tuple, pkt: Packet) -> None:
        self.running.add(leaf)
        if leaf.uses_agent and leaf.proj == "ge" and leaf.agent is None:
            leaf.agent = self.agent_create(leaf, aidx)
        for p in leaf.env:
            p.on_start(leaf, aidx)

    def on_end(self, leaf: Leaf, aidx: tuple, aborted: bool = False) -> None:
        self.running.discard(leaf)
        for p, need in leaf.charges:
            p.release(need)
        leaf.charges = []
        if leaf.agent is not None and (leaf.life == "te" or not leaf.queue):
            self.agent_end(leaf.agent)
            leaf.agent = None

    def agent_create(self, owner: Inst, idx: tuple) -> int:
        aid = self.next_aid
        self.next_aid += 1
        self.agents[aid] = (owner, tuple(idx))
        self.trace("agent_create", idx, "")
        return aid

    def agent_end(self, aid: int) -> None:
        entry = self.agents.pop(aid, None)
        if entry is not None:
            self.trace("agent_end", entry[1], "")

    def forget_agents(self, inst: Inst) -> None:
        for aid, (owner, _) in list(self.agents.items()):
            if owner.within(inst):
                self.agent_end(aid)
                if isinstance(owner, Leaf):
                    owner.agent = None

    def agent_count(self, inst: Inst) -> int:
        return sum(1 for owner, _ in self.agents.values() if owner.within(inst))

    def running_in(self, inst: Inst) -> int:
        return sum(1 for leaf in self.running if leaf.within(inst))

    # --- leaves' helpers ----------------------------------------------------------------
    def box_impl(self, name: str) -> BoxImpl:
        return self.impls[name]

    def invoke(self, impl: BoxImpl, r: Record) -> list[Record]:
        out = impl.invoke(r)
        if self.config.check_purity and impl.fn is not None and impl.invoke(r) != out:
            raise SPNetError(f"box {impl.name} is not functionally pure")
        return out

    def expanded(self, path: tuple, spec):
        entry = self.report.transducers.get(path)
        return entry[0] if entry is not None else expand_transducer(spec)

    def stateful(self, path: tuple) -> bool:
        if path not in self._stateful:
            flag = False
            for p, n in walk(node_at(self.spec, path), path):
                if isinstance(n, (BangStar, ReplSelect)):
                    flag = True
                elif isinstance(n, Transduce):
                    spec = self.expanded(p, n.spec)
                    if spec.hold_decls or len(label_space(spec)) > 1:
                        flag = True
            self._stateful[path] = flag
        return self._stateful[path]

    def ledger(self, inst: Inst) -> Ledger:
        led = self.ledgers.get(inst)
        if led is None:
            led = self.ledgers[inst] = Ledger(self.config.smoothing)
        return led

    def observe(self, leaf: Leaf, fn, prev, aidx: tuple) -> int:
        def unimpl(detail):
            return XfnException("Unimplemented", None, aidx, None, detail)
        if fn.kind == "time":
            if not isinstance(prev, int):
                raise unimpl("time() needs a scalar")
            return self.now * fn.granularity // 10 ** 9 - prev
        lp, tp = self.report.observed.get(leaf.path, (None, None))
        anchor = leaf if leaf.path == lp else next((a for a in leaf.ancestors() if a.path == lp), None)
        if anchor is None or tp is None:
            raise XfnException("UnknownIndex", None, aidx, None, f"{fn} does not resolve")
        target = descend(anchor, fn.index)
        if target is None:
            raise XfnException("UnknownIndex", None, aidx, None, f"{fn} names no live instance")
        g = fn.granularity
        k = fn.kind
        if k in ("dla", "daa", "dpa"):
            return target.arity({"dla": "liveness", "daa": "activity", "dpa": "agent"}[k])
        if k == "c":
            return int(sum(l.cost()[0] for l in self.running if l.within(target)) // g)
        if k == "p":
            return int(sum(l.cost()[1] for l in self.running if l.within(target)) * g // 1000)
        if k in ("ti", "to"):
            return int(self.ledger(target).get(k) / g)
        if k in ("fl", "ll"):
            return int(self.ledger(target).get(k) * g // 10 ** 9)
        if k == "h":
            node = target.placement
            if node is None:
                raise unimpl("no resource tree")
            v = node.prop(fn.prop)
            if not isinstance(v, int) or isinstance(v, bool):
                raise unimpl(f"resource property {fn.prop!r} is not a scalar")
            return v
        raise unimpl(f"environment function {k}")

    # --- inspection -----------------------------------------------------------------------
    def find(self, idx: Iterable) -> Inst:
        """Instance named by a full or functional index (from the root)."""
        cur = self.root
        for comp in idx:
            x, y = (comp[0], comp[1]) if isinstance(comp, tuple) else (comp, None)
            nxt = cur.find_child(x)
            if nxt is None or (y is not None and nxt.y != y):
                raise UnknownIndex(f"no live instance at {list(idx)}")
            cur = nxt
        return cur

    def arity(self, idx: Iterable, kind: str = "liveness") -> int:
        if kind not in ARITY_KINDS:
            raise ValueError(f"arity kind must be one of {ARITY_KINDS}")
        return self.find(idx).arity(kind)

    def arity_report(self, idx: Iterable) -> dict[str, int]:
        inst = self.find(idx)
        return {k: inst.arity(k) for k in ARITY_KINDS}

    def live_replicas(self, pattern: Iterable) -> list[tuple[int, ...]]:
        """Functional indices of live instances matching a pattern with ``*`` wildcards."""
        pat = list(pattern)
        out = []

        def go(inst: Inst, i: int):
            if i == len(pat):
                if not inst.is_dead():
                    out.append(inst.fpath)
                return
            base = inst.core() if inst.transparent else inst
            if base is None:
                return
            for c in base.children():
                c = c.core() if c.transparent else c
                if c is not None and (pat[i] == "*" or c.x == pat[i]):
                    go(c, i + 1)

        go(self.root, 0)
        return sorted(out)

    def state(self, idx: Iterable = ()) -> list[dict]:
        inst = self.find(idx)
        out = []
        for n in inst.subtree():
            out.extend(n.state_entries())
        return out


def descend(anchor: Inst, findex: Iterable[int]) -> Inst | None:
    cur = anchor
    for x in findex:
        cur = cur.find_child(x)
        if cur is None:
            return None
    return cur


# --- functional façade -------------------------------------------------------------------

def instantiate_network(spec, config: RunConfig | None = None, registry: BoxRegistry | None = None,
                        boxes: dict | None = None) -> Runtime:
    return Runtime(spec, registry, config, boxes)


def feed(h: Runtime, r: Record) -> None:
    h.feed(r)


def drain(h: Runtime) -> list[Record]:
    return h.drain()


def run_to_quiescence(h: Runtime, until: int | None = None) -> None:
    h.run_to_quiescence(until)


def gc_pass(h: Runtime) -> int:
    return h.gc_pass()


def arity(h: Runtime, idx, kind: str = "liveness") -> int:
    return h.arity(idx, kind)


def run(program, inputs: Iterable[Record], config: RunConfig | None = None,
        registry: BoxRegistry | None = None) -> tuple[list[Record], Runtime]:
    """Feed all inputs, run to quiescence and return (outputs, handle)."""
    h = Runtime(program, registry, config)
    for r in inputs:
        h.feed(r)
    h.run_to_quiescence()
    return h.drain(), h


__all__ = ["RunConfig", "Runtime", "TraceEvent", "instantiate_network", "feed", "drain",
           "run_to_quiescence", "gc_pass", "arity", "run", "functional"]
