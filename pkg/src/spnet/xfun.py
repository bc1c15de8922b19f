"""Extra-functional combinators: exception scopes, isolation, budgets, agents, placement.

Each θ/ρ/γ/τ/φ node becomes a transparent wrapper instance.  When one of
its target networks is instantiated, the wrapper hands it a *policy*
object.  Policies sit on the target's entry/exit path and are consulted
by every leaf inside the target when it starts or ends an activation.
"""
from __future__ import annotations

from collections import deque
from typing import TYPE_CHECKING

from .core import Packet, Scope, XfnException, consume
from .errors import ConfigError
from .instances import FACTORY, Inst, Leaf, Wrapper, make_instance
from .nodes import Assign, Budget, ExcHandle, Isolate, Lifetime, Project
from .resources import select

if TYPE_CHECKING:
    from .runtime import Runtime


def violation(req: str, detail: str = "") -> XfnException:
    return XfnException("Violation", req, detail=detail)


class Policy:
    """Per-target hook object; every method defaults to a no-op."""
    kind = "policy"

    def __init__(self, rt: "Runtime", owner: Inst | None, target: Inst | None):
        self.rt, self.owner, self.target = rt, owner, target

    def enter(self, target: Inst, pkt: Packet, cont) -> None:
        cont(pkt)

    def exit(self, target: Inst, pkt: Packet, cont) -> None:
        cont(pkt)

    def purge(self, pred) -> list[Packet]:
        return []

    def on_remove(self, target: Inst) -> None:
        pass

    def gate_start(self, leaf: Leaf) -> bool:
        return True

    def gate_agent(self, inst: Inst) -> bool:
        return True

    def gate_create(self, inst: Inst) -> bool:
        return True

    def on_start(self, leaf: Leaf, aidx) -> None:
        pass

    def on_end(self, leaf: Leaf) -> None:
        pass


# --- budgets ------------------------------------------------------------------------

def enclosing_amount(rt: "Runtime", env: tuple, kind: str) -> float | None:
    for p in reversed(env):
        if isinstance(p, BudgetPolicy) and p.bkind == kind:
            return p.amount
    return rt.config.budgets.get(kind)


class BudgetPolicy(Policy):
    kind = "budget"

    def __init__(self, rt, owner, target, bkind: str, amount: float):
        super().__init__(rt, owner, target)
        self.bkind = bkind
        self.amount = amount
        self.usage = 0.0


class LedgerBudget(BudgetPolicy):
    """mc / mp: storage or power held by running activations."""

    def on_start(self, leaf: Leaf, aidx) -> None:
        storage, power = leaf.cost()
        need = storage if self.bkind == "mc" else power
        if self.usage + need > self.amount:
            raise violation(self.bkind, f"needs {self.usage + need:g} of {self.amount:g}")
        self.usage += need
        leaf.charges.append((self, need))

    def release(self, need: float) -> None:
        self.usage -= need


class ArityBudget(BudgetPolicy):
    """mdla / mdaa / mdpa: block creation beyond the cap."""

    def _cap(self) -> int:
        if self.amount < 1:
            raise violation(self.bkind, f"cap {self.amount:g} can never be met")
        return int(self.amount)

    def gate_create(self, inst: Inst) -> bool:
        if self.bkind != "mdla":
            return True
        return self.target.arity("liveness") < self._cap()

    def gate_start(self, leaf: Leaf) -> bool:
        if self.bkind != "mdaa":
            return True
        return self.rt.running_in(self.target) < self._cap()

    def gate_agent(self, inst: Inst) -> bool:
        if self.bkind != "mdpa":
            return True
        return self.rt.agent_count(self.target) < self._cap()


class LatencyBudget(BudgetPolicy):
    """mfl / mll: abort and raise once the first/last output is overdue."""

    def __init__(self, rt, owner, target, bkind, amount):
        super().__init__(rt, owner, target, bkind, amount)
        self.scope = Scope(self._quiescent)
        self.pending: dict[int, Packet] = {}
        self.timers: dict[int, int] = {}
        self.next_key = 0

    def enter(self, target, pkt, cont):
        k = self.next_key
        self.next_key += 1
        p = self.scope.stamp(pkt, k)
        self.pending[k] = p
        self.timers[k] = self.rt.after(int(self.amount), lambda: self._deadline(k))
        cont(p)

    def exit(self, target, pkt, cont):
        p, k = self.scope.unstamp(pkt)
        if self.bkind == "mfl":
            self._settle(k)
        cont(p)
        self.scope.release(k)

    def _settle(self, k) -> None:
        self.pending.pop(k, None)
        t = self.timers.pop(k, None)
        if t is not None:
            self.rt.cancel(t)

    def _quiescent(self, k) -> None:
        self._settle(k)

    def _deadline(self, k) -> None:
        self.timers.pop(k, None)
        entry = self.pending.pop(k, None)
        if entry is None or not self.target.alive or self.rt.failed:
            return
        origin = entry.idx
        leaf_origin = self.target
        for n in self.target.subtree():
            if isinstance(n, Leaf) and n.busy is not None and n.busy[0].key_of(self.scope) == k:
                origin, leaf_origin = n.busy[1], n
                break
        exc = XfnException("Violation", self.bkind, origin, entry.record.lineage,
                           f"{self.bkind}({self.amount / 1e6:g}ms) exceeded")
        self.rt.raise_exc(exc, leaf_origin, entry)
        dropped = self.target.purge(lambda p: p.key_of(self.scope) == k)
        self.scope.forget(k)
        for p in dropped:
            self.rt.discard(p)


class RateBudget(BudgetPolicy):
    """mti / mto: space records entering (leaving) the target by 1/rate."""

    def __init__(self, rt, owner, target, bkind, amount):
        super().__init__(rt, owner, target, bkind, amount)
        self.interval = int(1e9 / amount) if amount > 0 else None
        self.next_ok = 0
        self.queue: deque = deque()

    def _gate(self, pkt, cont):
        if self.interval is None:
            raise violation(self.bkind, "zero throughput")
        if not self.queue and self.rt.now >= self.next_ok:
            self.next_ok = self.rt.now + self.interval
            cont(pkt)
            return
        self.queue.append((pkt, cont))
        if len(self.queue) == 1:
            self.rt.at(max(self.next_ok, self.rt.now), self._drain)

    def _drain(self) -> None:
        if not self.queue:
            return
        pkt, cont = self.queue.popleft()
        self.next_ok = self.rt.now + self.interval
        cont(pkt)
        if self.queue:
            self.rt.at(self.next_ok, self._drain)

    def enter(self, target, pkt, cont):
        if self.bkind == "mti":
            self._gate(pkt, cont)
        else:
            cont(pkt)

    def exit(self, target, pkt, cont):
        if self.bkind == "mto":
            self._gate(pkt, cont)
        else:
            cont(pkt)

    def purge(self, pred):
        out = [p for p, _ in self.queue if pred(p)]
        self.queue = deque(e for e in self.queue if not pred(e[0]))
        return out


BUDGET_CLASSES = {"mc": LedgerBudget, "mp": LedgerBudget, "mfl": LatencyBudget,
                  "mll": LatencyBudget, "mti": RateBudget, "mto": RateBudget,
                  "mdla": ArityBudget, "mdaa": ArityBudget, "mdpa": ArityBudget}


# --- isolation -------------------------------------------------------------------------

class IsolatePolicy(Policy):
    kind = "isolate"

    def __init__(self, rt, owner, target, prop: str):
        super().__init__(rt, owner, target)
        self.prop = prop
        self.usage = 0.0

    def on_start(self, leaf: Leaf, aidx) -> None:
        if self.prop in ("s", "p"):
            bkind = "mc" if self.prop == "s" else "mp"
            total = enclosing_amount(self.rt, self.owner.env, bkind)
            if total is None:
                return
            live = [t for t in self.owner.targets if t.alive and not t.is_dead()] or [self.target]
            pool = total / len(live)
            storage, power = leaf.cost()
            need = storage if self.prop == "s" else power
            if self.usage + need > pool:
                raise violation(self.prop, f"pool {pool:g} per replica cannot hold {self.usage + need:g}")
            self.usage += need
            leaf.charges.append((self, need))
        elif self.prop == "b" and self.rt.resources is not None:
            for t in self.owner.targets:
                if t is not self.target and t.alive and t.placement is self.target.placement:
                    raise violation("b", f"replicas share resource {self.target.placement.name}")

    def release(self, need: float) -> None:
        self.usage -= need


# --- agents ----------------------------------------------------------------------------

class ProjectPolicy(Policy):
    kind = "project"

    def __init__(self, rt, owner, target, mode: str):
        super().__init__(rt, owner, target)
        self.mode = mode
        self.scope = Scope(self._quiescent)
        self.agents: dict[int, object] = {}
        self.next_key = 0
        self.waiting: deque = deque()
        self.registered = False

    def enter(self, target, pkt, cont):
        if self.mode != "gr":
            cont(pkt)
            return
        if self.waiting or not self.rt.agent_gates(target):
            self.waiting.append((pkt, cont))
            self._register()
            return
        self._launch(pkt, cont)

    def _register(self) -> None:
        if not self.registered:
            self.registered = True
            self.rt.wait(self._retry)

    def _retry(self) -> None:
        self.registered = False
        while self.waiting and self.rt.agent_gates(self.target):
            pkt, cont = self.waiting.popleft()
            self._launch(pkt, cont)
        if self.waiting:
            self._register()

    def _launch(self, pkt, cont) -> None:
        k = self.next_key
        self.next_key += 1
        self.agents[k] = self.rt.agent_create(self.target, pkt.idx)
        cont(self.scope.stamp(pkt, k))

    def exit(self, target, pkt, cont):
        if self.mode != "gr" or pkt.key_of(self.scope) is None:
            cont(pkt)
            return
        p, k = self.scope.unstamp(pkt)
        cont(p)
        self.scope.release(k)

    def _quiescent(self, k) -> None:
        aid = self.agents.pop(k, None)
        if aid is not None:
            self.rt.agent_end(aid)

    def purge(self, pred):
        out = [p for p, _ in self.waiting if pred(p)]
        self.waiting = deque(e for e in self.waiting if not pred(e[0]))
        return out


class LifetimePolicy(Policy):
    kind = "lifetime"

    def __init__(self, rt, owner, target, mode: str):
        super().__init__(rt, owner, target)
        self.mode = mode


# --- placement ---------------------------------------------------------------------------

class AssignPolicy(Policy):
    kind = "assign"

    def __init__(self, rt, owner, target):
        super().__init__(rt, owner, target)
        node: Assign = owner.node
        origin = owner.placement
        opath = rt.report.origins.get(owner.path)
        if opath is not None:
            for a in owner.ancestors():
                if a.path == opath:
                    origin = a.placement
                    break
        self.node_held = None
        if node.assignment is None or origin is None:
            target.placement = origin
            return
        chosen = select(origin, node.assignment.selector)
        if not chosen:
            raise XfnException("Exhaustion", None, detail=f"selector {node.assignment.selector} picks nothing")
        if node.assignment.mode == "share":
            target.placement = chosen[0]
            return
        free = [n for n in chosen if not n.assigned]
        if not free:
            raise XfnException("Exhaustion", None,
                               detail=f"all {len(chosen)} selected resources are assigned")
        free[0].assigned += 1
        self.node_held = free[0]
        target.placement = free[0]

    def on_remove(self, target: Inst) -> None:
        if self.node_held is not None:
            self.node_held.assigned -= 1
            self.node_held = None


# --- latency monitoring for δ fl/ll --------------------------------------------------------

class LatencyMonitor(Policy):
    kind = "monitor"

    def __init__(self, rt, target):
        super().__init__(rt, None, target)
        self.scope = Scope(self._quiescent)
        self.t0: dict[int, int] = {}
        self.first_seen: set[int] = set()
        self.next_key = 0

    def enter(self, target, pkt, cont):
        k = self.next_key
        self.next_key += 1
        self.t0[k] = self.rt.now
        self.rt.ledger(target).sample("ti", self.rt.now)
        cont(self.scope.stamp(pkt, k))

    def exit(self, target, pkt, cont):
        p, k = self.scope.unstamp(pkt)
        led = self.rt.ledger(target)
        led.sample("to", self.rt.now)
        if k not in self.first_seen and k in self.t0:
            self.first_seen.add(k)
            led.value("fl", self.rt.now - self.t0[k])
        cont(p)
        self.scope.release(k)

    def _quiescent(self, k) -> None:
        t0 = self.t0.pop(k, None)
        self.first_seen.discard(k)
        if t0 is not None:
            self.rt.ledger(self.target).value("ll", self.rt.now - t0)


# --- wrapper instances -------------------------------------------------------------------

class XfunInst(Wrapper):
    """θ/ρ/γ/τ/φ wrapper: functionally the identity, hands policies to its targets."""

    def __init__(self, *a):
        self.targets: list[Inst] = []
        super().__init__(*a)

    def make_policies(self, target: Inst) -> list[Policy]:
        n = self.node
        rt = self.rt
        self.targets = [t for t in self.targets if t.alive]
        if isinstance(n, Budget):
            b = n.budget
            amount = b.amount
            if b.ratio is not None:
                parent = enclosing_amount(rt, self.env, b.kind)
                if parent is None:
                    raise ConfigError(f"ratio budget {b} has no finite enclosing {b.kind} budget")
                amount = b.ratio * parent
            pol = BUDGET_CLASSES[b.kind](rt, self, target, b.kind, amount)
        elif isinstance(n, Isolate):
            pol = IsolatePolicy(rt, self, target, n.property)
        elif isinstance(n, Project):
            pol = ProjectPolicy(rt, self, target, n.kind)
        elif isinstance(n, Lifetime):
            pol = LifetimePolicy(rt, self, target, n.kind)
        elif isinstance(n, Assign):
            pol = AssignPolicy(rt, self, target)
        else:
            return []
        self.targets.append(target)
        return [pol]

    def describe(self) -> str:
        return type(self.node).__name__.lower()


class BetaInst(Wrapper):
    """β: buffer outputs per input, roll back and retry on a matching exception."""

    def build(self) -> None:
        self.scope = Scope(self._quiescent)
        self.next_key = 0
        self.attempts: dict[int, tuple[Packet, object]] = {}
        self.buffers: dict[int, list[Packet]] = {}
        self.waiting: deque[Packet] = deque()
        self.stateful = self.rt.stateful(self.path + (0,))
        self.target_paths = set(self.rt.report.targets.get(self.path, [self.path + (0,)]))
        super().build()

    def _rebuild(self) -> None:
        x, y = self.slot
        self.inner = make_instance(self.rt, self.node.inner, self.path + (0,), self, x, y, self.idx0)
        self.inner.out = self.from_inner

    def accept(self, pkt: Packet) -> None:
        if self.stateful and (self.attempts or self.waiting):
            self.waiting.append(pkt)
            return
        self._start(pkt)

    def _start(self, pkt: Packet) -> None:
        if self.inner is None:
            self._rebuild()
        k = self.next_key
        self.next_key += 1
        cp = self.inner.checkpoint() if self.stateful else None
        self.attempts[k] = (pkt, cp)
        self.buffers[k] = []
        self.inner.receive(self.scope.stamp(pkt, k))

    def from_inner(self, pkt: Packet) -> None:
        p, k = self.scope.unstamp(pkt)
        if k in self.buffers:
            self.buffers[k].append(p)
        else:
            self.rt.discard(p)
        self.scope.release(k)

    def _quiescent(self, k) -> None:
        if self.attempts.pop(k, None) is None:
            return
        for p in self.buffers.pop(k, []):
            self.emit(p)
        self._admit_waiting()

    def _admit_waiting(self) -> None:
        while self.waiting and not (self.stateful and self.attempts):
            self._start(self.waiting.popleft())

    def catches(self, exc: XfnException, pkt: Packet, paths: list[tuple]) -> bool:
        k = pkt.key_of(self.scope)
        if k is None or k not in self.attempts:
            return False
        from_target = any(p in self.target_paths for p in paths)
        if not (from_target and exc.matches(self.node.exc_type)):
            self.terminate_inner()
            return False
        orig, cp = self.attempts.pop(k)
        for p in self.buffers.pop(k, []):
            self.rt.discard(p)
        dropped = self.inner.purge(lambda p: p.key_of(self.scope) == k)
        self.scope.forget(k)
        for p in dropped:
            self.rt.discard(p)
        if cp is not None:
            self.inner.rollback(cp)
        a = self.node.exc_label
        r = orig.record
        if a in r and r[a] == 0:
            consume(orig, 2)
            self._start(orig.with_record(r.with_fields(**{a: 1})))
            return True
        self.terminate_inner()
        self._admit_waiting()
        return False

    def terminate_inner(self) -> None:
        if self.inner is None:
            return
        inner, self.inner = self.inner, None
        for n in inner.subtree():
            if n.x is not None and not n.terminated:
                n.terminated = True
                self.rt.trace("replica_terminate", n.idx0 if not isinstance(n, Leaf) else n.cur_index(), "")
        dropped = inner.purge(lambda p: True)
        inner.detach()
        for k in list(self.attempts):
            self.attempts.pop(k)
            for p in self.buffers.pop(k, []):
                self.rt.discard(p)
            self.scope.forget(k)
        for p in dropped:
            self.rt.discard(p)

    def remove_child(self, child: Inst) -> None:
        pass

    def is_active(self) -> bool:
        return bool(self.attempts) or bool(self.waiting) or super().is_active()

    def has_work(self) -> bool:
        return bool(self.attempts) or bool(self.waiting) or super().has_work()

    def purge(self, pred) -> list[Packet]:
        out = super().purge(pred)
        for k, buf in self.buffers.items():
            out.extend(p for p in buf if pred(p))
            self.buffers[k] = [p for p in buf if not pred(p)]
        out.extend(p for p in self.waiting if pred(p))
        self.waiting = deque(p for p in self.waiting if not pred(p))
        return out

    def checkpoint(self):
        return (self.inner, super().checkpoint(), dict(self.attempts),
                {k: list(v) for k, v in self.buffers.items()}, dict(self.scope.counts))

    def rollback(self, blob) -> None:
        inner, states, attempts, buffers, counts = blob
        if self.inner is not inner:
            # the inner was terminated after the checkpoint; the next input rebuilds it
            return
        for c, b in states:
            c.rollback(b)
        self.attempts, self.buffers = dict(attempts), buffers
        self.scope.counts = counts

    def describe(self) -> str:
        return "exception scope"


FACTORY.update({Budget: XfunInst, Isolate: XfunInst, Project: XfunInst, Lifetime: XfunInst,
                Assign: XfunInst, ExcHandle: BetaInst})
