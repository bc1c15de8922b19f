"""Dynamic network instances for boxes, transducers and the functional combinators.

Every instance receives packets from its parent through ``receive`` and
hands results to ``out``.  Non-transparent instances living in a slot of
a combinator own an index triplet ``(x, y, z)``: composites push it on
entry and pop it on exit, leaves append it only to activation indices.
"""
from __future__ import annotations

from collections import deque
from typing import TYPE_CHECKING, Callable, Iterable

from .analysis import best_variant
from .boxes import BoxFault
from .core import Packet, Lineage, Scope, XfnException, consume
from .errors import DepthLimitExceeded, SPNetError
from .nodes import (BangStar, Box, Comp, EnvObserve, Label, Node, Reorder, ReplSelect,
                    Select, StarComp, Transduce, TRANSPARENT)
from .records import Record, Tag, flow_inherit, guard_match
from .transducer import TransducerInstance, restore as restore_transducer

if TYPE_CHECKING:
    from .runtime import Runtime

NEUTRAL = "neutral"
FACTORY: dict[type, type] = {}


def make_instance(rt: "Runtime", node: Node, path: tuple, parent: "Inst | None",
                  x: int | None, y: int, idx0: tuple) -> "Inst":
    cls = FACTORY.get(type(node))
    if cls is None:
        raise SPNetError(f"no run-time support for {type(node).__name__}")
    inst = cls(rt, node, path, parent, x, y, idx0)
    inst.build()
    return inst


def as_exception(e: Exception, origin, lineage) -> XfnException:
    if isinstance(e, XfnException):
        return e
    if isinstance(e, BoxFault):
        return XfnException(e.name, None, origin, lineage, e.detail)
    return XfnException(type(e).__name__, None, origin, lineage, str(e))


class Inst:
    transparent = False
    leaf = False

    def __init__(self, rt: "Runtime", node: Node, path: tuple, parent: "Inst | None",
                 x: int | None, y: int, idx0: tuple):
        self.rt, self.node, self.path, self.parent = rt, node, path, parent
        self.slot = (x, y)
        self.x, self.y = (None, y) if self.transparent else (x, y)
        self.idx0 = idx0
        self.fpath = (parent.fpath if parent else ()) + ((x,) if self.x is not None else ())
        self.acts = 0
        self.terminated = False
        self.removed = False
        self.alive = True
        self.out: Callable[[Packet], None] = lambda p: None
        self.next_y: dict = {}
        self.placement = parent.placement if parent else rt.resources
        self.env: tuple = parent.env if parent else rt.root_policies
        self.policies: list = []
        rt.attach_policies(self)
        self.env = self.env + tuple(self.policies)

    def build(self) -> None:
        pass

    # --- structure -------------------------------------------------------------
    def children(self) -> list["Inst"]:
        return []

    def ancestors(self):
        a = self.parent
        while a is not None:
            yield a
            a = a.parent

    def within(self, other: "Inst") -> bool:
        a = self
        while a is not None:
            if a is other:
                return True
            a = a.parent
        return False

    def subtree(self):
        yield self
        for c in self.children():
            yield from c.subtree()

    def spawn(self, node: Node, path: tuple, x: int | None, ctx: tuple) -> "Inst":
        y = self.next_y.get(x, 0)
        self.next_y[x] = y + 1
        idx0 = ctx + ((x, y, 0),) if x is not None else ctx
        return make_instance(self.rt, node, path, self, x, y, idx0)

    def create_replica(self, node: Node, path: tuple, x: int, pkt: Packet) -> "Inst | None":
        """Dynamic replica creation; ``None`` if an exception was raised instead."""
        try:
            self.rt.check_create(self)
            inst = self.spawn(node, path, x, pkt.idx)
        except XfnException as e:
            if not e.origin:
                e.origin = pkt.idx + ((x, self.next_y.get(x, 1) - 1, 0),)
            e.lineage = e.lineage or pkt.record.lineage
            self.rt.raise_exc(e, self, pkt)
            self.rt.discard(pkt)
            return None
        self.rt.trace("replica_create", inst.idx0, "")
        return inst

    # --- flow ------------------------------------------------------------------
    def receive(self, pkt: Packet) -> None:
        if not self.leaf and self.x is not None:
            pkt = pkt.push((self.x, self.y, self.acts))
            self.acts += 1
        self._admit(pkt, 0)

    def _admit(self, pkt: Packet, i: int) -> None:
        if i < len(self.policies):
            self.policies[i].enter(self, pkt, lambda p: self._admit(p, i + 1))
        else:
            self.accept(pkt)

    def accept(self, pkt: Packet) -> None:
        raise NotImplementedError

    def emit(self, pkt: Packet) -> None:
        self._leave(pkt, len(self.policies) - 1)

    def _leave(self, pkt: Packet, i: int) -> None:
        if i >= 0:
            self.policies[i].exit(self, pkt, lambda p: self._leave(p, i - 1))
            return
        if not self.leaf and self.x is not None:
            pkt = pkt.pop()
        self.out(pkt)

    # --- lifecycle -------------------------------------------------------------
    def is_active(self) -> bool:
        return any(c.is_active() for c in self.children())

    def is_dead(self) -> bool:
        return self.terminated and not self.is_active()

    def is_zombie(self) -> bool:
        return self.terminated and self.is_active()

    def collectable(self) -> bool:
        return self.terminated and not self.has_work()

    def has_work(self) -> bool:
        return any(c.has_work() for c in self.children())

    def terminate(self) -> None:
        if self.terminated:
            return
        self.terminated = True
        if self.x is not None:
            self.rt.trace("replica_terminate", self.idx0, "")
        for c in self.children():
            c.terminate()
        self.rt.check_dead(self)

    def detach(self) -> None:
        for n in self.subtree():
            n.alive = False
            for p in n.policies:
                p.on_remove(n)
        self.rt.forget_agents(self)

    def remove_child(self, child: "Inst") -> None:
        """Drop a dead child; the default keeps fixed children as neutral slots."""

    def purge(self, pred) -> list[Packet]:
        out: list[Packet] = []
        for p in self.policies:
            out.extend(p.purge(pred))
        for c in self.children():
            out.extend(c.purge(pred))
        return out

    def checkpoint(self):
        return [(c, c.checkpoint()) for c in self.children()]

    def rollback(self, blob) -> None:
        for c, b in blob:
            c.rollback(b)

    # --- inspection ------------------------------------------------------------
    def arity(self, kind: str) -> int:
        kids = self.children()
        if kind == "liveness":
            return sum(1 for c in kids if not c.is_dead())
        if kind == "activity":
            return sum(1 for c in kids if c.is_active())
        if kind == "agent":
            return self.rt.agent_count(self)
        if kind == "depth":
            return 0
        raise ValueError(f"unknown arity kind {kind!r}")

    def state_entries(self) -> list[dict]:
        return []

    def find_child(self, x) -> "Inst | None":
        for c in self.children():
            if c.transparent:
                c = c.core()
            if c is not None and c.x == x:
                return c
        return None

    def core(self) -> "Inst":
        return self

    def describe(self) -> str:
        return type(self.node).__name__


# --- leaves ---------------------------------------------------------------------

class Leaf(Inst):
    leaf = True
    event_kind: str | None = "box_call"
    uses_agent = True

    def build(self) -> None:
        self.queue: deque[Packet] = deque()
        self.busy: tuple | None = None
        self.epoch = 0
        self.ended = False
        self.agent = None
        self.charges: list = []
        self.waiting = False
        self.proj, self.life = self.rt.agent_mode(self)
        self.fresh_state()

    def fresh_state(self) -> None:
        pass

    def children(self) -> list[Inst]:
        return []

    def accepts(self, r: Record) -> bool:
        raise NotImplementedError

    def duration(self, r: Record) -> int:
        return 0

    def compute(self, r: Record, aidx) -> list[Record]:
        raise NotImplementedError

    def cost(self):
        return (0, 0)

    def accept(self, pkt: Packet) -> None:
        self.queue.append(pkt)
        self.kick()

    def kick(self) -> None:
        rt = self.rt
        while self.alive and self.busy is None and self.queue and not rt.failed:
            pkt = self.queue[0]
            if not self.accepts(pkt.record):
                self.queue.popleft()
                self.emit(pkt)
                continue
            try:
                ok = rt.can_start(self)
            except XfnException as e:
                self.queue.popleft()
                e.origin = e.origin or pkt.idx
                e.lineage = pkt.record.lineage
                rt.raise_exc(e, self, pkt)
                rt.discard(pkt)
                continue
            if not ok:
                if not self.waiting:
                    self.waiting = True
                    rt.wait(self._retry)
                return
            self.queue.popleft()
            self.start(pkt)
        if self.alive:
            rt.check_dead(self)

    def _retry(self) -> None:
        self.waiting = False
        self.kick()

    def start(self, pkt: Packet) -> None:
        rt = self.rt
        if self.ended:
            self.reincarnate()
        aidx = pkt.idx + ((self.x, self.y, self.acts),) if self.x is not None else pkt.idx
        self.acts += 1
        try:
            rt.on_start(self, aidx, pkt)
        except XfnException as e:
            e.origin = e.origin or aidx
            e.lineage = pkt.record.lineage
            rt.on_end(self, aidx, aborted=True)
            rt.raise_exc(e, self, pkt)
            rt.discard(pkt)
            return
        if self.event_kind:
            rt.trace(self.event_kind, aidx, pkt.record)
        self.busy = (pkt, aidx)
        epoch = self.epoch
        rt.after(self.duration(pkt.record), lambda: self.complete(epoch))

    def complete(self, epoch: int) -> None:
        if epoch != self.epoch or not self.alive or self.busy is None:
            return
        rt = self.rt
        pkt, aidx = self.busy
        try:
            recs = self.compute(pkt.record, aidx)
        except (SPNetError, ArithmeticError) as e:
            self.busy = None
            rt.on_end(self, aidx, aborted=True)
            rt.raise_exc(as_exception(e, aidx, pkt.record.lineage), self, pkt)
            rt.discard(pkt)
            self.kick()
            return
        self.busy = None
        rt.on_end(self, aidx)
        lin = pkt.record.lineage
        outs = []
        for k, r in enumerate(recs):
            if lin is not None:
                r = r.with_lineage(Lineage(lin.root, k, lin))
            outs.append(Packet(r, pkt.marks, pkt.idx))
        consume(pkt, len(outs))
        for o in outs:
            self.emit(o)
        self.after_activation()
        self.kick()

    def after_activation(self) -> None:
        if self.life == "te":
            self.end_incarnation()

    def end_incarnation(self) -> None:
        if self.ended:
            return
        self.ended = True
        if self.x is not None:
            self.rt.trace("replica_terminate", self.cur_index(), "")

    def reincarnate(self) -> None:
        key = self.slot[0]
        owner = self.parent
        while owner is not None and owner.transparent:
            owner = owner.parent
        holder = owner if owner is not None else self
        y = holder.next_y.get(key, self.y + 1)
        if y <= self.y:
            y = self.y + 1
        holder.next_y[key] = y + 1
        self.y = y
        self.acts = 0
        self.ended = False
        self.fresh_state()
        if self.x is not None:
            self.idx0 = self.idx0[:-1] + ((self.x, self.y, 0),)
            self.rt.trace("replica_create", self.idx0, "")

    def cur_index(self) -> tuple:
        if self.x is None:
            return self.idx0
        return self.idx0[:-1] + ((self.x, self.y, max(self.acts - 1, 0)),)

    def is_active(self) -> bool:
        return self.busy is not None or bool(self.queue)

    def has_work(self) -> bool:
        return self.busy is not None or bool(self.queue)

    def purge(self, pred) -> list[Packet]:
        out = super().purge(pred)
        keep = deque()
        for p in self.queue:
            (out if pred(p) else keep).append(p)
        self.queue = keep
        if self.busy is not None and pred(self.busy[0]):
            pkt, aidx = self.busy
            self.busy = None
            self.epoch += 1
            self.rt.on_end(self, aidx, aborted=True)
            out.append(pkt)
        return out

    def arity(self, kind: str) -> int:
        if kind == "liveness":
            return 0 if self.is_dead() else 1
        if kind == "activity":
            return 1 if self.is_active() else 0
        return super().arity(kind)

    def checkpoint(self):
        return None

    def rollback(self, blob) -> None:
        pass


class BoxLeaf(Leaf):
    def fresh_state(self) -> None:
        self.impl = self.rt.box_impl(self.node.name)
        self.intype = self.impl.signature.input.rtype

    def accepts(self, r: Record) -> bool:
        t = self.intype
        if not t.labels <= r.labels:
            return False
        return (r.tag.label if r.tag else None) == t.tag_label

    def duration(self, r: Record) -> int:
        return self.impl.cost.duration

    def cost(self):
        return (self.impl.cost.storage, self.impl.cost.power)

    def compute(self, r: Record, aidx) -> list[Record]:
        outs = self.rt.invoke(self.impl, r)
        return [flow_inherit(r, self.intype, o) for o in outs]

    def describe(self) -> str:
        return f"box {self.node.name}"


class TransducerLeaf(Leaf):
    event_kind = "transducer_step"

    def fresh_state(self) -> None:
        spec = self.rt.expanded(self.path, self.node.spec)
        self.tinst = TransducerInstance(spec, self.rt.config.debug)

    def accepts(self, r: Record) -> bool:
        return self.tinst.accepts(r)

    def compute(self, r: Record, aidx) -> list[Record]:
        return self.tinst.step(r).emitted

    def after_activation(self) -> None:
        if self.tinst.is_terminated():
            if not self.terminated:
                self.terminate()
            return
        if self.life == "te" and self.tinst.is_inactive():
            self.end_incarnation()

    def reincarnate(self) -> None:
        super().reincarnate()

    def holds_state(self) -> bool:
        return any(v is not None for slots in self.tinst.holds.values() for v in slots)

    def is_active(self) -> bool:
        if super().is_active():
            return True
        if self.terminated:
            return self.holds_state()
        return not self.tinst.is_inactive()

    def checkpoint(self):
        return (self.tinst.snapshot(), self.y, self.ended)

    def rollback(self, blob) -> None:
        snap, _y, ended = blob
        self.tinst = restore_transducer(snap)
        self.ended = ended

    def state_entries(self) -> list[dict]:
        if self.tinst.is_inactive() and not self.terminated:
            return []
        return [{"kind": "transducer", "index": list(self.fpath), "state": self.tinst.label_text(),
                 "holds": {k: str(v) for k, v in self.tinst.full_holds()},
                 "terminated": self.terminated}]

    def describe(self) -> str:
        return "transducer"


class ObserveLeaf(Leaf):
    """δ: overwrite a field or tag scalar with an environment observation."""
    event_kind = None
    uses_agent = False

    def accepts(self, r: Record) -> bool:
        n = self.node
        if n.tag is not None and (r.tag is None or r.tag.label != n.tag):
            return False
        if n.field is not None:
            return n.field in r
        return r.tag is not None

    def compute(self, r: Record, aidx) -> list[Record]:
        n = self.node
        prev = r[n.field] if n.field is not None else r.tag.value
        v = self.rt.observe(self, n.env_fn, prev, aidx)
        if n.field is not None:
            return [r.with_fields(**{n.field: v})]
        return [r.with_tag(Tag(r.tag.label, v))]

    def describe(self) -> str:
        return "observe"


# --- transparent wrappers ----------------------------------------------------------

class Wrapper(Inst):
    """A node that does not add an index level; the inner takes over its slot."""
    transparent = True

    def build(self) -> None:
        x, y = self.slot
        self.inner: Inst | None = make_instance(self.rt, self.node.inner, self.path + (0,), self,
                                                x, y, self.idx0)
        self.inner.out = self.from_inner

    def children(self) -> list[Inst]:
        return [self.inner] if self.inner is not None else []

    def core(self) -> Inst | None:
        c = self.inner
        while c is not None and c.transparent:
            c = c.inner
        return c

    def accept(self, pkt: Packet) -> None:
        if self.inner is None:
            self.emit(pkt)
        else:
            self.inner.receive(pkt)

    def from_inner(self, pkt: Packet) -> None:
        self.emit(pkt)

    @property
    def terminated_inner(self) -> bool:
        return self.inner is None or self.inner.terminated

    def terminate(self) -> None:
        if self.terminated:
            return
        self.terminated = True
        if self.inner is not None:
            self.inner.terminate()
        self.rt.check_dead(self)

    def remove_child(self, child: Inst) -> None:
        self.terminated = True
        self.rt.check_dead(self)

    def arity(self, kind: str) -> int:
        if kind == "agent":
            return self.rt.agent_count(self)
        return self.inner.arity(kind) if self.inner is not None else 0

    def find_child(self, x):
        return self.inner.find_child(x) if self.inner is not None else None


class LabelInst(Wrapper):
    def describe(self) -> str:
        return f"label {self.node.label}"


class ReorderInst(Wrapper):
    def build(self) -> None:
        super().build()
        self.scope = Scope(self._quiescent)
        self.next_in = 0
        self.next_out = 0
        self.buffers: dict[int, list[Packet]] = {}
        self.done: set[int] = set()

    def accept(self, pkt: Packet) -> None:
        k = self.next_in
        self.next_in += 1
        self.buffers[k] = []
        self.inner.receive(self.scope.stamp(pkt, k))

    def from_inner(self, pkt: Packet) -> None:
        p, k = self.scope.unstamp(pkt)
        if k in self.buffers:
            self.buffers[k].append(p)
        self.scope.release(k)

    def _quiescent(self, k) -> None:
        self.done.add(k)
        while self.next_out in self.done:
            k0 = self.next_out
            self.done.discard(k0)
            self.next_out += 1
            for p in self.buffers.pop(k0, []):
                self.emit(p)

    def held(self) -> int:
        return sum(len(v) for v in self.buffers.values())

    def is_active(self) -> bool:
        return bool(self.buffers) or super().is_active()

    def has_work(self) -> bool:
        return bool(self.buffers) or super().has_work()

    def purge(self, pred) -> list[Packet]:
        out = super().purge(pred)
        for k, buf in self.buffers.items():
            keep = [p for p in buf if not pred(p)]
            out.extend(p for p in buf if pred(p))
            self.buffers[k] = keep
        return out

    def checkpoint(self):
        return (super().checkpoint(), self.next_in, self.next_out,
                {k: list(v) for k, v in self.buffers.items()}, set(self.done), dict(self.scope.counts))

    def rollback(self, blob) -> None:
        inner, self.next_in, self.next_out, bufs, done, counts = blob
        super().rollback(inner)
        self.buffers = bufs
        self.done = done
        self.scope.counts = counts

    def state_entries(self) -> list[dict]:
        if not self.buffers:
            return []
        return [{"kind": "reorder", "index": list(self.fpath), "held": self.held(),
                 "groups": sum(1 for v in self.buffers.values() if v)}]

    def describe(self) -> str:
        return "reorder"


# --- fixed composites ----------------------------------------------------------------

class CompInst(Inst):
    def build(self) -> None:
        self.kids: list[Inst | None] = []
        for i, c in enumerate(self.node.items):
            k = self.spawn(c, self.path + (i,), i, self.idx0)
            k.out = (lambda p, i=i: self._next(i + 1, p))
            self.kids.append(k)

    def children(self) -> list[Inst]:
        return [k for k in self.kids if k is not None]

    def accept(self, pkt: Packet) -> None:
        self._next(0, pkt)

    def _next(self, i: int, pkt: Packet) -> None:
        while i < len(self.kids) and self.kids[i] is None:
            i += 1
        if i >= len(self.kids):
            self.emit(pkt)
        else:
            self.kids[i].receive(pkt)

    def remove_child(self, child: Inst) -> None:
        for i, k in enumerate(self.kids):
            if k is child:
                self.kids[i] = None
        if all(k is None for k in self.kids):
            self.terminated = True
        self.rt.check_dead(self)

    def checkpoint(self):
        return (list(self.kids), [(c, c.checkpoint()) for c in self.children()])

    def rollback(self, blob) -> None:
        kids, states = blob
        self.kids = list(kids)
        for c, b in states:
            c.rollback(b)


class SelectInst(CompInst):
    def build(self) -> None:
        self.kids = []
        self.table = self.rt.report.routing[self.path]
        for i, c in enumerate(self.node.items):
            k = self.spawn(c, self.path + (i,), i, self.idx0)
            k.out = self.emit
            self.kids.append(k)

    def accept(self, pkt: Packet) -> None:
        i = self.table.choose(pkt.record)
        if i is None or self.kids[i] is None:
            self.emit(pkt)
        else:
            self.kids[i].receive(pkt)


# --- replication -----------------------------------------------------------------

class StarInst(Inst):
    """C*: replicas created on demand along an ordered chain of positions."""

    def build(self) -> None:
        self.chain: dict[int, Inst | str] = {}
        self.sig = self.rt.report.signatures[self.path + (0,)]
        self.blocked: deque = deque()

    def children(self) -> list[Inst]:
        return [c for _, c in sorted(self.chain.items()) if c is not NEUTRAL]

    def accept(self, pkt: Packet) -> None:
        self.route(0, pkt)

    def route(self, i: int, pkt: Packet) -> None:
        if self.blocked:
            self.blocked.append((i, pkt))
            return
        self._route(i, pkt)

    def _route(self, i: int, pkt: Packet) -> None:
        r = pkt.record
        if guard_match(r, self.node.guard) or best_variant(self.sig, r.rtype) is None:
            self.emit(pkt)
            return
        while self.chain.get(i) is NEUTRAL:
            i += 1
        rep = self.chain.get(i)
        if rep is None:
            if i >= self.rt.config.depth_limit:
                self.rt.fail(DepthLimitExceeded(f"replication unfolds past {self.rt.config.depth_limit}"))
                return
            if not self.rt.may_create(self):
                self.blocked.append((i, pkt))
                self.rt.wait(self._unblock)
                return
            rep = self.create_replica(self.node.inner, self.path + (0,), i, pkt)
            if rep is None:
                return
            rep.out = (lambda p, i=i: self.route(i + 1, p))
            self.chain[i] = rep
        rep.receive(pkt)

    def _unblock(self) -> None:
        while self.blocked:
            i, pkt = self.blocked[0]
            if self.chain.get(i) is None and not self.rt.may_create(self):
                self.rt.wait(self._unblock)
                return
            self.blocked.popleft()
            self._route(i, pkt)

    def remove_child(self, child: Inst) -> None:
        for i, c in self.chain.items():
            if c is child:
                self.chain[i] = NEUTRAL
        self.rt.check_dead(self)

    def is_active(self) -> bool:
        return bool(self.blocked) or super().is_active()

    def has_work(self) -> bool:
        return bool(self.blocked) or super().has_work()

    def purge(self, pred) -> list[Packet]:
        out = super().purge(pred)
        keep = deque()
        for e in self.blocked:
            (out.append(e[1]) if pred(e[1]) else keep.append(e))
        self.blocked = keep
        return out

    def checkpoint(self):
        return (dict(self.chain), [(c, c.checkpoint()) for c in self.children()])

    def rollback(self, blob) -> None:
        chain, states = blob
        for i, c in self.chain.items():
            if c is not NEUTRAL and chain.get(i) is not c:
                c.detach()
        self.chain = dict(chain)
        for c, b in states:
            c.rollback(b)

    def arity(self, kind: str) -> int:
        if kind == "depth":
            return sum(1 for c in self.children() if not c.terminated)
        return super().arity(kind)

    def state_entries(self) -> list[dict]:
        n = len(self.children())
        return [{"kind": "star", "index": list(self.fpath), "replicas": n}] if n else []

    def describe(self) -> str:
        return "star"


class _ProcSet:
    __slots__ = ("sid", "constructors", "payloads", "produced", "rep", "steps", "key")

    def __init__(self, sid: int, constructors: list[Packet]):
        self.sid = sid
        self.constructors = constructors
        self.payloads: deque[Packet] = deque()
        self.produced: list[Packet] = []
        self.rep: Inst | None = None
        self.steps = 0
        self.key = None


class BangInst(Inst):
    """C!: per processing subsequence, feed a randomly picked constructor and the payload
    to a fresh replica until no constructors remain."""

    def build(self) -> None:
        self.pending: list[Packet] = []
        self.sets: dict[int, _ProcSet] = {}
        self.next_sid = 0
        self.scope = Scope(self._step_done)
        self.replicas_made = 0

    def children(self) -> list[Inst]:
        return [ps.rep for ps in self.sets.values() if ps.rep is not None]

    def _tag(self, r: Record) -> str | None:
        return r.tag.label if r.tag is not None else None

    def accept(self, pkt: Packet) -> None:
        t = self._tag(pkt.record)
        if t == self.node.tag_r:
            self.pending.append(pkt)
        elif t == self.node.tag_p:
            ps = _ProcSet(self.next_sid, self.pending)
            self.next_sid += 1
            self.pending = []
            self.sets[ps.sid] = ps
            self._step(ps, pkt)
        else:
            self.emit(pkt)

    def _step(self, ps: _ProcSet, payload: Packet) -> None:
        if not ps.constructors:
            self.emit(payload)
            if ps.payloads:
                self._step(ps, ps.payloads.popleft())
            else:
                self._finish(ps)
            return
        if ps.steps >= self.rt.config.bangstar_cap:
            from .errors import NonTermination
            self.rt.fail(NonTermination(f"processing set {ps.sid} exceeded {self.rt.config.bangstar_cap} replicas"))
            return
        k = self.rt.pick(len(ps.constructors))
        c = ps.constructors.pop(k)
        rep = self.create_replica(self.node.inner, self.path + (0,), ps.sid, payload)
        if rep is None:
            self.rt.discard(c)
            return
        ps.rep = rep
        ps.steps += 1
        ps.key = (ps.sid, ps.steps)
        rep.out = (lambda p, ps=ps: self._from_rep(ps, p))
        c2 = self.scope.stamp(c, ps.key)
        p2 = self.scope.stamp(payload, ps.key)
        rep.receive(c2)
        rep.receive(p2)

    def _from_rep(self, ps: _ProcSet, pkt: Packet) -> None:
        p, key = self.scope.unstamp(pkt)
        t = self._tag(p.record)
        if t == self.node.tag_r:
            ps.produced.append(p)
        elif t == self.node.tag_p:
            ps.payloads.append(p)
        else:
            self.emit(p)
        self.scope.release(key)

    def _step_done(self, key) -> None:
        sid = key[0]
        ps = self.sets.get(sid)
        if ps is None or ps.key != key:
            return
        ps.constructors.extend(ps.produced)
        ps.produced = []
        rep, ps.rep = ps.rep, None
        if rep is not None:
            rep.terminate()
            if not rep.removed:
                self.rt.collect(rep, force=True)
        if ps.payloads:
            self._step(ps, ps.payloads.popleft())
        else:
            self._finish(ps)

    def _finish(self, ps: _ProcSet) -> None:
        self.sets.pop(ps.sid, None)
        for c in ps.constructors:
            self.emit(c)
        ps.constructors = []

    def remove_child(self, child: Inst) -> None:
        for ps in self.sets.values():
            if ps.rep is child:
                ps.rep = None
        self.rt.check_dead(self)

    def is_active(self) -> bool:
        return bool(self.pending) or bool(self.sets) or super().is_active()

    def has_work(self) -> bool:
        return bool(self.pending) or bool(self.sets) or super().has_work()

    def purge(self, pred) -> list[Packet]:
        out = super().purge(pred)
        out.extend(p for p in self.pending if pred(p))
        self.pending = [p for p in self.pending if not pred(p)]
        for ps in self.sets.values():
            for name in ("constructors", "produced"):
                lst = getattr(ps, name)
                out.extend(p for p in lst if pred(p))
                setattr(ps, name, [p for p in lst if not pred(p)])
            out.extend(p for p in ps.payloads if pred(p))
            ps.payloads = deque(p for p in ps.payloads if not pred(p))
        return out

    def checkpoint(self):
        return (list(self.pending), dict(self.sets), self.next_sid)

    def rollback(self, blob) -> None:
        pending, sets, _sid = blob
        for ps in self.sets.values():
            if ps.rep is not None and sets.get(ps.sid) is not ps:
                ps.rep.detach()
        self.pending = list(pending)
        self.sets = dict(sets)

    def arity(self, kind: str) -> int:
        if kind == "depth":
            return max((ps.steps for ps in self.sets.values()), default=0)
        return super().arity(kind)

    def state_entries(self) -> list[dict]:
        if not self.sets and not self.pending:
            return []
        return [{"kind": "bangstar", "index": list(self.fpath), "replicas": len(self.children()),
                 "sets": len(self.sets), "pending_constructors": len(self.pending)}]

    def find_child(self, x):
        ps = self.sets.get(x)
        return ps.rep.core() if ps is not None and ps.rep is not None else None

    def describe(self) -> str:
        return "bangstar"


class ReplInst(Inst):
    """S*: replicas indexed by the scalar of tag <c>."""

    def build(self) -> None:
        self.replicas: dict[int, Inst] = {}
        self.delivered: dict[int, int] = {}
        self.last: int | None = None
        self.scope = Scope(self._neg_done)
        self.closing: dict[int, Inst] = {}
        self.blocked: deque = deque()

    def children(self) -> list[Inst]:
        return [self.replicas[k] for k in sorted(self.replicas)] + \
            [c for c in self.closing.values() if c not in self.replicas.values()]

    def accept(self, pkt: Packet) -> None:
        if self.blocked:
            self.blocked.append(pkt)
            return
        self._accept(pkt)

    def _accept(self, pkt: Packet) -> None:
        r = pkt.record
        c = self.node.tag_c
        v = r.tag.value if r.tag is not None and r.tag.label == c else None
        if isinstance(v, int) and v > 0:
            rep = self.replicas.get(v)
            if rep is None:
                if not self.rt.may_create(self):
                    self.blocked.append(pkt)
                    self.rt.wait(self._unblock)
                    return
                rep = self.create_replica(self.node.inner, self.path + (0,), v, pkt)
                if rep is None:
                    return
                rep.out = self.emit
                self.replicas[v] = rep
            self._deliver(v, rep, pkt)
        elif isinstance(v, int) and v < 0:
            rep = self.replicas.get(-v)
            if rep is None:
                self.emit(pkt)
                return
            self._deliver(-v, rep, self.scope.stamp(pkt, id(rep)))
            self.closing[id(rep)] = rep
            # later <c=v> records go to a fresh incarnation, not the closing one
            del self.replicas[-v]
            self.delivered.pop(-v, None)
        else:
            if not self.replicas:
                self.emit(pkt)
                return
            k = self._choose()
            if r.tag is not None and r.tag.label == c:
                pkt = pkt.with_record(r.with_tag(Tag(c, k)))
            self._deliver(k, self.replicas[k], pkt)

    def _unblock(self) -> None:
        while self.blocked:
            pkt = self.blocked[0]
            r = pkt.record
            v = r.tag.value if r.tag is not None and r.tag.label == self.node.tag_c else None
            if isinstance(v, int) and v > 0 and v not in self.replicas and not self.rt.may_create(self):
                self.rt.wait(self._unblock)
                return
            self.blocked.popleft()
            self._accept(pkt)

    def _deliver(self, k: int, rep: Inst, pkt: Packet) -> None:
        self.delivered[k] = self.delivered.get(k, 0) + 1
        self.last = k
        rep.receive(pkt)

    def _choose(self) -> int:
        keys = sorted(self.replicas)
        pol = self.node.policy
        if pol == "lr" and self.last in self.replicas:
            return self.last
        if pol in ("la", "ha"):
            free = [k for k in keys if not self.replicas[k].is_active()] or keys
            return free[0] if pol == "la" else free[-1]
        return min(keys, key=lambda k: (self.delivered.get(k, 0), k))

    def _neg_done(self, key) -> None:
        rep = self.closing.pop(key, None)
        if rep is None:
            return
        for k, r in list(self.replicas.items()):
            if r is rep:
                del self.replicas[k]
        rep.terminate()
        if not rep.removed:
            self.rt.collect(rep, force=True)

    def emit(self, pkt: Packet) -> None:
        key = pkt.key_of(self.scope)
        if key is not None:
            p, key = self.scope.unstamp(pkt)
            super().emit(p)
            self.scope.release(key)
        else:
            super().emit(pkt)

    def remove_child(self, child: Inst) -> None:
        for k, r in list(self.replicas.items()):
            if r is child:
                del self.replicas[k]
        self.closing = {k: v for k, v in self.closing.items() if v is not child}
        self.rt.check_dead(self)

    def is_active(self) -> bool:
        return bool(self.blocked) or super().is_active()

    def has_work(self) -> bool:
        return bool(self.blocked) or super().has_work()

    def purge(self, pred) -> list[Packet]:
        out = super().purge(pred)
        out.extend(p for p in self.blocked if pred(p))
        self.blocked = deque(p for p in self.blocked if not pred(p))
        return out

    def checkpoint(self):
        return (dict(self.replicas), dict(self.delivered), self.last,
                [(c, c.checkpoint()) for c in self.children()])

    def rollback(self, blob) -> None:
        reps, delivered, last, states = blob
        for k, c in self.replicas.items():
            if reps.get(k) is not c:
                c.detach()
        self.replicas, self.delivered, self.last = dict(reps), dict(delivered), last
        for c, b in states:
            c.rollback(b)

    def arity(self, kind: str) -> int:
        if kind == "depth":
            return len(self.replicas)
        return super().arity(kind)

    def state_entries(self) -> list[dict]:
        if not self.replicas:
            return []
        return [{"kind": "replselect", "index": list(self.fpath), "replicas": len(self.replicas),
                 "map": sorted(self.replicas)}]

    def find_child(self, x):
        r = self.replicas.get(x)
        return r.core() if r is not None else None

    def describe(self) -> str:
        return "replselect"


FACTORY.update({
    Box: BoxLeaf, Transduce: TransducerLeaf, EnvObserve: ObserveLeaf,
    Comp: CompInst, Select: SelectInst, StarComp: StarInst, BangStar: BangInst,
    ReplSelect: ReplInst, Reorder: ReorderInst, Label: LabelInst,
})


def iter_instances(root: Inst) -> Iterable[Inst]:
    return root.subtree()


def is_transparent_node(n: Node) -> bool:
    return isinstance(n, TRANSPARENT)
