"""Acceptance criteria 1-10; each test prints one CRITERION pass/fail line."""
from __future__ import annotations

import glob
import itertools
import os
import random
import time
from collections import Counter

import pytest

import oracles as O
from conftest import PROGRAMS, criterion
from spnet.analysis import analyze, expand_transducer
from spnet.core import XfnException, format_index
from spnet.errors import ParseError
from spnet.parser import parse_program, parse_transducer
from spnet.records import decode_record, encode_record, rec
from spnet.resources import parse_resources
from spnet.runtime import RunConfig, Runtime, run
from spnet.services import lookup
from spnet.transducer import instantiate, step


def feed_run(program, inputs, **cfg):
    h = Runtime(program, config=RunConfig(**cfg))
    for r in inputs:
        h.feed(r)
    h.run_to_quiescence()
    return h


def as_dict(r):
    return dict(r.items())


def run_transducer(src, records):
    inst = instantiate(parse_transducer(src))
    out = []
    for r in records:
        out.extend(step(inst, r).emitted)
    return out


SYNC_EXPLICIT = """[| guard t[3] = {a},{b},{c}; label s[3]; var h[3];
  i=0..2 / ~s[i]: t[i] -> [h[i] := input] s[i];
  s[0..2]: -> [emit union(h); reset h] ~s[0..2]; |]"""
MERGE4 = """[| label [0..3]; var h[3];
  n=0..2/ n: x -> [h[n] := x] n+1;
  3: x -> [emit union(h)+x; reset h] 0; |]"""
MOD10 = "[| {a=9} -> [emit {a=0}]; {a} -> [emit {a=input.a+1}]; |]"


# --- 1 ------------------------------------------------------------------------------------

def test_c1_worked_examples():
    t0 = time.perf_counter()
    with criterion(1, "worked-example conformance (subtyping, mod-10, 4-merge, sync, sugar)"):
        prog = parse_program("box foo ((a, b) -> (c) | (c, d));\nfoo")
        variants = analyze(prog.network, prog.boxes).signatures[()]
        accepts = lambda r: any(v.accepts(r) for v in variants if not v.bypass)
        assert accepts(rec(b=1, a=2, c=3))
        assert not accepts(rec(a=1))
        assert not accepts(rec(b=1, c=2, e=3))

        assert run_transducer(MOD10, [rec(a=9)]) == [rec(a=0)]
        assert [r["a"] for r in run_transducer(MOD10, [rec(a=k) for k in range(10)])] == \
            [(k + 1) % 10 for k in range(10)]

        ins = [rec(a=1), rec(b=2), rec(c=3), rec(d=4), rec(e=5), rec(f=6), rec(g=7), rec(h=8)]
        assert run_transducer(MERGE4, ins) == [rec(a=1, b=2, c=3, d=4), rec(e=5, f=6, g=7, h=8)]

        trip = [rec(a=1), rec(b=2), rec(c=3)]
        for perm in itertools.permutations(trip):
            assert run_transducer(SYNC_EXPLICIT, list(perm)) == [rec(a=1, b=2, c=3)]

        sugar = expand_transducer(parse_transducer("[| {a},{b},{c} |]"))
        explicit = expand_transducer(parse_transducer(SYNC_EXPLICIT))
        pool = [rec(a=1), rec(b=2), rec(c=3), rec(d=4), rec(a=5, b=6)]
        for n in range(1, 5):
            for seq in itertools.product(pool, repeat=n):
                got_s = run_transducer_spec(sugar, seq)
                got_e = run_transducer_spec(explicit, seq)
                assert got_s == got_e
                assert [as_dict(r) for r in got_s] == O.sync_reference(
                    [as_dict(r) for r in seq], [frozenset("a"), frozenset("b"), frozenset("c")])
    assert time.perf_counter() - t0 < 1.0


def run_transducer_spec(spec, records):
    inst = instantiate(spec)
    out = []
    for r in records:
        out.extend(step(inst, r).emitted)
    return out


# --- 2 ------------------------------------------------------------------------------------

N_M_PROGRAM = """
box M ((n) -> (n)) = { emit {n = n + 1} };
box O ((n) -> (n)) = { emit {n = n} };
box P ((z) -> (z)) = { emit {z = z} };
([| label [0..2]; 0: {a} -> [emit {a=0}] 1; 1: {a} -> [emit {a=0}] 2; 2: {a} -> [emit {a=0}] 0 |])/!te
  .. ((M..O)*{n} where n >= 13 | P)
"""


def test_c2_network_indices():
    with criterion(2, "network-index conformance (N, M and label lookup)"):
        prog = parse_program(N_M_PROGRAM)
        h = feed_run(prog, [rec(a=i) for i in range(36)])
        steps = [e for e in h.trace_events if e.kind == "transducer_step"]
        assert format_index(steps[-1].index) == O.N_INDEX

        h = feed_run(prog, [rec(n=0) for _ in range(13)])
        m_calls = [format_index(e.index) for e in h.trace_events
                   if e.kind == "box_call" and e.payload == "{n=12}"]
        assert O.M_INDEX in m_calls

        label1 = parse_program(open(os.path.join(PROGRAMS, "label1.spnet")).read())
        h = feed_run(label1, [decode_record("{a=1}<t=123>"), decode_record("{a=2}<t=124>")])
        b_call = next(e for e in h.trace_events
                      if e.kind == "box_call" and e.payload.startswith("{b=1}"))
        rel_x = lookup(label1.network, b_call.index, "X")
        rel_y = lookup(label1.network, b_call.index, "Y")
        assert "[" + ";".join(str(t[0]) for t in rel_x) + "]" == O.LOOKUP_FROM_X
        assert "[" + ";".join(str(t[0]) for t in rel_y) + "]" == O.LOOKUP_FROM_Y
        assert h.live_replicas([1, "*", 0]) == O.LIVE_A
        assert h.live_replicas([1, "*", 1]) == O.LIVE_SBC


# --- 3 ------------------------------------------------------------------------------------

def test_c3_star_oracle():
    t0 = time.perf_counter()
    with criterion(3, "C* equals the recursive reference on 200 seeded programs"):
        for i, (p, inputs) in enumerate(O.random_counter_programs(200)):
            outs, _ = run(parse_program(p.source()), [rec(n=v) for v in inputs], RunConfig(seed=i))
            expected = []
            for v in inputs:
                expected.extend(O.star_reference(p.box, p.guard, {"n": v}))
            assert Counter(r["n"] for r in outs) == Counter(r["n"] for r in expected), p
        assert time.perf_counter() - t0 < 5.0


# --- 4 ------------------------------------------------------------------------------------

def _bangstar():
    prog = parse_program(open(os.path.join(PROGRAMS, "bangstar.spnet")).read())
    ins = [decode_record(l) for l in open(os.path.join(PROGRAMS, "bangstar.in")).read().splitlines() if l]
    return prog, ins


def test_c4_bangstar_invariants():
    with criterion(4, "C! invariants over 100 seeds and the frozen pick order"):
        prog, ins = _bangstar()
        for seed in range(100):
            outs, h = run(prog, ins, RunConfig(seed=seed))
            calls = [e.payload for e in h.trace_events if e.kind == "box_call"]
            consumed = Counter(c for c in calls if "<r=" in c)
            payload_steps = [c for c in calls if "<p=" in c]
            produced = Counter()
            for c in payload_steps:
                d = decode_record(c)["d"]
                if d < 2:
                    produced[f"{{src={d}}}<r=0>"] += 1
                    produced[f"{{src={d}}}<r=1>"] += 1
            supplied = Counter(encode_record(r) for r in ins if r.tag and r.tag.label == "r") + produced
            assert consumed == supplied                      # each constructor consumed exactly once
            qs = sorted(r["q"] for r in outs if "q" in r)
            assert qs == sorted(decode_record(c)["d"] for c in payload_steps)   # q verbatim
            assert encode_record(outs[0]) == "{z=5}" or "{z=5}" in map(encode_record, outs)
            finals = [r for r in outs if r.tag is not None and r.tag.label == "p"]
            assert len(finals) <= 1                          # one processing sub-sequence
            # every replica processed at most one payload
            per_replica = Counter(e.index[0] for e in h.trace_events
                                  if e.kind == "box_call" and "<p=" in e.payload)
            assert max(per_replica.values()) == 1

        outs, h = run(prog, ins, RunConfig(seed=O.BANGSTAR_SEED))
        assert h.picks[:3] == O.BANGSTAR_PICKS
        r_calls = [e.payload for e in h.trace_events if e.kind == "box_call" and "<r=" in e.payload]
        assert r_calls[0] == "{src=-1}<r=1>"                # 2nd input constructor first
        assert r_calls[1] == "{src=0}<r=0>"                 # then the 2nd of the grown list


# --- 5 ------------------------------------------------------------------------------------

REORDER_BOXES = """
box A ((a) -> (a)) = { emit {a = a}; emit {a = a + 100} } cost(duration=3us);
box B ((b) -> (b)) = { emit {b = b} };
"""


def test_c5_reordering_determinism():
    with criterion(5, "R(S(A,B)) is seed-independent and input-ordered; S alone is not"):
        ins = [rec(a=i) if i % 2 else rec(b=i) for i in range(10)]
        expected = []
        for r in ins:
            expected.extend([rec(a=r["a"]), rec(a=r["a"] + 100)] if "a" in r else [r])
        with_r = parse_program(REORDER_BOXES + "?(A | B)#")
        orders = set()
        for seed in range(50):
            outs, _ = run(with_r, ins, RunConfig(seed=seed))
            orders.add(tuple(map(encode_record, outs)))
        assert orders == {tuple(map(encode_record, expected))}

        without = parse_program(REORDER_BOXES + "A | B")
        orders, bags = set(), set()
        for seed in range(50):
            outs, _ = run(without, ins, RunConfig(seed=seed))
            orders.add(tuple(map(encode_record, outs)))
            bags.add(tuple(sorted(map(encode_record, outs))))
        assert len(bags) == 1 and len(orders) >= 2


# --- 6 ------------------------------------------------------------------------------------

def _inputs_for(spnet_path):
    inp = spnet_path[:-len(".spnet")] + ".in"
    if not os.path.exists(inp):
        inp = os.path.join(PROGRAMS, "default.in")
    with open(inp) as fh:
        return [decode_record(l) for l in fh.read().splitlines() if l.strip()]


def _lineage_view(outs):
    per = {}
    for r in outs:
        per.setdefault(r.lineage.root, []).append(encode_record(r))
    return per


def test_c6_xfun_elision():
    from spnet.nodes import erase_xfun
    from spnet.resources import load_resources
    corpus = sorted(glob.glob(os.path.join(PROGRAMS, "x*.spnet")))
    with criterion(6, f"elision: {len(corpus)} annotated programs x 5 seeds match their erasure"):
        assert len(corpus) >= 12
        res = load_resources(os.path.join(PROGRAMS, "cores.res"))
        for path in corpus:
            prog = parse_program(open(path).read())
            ins = _inputs_for(path)
            for seed in range(5):
                a, _ = run(prog, ins, RunConfig(seed=seed, resources=res))
                h = Runtime(erase_xfun(prog.network), config=RunConfig(seed=seed), boxes=prog.boxes)
                for r in ins:
                    h.feed(r)
                h.run_to_quiescence()
                b = h.drain()
                assert a, path
                assert Counter(map(encode_record, a)) == Counter(map(encode_record, b)), (path, seed)
                assert _lineage_view(a) == _lineage_view(b), (path, seed)


# --- 7 ------------------------------------------------------------------------------------

BETA_BOXES = """
box S ((x) -> (x, k)) = { emit {x = x, k = i} times 2 } cost(duration=2us);
box F ((x, k) -> (y, k)) = { emit {y = x * 10, k = k} } fault Boom when x = 7 and k = 1 and a = 0;
box P ((x) -> (y)) = { emit {y = x} } fault Boom when x = 7;
box G ((y) -> (y)) = { emit {y = y} };
"""


def _beta_outputs(net, ins, seed):
    h = Runtime(parse_program(BETA_BOXES + net), config=RunConfig(seed=seed))
    for r in ins:
        h.feed(r)
    h.run_to_quiescence()
    return h.drain(), h


def test_c7_exception_handling():
    with criterion(7, "beta: transparent without faults, retry with a=1, propagate otherwise"):
        clean = [rec(x=i, a=0) for i in range(6) if i != 7]
        for seed in range(10):
            plain, _ = _beta_outputs("P .. G", clean, seed)
            guarded, _ = _beta_outputs("(P .. G)$(a=Boom)", clean, seed)
            assert list(map(encode_record, plain)) == list(map(encode_record, guarded))
            plain, _ = _beta_outputs("S .. F", clean, seed)
            guarded, _ = _beta_outputs("(S .. F)$(a=Boom)", clean, seed)
            assert Counter(map(encode_record, plain)) == Counter(map(encode_record, guarded))
            assert _lineage_view(plain) == _lineage_view(guarded)

        outs, h = _beta_outputs("(S .. F)$(a=Boom)", [rec(x=7, a=0), rec(x=1, a=0)], 0)
        kinds = [e.kind for e in h.trace_events]
        assert "exception" in kinds
        assert sorted(map(encode_record, outs)) == sorted(
            ["{y=10, k=0, a=0}", "{y=10, k=1, a=0}", "{y=70, k=0, a=1}", "{y=70, k=1, a=1}"])

        h = Runtime(parse_program(BETA_BOXES + "(P .. G)$(a=Boom)"), config=RunConfig(seed=1))
        h.feed(rec(x=1))
        h.feed(rec(x=7))
        with pytest.raises(XfnException) as ei:
            h.run_to_quiescence()
        assert ei.value.kind == "Boom"
        assert any(e.kind == "replica_terminate" for e in h.trace_events)


# --- 8 ------------------------------------------------------------------------------------

class _ObservingRuntime(Runtime):
    """Records every dla/daa/dpa reading next to a direct arity query at the same instant."""

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.readings = []

    def observe(self, leaf, fn, prev, aidx):
        v = super().observe(leaf, fn, prev, aidx)
        if fn.kind in ("dla", "daa", "dpa"):
            kind = {"dla": "liveness", "daa": "activity", "dpa": "agent"}[fn.kind]
            self.readings.append((self.now, v, self.arity(fn.index, kind)))
        return v


def test_c8_xfun_semantics():
    with criterion(8, "mfl fires at 10 ms exactly, split exhausts on the 5th replica, delta = arity"):
        prog = parse_program("box S ((x) -> (x)) = { emit {x = x} } cost(duration=15ms);\nS/:mfl(10ms)")
        h = Runtime(prog)
        h.feed(rec(x=1))
        with pytest.raises(XfnException) as ei:
            h.run_to_quiescence()
        assert ei.value.name == "Violation(mfl)"
        assert h.now == O.MFL_AT_NS
        assert [e.time for e in h.trace_events if e.kind == "exception"] == [O.MFL_AT_NS]

        prog = parse_program("box A ((a,<t>) -> (a,<t>)) = { emit {a = a}<t=t> };\n((A'W)!<t>)/W@:split(*)")
        res = parse_resources("node n0\nnode n1\nnode n2\nnode n3\n")
        h = Runtime(prog, config=RunConfig(resources=res))
        for i in range(1, 6):
            h.feed(decode_record(f"{{a={i}}}<t={i}>"))
        with pytest.raises(XfnException) as ei:
            h.run_to_quiescence()
        assert ei.value.kind == "Exhaustion"
        assert sum(e.kind == "replica_create" for e in h.trace_events) == 4
        assert ei.value.origin[0][0] == 5                  # raised while placing the 5th replica

        prog = parse_program("box A ((a,<t>) -> (a,<t>)) = { emit {a = a}<t=t> } cost(duration=5us);\n"
                             "([n=dla(X,[3])] .. [m=daa(X,[3])] .. [k=dpa(X,[3])] .. A!<t>)'X")
        for seed in range(5):
            h = _ObservingRuntime(prog, config=RunConfig(seed=seed))
            for i in range(1, 9):
                h.feed(decode_record(f"{{a={i}, n=0, m=0, k=0}}<t={i % 3 + 1}>"))
            h.run_to_quiescence()
            assert len(h.readings) == 24
            assert all(v == direct for _, v, direct in h.readings)
            assert any(v > 0 for _, v, _ in h.readings)


# --- 9 ------------------------------------------------------------------------------------

def test_c9_trace_determinism(tmp_path):
    from spnet.cli import main
    corpus = sorted(glob.glob(os.path.join(PROGRAMS, "*.spnet")))
    with criterion(9, f"byte-identical traces on repeated runs of {len(corpus)} programs"):
        res = os.path.join(PROGRAMS, "cores.res")
        for path in corpus:
            inp = path[:-len(".spnet")] + ".in"
            if not os.path.exists(inp):
                inp = os.path.join(PROGRAMS, "default.in")
            for seed in (0, 7):
                blobs = []
                for k in range(2):
                    out = tmp_path / f"t{k}.trace"
                    code = main(["run", path, "--input", inp, "--seed", str(seed),
                                 "--resources", res, "--trace", str(out)])
                    assert code == 0, path
                    blobs.append(out.read_bytes())
                assert blobs[0] == blobs[1], path
                assert blobs[0].count(b"\n") > 2


# --- 10 -----------------------------------------------------------------------------------

def test_c10_parser_fuzz():
    with criterion(10, "parser fuzz: 100000 generated/mutated inputs fail only with positioned ParseError"):
        rng = random.Random(10)
        seeds = [open(p).read() for p in sorted(glob.glob(os.path.join(PROGRAMS, "*.spnet")))]
        parsed = rejected = 0
        for i in range(100_000):
            if i % 4 == 0:
                text = O.gen_program(rng)
            elif i % 4 == 1:
                text = O.mutate(rng.choice(seeds), rng)
            else:
                text = O.mutate(O.gen_program(rng), rng)
            try:
                parse_program(text)
                parsed += 1
            except ParseError as e:
                rejected += 1
                assert isinstance(e.line, int) and isinstance(e.col, int)
                assert 1 <= e.line <= text.count("\n") + 1 and e.col >= 1, (text, e.line, e.col)
        assert parsed > 10_000 and rejected > 10_000
