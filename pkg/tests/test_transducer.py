import itertools

from hypothesis import given, strategies as st

import oracles as O
from spnet.analysis import check_transducer, expand_transducer, transducer_variants
from spnet.parser import parse_transducer
from spnet.records import rec
from spnet.transducer import instantiate, is_inactive, restore, snapshot, step

SYNC = "[| {a},{b},{c} |]"
PAIR = """[| var x;
 start: {a} -> [x := input] ha; {b} -> [x := input] hb;
 ha: {b} -> [emit input + x; reset x] start;
 hb: {a} -> [emit input + x; reset x] start; |]"""


def feed(src, records):
    inst = instantiate(parse_transducer(src))
    return [r for x in records for r in step(inst, x).emitted], inst


def test_sync_all_orders_and_reactivation():
    for perm in itertools.permutations([rec(a=1), rec(b=2), rec(c=3)]):
        out, inst = feed(SYNC, list(perm) + [rec(a=4)])
        assert out[0] == rec(a=1, b=2, c=3)
        assert not is_inactive(inst)


@given(st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=12))
def test_sync_matches_reference(keys):
    records = [rec(**{k: i}) for i, k in enumerate(keys)]
    out, _ = feed(SYNC, records)
    groups = [frozenset("a"), frozenset("b"), frozenset("c")]
    assert [dict(r.items()) for r in out] == O.sync_reference([dict(r.items()) for r in records], groups)


def test_pairing_keeps_later_record_fields_first():
    out, _ = feed(PAIR, [rec(b=2), rec(a=1)])
    assert out == [rec(a=1, b=2)]


def test_remainder_guard_inherits():
    out, _ = feed("[| {a}+x -> [emit {a=input.a+1}+x] |]", [rec(a=1, z=5)])
    assert out == [rec(a=2, z=5)]


def test_snapshot_restore_is_independent():
    inst = instantiate(parse_transducer(SYNC))
    step(inst, rec(b=2))
    blob = snapshot(inst)
    step(inst, rec(a=1))
    back = restore(blob)
    assert step(back, rec(c=3)).emitted == []
    assert step(back, rec(a=9)).emitted == [rec(a=9, b=2, c=3)]


def test_static_checks():
    assert check_transducer(expand_transducer(parse_transducer(SYNC))).diagnostics == []
    leak = check_transducer(parse_transducer("[| var x; start: {a} -> [x:=input] start; |]"))
    assert leak.diagnostics
    cyc = check_transducer(parse_transducer("[| A: -> [] B; B: -> [] A; |]"))
    assert cyc.diagnostics
    unbound = check_transducer(parse_transducer("[| {a} -> [emit {b=a}] |]"))
    assert any(d.code == "FSM007" for d in unbound.diagnostics)


def test_sync_expansion_size():
    spec = expand_transducer(parse_transducer(SYNC))
    assert len(spec.transitions) == 3 * 4 + 1
    assert transducer_variants(parse_transducer(PAIR))
