import itertools

import pytest

from spnet.boxes import BoxFault, BoxRegistry
from spnet.errors import ConfigError, DuplicateBox, SPNetError, SPNetTypeError
from spnet.parser import parse_box, parse_program
from spnet.records import rec
from spnet.runtime import RunConfig, Runtime, run


def test_scripted_box_emits_with_times_and_if():
    reg = BoxRegistry()
    impl = reg.resolve(parse_box("box S ((x) -> (x, k)) = { emit {x = x, k = i} times 2 };"), "S")
    assert impl.invoke(rec(x=3)) == [rec(x=3, k=0), rec(x=3, k=1)]
    impl = reg.resolve(parse_box("box B ((a) -> (b)) = { emit {b = a} if a mod 2 = 0 };"), "B")
    assert impl.invoke(rec(a=3)) == [] and impl.invoke(rec(a=4)) == [rec(b=4)]


def test_fault_clause():
    impl = BoxRegistry().resolve(parse_box("box F ((x) -> (x)) = { emit {x = x} } fault Boom when x = 7;"), "F")
    with pytest.raises(BoxFault) as ei:
        impl.invoke(rec(x=7))
    assert ei.value.name == "Boom"


def test_host_box_variants_and_flow_inheritance():
    reg = BoxRegistry()
    reg.register_box("split", "(a) -> (b) | (c)", lambda a: [(0, [a + 1]), (1, [a - 1])])
    prog = parse_program("box split ((a) -> (b) | (c));\nsplit")
    outs, _ = run(prog, [rec(a=5, z=1)], registry=reg)
    assert sorted(map(repr, outs)) == sorted(map(repr, [rec(b=6, z=1), rec(c=4, z=1)]))


def test_host_box_type_errors():
    reg = BoxRegistry()
    reg.register_box("bad", "(a) -> (b)", lambda a: [{"c": a}])
    with pytest.raises(SPNetTypeError):
        reg.get("bad").invoke(rec(a=1))
    with pytest.raises(DuplicateBox):
        reg.register_box("bad", "(a) -> (b)", lambda a: [])


def test_missing_and_mismatched_implementations():
    with pytest.raises(ConfigError):
        Runtime(parse_program("box H ((a) -> (a));\nH"), BoxRegistry())
    reg = BoxRegistry()
    reg.register_box("H", "(a) -> (b)", lambda a: [])
    with pytest.raises(ConfigError):
        Runtime(parse_program("box H ((a) -> (a));\nH"), reg)


def test_purity_check_catches_stateful_host_box():
    counter = itertools.count()
    reg = BoxRegistry()
    reg.register_box("Imp", "(a) -> (a)", lambda a: [{"a": next(counter)}])
    prog = parse_program("box Imp ((a) -> (a));\nImp")
    with pytest.raises(SPNetError):
        run(prog, [rec(a=1)], RunConfig(check_purity=True), registry=reg)
