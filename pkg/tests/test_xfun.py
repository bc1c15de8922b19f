import pytest

from spnet.core import XfnException
from spnet.errors import ConfigError
from spnet.parser import parse_program
from spnet.records import rec
from spnet.resources import parse_resources
from spnet.runtime import RunConfig, Runtime, run

BOXES = """
box A ((a) -> (a)) = { emit {a = a} } cost(duration=2us, storage=64B, power=5mW);
box B ((a) -> (a)) = { emit {a = a} } cost(duration=1us);
"""
CORES = parse_resources("node n0 kind=core speed=3\nnode n1 kind=core speed=5\n")


def go(net, n=4, extra=None, **cfg):
    ins = [rec(a=i, **(extra or {})) for i in range(n)]
    outs, h = run(parse_program(BOXES + net), ins, RunConfig(**cfg))
    return outs, h


def count(h, kind):
    return sum(e.kind == kind for e in h.trace_events)


@pytest.mark.parametrize("net,agents", [("A", 1), ("A/!ge", 1), ("A/!te", 4), ("A/!gr", 4)])
def test_agent_lifetimes(net, agents):
    _, h = go(net)
    assert count(h, "agent_create") == agents == count(h, "agent_end")


def test_storage_budget():
    with pytest.raises(XfnException) as ei:
        go("A/:mc(32B)")
    assert ei.value.name == "Violation(mc)"
    outs, _ = go("A/:mc(64B)")
    assert len(outs) == 4


def test_input_rate_spaces_records():
    _, h = go("A/:mti(1000)")
    starts = [e.time for e in h.trace_events if e.kind == "box_call"]
    assert starts == [0, 1_000_000, 2_000_000, 3_000_000]


def test_latency_within_budget_leaves_clock_alone():
    _, h = go("A/:mfl(1s)")
    assert h.now == 8000


def test_power_isolation_violation():
    with pytest.raises(XfnException) as ei:
        go("((A'X | B'X)/X/p)/:mp(6mW)")
    assert ei.value.name == "Violation(p)"


def test_assignment_needs_resource_tree():
    with pytest.raises(ConfigError):
        Runtime(parse_program(BOXES + "(A'X .. B)/X@:share(*)"))
    outs, _ = go("(A'X .. B)/X@:share(*)", resources=CORES)
    assert len(outs) == 4


def test_resource_property_observation():
    outs, _ = go("(([b=h(X,[1],speed)] .. A)'X)/X@:share(*)", extra={"b": 0}, resources=CORES)
    assert {r["b"] for r in outs} == {3}
    with pytest.raises(XfnException) as ei:
        go("(([b=h(X,[1],kind)] .. A)'X)/X@:share(*)", extra={"b": 0}, resources=CORES)
    assert ei.value.kind == "Unimplemented"


def test_unresolvable_observation():
    with pytest.raises(XfnException) as ei:
        go("[b=dla(X,[7])] .. A'X", extra={"b": 0})
    assert ei.value.kind == "UnknownIndex"


def test_activity_cap_zero_is_immediate_violation():
    with pytest.raises(XfnException) as ei:
        go("(A'W)/W:mdaa(0)")
    assert ei.value.kind == "Violation"


def test_time_observation_counts_ticks():
    outs, _ = go("A .. [t=time(1000000)]", n=1, extra={"t": 0})
    assert outs[0]["t"] == 2                              # 2us at microsecond granularity
