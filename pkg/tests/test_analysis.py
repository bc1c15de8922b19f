import pytest

from spnet.analysis import analyze, check_budgets, descend_functional, resolve_selectors, routing_table
from spnet.nodes import Box, node_at
from spnet.parser import parse_network, parse_program
from spnet.records import rec


def codes(src):
    p = parse_program(src)
    rep = analyze(p.network, p.boxes, p.positions)
    check_budgets(p.network, rep, p.positions)
    return [d.code for d in rep.diagnostics], rep


def test_pipeline_signature():
    _, rep = codes("box foo ((a,b) -> (c) | (c,d)); box bar ((c) -> (e)); foo..bar")
    assert rep.ok
    assert "e" in str(rep.type_signature(()))


def test_undeclared_box_is_an_error():
    c, rep = codes("box A ((a) -> (a)); A .. Z")
    assert "SIG001" in c and not rep.ok


def test_escaping_tag_is_an_error():
    c, _ = codes("box A ((a) -> (<i>)); A")
    assert "TYP001" in c


def test_routing_prefers_most_specific_branch():
    p = parse_program("box A ((a) -> (x)); box B ((a, b) -> (y)); A | B")
    table = routing_table(p.network, boxes=p.boxes)
    assert table.choose(rec(a=1)) == 0
    assert table.choose(rec(a=1, b=2)) == 1
    assert table.choose(rec(z=1)) is None


def test_selector_resolution_picks_outermost():
    rep = resolve_selectors(parse_network("(((A'X..B)'X..C'X)'N)/X/f"))
    (targets,) = rep.targets.values()
    # (A'X..B)'X and C'X; the inner A'X is shadowed
    assert targets == [(0, 0, 0), (0, 0, 1)]


def test_unmatched_selector_warns():
    c, rep = codes("box A ((a) -> (a)); A/Q/s")
    assert "SEL001" in c and rep.ok


def test_ratio_budget_needs_finite_parent():
    c, _ = codes("box A ((a) -> (a)); (A'X)/X:mc(50%)")
    assert "XFN001" in c
    c, _ = codes("box A ((a) -> (a)); ((A'X)/X:mc(50%))/:mc(1MB)")
    assert "XFN001" not in c


def test_transducer_diagnostics_flow_into_report():
    c, _ = codes("[| {a} -> [emit {b=a}] |]")
    assert "FSM007" in c


def test_descend_functional_through_replication():
    n = parse_network("(I..(A'Y..(B|C)'Y)!<t>)'X")
    path = descend_functional(n, (), [1, 123, 1, 0])
    assert isinstance(node_at(n, path), Box) and node_at(n, path).name == "B"
