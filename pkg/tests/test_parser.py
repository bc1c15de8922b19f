import random

import pytest
from hypothesis import given, settings, strategies as st

import oracles as O
from spnet.errors import ParseError
from spnet.nodes import BangStar, Box, Comp, Label, Reorder, ReplSelect, Select, StarComp
from spnet.parser import parse_box_decl, parse_network, parse_program, parse_transducer
from spnet.printer import algebraic_form, to_source, transducer_source


@settings(max_examples=300, deadline=None)
@given(st.integers(min_value=0, max_value=2**32))
def test_printer_round_trip(seed):
    n = parse_network(O.gen_network(random.Random(seed)))
    assert parse_network(to_source(n)) == n


def test_where_guarded_star_under_suffix_round_trips():
    n = parse_network("(A*{a} where a >= 3)/!te")
    assert parse_network(to_source(n)) == n


def test_precedence():
    n = parse_network("A .. B | C .. D")
    assert isinstance(n, Select) and all(isinstance(c, Comp) for c in n.items)
    n = parse_network("A .. (B | C)*{b}'X")
    assert isinstance(n, Comp) and isinstance(n.items[1], Label)
    assert isinstance(n.items[1].inner, StarComp)


def test_replication_forms():
    assert isinstance(parse_network("A!<t>"), ReplSelect)
    assert isinstance(parse_network("(R | P)!*<r><p>"), BangStar)
    assert isinstance(parse_network("?A#"), Reorder)
    with pytest.raises(ParseError):
        parse_network("A!{a}")


def test_box_declaration():
    name, sig = parse_box_decl("box foo ((a, b) -> (c) | (c, d));")
    assert name == "foo"
    assert [sorted(o.labels) for o in sig.outputs] == [["c"], ["c", "d"]]


def test_comments_and_program():
    p = parse_program("// header\nbox A ((a) -> (a)); // trailing\nA .. A // done\n")
    assert isinstance(p.network, Comp) and "A" in p.boxes


def test_sync_sugar_equals_explicit_form():
    sugar = parse_transducer("[| {a},{b},{c} |]")
    explicit = parse_transducer("""[| guard t[3] = {a},{b},{c}; label s[3]; var h[3];
        i=0..2 / ~s[i]: t[i] -> [h[i] := input] s[i];
        s[0..2]: -> [emit union(h); reset h] ~s[0..2]; |]""")
    assert sugar == explicit


def test_transducer_source_round_trip():
    t = parse_transducer("[| label [0..3]; var h[3]; n=0..2/ n: x -> [h[n] := x] n+1; "
                         "3: x -> [emit union(h)+x; reset h] 0; |]")
    assert parse_transducer(transducer_source(t)) == t


def test_algebraic_form():
    assert algebraic_form(parse_network("A .. B")) == "C(Box(A), Box(B))"


@pytest.mark.parametrize("src,line,col", [
    ("A ..", 1, 5),
    ("box A ((a) -> (a));\nA | | B", 2, 5),
    ("(A", 1, 3),
    ("A /X:mc(12parsecs)", 1, 11),
])
def test_errors_are_positioned(src, line, col):
    with pytest.raises(ParseError) as ei:
        parse_program(src)
    assert (ei.value.line, ei.value.col) == (line, col)
    assert ei.value.message


def test_error_lists_expected_tokens():
    with pytest.raises(ParseError) as ei:
        parse_network("A ..")
    assert ei.value.expected
