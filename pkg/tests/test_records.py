import pytest
from hypothesis import given, strategies as st

from spnet.errors import ParseError, SPNetTypeError
from spnet.records import (Record, RecordType, Tag, decode_record, encode_record, flow_inherit,
                           matches, rec, record_union, subtype)

labels = st.from_regex(r"[a-z][a-z0-9_]{0,5}", fullmatch=True)
scalars = st.integers(min_value=-2**63, max_value=2**63 - 1)


@st.composite
def records(draw):
    fields = draw(st.dictionaries(labels, scalars, max_size=6))
    tag = None
    if draw(st.booleans()):
        tl = draw(labels.filter(lambda l: l not in fields))
        tag = Tag(tl, draw(scalars))
    return Record(fields, tag)


@given(records())
def test_text_round_trip(r):
    assert decode_record(encode_record(r)) == r
    assert encode_record(decode_record(encode_record(r))) == encode_record(r)


def test_equality_ignores_lineage_and_order():
    a = Record({"a": 1, "b": 2})
    b = decode_record("{b=2, a=1}")
    assert a == b and hash(a) == hash(b)
    assert a != rec(("t", 0), a=1, b=2)


def test_bare_tag_is_zero():
    assert decode_record("{a=1}<p>").tag == Tag("p", 0)


@pytest.mark.parametrize("text", ["{a=1", "{a=}", "{1=2}", "a=1", "{a=1}<", "{a=1, a=2}",
                                  "{a=99999999999999999999}"])
def test_bad_record_text(text):
    with pytest.raises(ParseError):
        decode_record(text)


def test_records_are_immutable():
    r = rec(a=1)
    with pytest.raises(AttributeError):
        r.tag = Tag("t")
    assert r.with_fields(b=2) == rec(a=1, b=2) and r == rec(a=1)


def test_matching_is_width_subtyping_with_binding_tags():
    t = RecordType.of("a", "b")
    assert matches(rec(a=1, b=2, c=3), t)
    assert not matches(rec(a=1), t)
    assert not matches(rec(("t", 1), a=1, b=2), t)
    assert matches(rec(("t", 1), a=1, b=2), RecordType.of("a", tag="t"))
    assert subtype(RecordType.of("a", "b"), RecordType.of("a"))
    assert not subtype(RecordType.of("a"), RecordType.of("a", "b"))


def test_flow_inheritance_keeps_unmatched_fields():
    out = flow_inherit(rec(a=1, z=9), RecordType.of("a"), rec(b=2))
    assert out == rec(b=2, z=9)
    # produced fields win over inherited ones
    assert flow_inherit(rec(a=1, b=5), RecordType.of("a"), rec(b=2)) == rec(b=2)


def test_union_is_left_biased():
    assert record_union(rec(a=1), rec(a=2, b=3)) == rec(a=1, b=3)
    with pytest.raises(SPNetTypeError):
        record_union(rec(("t", 1), a=1), rec(t=2))
