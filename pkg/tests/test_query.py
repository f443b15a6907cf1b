"""Search-query parsing, canonical serialization, and the round-trip law."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from slrpipe.errors import MalformedQuery
from slrpipe.search import QUERY_FIELDS, QueryOp, QueryTerm, parse_arxiv_query, serialize_query


def t(field: str, phrase: str) -> QueryTerm:
    return QueryTerm(field=field, phrase=phrase)


# --------------------------------------------------------------------------
# Node validation
# --------------------------------------------------------------------------

def test_query_fields():
    assert QUERY_FIELDS == {"ti", "abs", "all"}


def test_term_validation():
    with pytest.raises(MalformedQuery):
        QueryTerm(field="author", phrase="smith")
    with pytest.raises(MalformedQuery):
        QueryTerm(field="ti", phrase="   ")
    with pytest.raises(MalformedQuery):
        QueryTerm(field="ti", phrase='has "quote"')


def test_op_validation():
    left, right = t("all", "a"), t("all", "b")
    with pytest.raises(MalformedQuery):
        QueryOp(op="XOR", left=left, right=right)


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

def test_parse_bare_word_defaults_to_all():
    assert parse_arxiv_query("transformer") == t("all", "transformer")


def test_parse_quoted_phrase():
    assert parse_arxiv_query('"neural machine translation"') == t(
        "all", "neural machine translation"
    )


def test_parse_fielded_terms():
    assert parse_arxiv_query('ti:"attention"') == t("ti", "attention")
    assert parse_arxiv_query("abs:robots") == t("abs", "robots")


def test_parse_and_binds_tighter_than_or():
    parsed = parse_arxiv_query('all:"a" OR all:"b" AND all:"c"')
    assert parsed == QueryOp("OR", t("all", "a"), QueryOp("AND", t("all", "b"), t("all", "c")))


def test_parse_andnot_binds_like_and():
    parsed = parse_arxiv_query('all:"a" ANDNOT all:"b" AND all:"c"')
    assert parsed == QueryOp(
        "AND", QueryOp("ANDNOT", t("all", "a"), t("all", "b")), t("all", "c")
    )


def test_parse_parentheses_override_precedence():
    parsed = parse_arxiv_query('(all:"a" OR all:"b") AND all:"c"')
    assert parsed == QueryOp("AND", QueryOp("OR", t("all", "a"), t("all", "b")), t("all", "c"))


def test_parse_distributes_field_over_group():
    parsed = parse_arxiv_query('abs:("alpha" OR "beta")')
    assert parsed == QueryOp("OR", t("abs", "alpha"), t("abs", "beta"))
    parsed = parse_arxiv_query('ti:("alpha" AND beta)')
    assert parsed == QueryOp("AND", t("ti", "alpha"), t("ti", "beta"))


def test_parse_rejects_conflicting_nested_field():
    with pytest.raises(MalformedQuery):
        parse_arxiv_query('ti:(abs:"alpha" OR "beta")')


@pytest.mark.parametrize(
    "query",
    [
        "",
        "   ",
        "ti:",
        'xy:"a"',
        '(all:"a"',
        'all:"a")',
        '"unterminated',
        'all:"a" OR',
        'all:"a" all:"b"',
        "AND",
        'all:"a" AND AND all:"b"',
    ],
)
def test_parse_rejects_malformed_queries(query):
    with pytest.raises(MalformedQuery):
        parse_arxiv_query(query)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def test_serialize_is_canonical():
    parsed = parse_arxiv_query("neural AND ti:attention")
    assert serialize_query(parsed) == '(all:"neural" AND ti:"attention")'


def test_serialize_parenthesizes_fully():
    parsed = parse_arxiv_query("a OR b AND c")
    assert serialize_query(parsed) == '(all:"a" OR (all:"b" AND all:"c"))'


# --------------------------------------------------------------------------
# Round-trip law
# --------------------------------------------------------------------------

phrases = st.text(
    alphabet="abcdefgh01 -:()", min_size=1, max_size=12
).filter(lambda s: s.strip() == s and s)

query_nodes = st.recursive(
    st.builds(QueryTerm, st.sampled_from(sorted(QUERY_FIELDS)), phrases),
    lambda children: st.builds(
        QueryOp, st.sampled_from(["AND", "OR", "ANDNOT"]), children, children
    ),
    max_leaves=10,
)


@given(query_nodes)
def test_parse_inverts_serialize(node):
    assert parse_arxiv_query(serialize_query(node)) == node
