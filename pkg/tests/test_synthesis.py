"""Extractive summarization, topic aggregation, and citation-safe post-editing."""

from __future__ import annotations

import warnings

import pytest
from hypothesis import given, strategies as st

from slrpipe.errors import CitationRepairWarning, EmptyAbstract, SummaryBackendUnavailable
from slrpipe.evaluation import rouge1
from slrpipe.gateway import LlmGateway
from slrpipe.synthesis import (
    SUMMARY_STAGES,
    ExtractiveSummarizer,
    SummaryUnit,
    TransformersSummarizer,
    aggregate_topic,
    extract_citation_keys,
    get_summarizer,
    post_edit_section,
    summarize_abstract,
    validate_citations,
)
from slrpipe.topics import TopicCluster
from test_gateway import ScriptedBackend


# --------------------------------------------------------------------------
# Extractive summarizer
# --------------------------------------------------------------------------

def test_budget_is_ratio_with_floor():
    summarizer = ExtractiveSummarizer(ratio=0.4, min_tokens=20)
    assert summarizer.budget(" ".join(["w"] * 100)) == 40
    assert summarizer.budget(" ".join(["w"] * 10)) == 20
    assert ExtractiveSummarizer(ratio=1.0, min_tokens=1).budget("a b c") == 3


def test_summarize_keeps_whole_leading_sentences():
    sentences = [" ".join(f"s{i}w{j}" for j in range(8)) + "." for i in range(3)]
    text = " ".join(sentences)  # 24 tokens -> budget max(20, 10) = 20
    summary = ExtractiveSummarizer(ratio=0.4, min_tokens=20).summarize(text)
    assert summary == " ".join(sentences[:2])


def test_summarize_truncates_an_oversized_first_sentence():
    text = " ".join(f"w{i}" for i in range(50)) + "."
    summary = ExtractiveSummarizer(ratio=0.4, min_tokens=10).summarize(text)
    assert summary == " ".join(f"w{i}" for i in range(20))
    assert len(summary.split()) == 20


def test_summarizer_validation():
    with pytest.raises(ValueError):
        ExtractiveSummarizer(ratio=0.0)
    with pytest.raises(ValueError):
        ExtractiveSummarizer(ratio=1.5)
    with pytest.raises(ValueError):
        ExtractiveSummarizer(min_tokens=0)


words = st.sampled_from([f"tok{i}" for i in range(12)] + ["end."])


@given(st.lists(words, min_size=1, max_size=80))
def test_summary_is_extractive_and_within_budget(tokens):
    text = " ".join(tokens)
    summarizer = ExtractiveSummarizer(ratio=0.4, min_tokens=5)
    summary = summarizer.summarize(text)
    assert summary
    assert len(summary.split()) <= summarizer.budget(text)
    # Every output unigram occurs in the source: precision is exactly 1.0.
    assert rouge1(summary, text).precision == 1.0


def test_get_summarizer():
    assert isinstance(get_summarizer("extractive"), ExtractiveSummarizer)
    assert isinstance(get_summarizer("transformers"), TransformersSummarizer)
    assert get_summarizer("transformers:some-model").model_name == "some-model"
    with pytest.raises(ValueError):
        get_summarizer("tldr")


def test_transformers_summarizer_requires_optional_dependency():
    import importlib.util

    if importlib.util.find_spec("transformers") is not None:
        pytest.skip("optional transformers package is installed")
    with pytest.raises(SummaryBackendUnavailable):
        TransformersSummarizer().summarize("text")


# --------------------------------------------------------------------------
# Summary units
# --------------------------------------------------------------------------

def test_summary_stages():
    assert SUMMARY_STAGES == ("summary", "aggregated", "post_edited")


def test_summary_unit_validation():
    with pytest.raises(ValueError):
        SummaryUnit(paper_id="p", stage="draft", text="a b", token_count=2)
    with pytest.raises(ValueError):
        SummaryUnit(paper_id="p", stage="summary", text="a b", token_count=3)


def test_summarize_abstract_produces_stage_one_unit():
    unit = summarize_abstract("p1", "Alpha beta gamma. Delta.", ExtractiveSummarizer())
    assert unit.paper_id == "p1"
    assert unit.stage == "summary"
    assert unit.token_count == len(unit.text.split())


def test_summarize_abstract_rejects_empty_text():
    with pytest.raises(EmptyAbstract):
        summarize_abstract("p1", "   ", ExtractiveSummarizer())


# --------------------------------------------------------------------------
# Aggregation and citations
# --------------------------------------------------------------------------

def _unit(paper_id: str, text: str) -> SummaryUnit:
    return SummaryUnit(
        paper_id=paper_id, stage="summary", text=text, token_count=len(text.split())
    )


def test_aggregate_topic_appends_citations_in_member_order():
    cluster = TopicCluster(topic_id=0, member_ids=("p2", "p1"))
    aggregated = aggregate_topic(
        cluster,
        {"p1": _unit("p1", "First summary."), "p2": _unit("p2", "Second summary.")},
        {"p1": "keyone", "p2": "keytwo"},
    )
    assert aggregated == (
        "Second summary. \\citep{keytwo} First summary. \\citep{keyone}"
    )


def test_aggregate_topic_requires_summaries_and_keys():
    cluster = TopicCluster(topic_id=0, member_ids=("p1",))
    with pytest.raises(KeyError):
        aggregate_topic(cluster, {}, {"p1": "k"})
    with pytest.raises(KeyError):
        aggregate_topic(cluster, {"p1": _unit("p1", "T.")}, {})


def test_extract_citation_keys_dedupes_in_first_appearance_order():
    text = "A \\citep{beta} B \\citep{alpha,beta} C \\citep{alpha}"
    assert list(extract_citation_keys(text)) == ["beta", "alpha"]
    assert list(extract_citation_keys("no markers")) == []


def test_validate_citations():
    allowed = ("alpha", "beta")
    assert validate_citations("x \\citep{alpha}", allowed)
    assert not validate_citations("no citation at all", allowed)
    assert not validate_citations("x \\citep{gamma}", allowed)
    assert validate_citations("x \\citep{alpha, beta}", allowed)


# --------------------------------------------------------------------------
# Post-editing
# --------------------------------------------------------------------------

CLUSTER = TopicCluster(topic_id=0, member_ids=("p1", "p2"), title="Topic Title")
AGGREGATED = "One. \\citep{keyone} Two. \\citep{keytwo}"
ALLOWED = ("keyone", "keytwo")


def test_post_edit_section_mock_round_trip():
    draft = post_edit_section(
        LlmGateway(backend="mock"), "My Review", CLUSTER, AGGREGATED, ALLOWED
    )
    assert draft.topic_id == 0
    assert draft.section_title == "Topic Title"
    assert draft.aggregated_text == AGGREGATED
    # The mock collapses whitespace, so every citation survives.
    assert draft.post_edited_text == AGGREGATED
    assert draft.citation_keys == ("keyone", "keytwo")


def test_post_edit_section_retry_recovers_lost_citations():
    backend = ScriptedBackend(["dropped them all", "kept \\citep{keyone}"])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        draft = post_edit_section(
            LlmGateway(backend=backend), "R", CLUSTER, AGGREGATED, ALLOWED
        )
    assert draft.post_edited_text == "kept \\citep{keyone}"
    assert draft.citation_keys == ("keyone",)
    assert len(backend.requests) == 2
    assert backend.requests[1][1] != backend.requests[0][1]


def test_post_edit_section_falls_back_to_aggregate():
    backend = ScriptedBackend(["no citations", "still none"])
    with pytest.warns(CitationRepairWarning):
        draft = post_edit_section(
            LlmGateway(backend=backend), "R", CLUSTER, AGGREGATED, ALLOWED
        )
    assert draft.post_edited_text == AGGREGATED
    assert draft.citation_keys == ("keyone", "keytwo")


def test_post_edit_section_rejects_foreign_keys_via_fallback():
    backend = ScriptedBackend(["x \\citep{intruder}", "y \\citep{intruder}"])
    with pytest.warns(CitationRepairWarning):
        draft = post_edit_section(
            LlmGateway(backend=backend), "R", CLUSTER, AGGREGATED, ALLOWED
        )
    assert draft.post_edited_text == AGGREGATED
