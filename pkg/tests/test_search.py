"""Feed parsing, transports, paging, text cleanup, and embedding providers."""

from __future__ import annotations

import hashlib
import math

import numpy as np
import pytest
import requests
from hypothesis import given, strategies as st

from helpers import atom_entry, atom_feed, make_paper
from slrpipe.errors import (
    DimMismatch,
    EmbeddingDimMismatch,
    EmptyResultWarning,
    FeedParseError,
    MalformedQuery,
    NetworkError,
    ProviderUnavailable,
    ZeroVector,
)
from slrpipe.search import (
    BUNDLED_FEEDS,
    EMBEDDING_INPUT_TOKEN_LIMIT,
    EmbeddingVector,
    FixtureTransport,
    HashingEmbedder,
    HttpTransport,
    PaperRecord,
    SentenceModelEmbedder,
    bundled_feed_bytes,
    cosine_similarity,
    embed_texts,
    embedding_input,
    fetch_papers,
    get_embedding_provider,
    parse_feed,
)
from slrpipe.textutil import (
    clean_text,
    collapse_whitespace,
    count_sentence_runs,
    split_sentences,
    tokenize,
    truncate_whitespace_tokens,
)


# --------------------------------------------------------------------------
# Text utilities
# --------------------------------------------------------------------------

def test_tokenize_lowercases_and_keeps_alphanumerics():
    assert tokenize("The 3 CATS ate-12 fishes!") == ["the", "3", "cats", "ate", "12", "fishes"]
    assert tokenize("???") == []


def test_split_sentences_keeps_terminators_and_tail():
    assert split_sentences("One. Two!? Three") == ["One.", "Two!?", "Three"]
    assert count_sentence_runs("no terminator") == 1
    assert count_sentence_runs("a. b. c.") == 3


def test_collapse_and_truncate():
    assert collapse_whitespace("  a \t b\n\nc ") == "a b c"
    assert truncate_whitespace_tokens("a b c d", 2) == "a b"


def test_clean_text_strips_markup():
    assert clean_text("\\textbf{Bold} $x_i$ 5% \x07 done") == "Bold x_i 5% done"
    assert clean_text("line\nbreaks\tand   runs") == "line breaks and runs"


@given(st.text(alphabet="ab \\${}\t\n\x07e_%", max_size=60))
def test_clean_text_is_idempotent(text):
    cleaned = clean_text(text)
    assert clean_text(cleaned) == cleaned


# --------------------------------------------------------------------------
# Feed parsing
# --------------------------------------------------------------------------

def test_bundled_feed_names():
    assert BUNDLED_FEEDS == (
        "xai",
        "vr",
        "blockchain",
        "llm",
        "nmt",
        "pagination_250",
        "small_5",
    )
    with pytest.raises(ValueError):
        bundled_feed_bytes("no_such_feed")


def test_parse_small_bundled_feed():
    records, total = parse_feed(bundled_feed_bytes("small_5"))
    assert total == 5
    assert [r.arxiv_id for r in records] == [f"2300.0000{i}v1" for i in range(1, 6)]
    assert records[0].title == "Small Fixture Note 1 on Indexing"
    assert records[4].title == "Small Fixture Note 5 on Logging"
    assert [r.authors for r in records] == [
        ("Ada Chen",),
        ("Boris Patel",),
        ("Carmen Kim",),
        ("Deepa Garcia",),
        ("Elias Novak",),
    ]
    assert {r.primary_category for r in records} == {"cs.DL"}
    assert records[0].published == "2023-01-01T08:00:00Z"
    assert records[0].url.endswith("2300.00001v1")
    assert all(r.abstract_clean for r in records)


def test_parse_feed_reads_synthetic_entries():
    feed = atom_feed(
        [atom_entry("1234.5678v1", title="Alpha \\textbf{Beta}", summary="  Raw $x$ text. ")],
        total=1,
    )
    records, total = parse_feed(feed.encode())
    assert total == 1
    record = records[0]
    assert record.arxiv_id == "1234.5678v1"
    assert record.title == "Alpha Beta"
    assert record.abstract_raw == "Raw $x$ text."
    assert record.abstract_clean == "Raw x text."
    assert record.primary_category == "cs.LG"


def test_parse_feed_rejects_bad_payloads():
    with pytest.raises(FeedParseError):
        parse_feed(b"this is not xml")
    with pytest.raises(FeedParseError):
        parse_feed(b"<root/>")
    with pytest.raises(FeedParseError):
        parse_feed(atom_feed([atom_entry("x", include_id=False)]).encode())


# --------------------------------------------------------------------------
# Paper records
# --------------------------------------------------------------------------

def test_paper_record_requires_id_and_round_trips():
    with pytest.raises(ValueError):
        make_paper("")
    paper = make_paper("2301.00001v1", title="T")
    assert PaperRecord.from_dict(paper.to_dict()) == paper


# --------------------------------------------------------------------------
# Transports and paging
# --------------------------------------------------------------------------

QUERY = 'all:"topic"'


def test_fixture_transport_counts_entries():
    transport = FixtureTransport(bundled_feed_bytes("pagination_250"))
    assert transport.entry_count == 250
    empty = FixtureTransport(atom_feed([]))
    assert empty.entry_count == 0


def test_fetch_papers_paginates_until_max_results():
    transport = FixtureTransport(bundled_feed_bytes("pagination_250"))
    records = fetch_papers(QUERY, transport, max_results=200, page_size=100)
    assert len(records) == 200
    assert transport.requests == [(0, 100), (100, 100)]
    assert len({r.arxiv_id for r in records}) == 200


def test_fetch_papers_stops_on_short_page():
    transport = FixtureTransport(bundled_feed_bytes("pagination_250"))
    records = fetch_papers(QUERY, transport, max_results=3000, page_size=100)
    assert len(records) == 250
    assert transport.requests == [(0, 100), (100, 100), (200, 100)]


def test_fetch_papers_clamps_final_page_request():
    transport = FixtureTransport(bundled_feed_bytes("pagination_250"))
    records = fetch_papers(QUERY, transport, max_results=250, page_size=100)
    assert len(records) == 250
    assert transport.requests == [(0, 100), (100, 100), (200, 50)]


def test_fetch_papers_single_small_page():
    transport = FixtureTransport(bundled_feed_bytes("pagination_250"))
    records = fetch_papers(QUERY, transport, max_results=30, page_size=100)
    assert len(records) == 30
    assert transport.requests == [(0, 30)]


def test_fetch_papers_deduplicates_first_wins():
    feed = atom_feed(
        [
            atom_entry("1111.1111v1", title="First Copy"),
            atom_entry("2222.2222v1", title="Other"),
            atom_entry("1111.1111v1", title="Second Copy"),
        ]
    )
    records = fetch_papers(QUERY, FixtureTransport(feed), max_results=10, page_size=10)
    assert [r.arxiv_id for r in records] == ["1111.1111v1", "2222.2222v1"]
    assert records[0].title == "First Copy"


def test_fetch_papers_warns_on_empty_first_page():
    transport = FixtureTransport(atom_feed([]))
    with pytest.warns(EmptyResultWarning):
        records = fetch_papers(QUERY, transport, max_results=10, page_size=10)
    assert records == []


def test_fetch_papers_validates_query_before_any_request():
    transport = FixtureTransport(bundled_feed_bytes("small_5"))
    with pytest.raises(MalformedQuery):
        fetch_papers("ti:", transport, max_results=10)
    assert transport.request_count == 0


def test_fetch_papers_validates_limits():
    transport = FixtureTransport(bundled_feed_bytes("small_5"))
    with pytest.raises(ValueError):
        fetch_papers(QUERY, transport, max_results=0)
    with pytest.raises(ValueError):
        fetch_papers(QUERY, transport, max_results=10, page_size=0)


class FakeHttpSession:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls: list[dict] = []

    def get(self, url, params=None, headers=None, timeout=None):
        self.calls.append({"url": url, "params": params, "headers": headers})
        item = self.outcomes.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


class FakeHttpResponse:
    def __init__(self, status_code=200, content=b""):
        self.status_code = status_code
        self.content = content


def test_http_transport_fetches_one_page():
    payload = atom_feed([atom_entry("1234.5678v1")]).encode()
    session = FakeHttpSession([FakeHttpResponse(200, payload)])
    transport = HttpTransport(session=session, delay_s=0.0)
    assert transport.fetch_page(QUERY, 0, 10) == payload
    call = session.calls[0]
    assert call["params"] == {"search_query": QUERY, "start": "0", "max_results": "10"}
    assert "slrpipe" in call["headers"]["User-Agent"]


def test_http_transport_maps_failures_to_network_error():
    session = FakeHttpSession([FakeHttpResponse(503)])
    with pytest.raises(NetworkError):
        HttpTransport(session=session, delay_s=0.0).fetch_page(QUERY, 0, 10)
    session = FakeHttpSession([requests.exceptions.ConnectionError("down")])
    with pytest.raises(NetworkError):
        HttpTransport(session=session, delay_s=0.0).fetch_page(QUERY, 0, 10)


# --------------------------------------------------------------------------
# Embeddings
# --------------------------------------------------------------------------

def _expected_bucket(token: str) -> int:
    return int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big") % 256


def test_hashing_embedder_is_a_normalized_bag_of_buckets():
    embedder = HashingEmbedder()
    [vector] = embedder.embed(["cat"])
    assert vector.dim == 256
    assert vector.model_id == "hash-bag-256"
    expected = np.zeros(256)
    expected[_expected_bucket("cat")] = 1.0
    assert np.array_equal(vector.values, expected)

    [vector] = embedder.embed(["Cat CAT dog"])
    expected = np.zeros(256)
    expected[_expected_bucket("cat")] += 2.0
    expected[_expected_bucket("dog")] += 1.0
    expected /= math.sqrt(5.0)
    assert np.allclose(vector.values, expected, atol=0, rtol=0)


def test_hashing_embedder_no_tokens_gives_zero_vector():
    [vector] = HashingEmbedder().embed(["?!—"])
    assert not vector.values.any()


def test_hashing_embedder_is_deterministic():
    first = HashingEmbedder().embed(["same text twice"])[0].values
    second = HashingEmbedder().embed(["same text twice"])[0].values
    assert np.array_equal(first, second)


def test_embedding_vector_validation():
    with pytest.raises(ValueError):
        EmbeddingVector(values=np.zeros((2, 2)), dim=4, model_id="m")
    with pytest.raises(ValueError):
        EmbeddingVector(values=np.zeros(3), dim=4, model_id="m")
    with pytest.raises(ValueError):
        EmbeddingVector(values=np.array([1.0, float("nan")]), dim=2, model_id="m")


def test_embed_texts_empty_and_mixed_dims():
    assert embed_texts([], HashingEmbedder()) == []

    class MixedProvider:
        model_id = "mixed"

        def embed(self, texts):
            return [
                EmbeddingVector(np.zeros(2) + 1, 2, "mixed"),
                EmbeddingVector(np.zeros(3) + 1, 3, "mixed"),
            ][: len(texts)]

    with pytest.raises(EmbeddingDimMismatch):
        embed_texts(["a", "b"], MixedProvider())


def test_get_embedding_provider():
    assert isinstance(get_embedding_provider("hash"), HashingEmbedder)
    sentence = get_embedding_provider("sentence:custom-model")
    assert isinstance(sentence, SentenceModelEmbedder)
    with pytest.raises(ValueError):
        get_embedding_provider("glove")


def test_sentence_embedder_requires_optional_dependency():
    import importlib.util

    if importlib.util.find_spec("sentence_transformers") is not None:
        pytest.skip("optional sentence-transformers package is installed")
    with pytest.raises(ProviderUnavailable):
        SentenceModelEmbedder().embed(["text"])


def test_embedding_input_combines_title_and_abstract():
    paper = make_paper("1.1", title="Title", abstract="alpha beta")
    assert embedding_input(paper) == "Title. alpha beta"
    untitled = make_paper("1.2", title="", abstract="alpha beta")
    assert embedding_input(untitled) == "alpha beta"


def test_embedding_input_truncates_to_token_limit():
    words = " ".join(f"w{i}" for i in range(600))
    paper = make_paper("1.3", title="Title", abstract=words)
    tokens = embedding_input(paper).split()
    assert len(tokens) == EMBEDDING_INPUT_TOKEN_LIMIT == 512
    assert tokens[0] == "Title."
    assert tokens[-1] == "w510"


# --------------------------------------------------------------------------
# Cosine similarity
# --------------------------------------------------------------------------

def _vec(*values: float) -> EmbeddingVector:
    data = np.asarray(values, dtype=np.float64)
    return EmbeddingVector(values=data, dim=data.size, model_id="stub")


def test_cosine_similarity_basics():
    assert cosine_similarity(_vec(1, 0), _vec(1, 0)) == 1.0
    assert cosine_similarity(_vec(1, 0), _vec(0, 1)) == 0.0
    assert cosine_similarity(_vec(1, 0), _vec(-1, 0)) == -1.0
    assert cosine_similarity(_vec(3, 4), _vec(3, 4)) == pytest.approx(1.0)


def test_cosine_similarity_errors():
    with pytest.raises(DimMismatch):
        cosine_similarity(_vec(1, 0), _vec(1, 0, 0))
    with pytest.raises(ZeroVector):
        cosine_similarity(_vec(0, 0), _vec(1, 0))


@given(
    st.lists(st.floats(-100, 100), min_size=3, max_size=3),
    st.lists(st.floats(-100, 100), min_size=3, max_size=3),
)
def test_cosine_similarity_stays_clamped(left, right):
    u, v = _vec(*left), _vec(*right)
    if float(np.linalg.norm(u.values)) == 0.0 or float(np.linalg.norm(v.values)) == 0.0:
        return
    value = cosine_similarity(u, v)
    assert -1.0 <= value <= 1.0
