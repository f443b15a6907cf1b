"""Paper search and relevance screening.

This module covers the front half of the pipeline's data path:

* a small **query grammar** (fields ``ti``/``abs``/``all``, quoted phrases,
  ``AND``/``OR``/``ANDNOT``, parentheses) with a canonical serializer,
  so generated queries are validated before any request is made;
* **transports** for the arXiv Atom API — a real HTTP client with an
  etiquette delay, and a fixture-backed replay transport for offline runs
  and tests — plus paginated fetching with de-duplication;
* **embedding providers** — a deterministic hashed bag-of-words provider
  (the default; fully offline) and an optional sentence-embedding
  provider behind a lazy import;
* **cosine screening** that keeps the top-K most topic-similar papers.
"""

from __future__ import annotations

import hashlib
import time
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import (
    DimMismatch,
    EmbeddingDimMismatch,
    EmptyResultWarning,
    FeedParseError,
    InvalidK,
    MalformedQuery,
    NetworkError,
    ProviderUnavailable,
    ZeroVector,
)
from .textutil import clean_text, tokenize, truncate_whitespace_tokens

__all__ = [
    "QUERY_FIELDS",
    "QueryTerm",
    "QueryOp",
    "parse_arxiv_query",
    "serialize_query",
    "PaperRecord",
    "ScoredPaper",
    "Corpus",
    "Transport",
    "HttpTransport",
    "FixtureTransport",
    "bundled_feed_bytes",
    "BUNDLED_FEEDS",
    "parse_feed",
    "fetch_papers",
    "EmbeddingVector",
    "HashingEmbedder",
    "SentenceModelEmbedder",
    "get_embedding_provider",
    "embed_texts",
    "embedding_input",
    "cosine_similarity",
    "filter_top_k",
    "clean_text",
]

QUERY_FIELDS: frozenset[str] = frozenset({"ti", "abs", "all"})

ARXIV_API_URL = "http://export.arxiv.org/api/query"

#: Maximum whitespace tokens of ``title + abstract`` fed to the embedder.
EMBEDDING_INPUT_TOKEN_LIMIT = 512

_ATOM_NS = "http://www.w3.org/2005/Atom"
_OPENSEARCH_NS = "http://a9.com/-/spec/opensearch/1.1/"
_ARXIV_NS = "http://arxiv.org/schemas/atom"


# --------------------------------------------------------------------------
# Query grammar
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QueryTerm:
    """A single fielded phrase, e.g. ``ti:"neural machine translation"``."""

    field: str
    phrase: str

    def __post_init__(self) -> None:
        if self.field not in QUERY_FIELDS:
            raise MalformedQuery(f"unknown query field: {self.field!r}")
        if not self.phrase or not self.phrase.strip():
            raise MalformedQuery("query phrase is empty")
        if '"' in self.phrase:
            raise MalformedQuery("query phrase contains an embedded quote")


@dataclass(frozen=True)
class QueryOp:
    """A boolean combination of two sub-queries (``AND``/``OR``/``ANDNOT``)."""

    op: str
    left: "QueryNode"
    right: "QueryNode"

    def __post_init__(self) -> None:
        if self.op not in ("AND", "OR", "ANDNOT"):
            raise MalformedQuery(f"unknown boolean operator: {self.op!r}")


QueryNode = QueryTerm | QueryOp


def _tokenize_query(text: str) -> list[tuple[str, str]]:
    """Lex a query string into ``(kind, value)`` tokens."""
    tokens: list[tuple[str, str]] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "(":
            tokens.append(("lparen", "("))
            i += 1
            continue
        if ch == ")":
            tokens.append(("rparen", ")"))
            i += 1
            continue
        if ch == '"':
            end = text.find('"', i + 1)
            if end < 0:
                raise MalformedQuery("unterminated quoted phrase")
            tokens.append(("quoted", text[i + 1 : end]))
            i = end + 1
            continue
        # bare word, operator keyword, or field prefix
        j = i
        while j < n and not text[j].isspace() and text[j] not in '()"':
            j += 1
        word = text[i:j]
        i = j
        if word in ("AND", "OR", "ANDNOT"):
            tokens.append(("op", word))
        elif word.endswith(":") and word.count(":") == 1:
            tokens.append(("fieldprefix", word[:-1]))
        elif ":" in word:
            prefix, rest = word.split(":", 1)
            tokens.append(("fieldprefix", prefix))
            tokens.append(("word", rest))
        else:
            tokens.append(("word", word))
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> tuple[str, str] | None:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos]
        return None

    def take(self) -> tuple[str, str]:
        token = self.peek()
        if token is None:
            raise MalformedQuery("unexpected end of query")
        self.pos += 1
        return token

    # grammar: or_expr := and_expr (OR and_expr)*
    #          and_expr := unit ((AND | ANDNOT) unit)*
    #          unit := '(' or_expr ')' | field ':' atom | atom
    #          atom := quoted | word | '(' group ')'

    def parse_or(self) -> QueryNode:
        node = self.parse_and()
        while True:
            token = self.peek()
            if token is not None and token == ("op", "OR"):
                self.take()
                node = QueryOp("OR", node, self.parse_and())
            else:
                return node

    def parse_and(self) -> QueryNode:
        node = self.parse_unit()
        while True:
            token = self.peek()
            if token is not None and token[0] == "op" and token[1] in ("AND", "ANDNOT"):
                self.take()
                node = QueryOp(token[1], node, self.parse_unit())
            else:
                return node

    def parse_unit(self) -> QueryNode:
        token = self.peek()
        if token is None:
            raise MalformedQuery("expected a term or group")
        kind, value = token
        if kind == "lparen":
            self.take()
            node = self.parse_or()
            self._expect_rparen()
            return node
        if kind == "fieldprefix":
            self.take()
            if value not in QUERY_FIELDS:
                raise MalformedQuery(f"unknown query field: {value!r}")
            return self._parse_fielded(value)
        if kind in ("quoted", "word"):
            self.take()
            return QueryTerm("all", value)
        raise MalformedQuery(f"unexpected token {value!r}")

    def _parse_fielded(self, fld: str) -> QueryNode:
        token = self.peek()
        if token is None:
            raise MalformedQuery(f"field {fld!r} has no phrase")
        kind, value = token
        if kind in ("quoted", "word"):
            self.take()
            return QueryTerm(fld, value)
        if kind == "lparen":
            # a field distributing over a parenthesized group of phrases
            self.take()
            node = self.parse_or()
            self._expect_rparen()
            return _distribute_field(node, fld)
        raise MalformedQuery(f"field {fld!r} must be followed by a phrase or group")

    def _expect_rparen(self) -> None:
        token = self.peek()
        if token is None or token[0] != "rparen":
            raise MalformedQuery("unbalanced parentheses")
        self.take()


def _distribute_field(node: QueryNode, fld: str) -> QueryNode:
    """Apply a field to every bare term of a group, e.g. ``abs:("A" OR "B")``."""
    if isinstance(node, QueryTerm):
        if node.field != "all":
            raise MalformedQuery(
                f"field {node.field!r} nested inside a {fld!r} group"
            )
        return QueryTerm(fld, node.phrase)
    return QueryOp(node.op, _distribute_field(node.left, fld), _distribute_field(node.right, fld))


def parse_arxiv_query(text: str) -> QueryNode:
    """Parse a query string into an AST, raising :class:`MalformedQuery`.

    ``AND`` and ``ANDNOT`` bind tighter than ``OR``; operators of equal
    precedence associate left.  A bare phrase with no field prefix is an
    ``all:`` term.  A field prefix may distribute over a parenthesized
    group of bare phrases: ``abs:("A" OR "B")`` equals
    ``(abs:"A" OR abs:"B")``.
    """
    if not text or not text.strip():
        raise MalformedQuery("query is empty")
    parser = _Parser(_tokenize_query(text))
    node = parser.parse_or()
    if parser.peek() is not None:
        raise MalformedQuery(f"trailing tokens after position {parser.pos}")
    return node


def serialize_query(node: QueryNode) -> str:
    """Serialize an AST to canonical form.

    Canonical form quotes every phrase, spells every field explicitly, and
    parenthesizes every boolean combination, so parsing it back always
    reproduces the same AST.
    """
    if isinstance(node, QueryTerm):
        return f'{node.field}:"{node.phrase}"'
    return f"({serialize_query(node.left)} {node.op} {serialize_query(node.right)})"


# --------------------------------------------------------------------------
# Paper records
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PaperRecord:
    """One retrieved paper with both raw and cleaned abstract text."""

    arxiv_id: str
    title: str
    abstract_raw: str
    abstract_clean: str
    authors: tuple[str, ...]
    published: str
    primary_category: str
    url: str

    def __post_init__(self) -> None:
        if not self.arxiv_id:
            raise ValueError("arxiv_id must be non-empty")

    def to_dict(self) -> dict:
        return {
            "arxiv_id": self.arxiv_id,
            "title": self.title,
            "abstract_raw": self.abstract_raw,
            "abstract_clean": self.abstract_clean,
            "authors": list(self.authors),
            "published": self.published,
            "primary_category": self.primary_category,
            "url": self.url,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PaperRecord":
        return cls(
            arxiv_id=data["arxiv_id"],
            title=data["title"],
            abstract_raw=data["abstract_raw"],
            abstract_clean=data["abstract_clean"],
            authors=tuple(data["authors"]),
            published=data["published"],
            primary_category=data["primary_category"],
            url=data["url"],
        )


@dataclass(frozen=True)
class ScoredPaper:
    """A paper with its cosine similarity to the expanded topic."""

    paper: PaperRecord
    similarity: float


@dataclass
class Corpus:
    """Everything the screening stage produced for one run."""

    raw_topic: str
    expanded_topic: str
    query_string: str
    retrieved: list[PaperRecord]
    selected: list[ScoredPaper]

    @property
    def retrieved_count(self) -> int:
        return len(self.retrieved)

    @property
    def selected_count(self) -> int:
        return len(self.selected)

    def selected_papers(self) -> list[PaperRecord]:
        return [scored.paper for scored in self.selected]

    def to_dict(self) -> dict:
        return {
            "raw_topic": self.raw_topic,
            "expanded_topic": self.expanded_topic,
            "query_string": self.query_string,
            "retrieved_count": self.retrieved_count,
            "selected": [
                {"arxiv_id": s.paper.arxiv_id, "similarity": s.similarity}
                for s in self.selected
            ],
        }


# --------------------------------------------------------------------------
# Transports and feed parsing
# --------------------------------------------------------------------------

class Transport(Protocol):
    """Anything that can serve one page of Atom feed bytes for a query."""

    def fetch_page(self, query: str, start: int, max_results: int) -> bytes:
        ...


class HttpTransport:
    """Live HTTP transport for the arXiv API.

    Waits ``delay_s`` between consecutive requests (API etiquette) and
    maps every transport-level failure to :class:`NetworkError`.
    """

    def __init__(
        self,
        base_url: str = ARXIV_API_URL,
        timeout_s: float = 30.0,
        delay_s: float = 3.0,
        session=None,
    ):
        self.base_url = base_url
        self.timeout_s = timeout_s
        self.delay_s = delay_s
        if session is None:
            import requests

            session = requests.Session()
        self._session = session
        self._last_request_at: float | None = None

    def fetch_page(self, query: str, start: int, max_results: int) -> bytes:
        import requests

        if self._last_request_at is not None and self.delay_s > 0:
            elapsed = time.monotonic() - self._last_request_at
            if elapsed < self.delay_s:
                time.sleep(self.delay_s - elapsed)
        params = {
            "search_query": query,
            "start": str(start),
            "max_results": str(max_results),
        }
        headers = {"User-Agent": "slrpipe/0.1 (automated literature review pipeline)"}
        try:
            response = self._session.get(
                self.base_url, params=params, headers=headers, timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise NetworkError(f"feed request failed: {exc}") from exc
        finally:
            self._last_request_at = time.monotonic()
        if response.status_code != 200:
            raise NetworkError(f"feed request returned HTTP {response.status_code}")
        return response.content


#: Names accepted by ``bundled:<name>`` feed references.
BUNDLED_FEEDS: tuple[str, ...] = (
    "xai",
    "vr",
    "blockchain",
    "llm",
    "nmt",
    "pagination_250",
    "small_5",
)


def bundled_feed_bytes(name: str) -> bytes:
    """Return the raw bytes of a bundled fixture feed by short name."""
    from importlib import resources

    if name not in BUNDLED_FEEDS:
        raise ValueError(
            f"unknown bundled feed {name!r}; expected one of {', '.join(BUNDLED_FEEDS)}"
        )
    path = resources.files("slrpipe") / "_assets" / "fixtures" / f"{name}.atom.xml"
    return path.read_bytes()


class FixtureTransport:
    """Replay transport backed by a single Atom feed document.

    The fixture holds the full result set; each ``fetch_page`` call
    returns a rebuilt feed containing the requested slice of entries.
    Requests are counted so tests can assert pagination behavior.

    The fixture must keep every ``<entry>`` element on contiguous lines
    (the slicer works on the raw text between ``<entry`` and ``</entry>``
    markers), which all bundled fixtures do.
    """

    def __init__(self, feed: bytes | str | Path):
        if isinstance(feed, Path):
            text = feed.read_text(encoding="utf-8")
        elif isinstance(feed, bytes):
            text = feed.decode("utf-8")
        else:
            text = feed
        first = text.find("<entry")
        if first < 0:
            self._header = text.replace("</feed>", "")
            self._entries: list[str] = []
        else:
            tail = text[first:]
            self._header = text[:first]
            self._entries = []
            pos = 0
            while True:
                start = tail.find("<entry", pos)
                if start < 0:
                    break
                end = tail.find("</entry>", start)
                if end < 0:
                    raise FeedParseError("fixture has an unterminated <entry> element")
                self._entries.append(tail[start : end + len("</entry>")])
                pos = end + len("</entry>")
        self.request_count = 0
        self.requests: list[tuple[int, int]] = []

    @property
    def entry_count(self) -> int:
        return len(self._entries)

    def fetch_page(self, query: str, start: int, max_results: int) -> bytes:
        self.request_count += 1
        self.requests.append((start, max_results))
        page = self._entries[start : start + max_results]
        text = self._header + "\n".join(page) + "\n</feed>"
        return text.encode("utf-8")


def _entry_to_record(entry: ET.Element) -> PaperRecord:
    def _text(tag: str) -> str:
        node = entry.find(f"{{{_ATOM_NS}}}{tag}")
        return node.text if node is not None and node.text else ""

    id_url = _text("id").strip()
    arxiv_id = id_url.rsplit("/abs/", 1)[-1].strip() if id_url else ""
    if not arxiv_id:
        raise FeedParseError("feed entry has no id")
    title = clean_text(_text("title"))
    abstract_raw = _text("summary").strip()
    authors = tuple(
        name.text.strip()
        for name in entry.findall(f"{{{_ATOM_NS}}}author/{{{_ATOM_NS}}}name")
        if name.text and name.text.strip()
    )
    published = _text("published").strip()
    primary = entry.find(f"{{{_ARXIV_NS}}}primary_category")
    if primary is not None and primary.get("term"):
        category = primary.get("term", "")
    else:
        first_cat = entry.find(f"{{{_ATOM_NS}}}category")
        category = first_cat.get("term", "") if first_cat is not None else ""
    url = id_url
    return PaperRecord(
        arxiv_id=arxiv_id,
        title=title,
        abstract_raw=abstract_raw,
        abstract_clean=clean_text(abstract_raw),
        authors=authors,
        published=published,
        primary_category=category,
        url=url,
    )


def parse_feed(payload: bytes) -> tuple[list[PaperRecord], int | None]:
    """Parse one Atom feed page into records plus the advertised total."""
    try:
        root = ET.fromstring(payload)
    except ET.ParseError as exc:
        raise FeedParseError(f"feed is not valid XML: {exc}") from exc
    if root.tag != f"{{{_ATOM_NS}}}feed":
        raise FeedParseError(f"unexpected feed root element: {root.tag}")
    total: int | None = None
    total_node = root.find(f"{{{_OPENSEARCH_NS}}}totalResults")
    if total_node is not None and total_node.text:
        try:
            total = int(total_node.text.strip())
        except ValueError:
            total = None
    records = [_entry_to_record(entry) for entry in root.findall(f"{{{_ATOM_NS}}}entry")]
    return records, total


def fetch_papers(
    query: str,
    transport: Transport,
    max_results: int = 3000,
    page_size: int = 100,
) -> list[PaperRecord]:
    """Fetch up to ``max_results`` unique papers for a validated query.

    Pages through the transport ``page_size`` entries at a time, requesting
    only as many entries as are still needed, de-duplicating by arxiv id
    (first occurrence wins), and stopping early when a page comes back
    short (the feed is exhausted).  An empty first page emits
    :class:`EmptyResultWarning` and returns ``[]``.
    """
    parse_arxiv_query(query)
    if max_results <= 0:
        raise ValueError("max_results must be positive")
    if page_size <= 0:
        raise ValueError("page_size must be positive")
    records: list[PaperRecord] = []
    seen: set[str] = set()
    start = 0
    while len(records) < max_results:
        want = min(page_size, max_results - len(records))
        payload = transport.fetch_page(query, start, want)
        entries, _total = parse_feed(payload)
        if start == 0 and not entries:
            warnings.warn(
                f"search returned no papers for query: {query}", EmptyResultWarning,
                stacklevel=2,
            )
            return []
        for record in entries:
            if record.arxiv_id not in seen:
                seen.add(record.arxiv_id)
                records.append(record)
                if len(records) >= max_results:
                    break
        if len(entries) < want:
            break
        start += len(entries)
    return records


# --------------------------------------------------------------------------
# Embeddings
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EmbeddingVector:
    """A fixed-dimension float vector tagged with its provider's model id."""

    values: np.ndarray
    dim: int
    model_id: str

    def __post_init__(self) -> None:
        array = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", array)
        if array.ndim != 1:
            raise ValueError("embedding values must be one-dimensional")
        if array.shape[0] != self.dim:
            raise ValueError(f"embedding has {array.shape[0]} values but dim={self.dim}")
        if not np.all(np.isfinite(array)):
            raise ValueError("embedding contains non-finite values")


class HashingEmbedder:
    """Deterministic hashed bag-of-words embedder (no model downloads).

    Each token is hashed (sha256, first 8 bytes, big-endian) into one of
    256 buckets; the bucket-count vector is L2-normalized.  Texts with no
    tokens embed to the zero vector.
    """

    model_id = "hash-bag-256"
    dim = 256

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        out: list[EmbeddingVector] = []
        for text in texts:
            vec = np.zeros(self.dim, dtype=np.float64)
            for token in tokenize(text):
                digest = hashlib.sha256(token.encode("utf-8")).digest()
                bucket = int.from_bytes(digest[:8], "big") % self.dim
                vec[bucket] += 1.0
            norm = float(np.linalg.norm(vec))
            if norm > 0.0:
                vec /= norm
            out.append(EmbeddingVector(vec, self.dim, self.model_id))
        return out


class SentenceModelEmbedder:
    """Optional neural sentence embedder behind a lazy import.

    Importing or constructing the underlying model happens on first use;
    if the ``sentence_transformers`` package is absent this raises
    :class:`ProviderUnavailable` with an install hint.
    """

    def __init__(self, model_name: str = "all-MiniLM-L6-v2"):
        self.model_name = model_name
        self.model_id = f"sentence:{model_name}"
        self._model = None
        self.dim: int | None = None

    def _load(self):
        if self._model is None:
            try:
                from sentence_transformers import SentenceTransformer
            except ImportError as exc:
                raise ProviderUnavailable(
                    "sentence embeddings require the optional 'sentence-transformers'"
                    " package; install it or use the default hashed provider"
                ) from exc
            self._model = SentenceTransformer(self.model_name)
        return self._model

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        model = self._load()
        matrix = np.asarray(model.encode(list(texts)), dtype=np.float64)
        if matrix.ndim == 1:
            matrix = matrix.reshape(1, -1)
        self.dim = int(matrix.shape[1])
        return [EmbeddingVector(row, self.dim, self.model_id) for row in matrix]


def get_embedding_provider(name: str = "hash"):
    """Build an embedding provider from a spec string.

    ``"hash"`` gives the deterministic offline provider; ``"sentence"``
    or ``"sentence:<model-name>"`` gives the optional neural provider.
    """
    if name == "hash":
        return HashingEmbedder()
    if name == "sentence":
        return SentenceModelEmbedder()
    if name.startswith("sentence:"):
        return SentenceModelEmbedder(name.split(":", 1)[1])
    raise ValueError(f"unknown embedding provider: {name!r}")


def embed_texts(texts: Sequence[str], provider) -> list[EmbeddingVector]:
    """Embed a batch of texts, enforcing a single dimensionality."""
    if not isinstance(texts, (list, tuple)):
        texts = list(texts)
    if not texts:
        return []
    vectors = provider.embed(texts)
    dims = {v.dim for v in vectors}
    if len(dims) != 1:
        raise EmbeddingDimMismatch(f"provider returned mixed dimensions: {sorted(dims)}")
    return vectors


def embedding_input(record: PaperRecord) -> str:
    """Text embedded for a paper: title plus cleaned abstract, capped."""
    combined = f"{record.title}. {record.abstract_clean}" if record.title else record.abstract_clean
    return truncate_whitespace_tokens(combined, EMBEDDING_INPUT_TOKEN_LIMIT)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity of two embeddings, clamped to ``[-1, 1]``."""
    if a.dim != b.dim:
        raise DimMismatch(f"cannot compare embeddings of dim {a.dim} and {b.dim}")
    norm_a = float(np.linalg.norm(a.values))
    norm_b = float(np.linalg.norm(b.values))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    value = float(np.dot(a.values, b.values) / (norm_a * norm_b))
    return max(-1.0, min(1.0, value))


def filter_top_k(
    topic: EmbeddingVector,
    papers: Sequence[PaperRecord],
    vectors: Sequence[EmbeddingVector],
    k: int,
) -> list[ScoredPaper]:
    """Keep the ``k`` papers most similar to the topic embedding.

    Results are sorted by descending similarity with ties broken by
    ascending arxiv id, so the selection is a deterministic function of
    its inputs.  Papers whose embedding is the zero vector (no tokens)
    are scored 0.0 rather than raising, so one empty abstract cannot
    abort a screening pass.  ``k`` larger than the corpus keeps everything.
    """
    if k <= 0:
        raise InvalidK(f"k must be positive, got {k}")
    if len(papers) != len(vectors):
        raise ValueError("papers and vectors must align one-to-one")
    scored: list[ScoredPaper] = []
    for paper, vector in zip(papers, vectors):
        if float(np.linalg.norm(vector.values)) == 0.0:
            similarity = 0.0
        else:
            similarity = cosine_similarity(topic, vector)
        scored.append(ScoredPaper(paper=paper, similarity=similarity))
    scored.sort(key=lambda s: (-s.similarity, s.paper.arxiv_id))
    return scored[:k]
