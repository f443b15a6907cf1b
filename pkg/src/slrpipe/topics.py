"""Topic modeling: clustering, topic-count tuning, keywords, and titles.

Documents are clustered on their embeddings (PCA projection followed by
density clustering with a minimum cluster size), the cluster count is
tuned into a target band by adjusting that minimum size, cluster keywords
come from class-based TF-IDF, and short section titles are generated for
each cluster through the LLM gateway.

Cluster ids are relabeled to first-occurrence order over the corpus, so
topic 0 always contains the best-screened document of any cluster; label
``-1`` marks outlier documents that belong to no topic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateClusteringWarning,
    EmptyCluster,
    FallbackTextWarning,
    InvalidPartition,
    OutOfBandWarning,
    TooFewDocuments,
    TuningFailed,
)
from .gateway import TOPIC_TITLE, LlmGateway
from .search import EmbeddingVector
from .textutil import tokenize

__all__ = [
    "TopicModelParams",
    "TopicCluster",
    "TopicReport",
    "load_stopwords",
    "cluster_documents",
    "tune_topic_count",
    "extract_keywords",
    "build_clusters",
    "title_topics",
    "build_topic_report",
    "TITLE_WORD_LIMIT",
]

#: Hard cap on words in a generated topic title.
TITLE_WORD_LIMIT = 12


@dataclass(frozen=True)
class TopicModelParams:
    """Knobs for clustering and tuning.

    ``target_topic_min``/``target_topic_max`` bound the acceptable number
    of topics; ``min_topic_size`` is the smallest allowed cluster (the
    value tuning adjusts); ``max_tuning_iterations`` caps tuning attempts;
    ``keyword_count`` is the number of keywords kept per topic.
    """

    target_topic_min: int = 4
    target_topic_max: int = 10
    min_topic_size: int = 5
    max_tuning_iterations: int = 8
    keyword_count: int = 10

    def __post_init__(self) -> None:
        if not 1 <= self.target_topic_min <= self.target_topic_max:
            raise ValueError(
                "target band must satisfy 1 <= target_topic_min <= target_topic_max"
            )
        if self.min_topic_size < 2:
            raise ValueError("min_topic_size must be >= 2")
        if self.max_tuning_iterations < 1:
            raise ValueError("max_tuning_iterations must be >= 1")
        if self.keyword_count < 1:
            raise ValueError("keyword_count must be >= 1")

    def to_dict(self) -> dict:
        return {
            "target_topic_min": self.target_topic_min,
            "target_topic_max": self.target_topic_max,
            "min_topic_size": self.min_topic_size,
            "max_tuning_iterations": self.max_tuning_iterations,
            "keyword_count": self.keyword_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TopicModelParams":
        return cls(**data)


@dataclass(frozen=True)
class TopicCluster:
    """One topic: its id, member document ids, keywords, and title."""

    topic_id: int
    member_ids: tuple[str, ...]
    keywords: tuple[tuple[str, float], ...] = ()
    title: str = ""

    def __post_init__(self) -> None:
        if self.topic_id < 0:
            raise ValueError("topic_id must be >= 0")
        if not self.member_ids:
            raise EmptyCluster(f"topic {self.topic_id} has no member documents")


@dataclass
class TopicReport:
    """The full output of the topic-modeling stage."""

    clusters: list[TopicCluster]
    outlier_ids: tuple[str, ...]
    params_used: TopicModelParams
    iterations_used: int
    coherence: float | None = None

    @property
    def topic_count(self) -> int:
        return len(self.clusters)

    def to_dict(self) -> dict:
        return {
            "topic_count": self.topic_count,
            "iterations_used": self.iterations_used,
            "params_used": self.params_used.to_dict(),
            "coherence": self.coherence,
            "outlier_ids": list(self.outlier_ids),
            "topics": [
                {
                    "topic_id": c.topic_id,
                    "title": c.title,
                    "keywords": [[term, weight] for term, weight in c.keywords],
                    "member_ids": list(c.member_ids),
                }
                for c in self.clusters
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TopicReport":
        clusters = [
            TopicCluster(
                topic_id=t["topic_id"],
                member_ids=tuple(t["member_ids"]),
                keywords=tuple((term, float(weight)) for term, weight in t["keywords"]),
                title=t["title"],
            )
            for t in data["topics"]
        ]
        return cls(
            clusters=clusters,
            outlier_ids=tuple(data["outlier_ids"]),
            params_used=TopicModelParams.from_dict(data["params_used"]),
            iterations_used=data["iterations_used"],
            coherence=data["coherence"],
        )


def load_stopwords() -> frozenset[str]:
    """Load the bundled stopword list used for keyword extraction."""
    text = (resources.files("slrpipe") / "_assets" / "stopwords.txt").read_text("utf-8")
    return frozenset(w for w in text.split() if w)


def _as_matrix(vectors: Sequence[EmbeddingVector] | np.ndarray) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        matrix = np.asarray(vectors, dtype=np.float64)
        if matrix.ndim != 2:
            raise ValueError("vector matrix must be two-dimensional")
        return matrix
    return np.vstack([v.values for v in vectors]).astype(np.float64)


def _relabel_first_occurrence(labels: np.ndarray) -> np.ndarray:
    """Renumber cluster labels to 0..k-1 in order of first appearance."""
    mapping: dict[int, int] = {}
    out = np.full_like(labels, -1)
    next_id = 0
    for i, label in enumerate(labels):
        if label == -1:
            continue
        if label not in mapping:
            mapping[label] = next_id
            next_id += 1
        out[i] = mapping[label]
    return out


def cluster_documents(
    vectors: Sequence[EmbeddingVector] | np.ndarray,
    min_topic_size: int = 5,
    seed: int = 0,
) -> np.ndarray:
    """Cluster document embeddings; returns one label per document.

    The embeddings are reduced with PCA (full SVD, at most five
    components) and clustered by density with ``min_topic_size`` as the
    minimum cluster size.  Outliers get label ``-1``.  Fewer than
    ``2 * min_topic_size`` documents raise :class:`TooFewDocuments`.
    An all-identical corpus cannot be clustered meaningfully: it returns
    a single cluster and emits :class:`DegenerateClusteringWarning`.
    """
    if min_topic_size < 2:
        raise ValueError("min_topic_size must be >= 2")
    matrix = _as_matrix(vectors)
    n_samples, n_features = matrix.shape
    if n_samples < 2 * min_topic_size:
        raise TooFewDocuments(
            f"need at least {2 * min_topic_size} documents to cluster, got {n_samples}"
        )
    if np.allclose(matrix, matrix[0]):
        warnings.warn(
            "all document embeddings are identical; returning a single cluster",
            DegenerateClusteringWarning,
            stacklevel=2,
        )
        return np.zeros(n_samples, dtype=int)

    from sklearn.cluster import HDBSCAN
    from sklearn.decomposition import PCA

    n_components = min(5, n_samples, n_features)
    reduced = PCA(
        n_components=n_components, svd_solver="full", random_state=seed
    ).fit_transform(matrix)
    labels = HDBSCAN(min_cluster_size=min_topic_size).fit_predict(reduced)
    return _relabel_first_occurrence(np.asarray(labels, dtype=int))


def _cluster_count(labels: np.ndarray) -> int:
    return int(len(set(labels.tolist()) - {-1}))


def _band_distance(count: int, low: int, high: int) -> int:
    if count < low:
        return low - count
    if count > high:
        return count - high
    return 0


def tune_topic_count(
    vectors: Sequence[EmbeddingVector] | np.ndarray,
    params: TopicModelParams = TopicModelParams(),
    seed: int = 0,
) -> tuple[np.ndarray, TopicModelParams, int]:
    """Adjust ``min_topic_size`` until the topic count lands in the band.

    Starts from ``max(5, n // 40)`` (clamped to ``[2, n // 2]``), then
    multiplies or divides by 1.5 per attempt: too many topics raise the
    minimum size, too few lower it, with a one-step nudge when rounding
    stalls.  Stops as soon as the count is inside
    ``[target_topic_min, target_topic_max]``.

    If the band is never reached within ``max_tuning_iterations``
    attempts, the best attempt with at least two topics wins (closest to
    the band, then fewer topics, then earlier attempt) and
    :class:`OutOfBandWarning` is emitted.  If no attempt produced two or
    more topics, :class:`TuningFailed` is raised.

    Returns ``(labels, params_with_final_min_topic_size, iterations_used)``.
    """
    matrix = _as_matrix(vectors)
    n = matrix.shape[0]
    low, high = params.target_topic_min, params.target_topic_max

    def _clamp(size: int) -> int:
        return max(2, min(size, max(2, n // 2)))

    mts = _clamp(max(5, n // 40))
    attempts: list[tuple[int, int, int, np.ndarray]] = []  # (iteration, mts, count, labels)
    for iteration in range(1, params.max_tuning_iterations + 1):
        labels = cluster_documents(matrix, min_topic_size=mts, seed=seed)
        count = _cluster_count(labels)
        attempts.append((iteration, mts, count, labels))
        if low <= count <= high:
            return labels, replace(params, min_topic_size=mts), iteration
        if count > high:
            nxt = round(mts * 1.5)
            if nxt == mts:
                nxt += 1
        else:
            nxt = round(mts / 1.5)
            if nxt == mts:
                nxt -= 1
        nxt = _clamp(nxt)
        if nxt == mts:
            # stalled against a bound; nudge one step if the bound allows
            nudged = _clamp(mts + (1 if count > high else -1))
            if nudged == mts:
                break
            nxt = nudged
        mts = nxt

    viable = [a for a in attempts if a[2] >= 2]
    if not viable:
        raise TuningFailed(
            f"no tuning attempt produced at least two topics in {len(attempts)} attempts"
        )
    iteration, mts, count, labels = min(
        viable, key=lambda a: (_band_distance(a[2], low, high), a[2], a[0])
    )
    warnings.warn(
        f"topic count {count} is outside the target band [{low}, {high}] "
        f"after {len(attempts)} attempts",
        OutOfBandWarning,
        stacklevel=2,
    )
    return labels, replace(params, min_topic_size=mts), len(attempts)


def extract_keywords(
    labels: Sequence[int] | np.ndarray,
    texts: Sequence[str],
    keyword_count: int = 10,
    stopwords: frozenset[str] | None = None,
) -> dict[int, list[tuple[str, float]]]:
    """Class-based TF-IDF keywords for each cluster.

    A term's weight in cluster ``c`` is its raw frequency in ``c`` times
    ``ln(C / cf)``, where ``C`` is the number of clusters (outliers
    excluded) and ``cf`` is the number of clusters containing the term.
    A term present in every cluster therefore weighs zero everywhere.
    Stopwords are dropped before counting.  Keywords are ranked by
    descending weight, ties broken lexicographically.
    """
    if len(labels) != len(texts):
        raise ValueError("labels and texts must align one-to-one")
    if keyword_count < 1:
        raise ValueError("keyword_count must be >= 1")
    if stopwords is None:
        stopwords = load_stopwords()

    term_freq: dict[int, dict[str, int]] = {}
    for label, text in zip(labels, texts):
        label = int(label)
        if label == -1:
            continue
        counts = term_freq.setdefault(label, {})
        for token in tokenize(text):
            if token not in stopwords:
                counts[token] = counts.get(token, 0) + 1

    num_clusters = len(term_freq)
    if num_clusters == 0:
        return {}
    cluster_freq: dict[str, int] = {}
    for counts in term_freq.values():
        for term in counts:
            cluster_freq[term] = cluster_freq.get(term, 0) + 1

    out: dict[int, list[tuple[str, float]]] = {}
    for label in sorted(term_freq):
        counts = term_freq[label]
        weighted = [
            (term, tf * math.log(num_clusters / cluster_freq[term]))
            for term, tf in counts.items()
        ]
        weighted.sort(key=lambda item: (-item[1], item[0]))
        out[label] = weighted[:keyword_count]
    return out


def build_clusters(
    labels: Sequence[int] | np.ndarray,
    doc_ids: Sequence[str],
    keywords: Mapping[int, list[tuple[str, float]]] | None = None,
) -> tuple[list[TopicCluster], tuple[str, ...]]:
    """Group document ids by label into clusters plus an outlier list.

    Member ids keep corpus order (screening rank order).
    """
    if len(labels) != len(doc_ids):
        raise ValueError("labels and doc_ids must align one-to-one")
    members: dict[int, list[str]] = {}
    outliers: list[str] = []
    for label, doc_id in zip(labels, doc_ids):
        label = int(label)
        if label == -1:
            outliers.append(doc_id)
        else:
            members.setdefault(label, []).append(doc_id)
    clusters = [
        TopicCluster(
            topic_id=label,
            member_ids=tuple(members[label]),
            keywords=tuple((keywords or {}).get(label, ())),
        )
        for label in sorted(members)
    ]
    return clusters, tuple(outliers)


def title_topics(
    clusters: Sequence[TopicCluster],
    gateway: LlmGateway,
    word_limit: int = TITLE_WORD_LIMIT,
) -> list[TopicCluster]:
    """Generate a short title for each cluster from its keywords.

    A title longer than ``word_limit`` words triggers one corrective
    retry; if the retry is still too long the title is truncated to the
    limit and :class:`FallbackTextWarning` is emitted.
    """
    titled: list[TopicCluster] = []
    for cluster in clusters:
        keyword_text = ", ".join(term for term, _ in cluster.keywords)
        title = _request_title(gateway, keyword_text, "")
        if len(title.split()) > word_limit:
            suffix = (
                f"\n\nThe previous topic name had {len(title.split())} words;"
                f" provide a topic name of at most {word_limit} words."
            )
            title = _request_title(gateway, keyword_text, suffix)
            if len(title.split()) > word_limit:
                title = " ".join(title.split()[:word_limit])
                warnings.warn(
                    f"topic {cluster.topic_id} title was truncated to "
                    f"{word_limit} words",
                    FallbackTextWarning,
                    stacklevel=2,
                )
        titled.append(replace(cluster, title=title))
    return titled


def _request_title(gateway: LlmGateway, keyword_text: str, suffix: str) -> str:
    result = gateway.complete(
        TOPIC_TITLE, {"topic_keywords": keyword_text}, user_suffix=suffix
    )
    title = " ".join(result.text.split())
    return title.strip('"').strip()


def build_topic_report(
    clusters: Sequence[TopicCluster],
    outlier_ids: Sequence[str],
    params_used: TopicModelParams,
    iterations_used: int,
    corpus_ids: Sequence[str],
    coherence: float | None = None,
) -> TopicReport:
    """Assemble and validate the topic report.

    Cluster members plus outliers must exactly partition ``corpus_ids``
    (no overlap, nothing missing, nothing extra) and cluster ids must be
    contiguous from zero; any violation raises :class:`InvalidPartition`.
    """
    clusters = sorted(clusters, key=lambda c: c.topic_id)
    expected_ids = list(range(len(clusters)))
    actual_ids = [c.topic_id for c in clusters]
    if actual_ids != expected_ids:
        raise InvalidPartition(f"cluster ids {actual_ids} are not contiguous from zero")

    seen: set[str] = set()
    for cluster in clusters:
        for doc_id in cluster.member_ids:
            if doc_id in seen:
                raise InvalidPartition(f"document {doc_id!r} appears in two clusters")
            seen.add(doc_id)
    for doc_id in outlier_ids:
        if doc_id in seen:
            raise InvalidPartition(f"document {doc_id!r} is both member and outlier")
        seen.add(doc_id)
    corpus_set = set(corpus_ids)
    if seen != corpus_set:
        missing = sorted(corpus_set - seen)
        extra = sorted(seen - corpus_set)
        raise InvalidPartition(
            f"topic report does not partition the corpus "
            f"(missing={missing[:5]}, extra={extra[:5]})"
        )
    return TopicReport(
        clusters=list(clusters),
        outlier_ids=tuple(outlier_ids),
        params_used=params_used,
        iterations_used=iterations_used,
        coherence=coherence,
    )
