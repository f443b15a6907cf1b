"""Evaluation suite: ROUGE-1, readability, coherence, similarity, sweeps.

Everything here is exact and deterministic:

* **ROUGE-1** uses multiset unigram overlap over the shared tokenizer;
* **readability** implements the classic reading-ease formula with a
  frozen syllable heuristic and an eight-band interpretation table;
* **topic coherence** scores each topic's keywords by normalized PMI
  over boolean sliding-window co-occurrence (window 110, step 1) with
  one-set segmentation, averaged and clamped to ``[0, 1]``;
* **stage similarity** embeds each pipeline stage's text and reports its
  cosine to the topic embedding, alongside a random-document baseline
  drawn from a bundled lexicon;
* **document-limit sweeps** re-screen one shared retrieved corpus at
  increasing document limits and write a CSV plus a six-panel figure.
"""

from __future__ import annotations

import csv
import math
import random
import re
import time
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .errors import (
    DegenerateCounts,
    DegenerateCountsWarning,
    InvalidLimit,
    MissingStage,
    NoWords,
    SlrPipeError,
    SweepPointWarning,
)
from .search import HashingEmbedder, cosine_similarity, embed_texts
from .textutil import count_sentence_runs, tokenize

__all__ = [
    "RougeScore",
    "rouge1",
    "f1_from_precision_recall",
    "syllable_count",
    "ReadabilityStats",
    "fres",
    "interpret_fres",
    "FRES_BANDS",
    "coherence_cv",
    "COHERENCE_WINDOW_SIZE",
    "load_lexicon",
    "random_baseline_document",
    "StageSimilarityReport",
    "stage_similarity_report",
    "SweepPoint",
    "run_limit_sweep",
    "render_sweep_figure",
    "render_stage_figure",
    "tokenize",
]

COHERENCE_WINDOW_SIZE = 110

#: Default word count for the random-baseline document.
RANDOM_BASELINE_WORDS = 120


# --------------------------------------------------------------------------
# ROUGE-1
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RougeScore:
    """Unigram precision/recall/F1 plus the raw counts behind them."""

    precision: float
    recall: float
    f1: float
    overlap_count: int
    candidate_len: int
    reference_len: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "overlap_count": self.overlap_count,
            "candidate_len": self.candidate_len,
            "reference_len": self.reference_len,
        }


def f1_from_precision_recall(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0.0 when both are zero."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge1(candidate: str, reference: str) -> RougeScore:
    """ROUGE-1 with multiset (clipped-count) unigram overlap.

    Overlap counts each shared token at most ``min(candidate count,
    reference count)`` times.  An empty side yields zero for its ratio
    rather than dividing by zero.
    """
    cand_tokens = tokenize(candidate)
    ref_tokens = tokenize(reference)
    cand_counts: dict[str, int] = {}
    for token in cand_tokens:
        cand_counts[token] = cand_counts.get(token, 0) + 1
    ref_counts: dict[str, int] = {}
    for token in ref_tokens:
        ref_counts[token] = ref_counts.get(token, 0) + 1
    overlap = sum(
        min(count, ref_counts[token])
        for token, count in cand_counts.items()
        if token in ref_counts
    )
    precision = overlap / len(cand_tokens) if cand_tokens else 0.0
    recall = overlap / len(ref_tokens) if ref_tokens else 0.0
    return RougeScore(
        precision=precision,
        recall=recall,
        f1=f1_from_precision_recall(precision, recall),
        overlap_count=overlap,
        candidate_len=len(cand_tokens),
        reference_len=len(ref_tokens),
    )


# --------------------------------------------------------------------------
# Readability
# --------------------------------------------------------------------------

_VOWEL_RUN_RE = re.compile(r"[aeiouy]+")

#: Interpretation bands: (inclusive lower score bound, school level, notes).
#: Reading-ease interpretation table: ``(lower_bound, band)`` rows in
#: descending score order.  Each band string combines the US school level
#: with the difficulty note, e.g. ``"5th grade / Very easy to read"``.
#: Bands are half-open ``[lower, upper)`` intervals except the top band,
#: which includes 100; out-of-range scores take the nearest boundary band.
FRES_BANDS: tuple[tuple[float, str], ...] = (
    (90.0, "5th grade / Very easy to read"),
    (80.0, "6th grade / Easy to read"),
    (70.0, "7th grade / Fairly easy to read"),
    (60.0, "8th & 9th grade / Plain English"),
    (50.0, "10th to 12th grade / Fairly difficult to read"),
    (30.0, "College / Difficult to read"),
    (10.0, "College graduate / Very difficult to read"),
    (float("-inf"), "Professional / Extremely difficult to read"),
)


def syllable_count(word: str) -> int:
    """Heuristic syllable count for one word.

    Counts maximal vowel runs (``aeiouy``) over the word's letters, then
    subtracts one for a silent final ``e``: a trailing ``e`` preceded by
    a consonant is silent unless it ends a consonant-``le`` cluster
    (``table``).  Words never count less than one syllable.
    """
    letters = "".join(ch for ch in word.lower() if ch.isalpha())
    if not letters:
        return 0
    count = len(_VOWEL_RUN_RE.findall(letters))
    if count == 0:
        return 1
    if len(letters) >= 2 and letters.endswith("e") and letters[-2] not in "aeiouy":
        is_consonant_le = (
            len(letters) >= 3
            and letters.endswith("le")
            and letters[-3] not in "aeiouy"
        )
        if not is_consonant_le:
            count -= 1
    return max(1, count)


@dataclass(frozen=True)
class ReadabilityStats:
    """Word/sentence/syllable counts plus the combined score and band."""

    total_words: int
    total_sentences: int
    total_syllables: int
    fres: float
    band: str

    def to_dict(self) -> dict:
        return {
            "total_words": self.total_words,
            "total_sentences": self.total_sentences,
            "total_syllables": self.total_syllables,
            "fres": self.fres,
            "band": self.band,
        }


def interpret_fres(score: float) -> str:
    """Map a reading-ease score to its school-level band.

    Banding is total over the reals: scores at or above 90 (including
    scores above 100) take the top band, and scores below 10 (including
    negative scores) take the bottom band.
    """
    for lower_bound, band in FRES_BANDS:
        if score >= lower_bound:
            return band
    return FRES_BANDS[-1][1]


def fres(text: str) -> ReadabilityStats:
    """Flesch Reading Ease of ``text``.

    Words are whitespace tokens containing at least one letter; sentences
    are maximal ``[.!?]`` runs with a floor of one; syllables come from
    :func:`syllable_count`.  Text with no words raises :class:`NoWords`.
    """
    words = [token for token in text.split() if any(ch.isalpha() for ch in token)]
    if not words:
        raise NoWords("readability is undefined for text without words")
    sentences = count_sentence_runs(text)
    syllables = sum(syllable_count(word) for word in words)
    score = 206.835 - 1.015 * (len(words) / sentences) - 84.6 * (syllables / len(words))
    return ReadabilityStats(
        total_words=len(words),
        total_sentences=sentences,
        total_syllables=syllables,
        fres=score,
        band=interpret_fres(score),
    )


# --------------------------------------------------------------------------
# Topic coherence
# --------------------------------------------------------------------------

def _window_occurrence_bits(
    texts: Sequence[str], vocabulary: frozenset[str], window_size: int
) -> tuple[dict[str, int], int]:
    """For each vocabulary term, a bitmask of the sliding windows containing it.

    Windows of ``window_size`` tokens advance one token at a time within
    each text; a text shorter than the window contributes one window.
    Counts are maintained incrementally (add the entering token, drop the
    leaving one), so the cost is linear in total tokens.
    """
    bits: dict[str, int] = {term: 0 for term in vocabulary}
    window_index = 0
    for text in texts:
        tokens = tokenize(text)
        if not tokens:
            # an empty text still contributes one (empty) window
            window_index += 1
            continue
        if len(tokens) <= window_size:
            present = set(tokens) & vocabulary
            for term in present:
                bits[term] |= 1 << window_index
            window_index += 1
            continue
        counts: dict[str, int] = {}
        for token in tokens[:window_size]:
            if token in vocabulary:
                counts[token] = counts.get(token, 0) + 1
        for term in counts:
            bits[term] |= 1 << window_index
        window_index += 1
        for position in range(window_size, len(tokens)):
            entering = tokens[position]
            leaving = tokens[position - window_size]
            if entering in vocabulary:
                counts[entering] = counts.get(entering, 0) + 1
            if leaving in vocabulary:
                remaining = counts[leaving] - 1
                if remaining:
                    counts[leaving] = remaining
                else:
                    del counts[leaving]
            for term in counts:
                bits[term] |= 1 << window_index
            window_index += 1
    return bits, window_index


def _npmi(p_i: float, p_j: float, p_ij: float) -> float:
    """Normalized pointwise mutual information with frozen edge cases."""
    if p_ij == 0.0:
        return -1.0
    if p_ij == 1.0:
        return 1.0
    return math.log(p_ij / (p_i * p_j)) / (-math.log(p_ij))


def coherence_cv(
    topic_keywords: Sequence[Sequence[str]],
    texts: Sequence[str],
    window_size: int = COHERENCE_WINDOW_SIZE,
) -> float:
    """Sliding-window NPMI coherence of topic keyword sets, in ``[0, 1]``.

    For each topic, every keyword's NPMI vector against the topic's
    keywords is compared (by cosine) to the topic's summed context
    vector; the keyword scores are averaged per topic, topics are
    averaged overall, and the result is clamped to ``[0, 1]``.  A keyword
    pair never co-occurring scores -1, a pair in every window scores 1,
    and a keyword against itself scores 1.  An all-zero vector
    contributes similarity 0.

    Keywords that never occur in the corpus are dropped from their topic
    with a :class:`DegenerateCountsWarning`; a topic left with fewer than
    two keywords is likewise skipped.  Calling with no topics, with a
    topic that already has fewer than two keywords, or with counts so
    degenerate that no topic can be scored raises
    :class:`DegenerateCounts`.
    """
    if not topic_keywords:
        raise DegenerateCounts("coherence requires at least one topic keyword set")
    for index, keywords in enumerate(topic_keywords):
        if len(keywords) < 2:
            raise DegenerateCounts(
                f"topic {index} has {len(keywords)} keywords; at least 2 are needed"
            )
    if window_size < 1:
        raise ValueError("window_size must be >= 1")

    vocabulary = frozenset(term for keywords in topic_keywords for term in keywords)
    bits, total_windows = _window_occurrence_bits(texts, vocabulary, window_size)
    if total_windows == 0:
        # no texts at all: every probability is zero, every pair scores -1
        total_windows = 1

    def probability(mask: int) -> float:
        return mask.bit_count() / total_windows

    topic_scores: list[float] = []
    for index, keywords in enumerate(topic_keywords):
        terms: list[str] = []
        for term in keywords:
            if bits[term] == 0:
                warnings.warn(
                    f"keyword {term!r} of topic {index} never occurs in the "
                    "corpus; skipping it",
                    DegenerateCountsWarning,
                    stacklevel=2,
                )
                continue
            terms.append(term)
        if len(terms) < 2:
            warnings.warn(
                f"topic {index} has {len(terms)} corpus-supported keywords; "
                "skipping the topic",
                DegenerateCountsWarning,
                stacklevel=2,
            )
            continue
        k = len(terms)
        npmi_matrix: list[list[float]] = []
        for i, term_i in enumerate(terms):
            row: list[float] = []
            for j, term_j in enumerate(terms):
                if i == j:
                    row.append(1.0)
                    continue
                mask_i = bits[term_i]
                mask_j = bits[term_j]
                row.append(
                    _npmi(
                        probability(mask_i),
                        probability(mask_j),
                        probability(mask_i & mask_j),
                    )
                )
            npmi_matrix.append(row)
        context = [sum(npmi_matrix[i][j] for i in range(k)) for j in range(k)]
        context_norm = math.sqrt(sum(value * value for value in context))
        keyword_scores: list[float] = []
        for i in range(k):
            vector = npmi_matrix[i]
            vector_norm = math.sqrt(sum(value * value for value in vector))
            if vector_norm == 0.0 or context_norm == 0.0:
                keyword_scores.append(0.0)
                continue
            dot = sum(vector[j] * context[j] for j in range(k))
            keyword_scores.append(dot / (vector_norm * context_norm))
        topic_scores.append(sum(keyword_scores) / k)
    if not topic_scores:
        raise DegenerateCounts(
            "no topic kept at least 2 corpus-supported keywords"
        )
    overall = sum(topic_scores) / len(topic_scores)
    return max(0.0, min(1.0, overall))


# --------------------------------------------------------------------------
# Random baseline
# --------------------------------------------------------------------------

_LEXICON_CACHE: list[str] | None = None


def load_lexicon() -> list[str]:
    """Load the bundled pseudo-word lexicon used for random baselines."""
    global _LEXICON_CACHE
    if _LEXICON_CACHE is None:
        text = (resources.files("slrpipe") / "_assets" / "lexicon.txt").read_text("utf-8")
        _LEXICON_CACHE = [word for word in text.split() if word]
    return _LEXICON_CACHE


def random_baseline_document(
    seed: int,
    word_count: int = RANDOM_BASELINE_WORDS,
    lexicon: Sequence[str] | None = None,
) -> str:
    """A document of ``word_count`` lexicon words drawn uniformly by seed.

    Words are grouped into ten-word sentences so the text also exercises
    readability code.  The same seed always produces the same document.
    """
    if word_count < 1:
        raise ValueError("word_count must be >= 1")
    words_source = list(lexicon) if lexicon is not None else load_lexicon()
    if not words_source:
        raise ValueError("lexicon is empty")
    rng = random.Random(seed)
    words = [words_source[rng.randrange(len(words_source))] for _ in range(word_count)]
    sentences = [
        " ".join(words[start : start + 10]) for start in range(0, len(words), 10)
    ]
    return ". ".join(sentences) + "."


# --------------------------------------------------------------------------
# Stage similarity
# --------------------------------------------------------------------------

#: Stage keys required in a stage-similarity report, in report order.
STAGE_KEYS: tuple[str, ...] = ("abstracts", "summary", "sections", "document")


@dataclass(frozen=True)
class StageSimilarityReport:
    """Cosine similarity of each stage's text to the topic embedding."""

    abstracts: float
    summary: float
    sections: float
    document: float
    random: float

    def to_dict(self) -> dict:
        return {
            "abstracts": self.abstracts,
            "summary": self.summary,
            "sections": self.sections,
            "document": self.document,
            "random": self.random,
        }


def stage_similarity_report(
    topic_text: str,
    stage_texts: Mapping[str, str],
    provider=None,
    random_seed: int = 0,
    random_word_count: int = RANDOM_BASELINE_WORDS,
) -> StageSimilarityReport:
    """Embed the topic, each stage text, and a random baseline; compare.

    ``stage_texts`` must contain non-empty text for every key in
    :data:`STAGE_KEYS`; anything missing or blank raises
    :class:`MissingStage`.  The random baseline is generated from
    ``random_seed`` and scored identically.
    """
    for key in STAGE_KEYS:
        if key not in stage_texts or not str(stage_texts[key]).strip():
            raise MissingStage(f"stage text {key!r} is missing or empty")
    if provider is None:
        provider = HashingEmbedder()
    random_text = random_baseline_document(random_seed, random_word_count)
    batch = [topic_text] + [str(stage_texts[key]) for key in STAGE_KEYS] + [random_text]
    vectors = embed_texts(batch, provider)
    topic_vector = vectors[0]
    similarities = [cosine_similarity(topic_vector, vector) for vector in vectors[1:]]
    return StageSimilarityReport(
        abstracts=similarities[0],
        summary=similarities[1],
        sections=similarities[2],
        document=similarities[3],
        random=similarities[4],
    )


# --------------------------------------------------------------------------
# Document-limit sweep
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    """Metrics for one pipeline pass at one document limit."""

    doc_limit: int
    wall_time_s: float
    topic_count: int
    coherence: float
    rouge_f1: float
    cosine: float
    fres: float
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "doc_limit": self.doc_limit,
            "wall_time_s": self.wall_time_s,
            "topic_count": self.topic_count,
            "coherence": self.coherence,
            "rouge_f1": self.rouge_f1,
            "cosine": self.cosine,
            "fres": self.fres,
            "note": self.note,
        }


SWEEP_CSV_COLUMNS: tuple[str, ...] = (
    "doc_limit",
    "wall_time_s",
    "topic_count",
    "coherence",
    "rouge_f1",
    "cosine",
    "fres",
    "note",
)


def run_limit_sweep(
    config,
    limits: Sequence[int],
    out_dir: Path | str | None = None,
    replicates: int = 3,
) -> tuple[list[SweepPoint], Path, Path]:
    """Re-screen one shared corpus at each document limit; chart metrics.

    The expanded topic, the query, and the retrieved records are computed
    once and shared by every point, so points differ only in how many
    papers the screening stage keeps and every wall-time measurement
    covers the same retrieval-free work.  Limits are validated (positive,
    no duplicates) and run sequentially in ascending order so the timings
    stay comparable.  An untimed warm-up pass at the smallest limit
    precedes the timed loop so one-time import and cache costs do not
    distort the first measurement.  Each limit is executed ``replicates``
    times and the reported wall time is the fastest replicate — the usual
    way to time short workloads, since scheduler noise only ever adds
    time.  The quality metrics come from the last replicate (the pipeline
    is deterministic for a fixed config, so replicates agree).

    A limit above the retrieved count keeps all retrieved papers; the
    point is flagged in its ``note`` and a :class:`SweepPointWarning` is
    emitted.  A pipeline error at one point marks that point failed (a
    CSV row with empty metric cells and a ``failed: …`` note, plus a
    :class:`SweepPointWarning`) and the sweep continues with the next
    limit.

    Writes ``sweep_report.csv`` and ``sweep_metrics.png`` (six panels:
    wall time, topic count, coherence, ROUGE-1 F1, cosine, reading ease
    — each against the document limit).

    Returns ``(points, csv_path, figure_path)`` where ``points`` holds
    the completed limits in ascending order.
    """
    from .pipeline import build_gateway, build_transport, execute_in_memory, sweep_output_dir
    from .search import fetch_papers

    if not limits:
        raise InvalidLimit("sweep needs at least one document limit")
    ordered = sorted(limits)
    if any(limit <= 0 for limit in ordered):
        raise InvalidLimit(f"document limits must be positive: {list(limits)}")
    if len(set(ordered)) != len(ordered):
        raise InvalidLimit(f"document limits must be unique: {list(limits)}")
    if replicates < 1:
        raise InvalidLimit("replicates must be >= 1")

    config.validate()
    target_dir = Path(out_dir) if out_dir is not None else sweep_output_dir(config)
    target_dir.mkdir(parents=True, exist_ok=True)

    gateway = build_gateway(config)
    transport = build_transport(config)
    expanded = gateway.expand_topic(config.topic)
    query = gateway.generate_search_query(expanded)
    records = fetch_papers(
        query, transport, max_results=config.max_results, page_size=config.page_size
    )
    shared = (expanded, query, records)

    for limit in ordered:  # warm-up, untimed: first completable point
        try:
            execute_in_memory(
                config, doc_limit=limit, prefetched=shared, gateway=gateway
            )
        except SlrPipeError:
            continue  # the timed loop reports the failure on its own point
        break

    points: list[SweepPoint] = []
    rows: list[list] = []
    for limit in ordered:
        note = ""
        if limit > len(records):
            note = f"used all {len(records)} retrieved papers"
        best_time = math.inf
        metrics: dict = {}
        failure: SlrPipeError | None = None
        for _ in range(replicates):
            started = time.perf_counter()
            try:
                metrics = execute_in_memory(
                    config, doc_limit=limit, prefetched=shared, gateway=gateway
                )
            except SlrPipeError as exc:
                failure = exc
                break
            best_time = min(best_time, time.perf_counter() - started)
        if failure is not None:
            warnings.warn(
                f"sweep point at document limit {limit} failed: {failure}",
                SweepPointWarning,
                stacklevel=2,
            )
            rows.append(
                [limit, "", "", "", "", "", "", f"failed: {type(failure).__name__}: {failure}"]
            )
            continue
        point = SweepPoint(
            doc_limit=limit,
            wall_time_s=best_time,
            topic_count=metrics["counts"]["topics"],
            coherence=metrics["topic_model"]["coherence"],
            rouge_f1=metrics["rouge"]["summary"]["f1"],
            cosine=metrics["stage_similarity"]["document"],
            fres=metrics["readability"]["document"]["fres"],
            note=note,
        )
        points.append(point)
        row = point.to_dict()
        rows.append([row[column] for column in SWEEP_CSV_COLUMNS])

    csv_path = target_dir / "sweep_report.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SWEEP_CSV_COLUMNS)
        writer.writerows(rows)

    figure_path = target_dir / "sweep_metrics.png"
    render_sweep_figure(points, figure_path)
    return points, csv_path, figure_path


def _matplotlib():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_sweep_figure(points: Sequence[SweepPoint], path: Path | str) -> Path:
    """Render the six-panel sweep figure to ``path`` (PNG)."""
    plt = _matplotlib()
    panels = (
        ("wall_time_s", "Wall time (s)"),
        ("topic_count", "Topic count"),
        ("coherence", "Topic coherence"),
        ("rouge_f1", "ROUGE-1 F1"),
        ("cosine", "Cosine similarity"),
        ("fres", "Reading ease"),
    )
    limits = [point.doc_limit for point in points]
    figure, axes = plt.subplots(2, 3, figsize=(12.0, 7.0))
    for axis, (field_name, label) in zip(axes.flat, panels):
        values = [getattr(point, field_name) for point in points]
        axis.plot(limits, values, marker="o")
        axis.set_xlabel("Document limit")
        axis.set_ylabel(label)
        axis.grid(True, alpha=0.3)
    figure.suptitle("Pipeline metrics across document limits")
    figure.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    figure.savefig(path, metadata={"Software": ""})
    plt.close(figure)
    return path


def render_stage_figure(report: StageSimilarityReport, path: Path | str) -> Path:
    """Render the stage-similarity bar chart to ``path`` (PNG)."""
    plt = _matplotlib()
    data = report.to_dict()
    names = list(data)
    values = [data[name] for name in names]
    figure, axis = plt.subplots(figsize=(7.0, 4.0))
    axis.bar(names, values, color=["#4878d0"] * 4 + ["#d65f5f"])
    axis.set_ylabel("Cosine similarity to topic")
    axis.set_ylim(0.0, 1.0)
    axis.set_title("Stage similarity to the expanded topic")
    axis.grid(True, axis="y", alpha=0.3)
    figure.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    figure.savefig(path, metadata={"Software": ""})
    plt.close(figure)
    return path
