"""Two-stage summarization: per-paper summaries, then topic sections.

Stage one condenses each paper's cleaned abstract.  The default
summarizer is extractive — it keeps whole leading sentences within a
token budget, so every word it emits comes verbatim from its input — and
an optional abstractive summarizer sits behind a lazy import.

Stage two concatenates a topic's summaries in screening-rank order with a
citation marker after each paper's contribution, then asks the LLM
gateway to post-edit the aggregate into flowing prose.  Post-edited text
must keep at least one citation and may only cite papers that belong to
the topic; a violation triggers one corrective retry, after which the
section falls back to the unedited aggregate.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

from .errors import (
    CitationRepairWarning,
    EmptyAbstract,
    SummaryBackendUnavailable,
)
from .gateway import POST_EDIT, LlmGateway
from .textutil import collapse_whitespace, split_sentences
from .topics import TopicCluster

__all__ = [
    "STAGE_SUMMARY",
    "STAGE_AGGREGATED",
    "STAGE_POST_EDITED",
    "SUMMARY_STAGES",
    "SummaryUnit",
    "SectionDraft",
    "Summarizer",
    "ExtractiveSummarizer",
    "TransformersSummarizer",
    "get_summarizer",
    "summarize_abstract",
    "aggregate_topic",
    "extract_citation_keys",
    "validate_citations",
    "post_edit_section",
    "CITATION_RE",
]

STAGE_SUMMARY = "summary"
STAGE_AGGREGATED = "aggregated"
STAGE_POST_EDITED = "post_edited"
SUMMARY_STAGES: tuple[str, ...] = (STAGE_SUMMARY, STAGE_AGGREGATED, STAGE_POST_EDITED)

CITATION_RE = re.compile(r"\\citep\{([^{}]+)\}")


@dataclass(frozen=True)
class SummaryUnit:
    """One summarized text tied to a paper and a pipeline stage."""

    paper_id: str
    stage: str
    text: str
    token_count: int

    def __post_init__(self) -> None:
        if self.stage not in SUMMARY_STAGES:
            raise ValueError(f"unknown summary stage: {self.stage!r}")
        if self.token_count != len(self.text.split()):
            raise ValueError("token_count must equal the whitespace token count")

    def to_dict(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "stage": self.stage,
            "text": self.text,
            "token_count": self.token_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SummaryUnit":
        return cls(
            paper_id=data["paper_id"],
            stage=data["stage"],
            text=data["text"],
            token_count=data["token_count"],
        )


@dataclass(frozen=True)
class SectionDraft:
    """One review section: a topic's aggregate and its post-edited form."""

    topic_id: int
    section_title: str
    aggregated_text: str
    post_edited_text: str
    citation_keys: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "topic_id": self.topic_id,
            "section_title": self.section_title,
            "aggregated_text": self.aggregated_text,
            "post_edited_text": self.post_edited_text,
            "citation_keys": list(self.citation_keys),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SectionDraft":
        return cls(
            topic_id=data["topic_id"],
            section_title=data["section_title"],
            aggregated_text=data["aggregated_text"],
            post_edited_text=data["post_edited_text"],
            citation_keys=tuple(data["citation_keys"]),
        )


class Summarizer(Protocol):
    """Anything that can condense a passage of prose."""

    name: str

    def summarize(self, text: str) -> str:
        ...


class ExtractiveSummarizer:
    """Lead-sentence extractive summarizer with a proportional budget.

    The budget is ``max(min_tokens, ceil(ratio * n))`` whitespace tokens,
    where ``n`` is the input's whitespace token count.  Whole leading
    sentences are kept while they fit; if even the first sentence exceeds
    the budget it is truncated to exactly the budget.  Because the output
    is a prefix of the input's sentences (or a token prefix of its first
    sentence), every output word occurs in the input — unigram precision
    against the source is always 1.0.
    """

    name = "extractive"

    def __init__(self, ratio: float = 0.4, min_tokens: int = 20):
        if not 0.0 < ratio <= 1.0:
            raise ValueError("ratio must be in (0, 1]")
        if min_tokens < 1:
            raise ValueError("min_tokens must be >= 1")
        self.ratio = ratio
        self.min_tokens = min_tokens

    def budget(self, text: str) -> int:
        return max(self.min_tokens, math.ceil(self.ratio * len(text.split())))

    def summarize(self, text: str) -> str:
        sentences = split_sentences(text)
        if not sentences:
            return ""
        budget = self.budget(text)
        kept: list[str] = []
        used = 0
        for sentence in sentences:
            count = len(sentence.split())
            if used + count > budget:
                break
            kept.append(sentence)
            used += count
        if not kept:
            return " ".join(sentences[0].split()[:budget])
        return " ".join(kept)


class TransformersSummarizer:
    """Optional abstractive summarizer behind a lazy import.

    Constructing the underlying model happens on first use; if the
    ``transformers`` package is absent, :class:`SummaryBackendUnavailable`
    is raised with an install hint.
    """

    name = "transformers"

    def __init__(self, model_name: str = "t5-small", max_length: int = 150, min_length: int = 30):
        self.model_name = model_name
        self.max_length = max_length
        self.min_length = min_length
        self._pipeline = None

    def _load(self):
        if self._pipeline is None:
            try:
                from transformers import pipeline
            except ImportError as exc:
                raise SummaryBackendUnavailable(
                    "abstractive summaries require the optional 'transformers'"
                    " package; install it or use the default extractive summarizer"
                ) from exc
            self._pipeline = pipeline("summarization", model=self.model_name)
        return self._pipeline

    def summarize(self, text: str) -> str:
        result = self._load()(
            text, max_length=self.max_length, min_length=self.min_length, truncation=True
        )
        return collapse_whitespace(result[0]["summary_text"])


def get_summarizer(name: str = "extractive") -> Summarizer:
    """Build a summarizer from a spec string.

    ``"extractive"`` gives the deterministic offline summarizer;
    ``"transformers"`` or ``"transformers:<model-name>"`` gives the
    optional abstractive one.
    """
    if name == "extractive":
        return ExtractiveSummarizer()
    if name == "transformers":
        return TransformersSummarizer()
    if name.startswith("transformers:"):
        return TransformersSummarizer(name.split(":", 1)[1])
    raise ValueError(f"unknown summarizer: {name!r}")


def summarize_abstract(paper_id: str, abstract_clean: str, summarizer: Summarizer) -> SummaryUnit:
    """Summarize one cleaned abstract into a stage-one summary unit."""
    if not abstract_clean or not abstract_clean.strip():
        raise EmptyAbstract(f"paper {paper_id!r} has no usable abstract text")
    text = collapse_whitespace(summarizer.summarize(abstract_clean))
    if not text:
        raise EmptyAbstract(f"summarizer produced no text for paper {paper_id!r}")
    return SummaryUnit(
        paper_id=paper_id,
        stage=STAGE_SUMMARY,
        text=text,
        token_count=len(text.split()),
    )


def aggregate_topic(
    cluster: TopicCluster,
    summaries: Mapping[str, SummaryUnit],
    citation_keys: Mapping[str, str],
) -> str:
    """Concatenate a topic's summaries with a citation after each paper.

    Papers appear in cluster member order (screening rank), each summary
    followed by its ``\\citep{key}`` marker, all joined with single
    spaces.
    """
    parts: list[str] = []
    for paper_id in cluster.member_ids:
        if paper_id not in summaries:
            raise KeyError(f"no summary for topic member {paper_id!r}")
        if paper_id not in citation_keys:
            raise KeyError(f"no citation key for topic member {paper_id!r}")
        unit = summaries[paper_id]
        parts.append(f"{unit.text} \\citep{{{citation_keys[paper_id]}}}")
    return " ".join(parts)


def extract_citation_keys(text: str) -> list[str]:
    """Citation keys in order of first appearance, de-duplicated.

    A single marker may carry several comma-separated keys.
    """
    keys: list[str] = []
    seen: set[str] = set()
    for match in CITATION_RE.finditer(text):
        for key in match.group(1).split(","):
            key = key.strip()
            if key and key not in seen:
                seen.add(key)
                keys.append(key)
    return keys


def validate_citations(text: str, allowed_keys: Sequence[str]) -> bool:
    """True iff ``text`` cites at least one key and only allowed keys."""
    found = extract_citation_keys(text)
    if not found:
        return False
    allowed = set(allowed_keys)
    return all(key in allowed for key in found)


def post_edit_section(
    gateway: LlmGateway,
    review_title: str,
    cluster: TopicCluster,
    aggregated_text: str,
    allowed_keys: Sequence[str],
) -> SectionDraft:
    """Post-edit one topic's aggregate into a review section.

    The edited text must retain at least one citation marker and cite
    only keys from ``allowed_keys`` (the topic's own papers).  On a
    violation the gateway is retried once with a corrective instruction;
    if the retry also fails validation, the aggregate is used verbatim
    and :class:`CitationRepairWarning` is emitted.
    """
    bindings = {
        "title": review_title,
        "section_name": cluster.title,
        "summary": aggregated_text,
    }
    edited = collapse_whitespace(gateway.complete(POST_EDIT, bindings).text)
    if not validate_citations(edited, allowed_keys):
        suffix = (
            "\n\nThe previous revision dropped or altered citation markers."
            " Keep every \\citep{...} marker exactly as written in the"
            " original summary; cite only those keys."
        )
        edited = collapse_whitespace(
            gateway.complete(POST_EDIT, bindings, user_suffix=suffix).text
        )
        if not validate_citations(edited, allowed_keys):
            warnings.warn(
                f"post-edit for topic {cluster.topic_id} failed citation"
                " validation twice; keeping the unedited aggregate",
                CitationRepairWarning,
                stacklevel=2,
            )
            edited = aggregated_text
    return SectionDraft(
        topic_id=cluster.topic_id,
        section_title=cluster.title,
        aggregated_text=aggregated_text,
        post_edited_text=edited,
        citation_keys=tuple(extract_citation_keys(edited)),
    )
