"""Shared builders, frozen fixture data, and independent oracles for the tests."""

from __future__ import annotations

import math
import re

from slrpipe.search import PaperRecord
from slrpipe.textutil import clean_text

# Topic seed used for each bundled 60-paper feed.
FEED_TOPICS = {
    "xai": "Explainable Artificial Intelligence",
    "vr": "Virtual Reality",
    "blockchain": "Blockchain",
    "llm": "Large Language Models",
    "nmt": "Neural Machine Translation",
}

# Deterministic mock expansion of each feed topic (frozen output of the
# mock backend's hash-seeded related-term picker).
MOCK_EXPANSIONS = {
    "xai": (
        "Explainable Artificial Intelligence, scalable data-driven analysis, "
        "automated content summarization"
    ),
    "vr": (
        "Virtual Reality, large-scale corpus analysis, "
        "knowledge extraction from scientific text"
    ),
    "blockchain": (
        "Blockchain, open problems and future directions, "
        "taxonomy of methods and applications"
    ),
    "llm": (
        "Large Language Models, open problems and future directions, "
        "large-scale corpus analysis"
    ),
    "nmt": (
        "Neural Machine Translation, human-computer interaction studies, "
        "empirical methods and case studies"
    ),
}


def make_paper(
    arxiv_id: str,
    title: str = "A Paper",
    abstract: str = "Plain abstract text.",
    authors: tuple[str, ...] = ("Ada Author",),
    published: str = "2023-01-01T00:00:00Z",
    category: str = "cs.LG",
) -> PaperRecord:
    """A complete paper record with sensible defaults for unit tests."""
    return PaperRecord(
        arxiv_id=arxiv_id,
        title=title,
        abstract_raw=abstract,
        abstract_clean=clean_text(abstract),
        authors=tuple(authors),
        published=published,
        primary_category=category,
        url=f"http://arxiv.org/abs/{arxiv_id}",
    )


# --------------------------------------------------------------------------
# Synthetic Atom feed builders
# --------------------------------------------------------------------------

def atom_entry(
    arxiv_id: str,
    title: str = "A Paper",
    summary: str = "An abstract.",
    authors: tuple[str, ...] = ("Ada Author",),
    published: str = "2023-01-01T00:00:00Z",
    category: str = "cs.LG",
    include_id: bool = True,
) -> str:
    author_xml = "".join(f"<author><name>{name}</name></author>" for name in authors)
    id_xml = f"<id>http://arxiv.org/abs/{arxiv_id}</id>" if include_id else ""
    return (
        "<entry>"
        f"{id_xml}"
        f"<title>{title}</title>"
        f"<summary>{summary}</summary>"
        f"{author_xml}"
        f"<published>{published}</published>"
        f'<arxiv:primary_category term="{category}"/>'
        f'<category term="{category}"/>'
        f'<link href="http://arxiv.org/abs/{arxiv_id}"/>'
        "</entry>"
    )


def atom_feed(entries: list[str], total: int | None = None) -> str:
    total_xml = (
        f"<opensearch:totalResults>{total}</opensearch:totalResults>"
        if total is not None
        else ""
    )
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        '<feed xmlns="http://www.w3.org/2005/Atom" '
        'xmlns:opensearch="http://a9.com/-/spec/opensearch/1.1/" '
        'xmlns:arxiv="http://arxiv.org/schemas/atom">'
        f"{total_xml}"
        + "".join(entries)
        + "</feed>"
    )


# --------------------------------------------------------------------------
# Readability golden suite
# --------------------------------------------------------------------------

# Hand-counted golden suite: (text, words, sentences, syllables).
FRES_GOLDEN = [
    ("The cat sat on the mat.", 6, 1, 6),
    ("Reading is fun. Books open minds!", 6, 2, 8),
    ("Little turtles paddle gently.", 4, 1, 8),
    ("She made a cake.", 4, 1, 4),
    ("We see the bee.", 4, 1, 4),
    ("Extraordinary bureaucracy amazes literature evaluation committees.", 6, 1, 23),
    ("Why try? My gym!", 4, 2, 4),
    ("The 3 cats ate 12 fishes.", 4, 1, 5),
    ("Apple and maple tables are stable.", 6, 1, 10),
    ("No punctuation here", 3, 1, 5),
]


# --------------------------------------------------------------------------
# BibTeX parse-back oracle
# --------------------------------------------------------------------------

def parse_bibtex(text: str) -> dict[str, dict[str, str]]:
    """Parse ``@article`` entries back into ``{key: {field: value}}``.

    Line-oriented on purpose: independent of the generator, it only
    understands the one-field-per-line shape the tests require.
    """
    entries: dict[str, dict[str, str]] = {}
    current: str | None = None
    for line in text.splitlines():
        started = re.match(r"^@article\{([^,{}]+),$", line)
        if started:
            current = started.group(1)
            if current in entries:
                raise ValueError(f"duplicate bibtex key {current!r}")
            entries[current] = {}
            continue
        if line == "}":
            current = None
            continue
        if current is not None:
            field = re.match(r"^  (\w+) = \{(.*)\},$", line)
            if field:
                entries[current][field.group(1)] = field.group(2)
    return entries


# --------------------------------------------------------------------------
# Windowed-NPMI coherence oracle
# --------------------------------------------------------------------------

def brute_force_coherence(
    topics: list[list[str]], texts: list[str], window_size: int = 110
) -> float:
    """Topic coherence by explicit enumeration of every sliding window.

    Deliberately naive: it materializes each window as a token set and
    counts co-occurrences by scanning all of them, so it shares no code
    with the incremental implementation under test.
    """
    windows: list[set[str]] = []
    for text in texts:
        tokens = re.findall(r"[a-z0-9]+", text.lower())
        if len(tokens) <= window_size:
            windows.append(set(tokens))
        else:
            for start in range(len(tokens) - window_size + 1):
                windows.append(set(tokens[start : start + window_size]))
    total = len(windows) or 1

    def prob(*terms: str) -> float:
        return sum(1 for window in windows if all(t in window for t in terms)) / total

    topic_scores: list[float] = []
    for topic in topics:
        kept = [term for term in topic if prob(term) > 0.0]
        if len(kept) < 2:
            continue
        k = len(kept)
        matrix: list[list[float]] = []
        for i in range(k):
            row: list[float] = []
            for j in range(k):
                if i == j:
                    row.append(1.0)
                    continue
                p_ij = prob(kept[i], kept[j])
                if p_ij == 0.0:
                    row.append(-1.0)
                elif p_ij == 1.0:
                    row.append(1.0)
                else:
                    row.append(
                        math.log(p_ij / (prob(kept[i]) * prob(kept[j])))
                        / (-math.log(p_ij))
                    )
            matrix.append(row)
        context = [sum(matrix[i][j] for i in range(k)) for j in range(k)]
        context_norm = math.sqrt(sum(value * value for value in context))
        scores: list[float] = []
        for i in range(k):
            row_norm = math.sqrt(sum(value * value for value in matrix[i]))
            if row_norm == 0.0 or context_norm == 0.0:
                scores.append(0.0)
            else:
                dot = sum(matrix[i][j] * context[j] for j in range(k))
                scores.append(dot / (row_norm * context_norm))
        topic_scores.append(sum(scores) / k)
    if not topic_scores:
        raise ValueError("oracle: no scoreable topic")
    overall = sum(topic_scores) / len(topic_scores)
    return max(0.0, min(1.0, overall))
