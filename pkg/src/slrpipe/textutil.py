"""Shared text primitives used across search, synthesis, and evaluation.

Every rule here is deliberately frozen and documented, because downstream
numbers (ROUGE, readability, embeddings, summary budgets) depend on these
exact tokenizations being stable across runs and platforms.
"""

from __future__ import annotations

import re

__all__ = [
    "tokenize",
    "whitespace_tokens",
    "count_whitespace_tokens",
    "truncate_whitespace_tokens",
    "split_sentences",
    "count_sentence_runs",
    "clean_text",
    "collapse_whitespace",
]

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_SENTENCE_END_RE = re.compile(r"[.!?]+")
_BACKSLASH_COMMAND_RE = re.compile(r"\\[a-zA-Z]+")
_MARKUP_CHARS_RE = re.compile(r"[\\${}]")
_WS_RE = re.compile(r"\s+")
_CONTROL_RE = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f\x7f]")


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it into maximal alphanumeric runs.

    Any character outside ``[a-z0-9]`` (after lowercasing) acts as a
    separator, so hyphens, apostrophes, and punctuation all split tokens:
    ``"state-of-the-art"`` yields four tokens.  Returns ``[]`` for text
    with no alphanumeric characters.
    """
    return _TOKEN_RE.findall(text.lower())


def whitespace_tokens(text: str) -> list[str]:
    """Split ``text`` on whitespace runs, dropping empty pieces."""
    return text.split()


def count_whitespace_tokens(text: str) -> int:
    """Number of whitespace-delimited tokens in ``text``."""
    return len(text.split())


def truncate_whitespace_tokens(text: str, limit: int) -> str:
    """Keep at most ``limit`` whitespace-delimited tokens of ``text``.

    Joining is done with single spaces, so the result is also the
    canonical single-spaced form of the retained tokens.
    """
    if limit <= 0:
        return ""
    tokens = text.split()
    if len(tokens) <= limit:
        return " ".join(tokens)
    return " ".join(tokens[:limit])


def split_sentences(text: str) -> list[str]:
    """Split ``text`` into sentences on maximal ``[.!?]`` runs.

    Each sentence keeps its terminator run.  Trailing text without a
    terminator is returned as a final sentence.  No abbreviation handling
    is attempted; the rule is simple and deterministic by design.
    Returns ``[]`` for empty or whitespace-only input.
    """
    if not text.strip():
        return []
    sentences: list[str] = []
    start = 0
    for match in _SENTENCE_END_RE.finditer(text):
        piece = text[start : match.end()]
        if piece.strip():
            sentences.append(piece.strip())
        start = match.end()
    tail = text[start:]
    if tail.strip():
        sentences.append(tail.strip())
    return sentences


def count_sentence_runs(text: str) -> int:
    """Count maximal ``[.!?]`` runs in ``text``, with a floor of one.

    This is the sentence count used by readability scoring: text with no
    terminator at all still counts as a single sentence.
    """
    runs = len(_SENTENCE_END_RE.findall(text))
    return max(1, runs)


def collapse_whitespace(text: str) -> str:
    """Replace each whitespace run with a single space and trim the ends."""
    return _WS_RE.sub(" ", text).strip()


def clean_text(text: str) -> str:
    r"""Normalize raw abstract text into plain prose.

    Applied in order:

    1. control characters (C0 range and DEL, except whitespace controls,
       which are handled by the final collapse) become spaces;
    2. backslash commands (``\word``) are removed outright, so markup
       command names never leak into the prose;
    3. remaining markup characters ``\``, ``$``, ``{``, ``}`` are removed,
       which keeps the inner text of inline math and brace groups;
    4. whitespace runs collapse to single spaces and the ends are trimmed.

    The function is idempotent: cleaning already-clean text is a no-op.
    """
    text = _CONTROL_RE.sub(" ", text)
    text = _BACKSLASH_COMMAND_RE.sub("", text)
    text = _MARKUP_CHARS_RE.sub("", text)
    return collapse_whitespace(text)
