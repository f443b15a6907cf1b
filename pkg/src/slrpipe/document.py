r"""Review document assembly: citation keys, BibTeX, LaTeX, export.

The builder turns screened papers and post-edited sections into two
files: ``review.tex`` (a natbib article with framing sections, one
section per topic, and a bibliography hook) and ``review.bib`` (one
``@article`` entry per clustered paper, sorted by citation key).

Body prose is LaTeX-escaped segment-wise around ``\citep{...}`` markers,
so citations survive escaping intact.  Before anything is written, the
rendered document passes a structural validator: balanced unescaped
braces, properly nested ``\begin``/``\end`` environments, and no citation
of an undefined key.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import (
    DuplicateKey,
    ExportError,
    FallbackTextWarning,
    NoPapers,
    UnbalancedBraces,
    UnbalancedEnvironment,
    UndefinedCitation,
)
from .gateway import FRAMING, LlmGateway
from .search import PaperRecord
from .storage import atomic_write_text
from .synthesis import CITATION_RE, SectionDraft, extract_citation_keys
from .textutil import collapse_whitespace, tokenize

__all__ = [
    "BibEntry",
    "ReviewDocument",
    "FRAMING_SECTION_NAMES",
    "make_citation_key",
    "assign_citation_keys",
    "latex_escape",
    "generate_bibtex",
    "generate_framing_sections",
    "render_review",
    "validate_latex",
    "assemble_and_export",
]

FRAMING_SECTION_NAMES: tuple[str, ...] = ("Introduction", "Background", "Conclusion")

_ESCAPE_MAP: dict[str, str] = {
    "&": r"\&",
    "%": r"\%",
    "$": r"\$",
    "#": r"\#",
    "_": r"\_",
    "{": r"\{",
    "}": r"\}",
    "~": r"\textasciitilde{}",
    "^": r"\textasciicircum{}",
    "\\": r"\textbackslash{}",
}


@dataclass(frozen=True)
class BibEntry:
    """One ``@article`` bibliography entry."""

    key: str
    title: str
    authors: tuple[str, ...]
    year: str
    eprint: str
    primary_category: str
    url: str

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "title": self.title,
            "authors": list(self.authors),
            "year": self.year,
            "eprint": self.eprint,
            "primary_category": self.primary_category,
            "url": self.url,
        }


@dataclass
class ReviewDocument:
    """Everything needed to render the final LaTeX review."""

    title: str
    intro_text: str
    background_text: str
    conclusion_text: str
    sections: list[SectionDraft]
    bib_entries: list[BibEntry]


def _surname_token(author: str) -> str:
    """Lowercased alphanumeric form of an author's final name token."""
    parts = author.split()
    if not parts:
        return "anon"
    token = "".join(tokenize(parts[-1]))
    return token or "anon"


def _serial_digits(arxiv_id: str) -> str:
    """Last four digits of the id's serial part, version suffix stripped."""
    base = arxiv_id
    if "v" in base:
        head, _v, tail = base.rpartition("v")
        if head and tail.isdigit():
            base = head
    serial = base.rsplit(".", 1)[-1] if "." in base else base
    digits = "".join(ch for ch in serial if ch.isdigit())
    return digits[-4:] if digits else "0000"


def make_citation_key(paper: PaperRecord) -> str:
    """Base citation key: first-author surname + year + id serial digits.

    The year comes from the published timestamp when it starts with four
    digits, else ``"0000"``.  Keys contain only lowercase alphanumerics.
    """
    surname = _surname_token(paper.authors[0]) if paper.authors else "anon"
    year = paper.published[:4] if paper.published[:4].isdigit() else "0000"
    return f"{surname}{year}{_serial_digits(paper.arxiv_id)}"


def _collision_suffix(index: int) -> str:
    letters = "abcdefghijklmnopqrstuvwxyz"
    out = ""
    index += 1
    while index > 0:
        index, rem = divmod(index - 1, 26)
        out = letters[rem] + out
    return out


def assign_citation_keys(papers: Sequence[PaperRecord]) -> dict[str, str]:
    """Assign a unique citation key to every paper.

    Papers whose base keys collide all get letter suffixes (``a``, ``b``,
    ...) in input order; unique base keys are used as-is.
    """
    bases: dict[str, list[str]] = {}
    for paper in papers:
        bases.setdefault(make_citation_key(paper), []).append(paper.arxiv_id)
    keys: dict[str, str] = {}
    for base, ids in bases.items():
        if len(ids) == 1:
            keys[ids[0]] = base
        else:
            for i, arxiv_id in enumerate(ids):
                keys[arxiv_id] = f"{base}{_collision_suffix(i)}"
    if len(set(keys.values())) != len(keys):
        raise DuplicateKey("citation key assignment produced a collision")
    return keys


def latex_escape(text: str) -> str:
    """Escape LaTeX-special characters in one pass over the text."""
    return "".join(_ESCAPE_MAP.get(ch, ch) for ch in text)


def _escape_preserving_citations(text: str) -> str:
    r"""Escape prose but keep ``\citep{...}`` markers verbatim."""
    pieces: list[str] = []
    last = 0
    for match in CITATION_RE.finditer(text):
        pieces.append(latex_escape(text[last : match.start()]))
        pieces.append(match.group(0))
        last = match.end()
    pieces.append(latex_escape(text[last:]))
    return "".join(pieces)


def _serialize_bib_entries(entries: Sequence[BibEntry]) -> str:
    blocks: list[str] = []
    for entry in entries:
        author_field = " and ".join(entry.authors) if entry.authors else "Anonymous"
        blocks.append(
            "\n".join(
                [
                    f"@article{{{entry.key},",
                    f"  author = {{{latex_escape(author_field)}}},",
                    f"  title = {{{latex_escape(entry.title)}}},",
                    f"  journal = {{arXiv preprint arXiv:{entry.eprint}}},",
                    f"  year = {{{entry.year}}},",
                    f"  eprint = {{{entry.eprint}}},",
                    "  archivePrefix = {arXiv},",
                    f"  primaryClass = {{{entry.primary_category}}},",
                    f"  url = {{{entry.url}}},",
                    "}",
                ]
            )
        )
    return "\n\n".join(blocks) + "\n"


def generate_bibtex(
    papers: Sequence[PaperRecord], keys: Mapping[str, str]
) -> tuple[list[BibEntry], str]:
    """Build sorted ``@article`` entries and their serialized text."""
    if not papers:
        raise NoPapers("cannot generate a bibliography from zero papers")
    entries: list[BibEntry] = []
    for paper in papers:
        if paper.arxiv_id not in keys:
            raise KeyError(f"no citation key assigned for {paper.arxiv_id!r}")
        year = paper.published[:4] if paper.published[:4].isdigit() else "0000"
        entries.append(
            BibEntry(
                key=keys[paper.arxiv_id],
                title=paper.title,
                authors=paper.authors,
                year=year,
                eprint=paper.arxiv_id,
                primary_category=paper.primary_category,
                url=paper.url,
            )
        )
    entries.sort(key=lambda e: e.key)
    seen: set[str] = set()
    for entry in entries:
        if entry.key in seen:
            raise DuplicateKey(f"duplicate citation key {entry.key!r}")
        seen.add(entry.key)
    return entries, _serialize_bib_entries(entries)


def generate_framing_sections(
    gateway: LlmGateway, review_title: str, section_titles: Sequence[str]
) -> dict[str, str]:
    """Generate introduction, background, and conclusion text.

    Any gateway failure for a section falls back to a deterministic
    one-line description of the review's topics and emits
    :class:`FallbackTextWarning`.
    """
    joined = "; ".join(section_titles) if section_titles else "a single body of work"
    out: dict[str, str] = {}
    for name in FRAMING_SECTION_NAMES:
        try:
            result = gateway.complete(
                FRAMING,
                {
                    "section_name": name,
                    "title": review_title,
                    "section_titles": joined,
                },
            )
            out[name.lower()] = collapse_whitespace(result.text)
        except Exception as exc:  # noqa: BLE001 - any backend failure falls back
            warnings.warn(
                f"framing section {name!r} fell back to deterministic text: {exc}",
                FallbackTextWarning,
                stacklevel=2,
            )
            out[name.lower()] = (
                f"This review is organized into {len(section_titles)} topic"
                f" sections: {joined}."
            )
    return out


_PREAMBLE = "\n".join(
    [
        r"\documentclass{article}",
        r"\usepackage[utf8]{inputenc}",
        r"\usepackage{natbib}",
        r"\usepackage{hyperref}",
    ]
)


def render_review(document: ReviewDocument, bib_stem: str = "review") -> str:
    """Render the review to LaTeX source text."""
    lines: list[str] = [_PREAMBLE, ""]
    lines.append(rf"\title{{{latex_escape(document.title)}}}")
    lines.append(r"\date{}")
    lines.append("")
    lines.append(r"\begin{document}")
    lines.append("")
    lines.append(r"\maketitle")
    lines.append("")
    lines.append(r"\section{Introduction}")
    lines.append(latex_escape(document.intro_text))
    lines.append("")
    lines.append(r"\section{Background}")
    lines.append(latex_escape(document.background_text))
    lines.append("")
    for section in document.sections:
        lines.append(rf"\section{{{latex_escape(section.section_title)}}}")
        lines.append(_escape_preserving_citations(section.post_edited_text))
        lines.append("")
    lines.append(r"\section{Conclusion}")
    lines.append(latex_escape(document.conclusion_text))
    lines.append("")
    lines.append(r"\bibliographystyle{plainnat}")
    lines.append(rf"\bibliography{{{bib_stem}}}")
    lines.append("")
    lines.append(r"\end{document}")
    return "\n".join(lines) + "\n"


def validate_latex(tex: str, bib_keys: Sequence[str]) -> None:
    r"""Structural checks on rendered LaTeX.

    Raises :class:`UnbalancedBraces` when unescaped braces do not
    balance, :class:`UnbalancedEnvironment` when ``\begin``/``\end``
    pairs do not nest, and :class:`UndefinedCitation` when a ``\citep``
    key is missing from ``bib_keys``.
    """
    depth = 0
    i = 0
    n = len(tex)
    while i < n:
        ch = tex[i]
        if ch == "\\":
            i += 2  # the next char is escaped or starts a command name
            continue
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth < 0:
                raise UnbalancedBraces("closing brace without matching opening brace")
        i += 1
    if depth != 0:
        raise UnbalancedBraces(f"{depth} unclosed braces")

    import re as _re

    stack: list[str] = []
    for match in _re.finditer(r"\\(begin|end)\{([^{}]*)\}", tex):
        kind, env = match.group(1), match.group(2)
        if kind == "begin":
            stack.append(env)
        else:
            if not stack or stack[-1] != env:
                raise UnbalancedEnvironment(
                    f"\\end{{{env}}} does not match an open environment"
                )
            stack.pop()
    if stack:
        raise UnbalancedEnvironment(f"unclosed environments: {stack}")

    defined = set(bib_keys)
    for key in extract_citation_keys(tex):
        if key not in defined:
            raise UndefinedCitation(f"cited key {key!r} is not in the bibliography")


def assemble_and_export(
    document: ReviewDocument,
    out_dir: Path | str,
    tex_name: str = "review.tex",
    bib_name: str = "review.bib",
) -> dict[str, Path]:
    """Validate the document and write ``review.tex`` / ``review.bib``.

    Both writes are atomic.  Returns the written paths keyed by role.
    """
    out_dir = Path(out_dir)
    bib_keys = [entry.key for entry in document.bib_entries]
    tex = render_review(document, bib_stem=Path(bib_name).stem)
    validate_latex(tex, bib_keys)
    bib_text = _serialize_bib_entries(document.bib_entries)
    try:
        tex_path = atomic_write_text(out_dir / tex_name, tex)
        bib_path = atomic_write_text(out_dir / bib_name, bib_text)
    except OSError as exc:
        raise ExportError(f"failed to write review files: {exc}") from exc
    return {"tex": tex_path, "bib": bib_path}
