"""Citation keys, LaTeX escaping, bibliography generation, and review rendering."""

from __future__ import annotations

import pytest

from helpers import make_paper, parse_bibtex
from slrpipe.document import (
    FRAMING_SECTION_NAMES,
    ReviewDocument,
    assemble_and_export,
    assign_citation_keys,
    generate_bibtex,
    generate_framing_sections,
    latex_escape,
    make_citation_key,
    render_review,
    validate_latex,
)
from slrpipe.errors import (
    BackendUnavailable,
    DuplicateKey,
    ExportError,
    FallbackTextWarning,
    NoPapers,
    UnbalancedBraces,
    UnbalancedEnvironment,
    UndefinedCitation,
)
from slrpipe.gateway import LlmGateway
from slrpipe.synthesis import SectionDraft
from test_gateway import ScriptedBackend

GOLDEN_PAPER = make_paper(
    "2301.12345v2",
    title="Attention & Interpretation: 100% of _cases_",
    authors=("Alice Smith", "Bob-Jones Lee"),
    published="2023-05-01T00:00:00Z",
    category="cs.CL",
)

GOLDEN_BIB = """\
@article{smith20232345,
  author = {Alice Smith and Bob-Jones Lee},
  title = {Attention \\& Interpretation: 100\\% of \\_cases\\_},
  journal = {arXiv preprint arXiv:2301.12345v2},
  year = {2023},
  eprint = {2301.12345v2},
  archivePrefix = {arXiv},
  primaryClass = {cs.CL},
  url = {http://arxiv.org/abs/2301.12345v2},
}
"""


# --------------------------------------------------------------------------
# Citation keys
# --------------------------------------------------------------------------

def test_make_citation_key_surname_year_serial():
    assert make_citation_key(GOLDEN_PAPER) == "smith20232345"


def test_make_citation_key_fallbacks():
    assert make_citation_key(make_paper("1.2345", authors=())) == "anon20232345"
    assert (
        make_citation_key(make_paper("1.2345", published="May 2023")) == "author00002345"
    )
    assert (
        make_citation_key(make_paper("cs/0301012", published="2003-01-01T00:00:00Z"))
        == "author20031012"
    )
    assert make_citation_key(make_paper("abc")) == "author20230000"


def test_make_citation_key_uses_last_name_token():
    paper = make_paper("1.2345", authors=("Jean-Luc Picard", "Someone Else"))
    assert make_citation_key(paper) == "picard20232345"


def test_assign_citation_keys_unique_base_is_unsuffixed():
    papers = [GOLDEN_PAPER, make_paper("2302.99999v1", authors=("Grace Hopper",))]
    keys = assign_citation_keys(papers)
    assert keys["2301.12345v2"] == "smith20232345"
    assert keys["2302.99999v1"] == "hopper20239999"


def test_assign_citation_keys_suffixes_all_collisions_in_order():
    papers = [
        make_paper(f"2301.{i}1111", authors=("Ada Smith",), published="2023-01-01T00:00:00Z")
        for i in range(28)
    ]
    keys = assign_citation_keys(papers)
    ordered = [keys[p.arxiv_id] for p in papers]
    assert ordered[0] == "smith20231111a"
    assert ordered[25] == "smith20231111z"
    assert ordered[26] == "smith20231111aa"
    assert ordered[27] == "smith20231111ab"
    assert len(set(ordered)) == 28


# --------------------------------------------------------------------------
# LaTeX escaping
# --------------------------------------------------------------------------

@pytest.mark.parametrize(
    ("raw", "escaped"),
    [
        ("&", r"\&"),
        ("%", r"\%"),
        ("$", r"\$"),
        ("#", r"\#"),
        ("_", r"\_"),
        ("{", r"\{"),
        ("}", r"\}"),
        ("~", r"\textasciitilde{}"),
        ("^", r"\textasciicircum{}"),
        ("\\", r"\textbackslash{}"),
    ],
)
def test_latex_escape_specials(raw, escaped):
    assert latex_escape(raw) == escaped


def test_latex_escape_is_single_pass():
    assert latex_escape(r"\&") == r"\textbackslash{}\&"
    assert latex_escape("100% of _cases_") == r"100\% of \_cases\_"


# --------------------------------------------------------------------------
# Bibliography generation
# --------------------------------------------------------------------------

def test_generate_bibtex_golden_entry():
    entries, text = generate_bibtex([GOLDEN_PAPER], {"2301.12345v2": "smith20232345"})
    assert len(entries) == 1
    assert entries[0].key == "smith20232345"
    assert text == GOLDEN_BIB


def test_generate_bibtex_sorts_by_key_and_joins_blocks():
    papers = [
        make_paper("2302.99999v1", authors=("Grace Hopper",)),
        GOLDEN_PAPER,
    ]
    entries, text = generate_bibtex(
        papers, {"2302.99999v1": "hopper20239999", "2301.12345v2": "smith20232345"}
    )
    assert [e.key for e in entries] == ["hopper20239999", "smith20232345"]
    blocks = text.split("\n\n")
    assert blocks[0].startswith("@article{hopper20239999,")
    assert blocks[1].startswith("@article{smith20232345,")
    assert text.endswith("}\n")


def test_generate_bibtex_parses_back_with_expected_fields():
    _, text = generate_bibtex([GOLDEN_PAPER], {"2301.12345v2": "smith20232345"})
    parsed = parse_bibtex(text)
    assert parsed == {
        "smith20232345": {
            "author": "Alice Smith and Bob-Jones Lee",
            "title": r"Attention \& Interpretation: 100\% of \_cases\_",
            "journal": "arXiv preprint arXiv:2301.12345v2",
            "year": "2023",
            "eprint": "2301.12345v2",
            "archivePrefix": "arXiv",
            "primaryClass": "cs.CL",
            "url": "http://arxiv.org/abs/2301.12345v2",
        }
    }


def test_generate_bibtex_error_cases():
    with pytest.raises(NoPapers):
        generate_bibtex([], {})
    with pytest.raises(KeyError):
        generate_bibtex([GOLDEN_PAPER], {})
    papers = [GOLDEN_PAPER, make_paper("2302.99999v1")]
    with pytest.raises(DuplicateKey):
        generate_bibtex(papers, {"2301.12345v2": "same", "2302.99999v1": "same"})


# --------------------------------------------------------------------------
# Framing sections
# --------------------------------------------------------------------------

def test_framing_section_names():
    assert FRAMING_SECTION_NAMES == ("Introduction", "Background", "Conclusion")


def test_generate_framing_sections_mock():
    framing = generate_framing_sections(
        LlmGateway(backend="mock"), "My Review", ["Topic A", "Topic B"]
    )
    assert set(framing) == {"introduction", "background", "conclusion"}
    assert framing["introduction"].startswith(
        'This introduction frames the literature review "My Review".'
    )
    assert framing["conclusion"].startswith(
        'This conclusion frames the literature review "My Review".'
    )
    assert "Topic A; Topic B" in framing["background"]


def test_generate_framing_sections_falls_back_on_backend_failure():
    backend = ScriptedBackend([BackendUnavailable("down")] * 3)
    with pytest.warns(FallbackTextWarning):
        framing = generate_framing_sections(
            LlmGateway(backend=backend), "My Review", ["Topic A", "Topic B"]
        )
    fallback = "This review is organized into 2 topic sections: Topic A; Topic B."
    assert framing == {
        "introduction": fallback,
        "background": fallback,
        "conclusion": fallback,
    }


# --------------------------------------------------------------------------
# Rendering and validation
# --------------------------------------------------------------------------

def _document() -> tuple[ReviewDocument, str]:
    keys = assign_citation_keys([GOLDEN_PAPER])
    entries, bib_text = generate_bibtex([GOLDEN_PAPER], keys)
    section = SectionDraft(
        topic_id=0,
        section_title="Topic A & Friends",
        aggregated_text="Agg. \\citep{smith20232345}",
        post_edited_text="50% better \\citep{smith20232345}",
        citation_keys=("smith20232345",),
    )
    document = ReviewDocument(
        title="Review & Title",
        intro_text="Intro text.",
        background_text="Background text.",
        conclusion_text="Conclusion text.",
        sections=[section],
        bib_entries=entries,
    )
    return document, bib_text


def test_render_review_structure_and_escaping():
    document, _ = _document()
    tex = render_review(document)
    markers = [
        r"\documentclass",
        r"\title{Review \& Title}",
        r"\date{}",
        r"\begin{document}",
        r"\maketitle",
        r"\section{Introduction}",
        "Intro text.",
        r"\section{Background}",
        r"\section{Topic A \& Friends}",
        r"50\% better \citep{smith20232345}",
        r"\section{Conclusion}",
        r"\bibliographystyle{plainnat}",
        r"\bibliography{review}",
        r"\end{document}",
    ]
    position = -1
    for marker in markers:
        found = tex.find(marker)
        assert found > position, f"marker {marker!r} missing or out of order"
        position = found
    validate_latex(tex, ["smith20232345"])


def test_validate_latex_accepts_escaped_braces():
    validate_latex(r"a \{ lone \} brace \citep{k}", ["k"])


def test_validate_latex_rejects_unbalanced_braces():
    with pytest.raises(UnbalancedBraces):
        validate_latex(r"\section{open", ["k"])
    with pytest.raises(UnbalancedBraces):
        validate_latex("closed} early", ["k"])


def test_validate_latex_rejects_unbalanced_environments():
    with pytest.raises(UnbalancedEnvironment):
        validate_latex(r"\begin{document} text", ["k"])
    with pytest.raises(UnbalancedEnvironment):
        validate_latex(r"\begin{document}\end{abstract}", ["k"])
    with pytest.raises(UnbalancedEnvironment):
        validate_latex(r"\end{document}", ["k"])


def test_validate_latex_rejects_undefined_citations():
    with pytest.raises(UndefinedCitation):
        validate_latex(r"\citep{ghost}", ["k"])
    with pytest.raises(UndefinedCitation):
        validate_latex(r"\citep{k, ghost}", ["k"])


# --------------------------------------------------------------------------
# Export
# --------------------------------------------------------------------------

def test_assemble_and_export_writes_validated_files(tmp_path):
    document, bib_text = _document()
    paths = assemble_and_export(document, tmp_path)
    assert paths["tex"].name == "review.tex"
    assert paths["bib"].name == "review.bib"
    assert paths["tex"].read_text("utf-8") == render_review(document)
    assert paths["bib"].read_text("utf-8") == bib_text
    parsed = parse_bibtex(paths["bib"].read_text("utf-8"))
    assert set(parsed) == {"smith20232345"}


def test_assemble_and_export_rejects_undefined_citation(tmp_path):
    document, _ = _document()
    document.sections[0] = SectionDraft(
        topic_id=0,
        section_title="Topic A",
        aggregated_text="Agg.",
        post_edited_text="cites \\citep{ghost}",
        citation_keys=("ghost",),
    )
    with pytest.raises(UndefinedCitation):
        assemble_and_export(document, tmp_path)
    assert not (tmp_path / "review.tex").exists()
    assert not (tmp_path / "review.bib").exists()


def test_assemble_and_export_wraps_write_failures(tmp_path):
    blocked = tmp_path / "blocked"
    blocked.write_text("a file, not a directory")
    document, _ = _document()
    with pytest.raises(ExportError):
        assemble_and_export(document, blocked)
