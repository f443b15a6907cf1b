"""End-to-end orchestration: config, staged execution, checkpoints, resume.

A run executes nine stages in order — ``expand``, ``query``, ``fetch``,
``screen``, ``cluster``, ``summarize``, ``postedit``, ``assemble``,
``evaluate`` — writing one checkpoint artifact per stage under
``<out_dir>/<run_id>/`` plus a ``manifest.json`` recording per-stage
status, wall time, and content digests.

Resuming re-verifies the digests of completed stages and skips them;
a tampered or missing artifact resets that stage and every later stage.
Wall-clock timings live only in the manifest, so every other artifact is
byte-identical across runs of the same configuration.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .document import (
    ReviewDocument,
    assemble_and_export,
    assign_citation_keys,
    generate_bibtex,
    generate_framing_sections,
    render_review,
    validate_latex,
)
from .errors import (
    ConfigError,
    ManifestCorrupt,
    StageFailure,
    SweepPointWarning,
    TooFewDocuments,
    UnknownRun,
)
from .evaluation import (
    RANDOM_BASELINE_WORDS,
    coherence_cv,
    fres,
    render_stage_figure,
    rouge1,
    stage_similarity_report,
)
from .gateway import MODEL_PRESETS, LlmGateway
from .search import (
    Corpus,
    FixtureTransport,
    HttpTransport,
    PaperRecord,
    ScoredPaper,
    bundled_feed_bytes,
    embed_texts,
    embedding_input,
    fetch_papers,
    filter_top_k,
    get_embedding_provider,
)
from .storage import (
    read_json,
    read_jsonl,
    sha256_of_file,
    write_json,
    write_jsonl,
)
from .synthesis import (
    CITATION_RE,
    SectionDraft,
    SummaryUnit,
    aggregate_topic,
    get_summarizer,
    post_edit_section,
    summarize_abstract,
)
from .textutil import collapse_whitespace, tokenize
from .topics import (
    TopicModelParams,
    TopicReport,
    build_clusters,
    build_topic_report,
    extract_keywords,
    title_topics,
    tune_topic_count,
)

__all__ = [
    "STAGES",
    "PipelineConfig",
    "RunManifest",
    "build_gateway",
    "build_transport",
    "run_pipeline",
    "resume_run",
    "evaluate_run",
    "execute_in_memory",
    "sweep_output_dir",
    "load_manifest",
]

STAGES: tuple[str, ...] = (
    "expand",
    "query",
    "fetch",
    "screen",
    "cluster",
    "summarize",
    "postedit",
    "assemble",
    "evaluate",
)

_VALID_BACKENDS = ("mock", "remote")


@dataclass(frozen=True)
class PipelineConfig:
    """A full, validated description of one pipeline run."""

    topic: str
    backend: str = "mock"
    model: str = "gpt-3.5-like"
    max_results: int = 3000
    top_k: int = 200
    seed: int = 0
    out_dir: str = "runs"
    feed: str | None = None
    embedding_provider: str = "hash"
    summarizer: str = "extractive"
    temperature: float = 0.0
    page_size: int = 100
    target_topic_min: int = 4
    target_topic_max: int = 10
    max_tuning_iterations: int = 8
    keyword_count: int = 10
    rate_limit_per_minute: float = 60.0
    api_base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "SLRPIPE_API_KEY"

    def validate(self) -> None:
        if not self.topic or not self.topic.strip():
            raise ConfigError("topic must be non-empty")
        if self.backend not in _VALID_BACKENDS:
            raise ConfigError(f"backend must be one of {_VALID_BACKENDS}")
        if self.max_results < 1:
            raise ConfigError("max_results must be >= 1")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.page_size < 1:
            raise ConfigError("page_size must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError("temperature must be in [0, 2]")
        if not 1 <= self.target_topic_min <= self.target_topic_max:
            raise ConfigError("target band must satisfy 1 <= min <= max")
        if self.max_tuning_iterations < 1:
            raise ConfigError("max_tuning_iterations must be >= 1")
        if self.keyword_count < 1:
            raise ConfigError("keyword_count must be >= 1")
        if self.rate_limit_per_minute <= 0:
            raise ConfigError("rate_limit_per_minute must be positive")
        if not (
            self.embedding_provider == "hash"
            or self.embedding_provider == "sentence"
            or self.embedding_provider.startswith("sentence:")
        ):
            raise ConfigError(
                f"unknown embedding provider: {self.embedding_provider!r}"
            )
        if not (
            self.summarizer == "extractive"
            or self.summarizer == "transformers"
            or self.summarizer.startswith("transformers:")
        ):
            raise ConfigError(f"unknown summarizer: {self.summarizer!r}")
        if not self.out_dir:
            raise ConfigError("out_dir must be non-empty")
        if self.model not in MODEL_PRESETS and not self.model.strip():
            raise ConfigError("model must be a preset name or a raw model id")
        if self.feed is not None and self.feed.startswith("bundled:"):
            from .search import BUNDLED_FEEDS

            name = self.feed.split(":", 1)[1]
            if name not in BUNDLED_FEEDS:
                raise ConfigError(
                    f"unknown bundled feed {name!r}; expected one of {BUNDLED_FEEDS}"
                )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "PipelineConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)  # type: ignore[arg-type]

    def canonical_json(self) -> str:
        """Canonical JSON of everything that defines the run's identity.

        ``out_dir`` is excluded: where artifacts land does not change
        what the run computes.
        """
        data = self.to_dict()
        data.pop("out_dir")
        return json.dumps(data, ensure_ascii=False, sort_keys=True)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:8]

    @property
    def run_id(self) -> str:
        slug = "-".join(tokenize(self.topic))[:40].strip("-") or "run"
        return f"{slug}-{self.config_hash}"

    @property
    def run_dir(self) -> Path:
        return Path(self.out_dir) / self.run_id

    def topic_params(self) -> TopicModelParams:
        return TopicModelParams(
            target_topic_min=self.target_topic_min,
            target_topic_max=self.target_topic_max,
            max_tuning_iterations=self.max_tuning_iterations,
            keyword_count=self.keyword_count,
        )


def sweep_output_dir(config: PipelineConfig) -> Path:
    return Path(config.out_dir) / f"{config.run_id}-sweep"


# --------------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------------

def _now_iso() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _fresh_stage_entry() -> dict:
    return {"status": "pending", "wall_time_s": None, "files": {}}


@dataclass
class RunManifest:
    """Per-run bookkeeping: config snapshot, stage statuses, digests."""

    run_id: str
    config: PipelineConfig
    created_at: str
    updated_at: str
    stages: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for stage in STAGES:
            self.stages.setdefault(stage, _fresh_stage_entry())

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "config": self.config.to_dict(),
            "stages": {stage: dict(self.stages[stage]) for stage in STAGES},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "RunManifest":
        try:
            return cls(
                run_id=str(data["run_id"]),
                config=PipelineConfig.from_dict(data["config"]),  # type: ignore[arg-type]
                created_at=str(data["created_at"]),
                updated_at=str(data["updated_at"]),
                stages={
                    stage: dict(entry)
                    for stage, entry in dict(data["stages"]).items()  # type: ignore[arg-type]
                },
            )
        except (KeyError, TypeError, ConfigError) as exc:
            raise ManifestCorrupt(f"manifest is missing or malformed: {exc}") from exc

    def artifact_paths(self, run_dir: Path) -> dict[str, Path]:
        out: dict[str, Path] = {}
        for stage in STAGES:
            for name in self.stages[stage]["files"]:
                out[name] = run_dir / name
        return out


def _manifest_path(run_dir: Path) -> Path:
    return run_dir / "manifest.json"


def save_manifest(manifest: RunManifest, run_dir: Path) -> None:
    manifest.updated_at = _now_iso()
    write_json(_manifest_path(run_dir), manifest.to_dict())


def load_manifest(run_dir: Path) -> RunManifest:
    path = _manifest_path(run_dir)
    if not path.exists():
        raise UnknownRun(f"no manifest found under {run_dir}")
    try:
        data = read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestCorrupt(f"cannot read manifest at {path}: {exc}") from exc
    return RunManifest.from_dict(data)


# --------------------------------------------------------------------------
# Builders
# --------------------------------------------------------------------------

def build_gateway(config: PipelineConfig) -> LlmGateway:
    return LlmGateway(
        backend=config.backend,
        model=config.model,
        temperature=config.temperature,
        seed=config.seed,
        rate_limit_per_minute=config.rate_limit_per_minute,
        base_url=config.api_base_url,
        api_key=os.environ.get(config.api_key_env, ""),
    )


def build_transport(config: PipelineConfig):
    if config.feed is None:
        return HttpTransport()
    if config.feed.startswith("bundled:"):
        return FixtureTransport(bundled_feed_bytes(config.feed.split(":", 1)[1]))
    path = Path(config.feed)
    if not path.exists():
        raise ConfigError(f"feed fixture not found: {config.feed}")
    return FixtureTransport(path)


# --------------------------------------------------------------------------
# Pure stage computations (shared by the disk route and the sweep route)
# --------------------------------------------------------------------------

def _compute_screen(
    config: PipelineConfig,
    expanded_topic: str,
    query_string: str,
    records: Sequence[PaperRecord],
    top_k: int | None = None,
) -> Corpus:
    if not records:
        raise TooFewDocuments("search returned no papers to screen")
    provider = get_embedding_provider(config.embedding_provider)
    topic_vector = embed_texts([expanded_topic], provider)[0]
    vectors = embed_texts([embedding_input(r) for r in records], provider)
    keep = config.top_k if top_k is None else top_k
    selected = filter_top_k(topic_vector, list(records), vectors, keep)
    if len(selected) < 4:
        raise TooFewDocuments(
            f"screening kept {len(selected)} papers; at least 4 are needed"
        )
    return Corpus(
        raw_topic=config.topic,
        expanded_topic=expanded_topic,
        query_string=query_string,
        retrieved=list(records),
        selected=selected,
    )


def _compute_cluster(
    config: PipelineConfig, gateway: LlmGateway, corpus: Corpus
) -> TopicReport:
    papers = corpus.selected_papers()
    provider = get_embedding_provider(config.embedding_provider)
    vectors = embed_texts([embedding_input(p) for p in papers], provider)
    labels, params_used, iterations = tune_topic_count(
        vectors, config.topic_params(), seed=config.seed
    )
    texts = [p.abstract_clean for p in papers]
    keywords = extract_keywords(labels, texts, keyword_count=config.keyword_count)
    clusters, outliers = build_clusters(labels, [p.arxiv_id for p in papers], keywords)
    clusters = title_topics(clusters, gateway)
    return build_topic_report(
        clusters, outliers, params_used, iterations, [p.arxiv_id for p in papers]
    )


def _compute_summaries(config: PipelineConfig, corpus: Corpus) -> list[SummaryUnit]:
    summarizer = get_summarizer(config.summarizer)
    return [
        summarize_abstract(paper.arxiv_id, paper.abstract_clean, summarizer)
        for paper in corpus.selected_papers()
    ]


def _compute_sections(
    config: PipelineConfig,
    gateway: LlmGateway,
    corpus: Corpus,
    report: TopicReport,
    units_by_id: Mapping[str, SummaryUnit],
) -> tuple[dict[str, str], list[SectionDraft]]:
    keys = assign_citation_keys(corpus.selected_papers())
    sections: list[SectionDraft] = []
    for cluster in report.clusters:
        aggregated = aggregate_topic(cluster, units_by_id, keys)
        allowed = [keys[member] for member in cluster.member_ids]
        sections.append(
            post_edit_section(gateway, config.topic, cluster, aggregated, allowed)
        )
    return keys, sections


def _compute_document(
    config: PipelineConfig,
    gateway: LlmGateway,
    corpus: Corpus,
    report: TopicReport,
    keys: Mapping[str, str],
    sections: Sequence[SectionDraft],
) -> tuple[ReviewDocument, dict[str, str]]:
    framing = generate_framing_sections(
        gateway, config.topic, [s.section_title for s in sections]
    )
    papers_by_id = {p.arxiv_id: p for p in corpus.selected_papers()}
    bib_papers = [
        papers_by_id[member]
        for cluster in report.clusters
        for member in cluster.member_ids
    ]
    entries, _bib_text = generate_bibtex(bib_papers, keys)
    document = ReviewDocument(
        title=config.topic,
        intro_text=framing["introduction"],
        background_text=framing["background"],
        conclusion_text=framing["conclusion"],
        sections=list(sections),
        bib_entries=entries,
    )
    return document, framing


def _strip_citations(text: str) -> str:
    return collapse_whitespace(CITATION_RE.sub(" ", text))


def _compose_metrics(
    config: PipelineConfig,
    corpus: Corpus,
    report: TopicReport,
    units: Sequence[SummaryUnit],
    sections: Sequence[SectionDraft],
    framing: Mapping[str, str],
) -> dict:
    """Build the metrics report.  Contains no wall-clock timings."""
    papers = corpus.selected_papers()
    papers_by_id = {p.arxiv_id: p for p in papers}
    abstracts_text = " ".join(p.abstract_clean for p in papers)
    summary_text = " ".join(u.text for u in units)
    sections_joined = " ".join(s.post_edited_text for s in sections)
    sections_text = _strip_citations(sections_joined)
    document_text = _strip_citations(
        " ".join(
            [
                framing["introduction"],
                framing["background"],
                sections_joined,
                framing["conclusion"],
            ]
        )
    )

    coherence = coherence_cv(
        [[term for term, _weight in c.keywords] for c in report.clusters],
        [p.abstract_clean for p in papers],
    )

    provider = get_embedding_provider(config.embedding_provider)
    stage_report = stage_similarity_report(
        corpus.expanded_topic,
        {
            "abstracts": abstracts_text,
            "summary": summary_text,
            "sections": sections_text,
            "document": document_text,
        },
        provider=provider,
        random_seed=config.seed,
        random_word_count=RANDOM_BASELINE_WORDS,
    )

    stage_rouge = {
        "summary": rouge1(summary_text, abstracts_text).to_dict(),
        "sections": rouge1(sections_text, abstracts_text).to_dict(),
        "document": rouge1(document_text, abstracts_text).to_dict(),
    }
    per_paper = [
        rouge1(unit.text, papers_by_id[unit.paper_id].abstract_clean)
        for unit in units
        if unit.paper_id in papers_by_id
    ]
    if per_paper:
        per_paper_mean = {
            "precision": sum(s.precision for s in per_paper) / len(per_paper),
            "recall": sum(s.recall for s in per_paper) / len(per_paper),
            "f1": sum(s.f1 for s in per_paper) / len(per_paper),
        }
    else:
        per_paper_mean = {"precision": 0.0, "recall": 0.0, "f1": 0.0}

    readability = {
        name: fres(text).to_dict()
        for name, text in (
            ("abstracts", abstracts_text),
            ("summary", summary_text),
            ("sections", sections_text),
            ("document", document_text),
        )
    }

    return {
        "run_id": config.run_id,
        "topic": config.topic,
        "expanded_topic": corpus.expanded_topic,
        "counts": {
            "retrieved": corpus.retrieved_count,
            "selected": corpus.selected_count,
            "topics": report.topic_count,
            "outliers": len(report.outlier_ids),
        },
        "topic_model": {
            "iterations_used": report.iterations_used,
            "min_topic_size": report.params_used.min_topic_size,
            "coherence": coherence,
        },
        "rouge": {**stage_rouge, "per_paper_mean": per_paper_mean},
        "readability": readability,
        "stage_similarity": stage_report.to_dict(),
    }


# --------------------------------------------------------------------------
# Disk-backed run context and stage executors
# --------------------------------------------------------------------------

class _RunContext:
    """Caches stage artifacts in memory, loading from disk on demand."""

    def __init__(self, config: PipelineConfig, run_dir: Path, gateway, transport):
        self.config = config
        self.run_dir = run_dir
        self.gateway = gateway
        self.transport = transport
        self._cache: dict[str, object] = {}

    # -- lazy artifact accessors (read back from checkpoints when needed) --

    def expanded_topic(self) -> str:
        if "expanded_topic" not in self._cache:
            self._cache["expanded_topic"] = read_json(self.run_dir / "expand.json")[
                "expanded_topic"
            ]
        return self._cache["expanded_topic"]  # type: ignore[return-value]

    def query_string(self) -> str:
        if "query_string" not in self._cache:
            self._cache["query_string"] = read_json(self.run_dir / "query.json")[
                "query_string"
            ]
        return self._cache["query_string"]  # type: ignore[return-value]

    def records(self) -> list[PaperRecord]:
        if "records" not in self._cache:
            self._cache["records"] = [
                PaperRecord.from_dict(row)
                for row in read_jsonl(self.run_dir / "fetch.jsonl")
            ]
        return self._cache["records"]  # type: ignore[return-value]

    def corpus(self) -> Corpus:
        if "corpus" not in self._cache:
            data = read_json(self.run_dir / "screen.json")
            by_id = {r.arxiv_id: r for r in self.records()}
            selected = [
                ScoredPaper(paper=by_id[row["arxiv_id"]], similarity=row["similarity"])
                for row in data["selected"]
            ]
            self._cache["corpus"] = Corpus(
                raw_topic=data["raw_topic"],
                expanded_topic=data["expanded_topic"],
                query_string=data["query_string"],
                retrieved=self.records(),
                selected=selected,
            )
        return self._cache["corpus"]  # type: ignore[return-value]

    def report(self) -> TopicReport:
        if "report" not in self._cache:
            self._cache["report"] = TopicReport.from_dict(
                read_json(self.run_dir / "cluster.json")
            )
        return self._cache["report"]  # type: ignore[return-value]

    def units(self) -> list[SummaryUnit]:
        if "units" not in self._cache:
            self._cache["units"] = [
                SummaryUnit.from_dict(row)
                for row in read_jsonl(self.run_dir / "summarize.jsonl")
            ]
        return self._cache["units"]  # type: ignore[return-value]

    def units_by_id(self) -> dict[str, SummaryUnit]:
        return {unit.paper_id: unit for unit in self.units()}

    def citation_keys(self) -> dict[str, str]:
        return self._postedit()["citation_keys"]  # type: ignore[return-value]

    def sections(self) -> list[SectionDraft]:
        data = self._postedit()
        return [SectionDraft.from_dict(row) for row in data["sections"]]  # type: ignore[index]

    def _postedit(self) -> dict:
        if "postedit" not in self._cache:
            self._cache["postedit"] = read_json(self.run_dir / "postedit.json")
        return self._cache["postedit"]  # type: ignore[return-value]

    def framing(self) -> dict[str, str]:
        if "framing" not in self._cache:
            self._cache["framing"] = read_json(self.run_dir / "assemble.json")
        return self._cache["framing"]  # type: ignore[return-value]


def _stage_expand(ctx: _RunContext) -> list[str]:
    expanded = ctx.gateway.expand_topic(ctx.config.topic)
    write_json(
        ctx.run_dir / "expand.json",
        {"raw_topic": ctx.config.topic, "expanded_topic": expanded},
    )
    ctx._cache["expanded_topic"] = expanded
    return ["expand.json"]


def _stage_query(ctx: _RunContext) -> list[str]:
    query = ctx.gateway.generate_search_query(ctx.expanded_topic())
    write_json(ctx.run_dir / "query.json", {"query_string": query})
    ctx._cache["query_string"] = query
    return ["query.json"]


def _stage_fetch(ctx: _RunContext) -> list[str]:
    records = fetch_papers(
        ctx.query_string(),
        ctx.transport,
        max_results=ctx.config.max_results,
        page_size=ctx.config.page_size,
    )
    write_jsonl(ctx.run_dir / "fetch.jsonl", [r.to_dict() for r in records])
    ctx._cache["records"] = records
    return ["fetch.jsonl"]


def _stage_screen(ctx: _RunContext) -> list[str]:
    corpus = _compute_screen(
        ctx.config, ctx.expanded_topic(), ctx.query_string(), ctx.records()
    )
    write_json(ctx.run_dir / "screen.json", corpus.to_dict())
    ctx._cache["corpus"] = corpus
    return ["screen.json"]


def _stage_cluster(ctx: _RunContext) -> list[str]:
    report = _compute_cluster(ctx.config, ctx.gateway, ctx.corpus())
    write_json(ctx.run_dir / "cluster.json", report.to_dict())
    ctx._cache["report"] = report
    return ["cluster.json"]


def _stage_summarize(ctx: _RunContext) -> list[str]:
    units = _compute_summaries(ctx.config, ctx.corpus())
    write_jsonl(ctx.run_dir / "summarize.jsonl", [u.to_dict() for u in units])
    ctx._cache["units"] = units
    return ["summarize.jsonl"]


def _stage_postedit(ctx: _RunContext) -> list[str]:
    keys, sections = _compute_sections(
        ctx.config, ctx.gateway, ctx.corpus(), ctx.report(), ctx.units_by_id()
    )
    write_json(
        ctx.run_dir / "postedit.json",
        {
            "citation_keys": keys,
            "sections": [s.to_dict() for s in sections],
        },
    )
    ctx._cache["postedit"] = {
        "citation_keys": keys,
        "sections": [s.to_dict() for s in sections],
    }
    return ["postedit.json"]


def _stage_assemble(ctx: _RunContext) -> list[str]:
    document, framing = _compute_document(
        ctx.config,
        ctx.gateway,
        ctx.corpus(),
        ctx.report(),
        ctx.citation_keys(),
        ctx.sections(),
    )
    assemble_and_export(document, ctx.run_dir)
    write_json(ctx.run_dir / "assemble.json", dict(framing))
    ctx._cache["framing"] = dict(framing)
    return ["review.tex", "review.bib", "assemble.json"]


def _stage_evaluate(ctx: _RunContext) -> list[str]:
    metrics = _compose_metrics(
        ctx.config,
        ctx.corpus(),
        ctx.report(),
        ctx.units(),
        ctx.sections(),
        ctx.framing(),
    )
    write_json(ctx.run_dir / "metrics.json", metrics)
    from .evaluation import StageSimilarityReport

    render_stage_figure(
        StageSimilarityReport(**metrics["stage_similarity"]),
        ctx.run_dir / "stage_similarity.png",
    )
    return ["metrics.json", "stage_similarity.png"]


_STAGE_EXECUTORS: dict[str, Callable[[_RunContext], list[str]]] = {
    "expand": _stage_expand,
    "query": _stage_query,
    "fetch": _stage_fetch,
    "screen": _stage_screen,
    "cluster": _stage_cluster,
    "summarize": _stage_summarize,
    "postedit": _stage_postedit,
    "assemble": _stage_assemble,
    "evaluate": _stage_evaluate,
}


# --------------------------------------------------------------------------
# Run / resume / evaluate entry points
# --------------------------------------------------------------------------

def _verify_and_reset_tampered(manifest: RunManifest, run_dir: Path) -> None:
    """Reset the first stage whose artifacts changed on disk, plus successors."""
    reset_from: int | None = None
    for index, stage in enumerate(STAGES):
        entry = manifest.stages[stage]
        if entry["status"] != "done":
            continue
        for name, digest in entry["files"].items():
            path = run_dir / name
            if not path.exists() or sha256_of_file(path) != digest:
                reset_from = index
                break
        if reset_from is not None:
            break
    if reset_from is not None:
        for stage in STAGES[reset_from:]:
            manifest.stages[stage] = _fresh_stage_entry()


def run_pipeline(
    config: PipelineConfig,
    resume: bool = False,
    gateway: LlmGateway | None = None,
    transport=None,
) -> RunManifest:
    """Execute (or continue) a run, returning its final manifest.

    With ``resume=True`` the manifest must already exist; completed
    stages whose artifact digests still match are skipped.  Any stage
    error is recorded in the manifest and re-raised as
    :class:`StageFailure` naming the stage.
    """
    config.validate()
    run_dir = config.run_dir
    if resume:
        manifest = load_manifest(run_dir)
        recorded = manifest.config.canonical_json()
        if recorded != config.canonical_json():
            raise ManifestCorrupt(
                "manifest config does not match the resuming config"
            )
        _verify_and_reset_tampered(manifest, run_dir)
    else:
        run_dir.mkdir(parents=True, exist_ok=True)
        now = _now_iso()
        manifest = RunManifest(
            run_id=config.run_id, config=config, created_at=now, updated_at=now
        )
    save_manifest(manifest, run_dir)

    ctx = _RunContext(
        config,
        run_dir,
        gateway if gateway is not None else build_gateway(config),
        transport if transport is not None else build_transport(config),
    )

    for stage in STAGES:
        if manifest.stages[stage]["status"] == "done":
            continue
        started = time.perf_counter()
        try:
            file_names = _STAGE_EXECUTORS[stage](ctx)
        except Exception as exc:
            manifest.stages[stage] = {
                "status": "failed",
                "wall_time_s": round(time.perf_counter() - started, 6),
                "files": {},
            }
            save_manifest(manifest, run_dir)
            raise StageFailure(stage, exc) from exc
        manifest.stages[stage] = {
            "status": "done",
            "wall_time_s": round(time.perf_counter() - started, 6),
            "files": {name: sha256_of_file(run_dir / name) for name in file_names},
        }
        save_manifest(manifest, run_dir)
    return manifest


def resume_run(run_id: str, out_dir: str = "runs") -> RunManifest:
    """Continue an interrupted run found under ``out_dir/run_id``."""
    run_dir = Path(out_dir) / run_id
    if not run_dir.exists():
        raise UnknownRun(f"no run directory at {run_dir}")
    manifest = load_manifest(run_dir)
    config = replace(manifest.config, out_dir=out_dir)
    if config.run_id != run_id:
        raise ManifestCorrupt(
            f"manifest config hashes to run id {config.run_id!r}, not {run_id!r}"
        )
    return run_pipeline(config, resume=True)


def evaluate_run(run_id: str, out_dir: str = "runs") -> dict:
    """Recompute the evaluation stage of a completed run.

    All stages before ``evaluate`` must be done; the metrics report and
    stage figure are rewritten and the manifest updated.
    """
    run_dir = Path(out_dir) / run_id
    if not run_dir.exists():
        raise UnknownRun(f"no run directory at {run_dir}")
    manifest = load_manifest(run_dir)
    config = replace(manifest.config, out_dir=out_dir)
    incomplete = [
        stage
        for stage in STAGES[:-1]
        if manifest.stages[stage]["status"] != "done"
    ]
    if incomplete:
        raise StageFailure(
            "evaluate",
            RuntimeError(f"stages not yet complete: {', '.join(incomplete)}"),
        )
    ctx = _RunContext(config, run_dir, build_gateway(config), None)
    started = time.perf_counter()
    try:
        file_names = _stage_evaluate(ctx)
    except Exception as exc:
        manifest.stages["evaluate"] = {
            "status": "failed",
            "wall_time_s": round(time.perf_counter() - started, 6),
            "files": {},
        }
        save_manifest(manifest, run_dir)
        raise StageFailure("evaluate", exc) from exc
    manifest.stages["evaluate"] = {
        "status": "done",
        "wall_time_s": round(time.perf_counter() - started, 6),
        "files": {name: sha256_of_file(run_dir / name) for name in file_names},
    }
    save_manifest(manifest, run_dir)
    return read_json(run_dir / "metrics.json")


# --------------------------------------------------------------------------
# In-memory execution (used by the document-limit sweep)
# --------------------------------------------------------------------------

def execute_in_memory(
    config: PipelineConfig,
    doc_limit: int | None = None,
    prefetched: tuple[str, str, list[PaperRecord]] | None = None,
    gateway: LlmGateway | None = None,
) -> dict:
    """Run the whole pipeline without writing checkpoints; return metrics.

    ``doc_limit`` caps how many papers screening keeps (in place of
    ``config.top_k``); a limit above the retrieved count keeps everything
    and emits a :class:`SweepPointWarning`.  ``prefetched`` supplies an
    already-retrieved ``(expanded_topic, query_string, records)`` triple
    so sweeps can share one corpus across points.  The document is
    rendered and validated exactly as in a disk run, so per-point timings
    in a sweep reflect the full pipeline's work.
    """
    config.validate()
    if doc_limit is not None and doc_limit < 1:
        raise ConfigError("document limit must be >= 1")
    if gateway is None:
        gateway = build_gateway(config)

    if prefetched is None:
        transport = build_transport(config)
        expanded = gateway.expand_topic(config.topic)
        query = gateway.generate_search_query(expanded)
        records = fetch_papers(
            query, transport, max_results=config.max_results, page_size=config.page_size
        )
    else:
        expanded, query, records = prefetched

    if doc_limit is not None and records and doc_limit > len(records):
        warnings.warn(
            f"document limit {doc_limit} exceeds the {len(records)} retrieved "
            "papers; keeping all of them",
            SweepPointWarning,
            stacklevel=2,
        )
    corpus = _compute_screen(config, expanded, query, records, top_k=doc_limit)
    report = _compute_cluster(config, gateway, corpus)
    units = _compute_summaries(config, corpus)
    units_by_id = {unit.paper_id: unit for unit in units}
    keys, sections = _compute_sections(config, gateway, corpus, report, units_by_id)
    document, framing = _compute_document(
        config, gateway, corpus, report, keys, sections
    )
    tex = render_review(document)
    validate_latex(tex, [entry.key for entry in document.bib_entries])
    return _compose_metrics(config, corpus, report, units, sections, framing)
