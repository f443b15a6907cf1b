"""Command-line interface.

Exit codes: 0 on success, 1 for configuration/usage problems (bad
options, unknown runs, malformed manifests), 2 when a pipeline stage
fails partway through.
"""

from __future__ import annotations

import sys

import click

from .errors import (
    ConfigError,
    InvalidLimit,
    ManifestCorrupt,
    SlrPipeError,
    StageFailure,
    UnknownRun,
)
from .pipeline import (
    PipelineConfig,
    evaluate_run,
    resume_run,
    run_pipeline,
    sweep_output_dir,
)

__all__ = ["cli", "main"]


def _config_options(func):
    """Options shared by ``run`` and ``sweep``."""
    decorators = [
        click.option("--topic", required=True, help="Research topic to review."),
        click.option(
            "--mock",
            is_flag=True,
            default=False,
            help="Use the deterministic offline language-model backend.",
        ),
        click.option(
            "--model",
            default="gpt-3.5-like",
            show_default=True,
            help="Model preset (gpt-3.5-like, gpt-4o-like) or raw model id.",
        ),
        click.option(
            "--max-results",
            type=int,
            default=3000,
            show_default=True,
            help="Retrieval cap on the number of search results.",
        ),
        click.option(
            "--top-k",
            type=int,
            default=200,
            show_default=True,
            help="Number of papers kept by relevance screening.",
        ),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option(
            "--out",
            "out_dir",
            default="runs",
            show_default=True,
            help="Directory that holds run artifacts.",
        ),
        click.option(
            "--feed",
            default=None,
            help=(
                "Offline search feed: 'bundled:<name>' for a packaged fixture "
                "or a path to an Atom XML file.  Omit to query the live API."
            ),
        ),
        click.option(
            "--embedding",
            "embedding_provider",
            default="hash",
            show_default=True,
            help="Embedding provider: 'hash' or 'sentence[:model]'.",
        ),
        click.option(
            "--summarizer",
            default="extractive",
            show_default=True,
            help="Summarizer: 'extractive' or 'transformers[:model]'.",
        ),
    ]
    for decorator in reversed(decorators):
        func = decorator(func)
    return func


def _build_config(
    topic: str,
    mock: bool,
    model: str,
    max_results: int,
    top_k: int,
    seed: int,
    out_dir: str,
    feed: str | None,
    embedding_provider: str,
    summarizer: str,
) -> PipelineConfig:
    return PipelineConfig(
        topic=topic,
        backend="mock" if mock else "remote",
        model=model,
        max_results=max_results,
        top_k=top_k,
        seed=seed,
        out_dir=out_dir,
        feed=feed,
        embedding_provider=embedding_provider,
        summarizer=summarizer,
    )


@click.group()
@click.version_option(package_name="slrpipe", prog_name="slrpipe")
def cli() -> None:
    """Automated literature-review pipeline: search, screen, cluster,
    summarize, and compile a LaTeX review with evaluation reports."""


@cli.command()
@_config_options
def run(**kwargs) -> None:
    """Execute the full pipeline for a topic."""
    config = _build_config(**kwargs)
    manifest = run_pipeline(config)
    run_dir = config.run_dir
    click.echo(f"run id: {manifest.run_id}")
    click.echo(f"artifacts: {run_dir}")
    click.echo(f"review: {run_dir / 'review.tex'}")
    click.echo(f"bibliography: {run_dir / 'review.bib'}")
    click.echo(f"metrics: {run_dir / 'metrics.json'}")


@cli.command()
@click.argument("run_id")
@click.option("--out", "out_dir", default="runs", show_default=True)
def resume(run_id: str, out_dir: str) -> None:
    """Continue an interrupted run from its last completed stage."""
    manifest = resume_run(run_id, out_dir)
    click.echo(f"run id: {manifest.run_id}")
    click.echo(f"artifacts: {manifest.config.run_dir}")


@cli.command()
@click.option("--run", "run_id", required=True, help="Run id to re-evaluate.")
@click.option("--out", "out_dir", default="runs", show_default=True)
def eval(run_id: str, out_dir: str) -> None:
    """Recompute the evaluation report for a completed run."""
    metrics = evaluate_run(run_id, out_dir)
    counts = metrics["counts"]
    click.echo(
        f"papers: {counts['selected']} selected of {counts['retrieved']} retrieved; "
        f"topics: {counts['topics']} (+{counts['outliers']} outliers)"
    )
    click.echo(f"coherence: {metrics['topic_model']['coherence']:.4f}")
    click.echo(f"rouge-1 f1 (summary stage): {metrics['rouge']['summary']['f1']:.4f}")
    click.echo(f"metrics: {metrics['run_id']} -> {out_dir}/{run_id}/metrics.json")


@cli.command()
@_config_options
@click.option(
    "--limits",
    default="50,100,200,400",
    show_default=True,
    help="Comma-separated document limits to sweep.",
)
def sweep(limits: str, **kwargs) -> None:
    """Run the pipeline at several document limits and chart the metrics."""
    config = _build_config(**kwargs)
    try:
        parsed = [int(piece) for piece in limits.split(",") if piece.strip()]
    except ValueError as exc:
        raise InvalidLimit(f"limits must be integers: {limits!r}") from exc
    from .evaluation import run_limit_sweep

    points, csv_path, figure_path = run_limit_sweep(
        config, parsed, out_dir=sweep_output_dir(config)
    )
    header = f"{'limit':>8} {'time_s':>10} {'topics':>7} {'coherence':>10} {'rouge_f1':>9} {'cosine':>8} {'fres':>8}"
    click.echo(header)
    completed = {point.doc_limit: point for point in points}
    for limit in sorted(parsed):
        point = completed.get(limit)
        if point is None:
            click.echo(f"{limit:>8} {'failed — see sweep_report.csv':>65}")
            continue
        line = (
            f"{point.doc_limit:>8} {point.wall_time_s:>10.3f} {point.topic_count:>7} "
            f"{point.coherence:>10.4f} {point.rouge_f1:>9.4f} "
            f"{point.cosine:>8.4f} {point.fres:>8.2f}"
        )
        if point.note:
            line += f"  ({point.note})"
        click.echo(line)
    click.echo(f"csv: {csv_path}")
    click.echo(f"figure: {figure_path}")


def main(argv: list[str] | None = None) -> None:
    """Entry point with the package's exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(130)
    except click.UsageError as exc:
        exc.show()
        sys.exit(1)
    except (ConfigError, UnknownRun, ManifestCorrupt, InvalidLimit) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except StageFailure as exc:
        click.echo(f"stage failure: {exc}", err=True)
        sys.exit(2)
    except SlrPipeError as exc:
        click.echo(f"pipeline error: {exc}", err=True)
        sys.exit(2)
    sys.exit(0)


if __name__ == "__main__":
    main()
