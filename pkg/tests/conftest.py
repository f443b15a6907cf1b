"""Shared fixtures: one cached full pipeline run per bundled feed."""

from __future__ import annotations

from pathlib import Path

import pytest

from helpers import FEED_TOPICS
from slrpipe.pipeline import PipelineConfig, run_pipeline
from slrpipe.storage import read_json


def bundled_config(feed_name: str, out_dir: Path | str, **overrides) -> PipelineConfig:
    """Mock-backend config wired to one of the bundled fixture feeds."""
    settings: dict = {
        "topic": FEED_TOPICS[feed_name],
        "backend": "mock",
        "feed": f"bundled:{feed_name}",
        "out_dir": str(out_dir),
    }
    settings.update(overrides)
    return PipelineConfig(**settings)


@pytest.fixture(scope="session")
def bundled_run(tmp_path_factory):
    """Factory fixture: run the full mock pipeline at most once per feed.

    Returns ``(config, run_dir, metrics)`` for the requested feed name;
    repeated requests reuse the completed run.
    """
    base = tmp_path_factory.mktemp("bundled-runs")
    cache: dict[str, tuple[PipelineConfig, Path, dict]] = {}

    def run(feed_name: str):
        if feed_name not in cache:
            config = bundled_config(feed_name, base / feed_name)
            run_pipeline(config)
            metrics = read_json(config.run_dir / "metrics.json")
            cache[feed_name] = (config, config.run_dir, metrics)
        return cache[feed_name]

    return run
