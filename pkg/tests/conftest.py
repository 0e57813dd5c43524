"""Shared fixtures: committed corpora, configs, and a pipeline runner."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from harmonizer.augment import AugmentationCache
from harmonizer.config import PipelineConfig
from harmonizer.ingest import load_assignee_table, load_gold_standard
from harmonizer.pipeline import run_pipeline

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def corpus300_paths() -> dict:
    return {
        "input": DATA / "corpus300.tsv",
        "gold": DATA / "corpus300_gold.tsv",
        "cache": DATA / "corpus300_cache.jsonl",
        "config": DATA / "corpus300.yaml",
    }


@pytest.fixture(scope="session")
def corpus60_paths() -> dict:
    return {
        "input": DATA / "corpus60.tsv",
        "gold": DATA / "corpus60_gold.tsv",
        "cache": DATA / "corpus60_cache.jsonl",
        "config": DATA / "corpus60.yaml",
    }


@pytest.fixture(scope="session")
def corpus300_records(corpus300_paths):
    return load_assignee_table(corpus300_paths["input"])


@pytest.fixture(scope="session")
def corpus300_gold(corpus300_paths):
    return load_gold_standard(corpus300_paths["gold"])


@pytest.fixture(scope="session")
def corpus300_config(corpus300_paths) -> PipelineConfig:
    return PipelineConfig.load(corpus300_paths["config"])


@pytest.fixture(scope="session")
def corpus60_config(corpus60_paths) -> PipelineConfig:
    return PipelineConfig.load(corpus60_paths["config"])


def run_fixture_pipeline(paths: dict, out_dir: Path, overrides: dict | None = None,
                         with_gold: bool = True) -> dict:
    """Run the full pipeline on a committed corpus; return parsed artifacts."""
    config = PipelineConfig.load(paths["config"], overrides=overrides or {})
    run_pipeline(
        config,
        input_path=paths["input"],
        cache_path=paths["cache"],
        out_dir=out_dir,
        gold_path=paths["gold"] if with_gold else None,
        offline=True,
    )
    out = {"dir": out_dir}
    for name in ("summary", "manifest"):
        out[name] = json.loads((out_dir / f"{name}.json").read_text())
    if with_gold:
        out["eval"] = json.loads((out_dir / "eval.json").read_text())
    out["mapping_bytes"] = (out_dir / "mapping.tsv").read_bytes()
    return out


@pytest.fixture(scope="session")
def corpus300_run(corpus300_paths, tmp_path_factory):
    out = tmp_path_factory.mktemp("run300")
    return run_fixture_pipeline(corpus300_paths, out)


@pytest.fixture(scope="session")
def corpus60_run(corpus60_paths, tmp_path_factory):
    out = tmp_path_factory.mktemp("run60")
    return run_fixture_pipeline(corpus60_paths, out)


@pytest.fixture()
def fresh_cache(tmp_path) -> AugmentationCache:
    return AugmentationCache(tmp_path / "cache.jsonl")
