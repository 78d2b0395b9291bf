from __future__ import annotations

from pathlib import Path

import pytest

from costflow.config import PipelineConfig, load_pipeline_file

REPO_ROOT = Path(__file__).resolve().parent.parent
PIPELINES = REPO_ROOT / "pipelines"


@pytest.fixture(scope="session")
def pipelines_dir() -> Path:
    return PIPELINES


@pytest.fixture(scope="session")
def webgraph_config() -> PipelineConfig:
    return load_pipeline_file(PIPELINES / "webgraph.yaml")


@pytest.fixture()
def runs_dir(tmp_path: Path) -> Path:
    d = tmp_path / "runs"
    d.mkdir()
    return d
