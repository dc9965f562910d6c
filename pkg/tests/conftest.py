"""Shared fixtures: the committed synthetic month and its mock scripts."""

import gzip
import io
import tarfile
from pathlib import Path

import pytest
import yaml

from thmbench.pipeline import ROLES, PipelineConfig

FIXTURES = Path(__file__).parent / "fixtures"
MONTH_DIR = FIXTURES / "month2026_01"
FIXTURE_MONTH = "2026-01"


def build_eprints(dest: Path) -> None:
    """Package the committed .tex sources the way arXiv serves them."""
    dest.mkdir(parents=True, exist_ok=True)

    def tarball(paper_dir: Path) -> bytes:
        buffer = io.BytesIO()
        with tarfile.open(fileobj=buffer, mode="w:gz") as archive:
            for path in sorted(paper_dir.glob("*.tex")):
                archive.add(path, arcname=path.name)
        return buffer.getvalue()

    papers = MONTH_DIR / "papers"
    (dest / "2601.00001.tar.gz").write_bytes(tarball(papers / "2601.00001"))
    # the second paper ships as a bare gzip'd single file
    single = (papers / "2601.00002" / "main.tex").read_bytes()
    (dest / "2601.00002.gz").write_bytes(gzip.compress(single))
    (dest / "2601.00003.tar.gz").write_bytes(tarball(papers / "2601.00003"))


def fixture_config_dict(tmp_path: Path) -> dict:
    scripts = yaml.safe_load((MONTH_DIR / "mock_scripts.yaml").read_text())
    eprints = tmp_path / "eprints"
    if not eprints.exists():
        build_eprints(eprints)
    return {
        "months": [FIXTURE_MONTH],
        "data_root": str(tmp_path / "data"),
        "results_root": str(tmp_path / "results"),
        "thresholds": {
            "rubric_keep": 5,
            "substitution_fraction": 0.0,
            "substitution_seed": 1,
        },
        "harvest": {
            "max_papers": 10,
            "category_pattern": "math.*",
            "widening_schedule": [0, 3],
            "politeness_delay": 0.0,
            "source": {
                "type": "fixture",
                "feed_file": str(MONTH_DIR / "feed.xml"),
                "eprint_dir": str(eprints),
            },
        },
        "calibration": {"seed": 7, "effort": "medium"},
        "backends": {role: {"type": "mock", "script": scripts[role]}
                     for role in ROLES},
    }


@pytest.fixture
def fixture_month(tmp_path):
    config = PipelineConfig.from_dict(fixture_config_dict(tmp_path))
    return config, tmp_path
