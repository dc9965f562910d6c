"""On-disk layout and atomic JSON helpers."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path


def atomic_write_json(path, payload) -> None:
    """Write-temp-then-rename so a crash never leaves a torn file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=1))
    os.replace(tmp, path)


def read_json(path):
    return json.loads(Path(path).read_text())


@dataclass(frozen=True)
class MonthLayout:
    """Canonical artifact paths for one benchmark month."""

    data_root: Path
    month: str
    rubric_threshold: int = 5

    @property
    def month_dir(self) -> Path:
        return Path(self.data_root) / self.month

    @property
    def papers_path(self) -> Path:
        return self.month_dir / "papers.json"

    @property
    def tex_dir(self) -> Path:
        return self.month_dir / "tex"

    @property
    def theorems_dir(self) -> Path:
        return self.month_dir / "theorems"

    @property
    def full_path(self) -> Path:
        return self.month_dir / "full" / f"qa_{self.month}.json"

    @property
    def filtered_path(self) -> Path:
        return (self.month_dir / "filtered"
                / f"qa_{self.month}_ge{self.rubric_threshold}.json")

    @property
    def hard_path(self) -> Path:
        return (self.month_dir / "hard"
                / f"qaEval_{self.month}_ge{self.rubric_threshold}_hard.json")

    @property
    def ledger_path(self) -> Path:
        return self.month_dir / "ledger.json"

    @property
    def work_dir(self) -> Path:
        return self.month_dir / "work"

    def required_artifacts(self) -> list[Path]:
        return [self.papers_path, self.tex_dir, self.theorems_dir,
                self.full_path, self.filtered_path, self.hard_path]
