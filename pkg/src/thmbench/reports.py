"""Composition, category, and results reporting.

Everything is emitted as CSV: stage composition per month, multi-label
category distributions over the hard split, and roll-ups joining all
evaluation runs found under the results root (including sketch gains and
mean completion tokens per model).
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

from .errors import MissingMetadata
from .evalrun import BenchmarkItem, aggregate, load_hard_split
from .pipeline import PipelineConfig
from .storage import read_json
from .taxonomy import Category

log = logging.getLogger("thmbench")


def _count_entries(path: Path) -> int | None:
    if not path.exists():
        return None
    try:
        return len(read_json(path))
    except ValueError:
        return None


def composition_rows(config: PipelineConfig, months: list[str]) -> list[dict]:
    """full / rubric-kept / hard counts per month."""
    rows = []
    for month in months:
        layout = config.layout(month)
        rows.append({
            "month": month,
            "full": _count_entries(layout.full_path),
            "rubric_kept": _count_entries(layout.filtered_path),
            "hard": _count_entries(layout.hard_path),
        })
    return rows


def category_distribution_rows(items: list[BenchmarkItem]) -> list[dict]:
    """Counts are category memberships, not unique items."""
    counts: dict[str, int] = {}
    for item in items:
        for category in item.categories:
            cat = Category.parse(category)
            name = cat.display_name if cat else category
            counts[name] = counts.get(name, 0) + 1
    return [{"category": name, "memberships": count}
            for name, count in sorted(counts.items(),
                                      key=lambda kv: (-kv[1], kv[0]))]


def _run_key(run: dict) -> tuple:
    info = run.get("test_info", {})
    return (info.get("model"), info.get("month"),
            info.get("reasoning_effort"), info.get("seed"))


def _mean_completion_tokens(run: dict) -> float:
    records = run.get("detailed_results", [])
    if not records:
        return 0.0
    return sum(r.get("completion_tokens", 0) for r in records) / len(records)


def load_runs(results_root) -> list[dict]:
    runs = []
    root = Path(results_root)
    if not root.exists():
        return runs
    for path in sorted(root.glob("*/accuracy_test_*.json")):
        try:
            runs.append(json.loads(path.read_text()))
        except ValueError:
            log.warning("reports: skipping unreadable run file %s", path)
    return runs


def results_rows(runs: list[dict]) -> list[dict]:
    rows = []
    for run in runs:
        info = run.get("test_info", {})
        overall = run.get("overall", {})
        rows.append({
            "model": info.get("model"),
            "month": info.get("month"),
            "mode": info.get("mode"),
            "effort": info.get("reasoning_effort"),
            "seed": info.get("seed"),
            "correct": overall.get("correct"),
            "total": overall.get("total"),
            "accuracy": overall.get("accuracy"),
            "mean_completion_tokens": round(_mean_completion_tokens(run), 1),
        })
    return rows


def sketch_gain_rows(runs: list[dict]) -> list[dict]:
    """Pairs (model, month, effort, seed) across the two modes."""
    by_mode: dict[tuple, dict[str, dict]] = {}
    for run in runs:
        mode = run.get("test_info", {}).get("mode", "selection")
        by_mode.setdefault(_run_key(run), {})[mode] = run
    rows = []
    for key, modes in sorted(by_mode.items(), key=lambda kv: str(kv[0])):
        if "selection" not in modes or "sketch_aware" not in modes:
            continue
        base = modes["selection"]["overall"]["accuracy"]
        aware = modes["sketch_aware"]["overall"]["accuracy"]
        model, month, effort, seed = key
        rows.append({
            "model": model, "month": month, "effort": effort, "seed": seed,
            "accuracy_selection": base,
            "accuracy_sketch_aware": aware,
            "sketch_gain": aware - base,
        })
    return rows


def category_accuracy_rows(config: PipelineConfig,
                           runs: list[dict]) -> list[dict]:
    rows = []
    split_cache: dict[str, list[BenchmarkItem]] = {}
    for run in runs:
        info = run.get("test_info", {})
        month = info.get("month")
        if month not in split_cache:
            layout = config.layout(month)
            if not layout.hard_path.exists():
                log.warning("reports: no hard split for %s; skipping run", month)
                continue
            split_cache[month] = load_hard_split(layout.hard_path)
        try:
            tables = aggregate(run, split_cache[month])
        except MissingMetadata as exc:
            log.warning("reports: run for %s references unknown item %s; "
                        "skipping run", month, exc)
            continue
        for section in ("per_category", "per_choice_style"):
            for key, cell in tables[section].items():
                rows.append({
                    "model": info.get("model"), "month": month,
                    "mode": info.get("mode"), "effort": info.get("reasoning_effort"),
                    "breakdown": section, "group": key,
                    "correct": cell["correct"], "total": cell["total"],
                    "accuracy": cell["accuracy"],
                })
    return rows


def _write_csv(path: Path, rows: list[dict], header: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def emit_reports(config: PipelineConfig, months: list[str],
                 out_dir=None) -> dict[str, Path]:
    """Write all report CSVs; missing inputs yield empty sections."""
    out = Path(out_dir) if out_dir else Path(config.results_root) / "reports"
    written: dict[str, Path] = {}

    rows = composition_rows(config, months)
    path = out / "composition.csv"
    _write_csv(path, rows, ["month", "full", "rubric_kept", "hard"])
    written["composition"] = path

    distribution: list[dict] = []
    item_total = 0
    for month in months:
        layout = config.layout(month)
        if not layout.hard_path.exists():
            log.warning("reports: hard split missing for %s", month)
            continue
        items = load_hard_split(layout.hard_path)
        item_total += len(items)
        for row in category_distribution_rows(items):
            row = dict(row, month=month)
            distribution.append(row)
    path = out / "category_distribution.csv"
    _write_csv(path, distribution, ["month", "category", "memberships"])
    written["category_distribution"] = path

    runs = load_runs(config.results_root)
    if not runs:
        log.warning("reports: no evaluation runs under %s", config.results_root)
    path = out / "results_summary.csv"
    _write_csv(path, results_rows(runs),
               ["model", "month", "mode", "effort", "seed", "correct",
                "total", "accuracy", "mean_completion_tokens"])
    written["results_summary"] = path

    path = out / "sketch_gains.csv"
    _write_csv(path, sketch_gain_rows(runs),
               ["model", "month", "effort", "seed", "accuracy_selection",
                "accuracy_sketch_aware", "sketch_gain"])
    written["sketch_gains"] = path

    path = out / "category_accuracy.csv"
    _write_csv(path, category_accuracy_rows(config, runs),
               ["model", "month", "mode", "effort", "breakdown", "group",
                "correct", "total", "accuracy"])
    written["category_accuracy"] = path
    return written
