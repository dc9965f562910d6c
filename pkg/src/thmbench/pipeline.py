"""Month-level orchestration with stage-granular resume.

Seven build stages run in order (harvest, tex, mine, forge, triviality,
calibrate, gate); each reads its predecessor's persisted artifact, writes
its own, and records counts in the ledger. Re-running a completed month
performs zero gateway calls.
"""

from __future__ import annotations

import logging
import os
import re
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import yaml

from . import annotate, forge, gatekeeper, harvest, latexcheck, miner, texdoc
from .errors import ConfigError, ExtractionRefused, SketchUnavailable, StageFailed
from .errors import ClassificationFailed, GenerationFailed
from .gateway import Gateway, gateway_from_config
from .storage import MonthLayout, atomic_write_json, read_json

log = logging.getLogger("thmbench")

ROLES = ("extractor", "classifier", "sketcher", "generator", "judge",
         "calibrator", "evaluatee")

STAGES = ("harvest", "tex", "mine", "forge", "triviality", "calibrate", "gate")

_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _interpolate(node):
    """Replace ${VAR} with environment values in every string leaf."""
    if isinstance(node, dict):
        return {k: _interpolate(v) for k, v in node.items()}
    if isinstance(node, list):
        return [_interpolate(v) for v in node]
    if isinstance(node, str):
        return _ENV_RE.sub(lambda m: os.environ.get(m.group(1), ""), node)
    return node


@dataclass
class PipelineConfig:
    months: list[str]
    data_root: Path
    results_root: Path
    backends: dict[str, dict]
    rubric_keep: int = 5
    substitution_fraction: float = 0.3
    substitution_seed: int = 0
    harvest_options: dict = field(default_factory=dict)
    miner_options: dict = field(default_factory=dict)
    sketch_max_chars: int = 8000
    gate_engine: list[str] | None = None
    gate_extra_whitelist: frozenset[str] = frozenset()
    calibration_seed: int = 0
    calibration_effort: str = "medium"
    stage_workers: int = 1
    raw: dict = field(default_factory=dict)
    _gateways: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "PipelineConfig":
        data = _interpolate(data)
        base = Path(base_dir) if base_dir else Path(".")
        backends = data.get("backends") or {}
        default_backend = data.get("default_backend")
        for role in ROLES:
            if role not in backends:
                if default_backend is None:
                    raise ConfigError(f"no backend configured for role {role!r}")
                backends[role] = default_backend
        thresholds = data.get("thresholds") or {}
        calibration = data.get("calibration") or {}
        gate = data.get("gate") or {}
        return cls(
            months=list(data.get("months") or []),
            data_root=base / data.get("data_root", "data"),
            results_root=base / data.get("results_root", "results"),
            backends=backends,
            rubric_keep=int(thresholds.get("rubric_keep", 5)),
            substitution_fraction=float(
                thresholds.get("substitution_fraction", 0.3)),
            substitution_seed=int(thresholds.get("substitution_seed", 0)),
            harvest_options=data.get("harvest") or {},
            miner_options=data.get("miner") or {},
            sketch_max_chars=int(
                (data.get("annotate") or {}).get("sketch_max_chars", 8000)),
            gate_engine=gate.get("engine"),
            gate_extra_whitelist=frozenset(gate.get("extra_whitelist") or []),
            calibration_seed=int(calibration.get("seed", 0)),
            calibration_effort=str(calibration.get("effort", "medium")),
            stage_workers=int((data.get("concurrency") or {}).get("stages", 1)),
            raw=data,
        )

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        data = yaml.safe_load(path.read_text()) or {}
        return cls.from_dict(data, base_dir=path.parent)

    def gateway(self, role: str) -> Gateway:
        if role not in self._gateways:
            if role not in self.backends:
                raise ConfigError(f"no backend configured for role {role!r}")
            self._gateways[role] = gateway_from_config(self.backends[role])
        return self._gateways[role]

    def miner_config(self) -> miner.MinerConfig:
        options = dict(self.miner_options)
        thresholds = self.raw.get("thresholds") or {}
        if "context_budget" in thresholds:
            options.setdefault("context_budget", thresholds["context_budget"])
        known = {f for f in miner.MinerConfig.__dataclass_fields__}
        return miner.MinerConfig(**{k: v for k, v in options.items()
                                    if k in known})

    def layout(self, month: str) -> MonthLayout:
        return MonthLayout(self.data_root, month, self.rubric_keep)


# --- ledger ------------------------------------------------------------------

def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class StageLedger:
    month: str
    stages: dict[str, dict] = field(default_factory=dict)

    def entry(self, name: str) -> dict:
        return self.stages.setdefault(name, {"status": "pending"})

    def is_done(self, name: str) -> bool:
        return self.stages.get(name, {}).get("status") == "done"

    def mark_running(self, name: str) -> None:
        entry = self.entry(name)
        entry["status"] = "running"
        entry["started"] = _now()

    def mark_done(self, name: str, input_count: int, output_count: int) -> None:
        entry = self.entry(name)
        entry.update(status="done", input_count=input_count,
                     output_count=output_count, finished=_now())

    def mark_failed(self, name: str, reason: str) -> None:
        entry = self.entry(name)
        entry.update(status="failed", reason=reason, finished=_now())

    def save(self, path) -> None:
        atomic_write_json(path, {"month": self.month, "stages": self.stages})

    @classmethod
    def load_or_new(cls, path, month: str) -> "StageLedger":
        path = Path(path)
        if path.exists():
            data = read_json(path)
            return cls(month=data.get("month", month),
                       stages=data.get("stages", {}))
        return cls(month=month)


# --- stages ----------------------------------------------------------------------

def _feed_client(config: PipelineConfig):
    source = config.harvest_options.get("source") or {}
    kind = source.get("type", "arxiv")
    if kind == "fixture":
        feed_file = source.get("feed_file")
        if not feed_file:
            raise ConfigError("fixture harvest source needs feed_file")
        return harvest.FixtureFeedClient(Path(feed_file).read_text())
    if kind == "arxiv":
        return harvest.ArxivFeedClient(
            politeness_delay=float(
                config.harvest_options.get("politeness_delay", 3.0)))
    raise ConfigError(f"unknown harvest source type {kind!r}")


def _eprint_store(config: PipelineConfig):
    source = config.harvest_options.get("source") or {}
    if source.get("type") == "fixture":
        eprint_dir = source.get("eprint_dir")
        if not eprint_dir:
            raise ConfigError("fixture harvest source needs eprint_dir")
        return harvest.FixtureEprintStore(eprint_dir)
    return harvest.HttpEprintStore()


def stage_harvest(config: PipelineConfig, month: str,
                  layout: MonthLayout) -> tuple[int, int]:
    options = config.harvest_options
    harvest_config = harvest.HarvestConfig(
        month=month,
        category_pattern=options.get("category_pattern", "math.*"),
        max_papers=int(options.get("max_papers", 200)),
        widening_schedule=list(options.get("widening_schedule", [0, 3, 7])),
        page_size=int(options.get("page_size", 100)),
        politeness_delay=float(options.get("politeness_delay", 3.0)),
    )
    records = harvest.fetch_month(harvest_config, _feed_client(config))
    atomic_write_json(layout.papers_path, [r.to_json() for r in records])
    return len(records), len(records)


def _bounded_map(fn, items, workers: int) -> list:
    """Order-preserving map over a bounded worker pool (serial when 1)."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def stage_tex(config: PipelineConfig, month: str,
              layout: MonthLayout) -> tuple[int, int]:
    papers = [harvest.PaperRecord.from_json(p)
              for p in read_json(layout.papers_path)]
    store = _eprint_store(config)

    def process(paper):
        try:
            blob = store.fetch(paper)
            notes: dict[str, str] = {}
            files = texdoc.unpack_archive(blob, notes)
            doc = texdoc.assemble_document(files, arxiv_id=paper.arxiv_id,
                                           encoding_notes=notes)
        except Exception as exc:
            log.warning("tex: skipping %s: %s", paper.arxiv_id, exc)
            return None
        atomic_write_json(layout.tex_dir / f"{paper.arxiv_id}.json",
                          doc.to_json())
        return paper.arxiv_id

    produced = [r for r in _bounded_map(process, papers, config.stage_workers)
                if r is not None]
    return len(papers), len(produced)


def stage_mine(config: PipelineConfig, month: str,
               layout: MonthLayout) -> tuple[int, int]:
    papers = {p["arxiv_id"]: p for p in read_json(layout.papers_path)}
    miner_config = config.miner_config()
    tex_files = sorted(layout.tex_dir.glob("*.json"))

    def process(tex_path):
        doc = texdoc.TexDocument.from_json(read_json(tex_path))
        paper = papers.get(doc.arxiv_id, {"arxiv_id": doc.arxiv_id})
        try:
            record = miner.mine_theorem(doc, paper,
                                        config.gateway("extractor"),
                                        miner_config)
        except ExtractionRefused as exc:
            log.warning("mine: dropping %s: %s", doc.arxiv_id, exc)
            return None
        material, sections = annotate.proof_material(doc, record.candidate)
        try:
            record.sketch = annotate.summarize_sketch(
                record.expanded_statement, material, sections,
                config.gateway("sketcher"), config.sketch_max_chars)
        except SketchUnavailable:
            record.flags.append("no_sketch")
        try:
            labels = annotate.classify(record.expanded_statement,
                                       config.gateway("classifier"))
        except ClassificationFailed as exc:
            log.warning("classify: dropping %s: %s", doc.arxiv_id, exc)
            return None
        record.categories = [c.value for c in labels]
        atomic_write_json(layout.theorems_dir / f"{doc.arxiv_id}.json",
                          record.to_json())
        return doc.arxiv_id

    produced = [r for r in _bounded_map(process, tex_files,
                                        config.stage_workers)
                if r is not None]
    return len(tex_files), len(produced)


def stage_forge(config: PipelineConfig, month: str,
                layout: MonthLayout) -> tuple[int, int]:
    records = [miner.TheoremRecord.from_json(read_json(p))
               for p in sorted(layout.theorems_dir.glob("*.json"))]

    def process(record):
        try:
            return forge.forge_item(
                record, config.gateway("generator"), config.gateway("judge"),
                month, keep_threshold=config.rubric_keep,
                substitution_fraction=config.substitution_fraction,
                substitution_seed=config.substitution_seed)
        except GenerationFailed as exc:
            log.warning("forge: dropping %s: %s", record.arxiv_id, exc)
            return None

    items = [i for i in _bounded_map(process, records, config.stage_workers)
             if i is not None]
    atomic_write_json(layout.full_path, [i.to_json() for i in items])
    kept = [i for i in items if not i.discarded]
    atomic_write_json(layout.filtered_path, [i.to_json() for i in kept])
    return len(records), len(kept)


def stage_triviality(config: PipelineConfig, month: str,
                     layout: MonthLayout) -> tuple[int, int]:
    items = [forge.McqItem.from_json(entry)
             for entry in read_json(layout.filtered_path)]

    def process(item):
        verdict = gatekeeper.triviality_filter(item, config.gateway("judge"))
        if verdict.excluded:
            log.info("triviality: excluding %s (stem-trivial)", item.id)
            return None
        item.flags.extend(verdict.flags)
        return item

    survivors = [i for i in _bounded_map(process, items,
                                         config.stage_workers)
                 if i is not None]
    atomic_write_json(layout.work_dir / "nontrivial.json",
                      [i.to_json() for i in survivors])
    return len(items), len(survivors)


def stage_calibrate(config: PipelineConfig, month: str,
                    layout: MonthLayout) -> tuple[int, int]:
    items = [forge.McqItem.from_json(entry)
             for entry in read_json(layout.work_dir / "nontrivial.json")]
    records = {}
    for path in layout.theorems_dir.glob("*.json"):
        record = miner.TheoremRecord.from_json(read_json(path))
        records[record.arxiv_id] = record

    def process(item):
        group = gatekeeper.overgenerate(
            item, records.get(item.source_theorem),
            config.gateway("generator"), config.gateway("judge"),
            config.rubric_keep)
        gatekeeper.first_pass_test(group, config.gateway("calibrator"),
                                   config.calibration_seed,
                                   config.calibration_effort)
        hardest = gatekeeper.select_hardest(group)
        if hardest is None:
            log.info("calibrate: dropping %s (all variants solved)",
                     item.source_theorem)
        return hardest

    survivors = [i for i in _bounded_map(process, items,
                                         config.stage_workers)
                 if i is not None]
    atomic_write_json(layout.work_dir / "hard_candidates.json",
                      [i.to_json() for i in survivors])
    return len(items), len(survivors)


def stage_gate(config: PipelineConfig, month: str,
               layout: MonthLayout) -> tuple[int, int]:
    items = [forge.McqItem.from_json(entry)
             for entry in read_json(layout.work_dir / "hard_candidates.json")]

    def process(item):
        result = latexcheck.latex_gate(
            item, config.gateway("generator"), engine=config.gate_engine,
            extra_whitelist=config.gate_extra_whitelist)
        if result.verdict == "rejected":
            log.warning("gate: rejecting %s: %s", item.id, result.problems)
            return None
        result.item.flags.append(f"latex_gate:{result.mode}:{result.verdict}")
        return result.item

    final = [i for i in _bounded_map(process, items, config.stage_workers)
             if i is not None]
    atomic_write_json(layout.hard_path, [i.to_json() for i in final])
    shutil.rmtree(layout.work_dir, ignore_errors=True)
    return len(items), len(final)


_STAGE_FUNCTIONS = {
    "harvest": stage_harvest,
    "tex": stage_tex,
    "mine": stage_mine,
    "forge": stage_forge,
    "triviality": stage_triviality,
    "calibrate": stage_calibrate,
    "gate": stage_gate,
}


def run_pipeline(config: PipelineConfig, month: str) -> StageLedger:
    """Run (or resume) every build stage for one month."""
    layout = config.layout(month)
    ledger = StageLedger.load_or_new(layout.ledger_path, month)
    for name in STAGES:
        if ledger.is_done(name):
            log.info("%s/%s: already done, skipping", month, name)
            continue
        ledger.mark_running(name)
        ledger.save(layout.ledger_path)
        try:
            input_count, output_count = _STAGE_FUNCTIONS[name](
                config, month, layout)
        except Exception as exc:
            ledger.mark_failed(name, str(exc))
            ledger.save(layout.ledger_path)
            raise StageFailed(f"{month}/{name}: {exc}") from exc
        ledger.mark_done(name, input_count, output_count)
        ledger.save(layout.ledger_path)
        log.info("%s/%s: done (%d -> %d)", month, name, input_count,
                 output_count)
    return ledger


def layout_check(config: PipelineConfig, month: str) -> dict:
    """Verify the month's artifact set; flag leftovers like work/."""
    layout = config.layout(month)
    missing = [str(p) for p in layout.required_artifacts() if not p.exists()]
    expected_names = {"papers.json", "tex", "theorems", "full", "filtered",
                      "hard", "ledger.json"}
    unexpected = []
    if layout.month_dir.exists():
        for child in sorted(layout.month_dir.iterdir()):
            if child.name not in expected_names:
                unexpected.append(str(child))
    return {"month": month, "ok": not missing and not unexpected,
            "missing": missing, "unexpected": unexpected}
