"""Dual-mode evaluation harness over a month's hard split.

Options are shuffled with a per-item seed (global seed + dataset index),
relabeled A-E, and served as a five-way selection task; sketch-aware mode
appends the proof sketch as a delimited hint. Runs are resumable: results
are rewritten atomically after every completed item.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .answers import LABELS, extract_answer, judge_label
from .errors import MissingMetadata, MissingSketch, MissingSplit, SchemaError
from .gateway import ChatRequest, Gateway
from .promptlib import EVAL_SYSTEM_PROMPT
from .shuffling import item_permutation
from .storage import atomic_write_json

MODE_SELECTION = "selection"
MODE_SKETCH_AWARE = "sketch_aware"
SKETCH_DELIMITER = "Proof sketch (hint):"


@dataclass
class BenchmarkItem:
    item_id: str
    question: str
    correct_text: str
    distractors: list[str]      # stored order B..E
    meta_score: int
    month: str = ""
    categories: list[str] = field(default_factory=list)
    substitution_resistant: bool = False
    sketch: str | None = None


def parse_entry(entry: dict, where: str) -> BenchmarkItem:
    if not isinstance(entry, dict):
        raise SchemaError(f"{where}: entry is not an object")
    item_id = entry.get("id")
    mcq = entry.get("mcq")
    if not item_id or not isinstance(mcq, dict):
        raise SchemaError(f"{where}: missing id or mcq object")
    question = mcq.get("question")
    correct = mcq.get("correct_choice")
    choices = mcq.get("choices")
    meta = mcq.get("meta") or {}
    if not isinstance(question, str) or not question:
        raise SchemaError(f"{where} (id={item_id}): missing mcq.question")
    if not isinstance(correct, dict) or not correct.get("text"):
        raise SchemaError(f"{where} (id={item_id}): missing mcq.correct_choice")
    if not isinstance(choices, list) or len(choices) != 4:
        raise SchemaError(f"{where} (id={item_id}): mcq.choices must have 4 entries")
    if "score" not in meta:
        raise SchemaError(f"{where} (id={item_id}): missing mcq.meta.score")
    return BenchmarkItem(
        item_id=str(item_id),
        question=question,
        correct_text=correct["text"],
        distractors=[c["text"] for c in choices],
        meta_score=int(meta["score"] or 0),
        month=entry.get("month", ""),
        categories=list(entry.get("categories", [])),
        substitution_resistant=bool(entry.get("substitution_resistant", False)),
        sketch=entry.get("sketch"),
    )


def load_hard_split(path) -> list[BenchmarkItem]:
    """Items in file order; that order defines each item's dataset index."""
    path = Path(path)
    if not path.exists():
        raise MissingSplit(str(path))
    try:
        raw = json.loads(path.read_text())
    except ValueError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise SchemaError(f"{path}: top level must be an array")
    return [parse_entry(entry, f"{path}[{i}]") for i, entry in enumerate(raw)]


@dataclass
class PresentedItem:
    item_id: str
    stem: str
    options: list[tuple[str, str]]   # (label, text), labels A-E in order
    truth_label: str
    permutation: list[int]
    mode: str
    sketch: str | None = None


def shuffle_options(item: BenchmarkItem, global_seed: int, index: int,
                    mode: str = MODE_SELECTION) -> PresentedItem:
    """Deterministic Fisher-Yates relabeling; truth follows the correct text.

    Canonical pre-shuffle order is (correct, B, C, D, E) as stored.
    """
    canonical = [item.correct_text] + list(item.distractors)
    perm = item_permutation(global_seed, index, len(canonical))
    options = [(LABELS[pos], canonical[src]) for pos, src in enumerate(perm)]
    truth_label = LABELS[perm.index(0)]
    return PresentedItem(
        item_id=item.item_id,
        stem=item.question,
        options=options,
        truth_label=truth_label,
        permutation=perm,
        mode=mode,
        sketch=item.sketch,
    )


def build_prompt(presented: PresentedItem) -> tuple[str, str]:
    """Fixed expert system prompt; stem plus five "(L) text" option blocks."""
    blocks = [presented.stem]
    blocks += [f"({label}) {text}" for label, text in presented.options]
    if presented.mode == MODE_SKETCH_AWARE:
        if not presented.sketch:
            raise MissingSketch(presented.item_id)
        blocks.append(f"{SKETCH_DELIMITER}\n{presented.sketch}")
    return EVAL_SYSTEM_PROMPT, "\n\n".join(blocks)


@dataclass
class EvalConfig:
    month: str
    model_id: str = "default"
    reasoning_effort: str | None = None
    global_seed: int = 0
    max_output_tokens: int = 8192
    sample_count: int = 1
    concurrency: int = 1
    mode: str = MODE_SELECTION
    resume: bool = False
    output_path: str | Path = ""
    temperature: float | None = None
    top_p: float | None = None
    per_request_timeout: float = 300.0

    @property
    def effort_tag(self) -> str:
        return self.reasoning_effort or "default"


def sanitize_model_name(model_id: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "._-" else "-"
                   for ch in model_id)


def default_output_path(results_root, config: EvalConfig) -> Path:
    """results/<month>/accuracy_test_<model>_<month>_<effort>.json

    Sketch-aware runs add a _sketch suffix so paired runs never collide.
    """
    model = sanitize_model_name(config.model_id)
    suffix = "_sketch" if config.mode == MODE_SKETCH_AWARE else ""
    name = f"accuracy_test_{model}_{config.month}_{config.effort_tag}{suffix}.json"
    return Path(results_root) / config.month / name


def _sample_record(presented: PresentedItem, response) -> dict:
    answer = None if response.failed else extract_answer(response.text)
    return {
        "model_answer": answer,
        "is_correct": judge_label(answer, presented.truth_label),
        "raw_response": response.text,
        "raw_thinking": response.thinking,
        "latency": response.latency,
        "prompt_tokens": response.usage.prompt_tokens,
        "completion_tokens": response.usage.completion_tokens,
        "total_tokens": response.usage.total_tokens,
        "reasoning_tokens": response.usage.reasoning_tokens,
        "error": response.provider_error,
    }


def evaluate_item(item: BenchmarkItem, index: int, config: EvalConfig,
                  gateway: Gateway) -> dict:
    """One EvalRecord dict; with --n > 1 the top level mirrors sample 1."""
    presented = shuffle_options(item, config.global_seed, index, config.mode)
    system_prompt, user_prompt = build_prompt(presented)
    responses = gateway.complete(ChatRequest(
        system_prompt=system_prompt,
        user_prompt=user_prompt,
        model_id=config.model_id,
        reasoning_effort=config.reasoning_effort,
        max_output_tokens=config.max_output_tokens,
        sample_count=config.sample_count,
        per_request_timeout=config.per_request_timeout,
        temperature=config.temperature,
        top_p=config.top_p,
    ))
    samples = [_sample_record(presented, r) for r in responses]
    first = samples[0]
    record = {
        "item_id": item.item_id,
        "dataset_index": index,
        "model_answer": first["model_answer"],
        "correct_answer": presented.truth_label,
        "raw_response": first["raw_response"],
        "raw_thinking": first["raw_thinking"],
        "is_correct": first["is_correct"],
        "latency": first["latency"],
        "prompt_tokens": first["prompt_tokens"],
        "completion_tokens": first["completion_tokens"],
        "total_tokens": first["total_tokens"],
        "reasoning_tokens": first["reasoning_tokens"],
        "reasoning_effort": config.effort_tag,
        "n_samples": config.sample_count,
        "mcq_meta_score": item.meta_score,
        "error": first["error"],
    }
    if config.sample_count > 1:
        record["samples"] = samples
    return record


def _summary(records: list[dict]) -> dict:
    total = len(records)
    correct = sum(1 for r in records if r.get("is_correct"))
    return {
        "correct": correct,
        "total": total,
        "accuracy": (correct / total) if total else 0.0,
    }


def _assemble(config: EvalConfig, records_by_index: dict[int, dict],
              started_at: str, skipped_no_sketch: list[str]) -> dict:
    ordered = [records_by_index[i] for i in sorted(records_by_index)]
    overall = _summary(ordered)
    return {
        "test_info": {
            "model": config.model_id,
            "month": config.month,
            "mode": config.mode,
            "seed": config.global_seed,
            "max_output_tokens": config.max_output_tokens,
            "n": config.sample_count,
            "reasoning_effort": config.effort_tag,
            "started_at": started_at,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "skipped_no_sketch": skipped_no_sketch,
        },
        "overall": overall,
        "summary": {"all": dict(overall)},
        "detailed_results": ordered,
    }


def _reusable(record: dict) -> bool:
    return record.get("model_answer") is not None and not record.get("error")


def run_eval(config: EvalConfig, gateway: Gateway,
             items: list[BenchmarkItem] | None = None,
             hard_split_path=None) -> dict:
    """Evaluate a month's hard split; item failures never abort the run.

    With resume, prior records with an extracted answer and no error are
    kept verbatim; unanswered or failed items re-run. The output file is
    rewritten atomically after each completed item.
    """
    if items is None:
        items = load_hard_split(hard_split_path)
    output_path = Path(config.output_path)

    indexed = list(enumerate(items))
    skipped_no_sketch: list[str] = []
    if config.mode == MODE_SKETCH_AWARE:
        runnable = []
        for index, item in indexed:
            if item.sketch:
                runnable.append((index, item))
            else:
                skipped_no_sketch.append(item.item_id)
        indexed = runnable

    records: dict[int, dict] = {}
    if config.resume and output_path.exists():
        previous = json.loads(output_path.read_text())
        by_id = {r["item_id"]: r for r in previous.get("detailed_results", [])}
        for index, item in indexed:
            prior = by_id.get(item.item_id)
            if prior is not None and _reusable(prior):
                prior["dataset_index"] = index
                records[index] = prior

    pending = [(index, item) for index, item in indexed if index not in records]
    started_at = datetime.now(timezone.utc).isoformat()
    write_lock = threading.Lock()

    def flush() -> dict:
        payload = _assemble(config, records, started_at, skipped_no_sketch)
        if str(config.output_path):
            atomic_write_json(output_path, payload)
        return payload

    if not pending:
        return flush()

    item_at = dict(pending)
    max_workers = max(config.concurrency, 1)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {
            pool.submit(evaluate_item, item, index, config, gateway): index
            for index, item in pending
        }
        not_done = set(futures)
        try:
            while not_done:
                done, not_done = wait(not_done, return_when=FIRST_COMPLETED)
                for future in done:
                    index = futures[future]
                    try:
                        record = future.result()
                    except Exception as exc:
                        # Item-level failure: scored incorrect, run continues.
                        record = _error_record(item_at[index], index, config,
                                               str(exc))
                    records[index] = record
                    with write_lock:
                        flush()
        except BaseException:
            for future in not_done:
                future.cancel()
            raise
    return flush()


def _error_record(item: BenchmarkItem, index: int, config: EvalConfig,
                  message: str) -> dict:
    return {
        "item_id": item.item_id,
        "dataset_index": index,
        "model_answer": None,
        "correct_answer": None,
        "raw_response": "",
        "raw_thinking": None,
        "is_correct": False,
        "latency": 0.0,
        "prompt_tokens": 0,
        "completion_tokens": 0,
        "total_tokens": 0,
        "reasoning_tokens": None,
        "reasoning_effort": config.effort_tag,
        "n_samples": config.sample_count,
        "mcq_meta_score": item.meta_score,
        "error": message,
    }


# --- aggregation ---------------------------------------------------------------

def aggregate(run: dict, items: list[BenchmarkItem],
              min_category_count: int = 10) -> dict:
    """Report tables for one run; multi-label categories each get credit."""
    by_id = {item.item_id: item for item in items}
    per_category: dict[str, list[int]] = {}
    per_month: dict[str, list[int]] = {}
    per_style = {"original": [0, 0], "substitution_resistant": [0, 0]}
    for record in run.get("detailed_results", []):
        item = by_id.get(record["item_id"])
        if item is None:
            raise MissingMetadata(record["item_id"])
        hit = 1 if record.get("is_correct") else 0
        for category in item.categories or ["Unlabeled"]:
            cell = per_category.setdefault(category, [0, 0])
            cell[0] += hit
            cell[1] += 1
        month_cell = per_month.setdefault(item.month or "unknown", [0, 0])
        month_cell[0] += hit
        month_cell[1] += 1
        style = ("substitution_resistant" if item.substitution_resistant
                 else "original")
        per_style[style][0] += hit
        per_style[style][1] += 1

    grouped: dict[str, list[int]] = {}
    for category, (correct, total) in sorted(per_category.items()):
        key = category if total >= min_category_count else "Other"
        cell = grouped.setdefault(key, [0, 0])
        cell[0] += correct
        cell[1] += total

    def table(cells: dict[str, list[int]]) -> dict[str, dict]:
        return {
            key: {"correct": c, "total": t,
                  "accuracy": (c / t) if t else 0.0}
            for key, (c, t) in cells.items()
        }

    return {
        "overall": dict(run.get("overall", {})),
        "per_category": table(grouped),
        "per_month": table(per_month),
        "per_choice_style": table(per_style),
    }


def sketch_gain(selection_run: dict, sketch_run: dict) -> float:
    """accuracy(sketch_aware) - accuracy(selection) for a paired run."""
    return (sketch_run["overall"]["accuracy"]
            - selection_run["overall"]["accuracy"])
