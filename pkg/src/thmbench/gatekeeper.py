"""Stem-only triviality filtering and hardness calibration (pool stages).

Exclusion always requires positive evidence: a failed judge retains the
item, and an errored calibration run counts the variant as unsolved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .annotate import _json_body
from .errors import GenerationFailed
from .evalrun import EvalConfig, evaluate_item, parse_entry
from .forge import McqItem, StemDraft, generate_distractors, score_rubric
from .gateway import ChatRequest, Gateway
from .miner import TheoremRecord
from .promptlib import triviality_answer_prompts, triviality_match_prompts
from .taxonomy import Category


@dataclass
class TrivialityVerdict:
    item_id: str
    stem_only_response: str
    judge_match: bool
    flags: list[str] = field(default_factory=list)

    @property
    def excluded(self) -> bool:
        return self.judge_match


def triviality_filter(item: McqItem, judge_gateway: Gateway) -> TrivialityVerdict:
    """Judge 1 answers the bare stem; judge 2 compares against option A.

    For substitution-resistant items the comparison target is the original
    correct text, since the meta-option is not a claim a stem-only solver
    could produce.
    """
    reference = item.original_correct_text or item.correct_text
    flags: list[str] = []

    freeform = None
    system, user = triviality_answer_prompts(item.question)
    for attempt in range(2):
        response = judge_gateway.complete_text(ChatRequest(
            system_prompt=system, user_prompt=user))
        if not response.failed and response.text.strip():
            freeform = response.text
            break
    if freeform is None:
        flags.append("judge1_failed")
        return TrivialityVerdict(item.id, "", judge_match=False, flags=flags)

    system, user = triviality_match_prompts(item.question, freeform, reference)
    for attempt in range(2):
        response = judge_gateway.complete_text(ChatRequest(
            system_prompt=system, user_prompt=user))
        if response.failed:
            continue
        try:
            payload = json.loads(_json_body(response.text))
            match = payload["match"]
        except (ValueError, KeyError, TypeError):
            continue
        if isinstance(match, bool):
            return TrivialityVerdict(item.id, freeform, judge_match=match,
                                     flags=flags)
    flags.append("judge2_failed")
    return TrivialityVerdict(item.id, freeform, judge_match=False, flags=flags)


@dataclass
class CandidateGroup:
    source_theorem_id: str
    variants: list[McqItem]                    # original first
    first_pass: dict[str, dict] = field(default_factory=dict)


def _variant_id(original_id: str) -> str:
    if original_id.endswith("_v0"):
        return original_id[:-3] + "_v1"
    return original_id + "_v1"


def overgenerate(item: McqItem, record: TheoremRecord, generator: Gateway,
                 judge: Gateway, keep_threshold: int = 5) -> CandidateGroup:
    """Regenerate one alternative distractor set on the same stem lineage.

    The regenerated variant inherits the substitution decision from the
    original so the whole group serves the same correct option.
    """
    group = CandidateGroup(source_theorem_id=item.source_theorem,
                           variants=[item])
    lineage_correct = item.original_correct_text or item.correct_text
    draft = StemDraft(
        question=item.question,
        correct_text=lineage_correct,
        category=Category.from_id(item.categories[0])
        if item.categories else Category.IMPLICATION,
    )
    sketch_text = item.sketch
    try:
        regenerated = generate_distractors(
            record.expanded_statement if record else "",
            sketch_text, draft, generator)
    except GenerationFailed:
        return group
    variant = McqItem(
        id=_variant_id(item.id),
        month=item.month,
        source_theorem=item.source_theorem,
        question=item.question,
        correct_text=item.correct_text,
        distractors=dict(regenerated.choices),
        meta=regenerated,
        categories=list(item.categories),
        sketch=item.sketch,
        substitution_resistant=item.substitution_resistant,
        original_correct_text=item.original_correct_text,
        flags=list(item.flags) + ["regenerated"],
    )
    try:
        score_rubric(variant, judge, keep_threshold)
    except GenerationFailed:
        return group
    variant.discarded = False  # stage-6 variants stay in the pool regardless
    group.variants.append(variant)
    return group


def first_pass_test(group: CandidateGroup, calibration_gateway: Gateway,
                    seed: int, effort: str = "medium",
                    model_id: str = "calibration") -> CandidateGroup:
    """Evaluate every variant exactly like the released harness would.

    Each variant's dataset index is its position in the group; an errored
    evaluation counts as not solved.
    """
    config = EvalConfig(month=group.variants[0].month if group.variants else "",
                        model_id=model_id, reasoning_effort=effort,
                        global_seed=seed)
    for position, variant in enumerate(group.variants):
        bench_item = parse_entry(variant.to_json(), f"group[{position}]")
        try:
            record = evaluate_item(bench_item, position, config,
                                   calibration_gateway)
        except Exception as exc:
            group.first_pass[variant.id] = {
                "answered_label": None, "correct": False, "error": str(exc)}
            continue
        group.first_pass[variant.id] = {
            "answered_label": record["model_answer"],
            "correct": bool(record["is_correct"]) and not record.get("error"),
            "error": record.get("error"),
        }
    return group


def select_hardest(group: CandidateGroup) -> McqItem | None:
    """Unsolved variant with the top rubric aggregate; all-solved drops.

    Ties keep the original over the regenerated set (list order).
    """
    unsolved = [v for v in group.variants
                if not group.first_pass.get(v.id, {}).get("correct", False)]
    if not unsolved:
        return None
    return max(unsolved,
               key=lambda v: v.rubric.aggregate if v.rubric else 0)
