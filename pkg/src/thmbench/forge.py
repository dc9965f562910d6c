"""Question forging: stems, distractors, substitution resistance, rubric.

Every model reply is validated against the stage's JSON schema and retried
once before the theorem is rejected. Distractor sets must satisfy the meta
contract (weaker-true at C, false labels B/D/E, full sketch-usage coverage)
on every accepted item.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .annotate import _json_body
from .errors import GenerationFailed
from .gateway import ChatRequest, Gateway
from .miner import TheoremRecord
from .promptlib import (
    distractor_prompts,
    meta_option_sentence,
    repair_prompts,
    revision_prompts,
    rubric_prompts,
    stem_prompts,
)
from .shuffling import substitution_decision
from .taxonomy import Category

DISTRACTOR_LABELS = ("B", "C", "D", "E")
WEAKER_TRUE_LABEL = "C"
FALSE_LABELS = frozenset({"B", "D", "E"})

SKETCH_HOOK_TYPES = frozenset({
    "case_split", "counting_estimate", "trace_identity",
    "geometric_construction", "computational_check", "outer_automorphism",
    "finiteness", "characteristic", "regularity", "other",
})

DISTRACTOR_TEMPLATES = frozenset({
    "boundary_range", "uniformity_effectivity", "quantifier_dependence",
    "property_confusion", "stronger_trap", "wildcard", "weaker_true",
})

DEFAULT_BANNED_PHRASES = (
    "which of the following is the strongest result",
    "according to the theorem",
    "the theorem shows",
    "as proved above",
)

BUNDLE_CONNECTIVES = ("moreover", "furthermore")


@dataclass
class StemDraft:
    question: str
    correct_text: str
    category: Category
    repair_applied: bool = False


@dataclass
class SketchUsage:
    label: str
    sketch_hook_type: str
    tampered_component: str
    template_used: str

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class DistractorSet:
    choices: dict[str, str]               # labels B..E -> text
    weaker_true_label: str
    false_labels: frozenset[str]
    wildcard_false_label: str
    sketch_usage_meta: list[SketchUsage]
    degraded_no_sketch: bool = False
    revision_applied: bool = False

    def meta_json(self) -> dict:
        return {
            "weaker_true_label": self.weaker_true_label,
            "false_labels": sorted(self.false_labels),
            "wildcard_false_label": self.wildcard_false_label,
            "sketch_usage_meta": [u.to_json() for u in self.sketch_usage_meta],
            "degraded_no_sketch": self.degraded_no_sketch,
            "revision_applied": self.revision_applied,
        }


@dataclass
class RubricScore:
    als: int
    tas: int
    gps: int
    dqs: int

    @property
    def aggregate(self) -> int:
        return self.als + self.tas + self.gps + self.dqs

    def to_json(self) -> dict:
        return {"als": self.als, "tas": self.tas, "gps": self.gps,
                "dqs": self.dqs, "aggregate": self.aggregate}

    @classmethod
    def from_json(cls, data: dict) -> "RubricScore":
        return cls(data["als"], data["tas"], data["gps"], data["dqs"])


@dataclass
class McqItem:
    id: str
    month: str
    source_theorem: str
    question: str
    correct_text: str
    distractors: dict[str, str]           # labels B..E -> text
    meta: DistractorSet | None = None
    rubric: RubricScore | None = None
    discarded: bool = False
    substitution_resistant: bool = False
    original_correct_text: str | None = None
    categories: list[str] = field(default_factory=list)
    sketch: str | None = None
    flags: list[str] = field(default_factory=list)

    def option_block(self) -> str:
        lines = [f"(A) {self.correct_text}"]
        lines += [f"({label}) {self.distractors[label]}"
                  for label in DISTRACTOR_LABELS]
        return "\n\n".join(lines)

    def to_json(self) -> dict:
        meta = self.meta.meta_json() if self.meta else {}
        meta["score"] = self.rubric.aggregate if self.rubric else None
        meta["rubric"] = self.rubric.to_json() if self.rubric else None
        return {
            "id": self.id,
            "month": self.month,
            "source_theorem": self.source_theorem,
            "mcq": {
                "question": self.question,
                "correct_choice": {"label": "A", "text": self.correct_text},
                "choices": [{"label": label, "text": self.distractors[label]}
                            for label in DISTRACTOR_LABELS],
                "meta": meta,
            },
            "categories": self.categories,
            "substitution_resistant": self.substitution_resistant,
            "original_correct_text": self.original_correct_text,
            "sketch": self.sketch,
            "discarded": self.discarded,
            "flags": self.flags,
        }

    @classmethod
    def from_json(cls, data: dict) -> "McqItem":
        mcq = data["mcq"]
        meta = mcq.get("meta", {})
        rubric = meta.get("rubric")
        distractors = {c["label"]: c["text"] for c in mcq["choices"]}
        meta_obj = None
        if meta.get("weaker_true_label"):
            meta_obj = DistractorSet(
                choices=dict(distractors),
                weaker_true_label=meta["weaker_true_label"],
                false_labels=frozenset(meta.get("false_labels", [])),
                wildcard_false_label=meta.get("wildcard_false_label", ""),
                sketch_usage_meta=[SketchUsage(**u) for u in
                                   meta.get("sketch_usage_meta", [])],
                degraded_no_sketch=meta.get("degraded_no_sketch", False),
                revision_applied=meta.get("revision_applied", False),
            )
        return cls(
            id=data["id"],
            month=data.get("month", ""),
            source_theorem=data.get("source_theorem", ""),
            question=mcq["question"],
            correct_text=mcq["correct_choice"]["text"],
            distractors=distractors,
            meta=meta_obj,
            rubric=RubricScore.from_json(rubric) if rubric else None,
            discarded=data.get("discarded", False),
            substitution_resistant=data.get("substitution_resistant", False),
            original_correct_text=data.get("original_correct_text"),
            categories=data.get("categories", []),
            sketch=data.get("sketch"),
            flags=data.get("flags", []),
        )


# --- stem generation ------------------------------------------------------------

def _parse_stem_reply(reply: str) -> tuple[str, str] | None:
    try:
        payload = json.loads(_json_body(reply))
    except ValueError:
        return None
    if not isinstance(payload, dict):
        return None
    question = payload.get("question")
    choice = payload.get("correct_choice")
    if not isinstance(question, str) or not question.strip():
        return None
    if not isinstance(choice, dict):
        return None
    if choice.get("label") not in (None, "A"):
        return None
    text = choice.get("text")
    if not isinstance(text, str) or not text.strip():
        return None
    return question.strip(), text.strip()


def generate_stem(record: TheoremRecord, gateway: Gateway) -> StemDraft:
    if not record.categories:
        raise GenerationFailed("record has no category labels")
    category = Category.from_id(record.categories[0])
    system, user = stem_prompts(category, record.expanded_statement,
                                record.context.concatenated())
    for attempt in range(2):
        response = gateway.complete_text(ChatRequest(
            system_prompt=system, user_prompt=user))
        if response.failed:
            continue
        parsed = _parse_stem_reply(response.text)
        if parsed is not None:
            return StemDraft(question=parsed[0], correct_text=parsed[1],
                             category=category)
    raise GenerationFailed("stem reply unparseable after retry")


# --- red flags --------------------------------------------------------------------

def _toplevel_bundle_points(text: str) -> int:
    """Count '; moreover'/'; furthermore' joins outside math and braces."""
    count = 0
    depth = 0
    in_math = False
    i = 0
    lowered = text.lower()
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            i += 2
            continue
        if ch == "$":
            in_math = not in_math
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth = max(depth - 1, 0)
        elif ch == ";" and depth == 0 and not in_math:
            rest = lowered[i + 1:].lstrip(" ,")
            if rest.startswith(BUNDLE_CONNECTIVES):
                count += 1
        i += 1
    return count


def red_flag_check(draft: StemDraft,
                   banned_phrases=DEFAULT_BANNED_PHRASES) -> list[str]:
    """Empty list = pass; reasons otherwise. Rejection triggers regeneration."""
    reasons = []
    stem_lower = draft.question.lower()
    for phrase in banned_phrases:
        if phrase.lower() in stem_lower:
            reasons.append(f"banned phrase: {phrase.lower()!r}")
    if _toplevel_bundle_points(draft.correct_text) >= 1:
        reasons.append("bundled clauses in correct option")
    return reasons


def repair_stem(draft: StemDraft, context_text: str, statement: str,
                gateway: Gateway,
                banned_phrases=DEFAULT_BANNED_PHRASES) -> StemDraft:
    """Self-containedness pass; never sees the correct choice's content."""
    system, user = repair_prompts(draft.question, statement, context_text)
    repaired = None
    for attempt in range(2):
        response = gateway.complete_text(ChatRequest(
            system_prompt=system, user_prompt=user))
        if response.failed:
            continue
        try:
            payload = json.loads(_json_body(response.text))
        except ValueError:
            continue
        question = payload.get("question") if isinstance(payload, dict) else None
        if isinstance(question, str) and question.strip():
            repaired = question.strip()
            break
    if repaired is None:
        raise GenerationFailed("repair reply unparseable after retry")
    result = replace(draft, question=repaired,
                     repair_applied=(repaired != draft.question))
    reasons = red_flag_check(result, banned_phrases)
    if reasons:
        raise GenerationFailed(f"red flags after repair: {reasons}")
    return result


def make_stem(record: TheoremRecord, gateway: Gateway,
              banned_phrases=DEFAULT_BANNED_PHRASES) -> StemDraft:
    """Generate, red-flag-check (one regeneration pass), then repair."""
    draft = generate_stem(record, gateway)
    if red_flag_check(draft, banned_phrases):
        draft = generate_stem(record, gateway)
        reasons = red_flag_check(draft, banned_phrases)
        if reasons:
            raise GenerationFailed(f"red flags after regeneration: {reasons}")
    return repair_stem(draft, record.context.concatenated(),
                       record.expanded_statement, gateway, banned_phrases)


# --- distractors ------------------------------------------------------------------

def _validate_distractor_payload(payload: dict) -> DistractorSet:
    if not isinstance(payload, dict):
        raise ValueError("reply is not a JSON object")
    choices_raw = payload.get("choices")
    if not isinstance(choices_raw, list):
        raise ValueError("missing choices list")
    choices: dict[str, str] = {}
    for entry in choices_raw:
        label = entry.get("label")
        text = entry.get("text")
        if label not in DISTRACTOR_LABELS:
            raise ValueError(f"unexpected choice label {label!r}")
        if not isinstance(text, str) or not text.strip():
            raise ValueError(f"empty text for choice {label}")
        if label in choices:
            raise ValueError(f"duplicate choice label {label}")
        choices[label] = text.strip()
    if set(choices) != set(DISTRACTOR_LABELS):
        raise ValueError(f"choices must cover exactly B-E, got {sorted(choices)}")

    meta = payload.get("meta")
    if not isinstance(meta, dict):
        raise ValueError("missing meta block")
    if meta.get("weaker_true_label") != WEAKER_TRUE_LABEL:
        raise ValueError(f"weaker_true_label must be {WEAKER_TRUE_LABEL}")
    if set(meta.get("false_labels", [])) != set(FALSE_LABELS):
        raise ValueError("false_labels must be exactly B, D, E")
    wildcard = meta.get("wildcard_false_label")
    if wildcard not in FALSE_LABELS:
        raise ValueError("wildcard_false_label must be one of B, D, E")

    usage_raw = payload.get("sketch_usage_meta")
    if not isinstance(usage_raw, list):
        raise ValueError("missing sketch_usage_meta")
    usage: dict[str, SketchUsage] = {}
    for entry in usage_raw:
        label = entry.get("label")
        if label not in DISTRACTOR_LABELS or label in usage:
            raise ValueError(f"bad sketch_usage_meta label {label!r}")
        hook = entry.get("sketch_hook_type")
        if hook not in SKETCH_HOOK_TYPES:
            raise ValueError(f"unknown sketch_hook_type {hook!r}")
        template = entry.get("template_used")
        if template not in DISTRACTOR_TEMPLATES:
            raise ValueError(f"unknown template_used {template!r}")
        component = entry.get("tampered_component")
        if not isinstance(component, str) or not component.strip():
            raise ValueError(f"empty tampered_component for {label}")
        usage[label] = SketchUsage(label, hook, component.strip(), template)
    if set(usage) != set(DISTRACTOR_LABELS):
        raise ValueError("sketch_usage_meta must cover exactly B-E")
    if usage[WEAKER_TRUE_LABEL].template_used != "weaker_true":
        raise ValueError("entry C must use the weaker_true template")

    return DistractorSet(
        choices=choices,
        weaker_true_label=WEAKER_TRUE_LABEL,
        false_labels=FALSE_LABELS,
        wildcard_false_label=wildcard,
        sketch_usage_meta=[usage[label] for label in DISTRACTOR_LABELS],
    )


def _request_distractor_set(system: str, user: str,
                            gateway: Gateway) -> DistractorSet:
    last_problem = "no reply"
    for attempt in range(2):
        response = gateway.complete_text(ChatRequest(
            system_prompt=system, user_prompt=user))
        if response.failed:
            last_problem = response.provider_error or "provider error"
            continue
        try:
            payload = json.loads(_json_body(response.text))
            return _validate_distractor_payload(payload)
        except ValueError as exc:
            last_problem = str(exc)
    raise GenerationFailed(f"distractor schema violation after retry: {last_problem}")


def generate_distractors(statement: str, sketch_text: str | None,
                         draft: StemDraft, gateway: Gateway,
                         revise: bool = True) -> DistractorSet:
    """Sketch-adversarial set plus one surface-distinguishability audit pass."""
    system, user = distractor_prompts(draft.category, statement, sketch_text,
                                      draft.question, draft.correct_text)
    result = _request_distractor_set(system, user, gateway)
    result.degraded_no_sketch = sketch_text is None
    if not revise:
        return result

    current_json = json.dumps(
        {"choices": [{"label": label, "text": result.choices[label]}
                     for label in DISTRACTOR_LABELS],
         "meta": {"weaker_true_label": result.weaker_true_label,
                  "false_labels": sorted(result.false_labels),
                  "wildcard_false_label": result.wildcard_false_label},
         "sketch_usage_meta": [u.to_json() for u in result.sketch_usage_meta]},
        indent=1)
    system, user = revision_prompts(draft.question, draft.correct_text,
                                    current_json)
    try:
        revised = _request_distractor_set(system, user, gateway)
    except GenerationFailed:
        return result  # keep the validated original set
    revised.degraded_no_sketch = result.degraded_no_sketch
    revised.revision_applied = True
    return revised


# --- substitution resistance -------------------------------------------------------

def apply_substitution_resistance(item: McqItem, fraction: float,
                                  rng_seed: int) -> McqItem:
    """Replace the correct option by the meta-option for a seeded fraction.

    The decision is a pure function of (rng_seed, item.id); labels stay at
    their pre-shuffle positions.
    """
    if not substitution_decision(item.id, fraction, rng_seed):
        return item
    if item.substitution_resistant:
        return item
    return replace(
        item,
        correct_text=meta_option_sentence(),
        original_correct_text=item.correct_text,
        substitution_resistant=True,
    )


# --- rubric -----------------------------------------------------------------------

def _clamp(value) -> int:
    return max(0, min(2, int(value)))


def score_rubric(item: McqItem, gateway: Gateway,
                 keep_threshold: int = 5) -> RubricScore:
    """Four 0-2 judge scores; aggregate below the threshold marks discard."""
    system, user = rubric_prompts(item.question, item.option_block())
    for attempt in range(2):
        response = gateway.complete_text(ChatRequest(
            system_prompt=system, user_prompt=user))
        if response.failed:
            continue
        try:
            payload = json.loads(_json_body(response.text))
            score = RubricScore(
                als=_clamp(payload["als"]), tas=_clamp(payload["tas"]),
                gps=_clamp(payload["gps"]), dqs=_clamp(payload["dqs"]))
        except (ValueError, KeyError, TypeError):
            continue
        item.rubric = score
        item.discarded = score.aggregate < keep_threshold
        return score
    raise GenerationFailed("rubric judge unparseable after retry")


# --- whole-item assembly -------------------------------------------------------------

def forge_item(record: TheoremRecord, gateway: Gateway, judge: Gateway,
               month: str, variant: int = 0, keep_threshold: int = 5,
               substitution_fraction: float = 0.0,
               substitution_seed: int = 0,
               banned_phrases=DEFAULT_BANNED_PHRASES) -> McqItem:
    """One candidate item for a mined theorem (stem, distractors, rubric).

    Raises GenerationFailed when any stage exhausts its retry; the caller
    drops the theorem from the month.
    """
    draft = make_stem(record, gateway, banned_phrases)
    sketch_text = record.sketch.text if record.sketch else None
    distractor_set = generate_distractors(
        record.expanded_statement, sketch_text, draft, gateway)
    item = McqItem(
        id=f"{month}_{record.arxiv_id}_v{variant}",
        month=month,
        source_theorem=record.arxiv_id,
        question=draft.question,
        correct_text=draft.correct_text,
        distractors=dict(distractor_set.choices),
        meta=distractor_set,
        categories=list(record.categories),
        sketch=sketch_text,
        flags=(["no_sketch"] if sketch_text is None else []),
    )
    score_rubric(item, judge, keep_threshold)
    return apply_substitution_resistance(item, substitution_fraction,
                                         substitution_seed)
