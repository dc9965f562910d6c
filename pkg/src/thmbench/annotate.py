"""Per-theorem annotation: proof sketches and logical-category labels."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import ClassificationFailed, SketchUnavailable
from .gateway import ChatRequest, Gateway
from .miner import TheoremCandidate, section_title_at
from .promptlib import classification_prompts, sketch_prompts
from .taxonomy import Category
from .texdoc import TexDocument, find_environments


@dataclass
class ProofSketch:
    text: str
    source_sections: list[str]
    char_length: int

    def to_json(self) -> dict:
        return {"text": self.text, "source_sections": self.source_sections,
                "char_length": self.char_length}

    @classmethod
    def from_json(cls, data: dict) -> "ProofSketch":
        return cls(data["text"], data.get("source_sections", []),
                   data.get("char_length", len(data["text"])))


def proof_material(doc: TexDocument, candidate: TheoremCandidate,
                   window_chars: int = 4000) -> tuple[str, list[str]]:
    """Proof body following the theorem, or a trailing window of the text."""
    start = candidate.char_span[1]
    for _, env_start, body_start, body_end, _ in find_environments(
            doc.full_text, {"proof"}):
        if env_start >= start:
            sections = [candidate.section,
                        section_title_at(doc.full_text, env_start).lower()]
            material = doc.full_text[body_start:body_end]
            return material, [s for i, s in enumerate(sections)
                              if s and s not in sections[:i]]
    window = doc.full_text[start:start + window_chars]
    return window, [candidate.section] if candidate.section else []


def _truncate_at_sentence(text: str, limit: int) -> str:
    if len(text) <= limit:
        return text
    head = text[:limit]
    cut = max(head.rfind("."), head.rfind("!"), head.rfind("?"))
    return head[:cut + 1] if cut > 0 else head


def summarize_sketch(statement: str, material: str, sections: list[str],
                     gateway: Gateway, max_chars: int = 8000) -> ProofSketch:
    """One sketch per theorem; over-long replies get one tighter retry.

    A refusal (provider error or empty text) is retried once and then
    surfaces as SketchUnavailable; the record proceeds without a sketch.
    """
    text = None
    for attempt in range(2):
        system, user = sketch_prompts(statement, material, tighter=False)
        response = gateway.complete_text(ChatRequest(
            system_prompt=system, user_prompt=user))
        if not response.failed and response.text.strip():
            text = response.text
            break
    if text is None:
        raise SketchUnavailable("sketch model refused twice")
    if len(text) > max_chars:
        system, user = sketch_prompts(statement, material, tighter=True)
        retry = gateway.complete_text(ChatRequest(
            system_prompt=system, user_prompt=user))
        if not retry.failed and retry.text.strip():
            text = retry.text
        text = _truncate_at_sentence(text, max_chars)
    return ProofSketch(text=text, source_sections=sections,
                       char_length=len(text))


def _parse_labels(reply: str) -> list[Category] | None:
    try:
        payload = json.loads(_json_body(reply))
    except ValueError:
        return None
    if not isinstance(payload, dict):
        return None
    primary = payload.get("primary")
    if not isinstance(primary, str):
        return None
    primary_cat = Category.parse(primary)
    if primary_cat is None:
        return None
    labels = [primary_cat]
    for raw in payload.get("secondary") or []:
        cat = Category.parse(str(raw))
        if cat is not None and cat not in labels:
            labels.append(cat)
    return labels


def _json_body(reply: str) -> str:
    """Tolerate fenced or prefixed JSON replies."""
    text = reply.strip()
    if text.startswith("```"):
        text = re.sub(r"^```[a-zA-Z]*\n?", "", text)
        text = re.sub(r"\n?```$", "", text)
    start = text.find("{")
    end = text.rfind("}")
    if start != -1 and end > start:
        return text[start:end + 1]
    return text


def classify(statement: str, gateway: Gateway) -> list[Category]:
    """Primary-first label list; unparseable replies get one retry."""
    system, user = classification_prompts(statement)
    for attempt in range(2):
        response = gateway.complete_text(ChatRequest(
            system_prompt=system, user_prompt=user))
        if not response.failed:
            labels = _parse_labels(response.text)
            if labels:
                return labels
    raise ClassificationFailed("no parseable category labels after retry")
