"""Answer-label extraction from free-form model output.

Three-rule cascade:
  1. last occurrence of a literal ``\\boxed{L}`` with L in A-E;
  2. else the whole trimmed response, if it is a single character in A-E;
  3. else the last standalone capital A-E, where standalone means both
     neighbors are non-alphanumeric or the string boundary.
A miss is ``None``, which the correctness rule always scores as wrong.
"""

from __future__ import annotations

import re

LABELS = ("A", "B", "C", "D", "E")

_BOXED = re.compile(r"\\boxed\{([A-E])\}")
_CAPITAL = re.compile(r"[A-E]")


def extract_answer(text: str) -> str | None:
    if not text:
        return None
    boxed = _BOXED.findall(text)
    if boxed:
        return boxed[-1]
    stripped = text.strip()
    if len(stripped) == 1 and stripped in LABELS:
        return stripped
    last = None
    for match in _CAPITAL.finditer(text):
        i = match.start()
        left_ok = i == 0 or not text[i - 1].isalnum()
        right_ok = i + 1 == len(text) or not text[i + 1].isalnum()
        if left_ok and right_ok:
            last = match.group(0)
    return last


def judge_label(extracted: str | None, truth_label: str) -> bool:
    """Correct iff the extracted label equals the post-shuffle truth label."""
    return extracted is not None and extracted == truth_label
