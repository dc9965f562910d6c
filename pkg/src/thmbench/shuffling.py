"""Deterministic randomness for reproducible benchmark runs.

Option shuffles and the substitution-resistance coin flip must be
bit-identical across platforms and implementations, so both are built on
SplitMix64 with fully pinned arithmetic instead of ``random.Random``.
Golden permutations live in tests/data/shuffle_golden.json.
"""

from __future__ import annotations

import hashlib

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """The Steele-Lea-Flood mixer; state advances by the golden gamma."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        z = self.state
        z ^= z >> 30
        z = (z * 0xBF58476D1CE4E5B9) & _MASK
        z ^= z >> 27
        z = (z * 0x94D049BB133111EB) & _MASK
        return (z ^ (z >> 31)) & _MASK


def item_permutation(global_seed: int, index: int, n: int = 5) -> list[int]:
    """Fisher-Yates order for one item, seeded with global_seed + index.

    The walk runs from the last position down; each step draws
    ``j = next_u64() mod (i + 1)`` and swaps. Returns the permuted list of
    canonical indices: position p of the result holds canonical option
    ``perm[p]``.
    """
    rng = SplitMix64((global_seed + index) & _MASK)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def substitution_decision(item_id: str, fraction: float, rng_seed: int) -> bool:
    """Pure per-item coin flip for the meta-option replacement.

    Hash-seeded so that adding or removing items never reshuffles the
    decision for unrelated items: the item id is digested to a 64-bit
    value, mixed with the run seed, and one SplitMix64 draw is compared
    against the fraction.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    digest = hashlib.sha256(item_id.encode("utf-8")).digest()
    id_word = int.from_bytes(digest[:8], "big")
    draw = SplitMix64((id_word + rng_seed) & _MASK).next_u64()
    threshold = int(fraction * float(1 << 64))
    return draw < threshold
