"""Thirteen-way logical taxonomy of theorem statements.

Each category carries its canonical-form template; the forms are frozen
byte-exactly because classification prompts and reports embed them.
"""

from __future__ import annotations

from enum import Enum


class Category(Enum):
    """Logical form of a theorem's main claim."""

    ALGORITHMIC_CONSTRUCTIVE = (
        "AlgorithmicConstructive",
        "Algorithmic / Constructive",
        "There exists an algorithm $A$ that computes $f(x)$",
    )
    ASYMPTOTIC_LIMIT = (
        "AsymptoticLimit",
        "Asymptotic / Limit",
        "As $n \\to \\infty$, \\ldots",
    )
    BICONDITIONAL_EQUIVALENCE = (
        "BiconditionalEquivalence",
        "Biconditional / Equivalence",
        "$A \\iff B$",
    )
    CLASSIFICATION_BIJECTION = (
        "ClassificationBijection",
        "Classification / Bijection",
        "There is a bijection between $X$ and $Y$",
    )
    EXISTENCE = (
        "Existence",
        "Existence",
        "$\\exists\\, x$ such that $P(x)$",
    )
    EXISTENTIAL_UNIVERSAL = (
        "ExistentialUniversal",
        "Existential--Universal",
        "$\\exists\\, x\\; \\forall\\, y,\\; P(x,y)$",
    )
    IMPLICATION = (
        "Implication",
        "Implication",
        "$A \\implies B$",
    )
    INDEPENDENCE_CONSISTENCY = (
        "IndependenceConsistency",
        "Independence / Consistency",
        "$T \\not\\vdash P$ and $T \\not\\vdash \\neg P$",
    )
    INEQUALITY_BOUND = (
        "InequalityBound",
        "Inequality / Bound",
        "$f(x) \\leq g(x)$",
    )
    NONEXISTENCE = (
        "Nonexistence",
        "Nonexistence",
        "$\\not\\exists\\, x$ such that $P(x)$",
    )
    UNIQUENESS = (
        "Uniqueness",
        "Uniqueness",
        "$\\exists!\\, x$ such that $P(x)$",
    )
    UNIVERSAL = (
        "Universal",
        "Universal",
        "$\\forall\\, x,\\; P(x)$",
    )
    UNIVERSAL_EXISTENTIAL = (
        "UniversalExistential",
        "Universal--Existential",
        "$\\forall\\, x\\; \\exists\\, y,\\; P(x,y)$",
    )

    def __new__(cls, ident, display_name, canonical_form):
        obj = object.__new__(cls)
        obj._value_ = ident
        obj.display_name = display_name
        obj.canonical_form = canonical_form
        return obj

    @classmethod
    def from_id(cls, ident: str) -> "Category":
        return cls(ident)

    @classmethod
    def parse(cls, raw: str) -> "Category | None":
        """Lenient lookup by id or display name (case/space tolerant)."""
        cleaned = raw.strip()
        for member in cls:
            if cleaned == member.value or cleaned == member.display_name:
                return member
        folded = "".join(ch for ch in cleaned.lower() if ch.isalnum())
        for member in cls:
            if folded == "".join(ch for ch in member.value.lower() if ch.isalnum()):
                return member
            display_folded = "".join(
                ch for ch in member.display_name.lower() if ch.isalnum())
            if folded == display_folded:
                return member
        return None


def canonical_form_table() -> dict[str, str]:
    """Display name -> canonical form, in declaration order."""
    return {c.display_name: c.canonical_form for c in Category}
