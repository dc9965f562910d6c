"""Frozen canonical-form table and category lookup behavior."""

import json

from thmbench.taxonomy import Category, canonical_form_table

# The thirteen canonical forms, frozen byte-exactly.
EXPECTED_FORMS = {
    "Algorithmic / Constructive": "There exists an algorithm $A$ that computes $f(x)$",
    "Asymptotic / Limit": "As $n \\to \\infty$, \\ldots",
    "Biconditional / Equivalence": "$A \\iff B$",
    "Classification / Bijection": "There is a bijection between $X$ and $Y$",
    "Existence": "$\\exists\\, x$ such that $P(x)$",
    "Existential--Universal": "$\\exists\\, x\\; \\forall\\, y,\\; P(x,y)$",
    "Implication": "$A \\implies B$",
    "Independence / Consistency": "$T \\not\\vdash P$ and $T \\not\\vdash \\neg P$",
    "Inequality / Bound": "$f(x) \\leq g(x)$",
    "Nonexistence": "$\\not\\exists\\, x$ such that $P(x)$",
    "Uniqueness": "$\\exists!\\, x$ such that $P(x)$",
    "Universal": "$\\forall\\, x,\\; P(x)$",
    "Universal--Existential": "$\\forall\\, x\\; \\exists\\, y,\\; P(x,y)$",
}

EXPECTED_IDS = [
    "AlgorithmicConstructive", "AsymptoticLimit", "BiconditionalEquivalence",
    "ClassificationBijection", "Existence", "ExistentialUniversal",
    "Implication", "IndependenceConsistency", "InequalityBound",
    "Nonexistence", "Uniqueness", "Universal", "UniversalExistential",
]


def test_thirteen_members_with_expected_ids():
    assert [c.value for c in Category] == EXPECTED_IDS


def test_canonical_forms_byte_exact():
    assert canonical_form_table() == EXPECTED_FORMS


def test_serialization_round_trip_reproduces_table():
    dumped = json.dumps({c.value: c.canonical_form for c in Category})
    loaded = json.loads(dumped)
    rebuilt = {Category.from_id(k).display_name: v for k, v in loaded.items()}
    assert rebuilt == EXPECTED_FORMS


def test_parse_by_id_display_and_folded():
    assert Category.parse("Implication") is Category.IMPLICATION
    assert Category.parse("Biconditional / Equivalence") \
        is Category.BICONDITIONAL_EQUIVALENCE
    assert Category.parse("biconditional/equivalence") \
        is Category.BICONDITIONAL_EQUIVALENCE
    assert Category.parse("universal--existential") \
        is Category.UNIVERSAL_EXISTENTIAL
    assert Category.parse("NotACategory") is None
