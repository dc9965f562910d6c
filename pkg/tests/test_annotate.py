"""Sketch summarization and logical classification."""

import pytest

from thmbench.annotate import classify, proof_material, summarize_sketch
from thmbench.errors import ClassificationFailed, SketchUnavailable
from thmbench.gateway import Gateway, MockRule, ScriptedMockBackend
from thmbench.miner import rule_based_extract
from thmbench.taxonomy import Category

from test_miner import make_doc


def mock_gateway(rules, default="UNMATCHED"):
    return Gateway(ScriptedMockBackend(rules, default_reply=default),
                   retry_base_delay=0.0)


def test_sketch_stored_verbatim():
    gw = mock_gateway([MockRule(
        "PROOF MATERIAL",
        ["Combine probabilistic methods with hypergraph containers."])])
    sketch = summarize_sketch("statement", "the proof body", ["introduction"],
                              gw)
    assert sketch.text == ("Combine probabilistic methods with hypergraph "
                           "containers.")
    assert sketch.char_length == len(sketch.text)
    assert sketch.source_sections == ["introduction"]


def test_overlong_sketch_retried_then_truncated_at_sentence():
    long_reply = ("First sentence of many. " * 80).strip()   # ~1900 chars
    gw = mock_gateway([MockRule("PROOF MATERIAL", [long_reply])])
    sketch = summarize_sketch("statement", "proof", [], gw, max_chars=100)
    # both attempts returned the same long text; hard truncation applies
    assert len(sketch.text) <= 100
    assert sketch.text.endswith(".")
    assert gw.call_count == 2  # initial + one tighter re-request


def test_sketch_refusal_twice_raises():
    gw = mock_gateway([MockRule("PROOF MATERIAL", ["", ""])])
    with pytest.raises(SketchUnavailable):
        summarize_sketch("statement", "proof", [], gw)


def test_sketch_refusal_then_success():
    gw = mock_gateway([MockRule("PROOF MATERIAL", ["", "Use induction."])])
    sketch = summarize_sketch("statement", "proof", [], gw)
    assert sketch.text == "Use induction."


def test_proof_material_prefers_proof_environment():
    doc = make_doc(
        "\\section{Introduction}\n\n"
        "\\begin{theorem}claim\\end{theorem}\n\n"
        "\\begin{proof}induct on $n$\\end{proof}\n")
    candidate = rule_based_extract(doc)
    material, sections = proof_material(doc, candidate)
    assert material == "induct on $n$"
    assert "introduction" in sections


def test_proof_material_window_fallback():
    doc = make_doc(
        "\\section{Introduction}\n\n"
        "\\begin{theorem}claim\\end{theorem}\n\n"
        "Discussion follows without a formal proof environment.\n")
    candidate = rule_based_extract(doc)
    material, _ = proof_material(doc, candidate)
    assert "Discussion follows" in material


NOETHERIAN = ("R is Noetherian if and only if every ideal of R is finitely "
              "generated")


def test_classify_equivalence_statement():
    gw = mock_gateway([MockRule(
        "Noetherian", ['{"primary": "BiconditionalEquivalence", '
                       '"secondary": ["Universal"]}'])])
    labels = classify(NOETHERIAN, gw)
    assert labels[0] is Category.BICONDITIONAL_EQUIVALENCE
    assert Category.UNIVERSAL in labels


def test_classify_uniqueness_and_universal_existential():
    gw = mock_gateway([
        MockRule("positive definite", ['{"primary": "Uniqueness"}']),
        MockRule("every \\u03b5", ['{"primary": "UniversalExistential"}']),
        MockRule("every epsilon", ['{"primary": "UniversalExistential"}']),
    ])
    assert classify("There exists a unique positive definite B with B^2=A",
                    gw)[0] is Category.UNIQUENESS
    assert classify("For every epsilon>0 there exists delta>0 such that ...",
                    gw)[0] is Category.UNIVERSAL_EXISTENTIAL


def test_classify_retry_then_failure():
    gw = mock_gateway([MockRule("hard", ["not json", "still not json"])])
    with pytest.raises(ClassificationFailed):
        classify("hard statement", gw)
    assert gw.call_count == 2


def test_classify_dedup_and_display_name_tolerance():
    gw = mock_gateway([MockRule(
        "s1", ['{"primary": "Implication", "secondary": '
               '["Implication", "Inequality / Bound"]}'])])
    labels = classify("s1", gw)
    assert labels == [Category.IMPLICATION, Category.INEQUALITY_BOUND]


def test_classify_tolerates_fenced_json():
    gw = mock_gateway([MockRule(
        "s2", ['```json\n{"primary": "Existence"}\n```'])])
    assert classify("s2", gw) == [Category.EXISTENCE]
