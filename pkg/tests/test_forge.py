"""Stem generation, red flags, distractors, substitution, and the rubric."""

import json
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from thmbench.errors import GenerationFailed
from thmbench.forge import (
    DistractorSet,
    McqItem,
    RubricScore,
    StemDraft,
    apply_substitution_resistance,
    forge_item,
    generate_distractors,
    generate_stem,
    make_stem,
    red_flag_check,
    repair_stem,
    score_rubric,
)
from thmbench.gateway import Gateway, MockRule, ScriptedMockBackend
from thmbench.miner import ContextBundle, TheoremCandidate, TheoremRecord
from thmbench.promptlib import meta_option_sentence
from thmbench.taxonomy import Category


def mock_gateway(rules, default="UNMATCHED"):
    return Gateway(ScriptedMockBackend(rules, default_reply=default),
                   retry_base_delay=0.0)


def record(statement="If $G$ is finite then $F(G)$ is nonempty.",
           categories=("Implication",), sketch=None):
    rec = TheoremRecord(
        paper={"arxiv_id": "2601.00001"},
        candidate=TheoremCandidate("theorem", statement, "introduction",
                                   (0, len(statement))),
        expanded_statement=statement,
        context=ContextBundle(char_budget=6000),
        anchor_terms=["G"],
        extraction_path="rule_based",
        categories=list(categories),
    )
    rec.sketch = sketch
    return rec


def stem_reply(question="Which is the strongest conclusion about $F(G)$?",
               correct="The set $F(G)$ is nonempty."):
    return json.dumps({"question": question,
                       "correct_choice": {"label": "A", "text": correct}})


def distractor_reply(wildcard="B", weaker_true="C", drop_label=None,
                     tag=""):
    choices = [{"label": label, "text": f"option {label}{tag}"}
               for label in "BCDE"]
    usage = [
        {"label": "B", "sketch_hook_type": "counting_estimate",
         "tampered_component": "count target", "template_used": "wildcard"},
        {"label": "C", "sketch_hook_type": "finiteness",
         "tampered_component": "dropped the lower bound",
         "template_used": "weaker_true"},
        {"label": "D", "sketch_hook_type": "case_split",
         "tampered_component": "threshold", "template_used": "stronger_trap"},
        {"label": "E", "sketch_hook_type": "regularity",
         "tampered_component": "epsilon loss", "template_used": "boundary_range"},
    ]
    if drop_label:
        usage = [u for u in usage if u["label"] != drop_label]
    return json.dumps({
        "choices": choices,
        "meta": {"weaker_true_label": weaker_true,
                 "false_labels": ["B", "D", "E"],
                 "wildcard_false_label": wildcard},
        "sketch_usage_meta": usage,
    })


def rubric_reply(als=2, tas=2, gps=2, dqs=2):
    return json.dumps({"als": als, "tas": tas, "gps": gps, "dqs": dqs})


# --- stems ----------------------------------------------------------------------

def test_generate_stem_parses_schema():
    gw = mock_gateway([MockRule("MAIN_THEOREM", [stem_reply()])])
    draft = generate_stem(record(), gw)
    assert draft.question.startswith("Which is the strongest")
    assert draft.correct_text == "The set $F(G)$ is nonempty."
    assert draft.category is Category.IMPLICATION


def test_stem_prompt_is_category_specific():
    captured = {}

    class Capture:
        def send(self, request):
            captured["system"] = request.system_prompt
            from thmbench.gateway import ChatResponse
            return ChatResponse(text=stem_reply())

    gw = Gateway(Capture())
    generate_stem(record(categories=("Implication",)), gw)
    assert "strongest" in captured["system"]
    generate_stem(record(categories=("BiconditionalEquivalence",)), gw)
    assert "equivalent to A" in captured["system"]


def test_generate_stem_malformed_twice_fails():
    gw = mock_gateway([MockRule("MAIN_THEOREM", ["{bad", "{still bad"])])
    with pytest.raises(GenerationFailed):
        generate_stem(record(), gw)
    assert gw.call_count == 2


def test_generate_stem_retry_then_success():
    gw = mock_gateway([MockRule("MAIN_THEOREM", ["nonsense", stem_reply()])])
    assert generate_stem(record(), gw).repair_applied is False


# --- red flags --------------------------------------------------------------------

def draft(question="Which is the strongest conclusion about f?",
          correct="f is bounded."):
    return StemDraft(question=question, correct_text=correct,
                     category=Category.IMPLICATION)


def test_banned_phrase_rejected():
    bad = draft("Pick which of the following is the strongest result today")
    assert red_flag_check(bad)
    assert red_flag_check(draft("As proved above, what holds?")) == \
        ["banned phrase: 'as proved above'"]


def test_clean_stem_passes():
    assert red_flag_check(draft()) == []


def test_bundled_clauses_rejected():
    bundled = draft(correct="X holds; moreover Y holds; furthermore Z")
    reasons = red_flag_check(bundled)
    assert reasons == ["bundled clauses in correct option"]


def test_bundle_split_ignores_math_and_braces():
    ok = draft(correct="the set $\\{x ; moreover\\}$ satisfies $a;b$ bound")
    assert red_flag_check(ok) == []
    ok2 = draft(correct="we have {grouped; moreover hidden} text")
    assert red_flag_check(ok2) == []


# --- repair ------------------------------------------------------------------------

def test_repair_injects_definition():
    gw = mock_gateway([MockRule("QUESTION_STEM", [json.dumps(
        {"question": "Define $\\Delta_K$ as the discriminant. Which bound "
                     "holds for $\\Delta_K$?"})])])
    out = repair_stem(draft("Which bound holds for $\\Delta_K$?"),
                      "context defining discriminant", "statement", gw)
    assert out.repair_applied is True
    assert "discriminant" in out.question


def test_repair_noop_keeps_flag_false():
    question = "Self-contained question about $n$?"
    gw = mock_gateway([MockRule("QUESTION_STEM",
                                [json.dumps({"question": question})])])
    out = repair_stem(draft(question), "ctx", "statement", gw)
    assert out.repair_applied is False


def test_repair_acquiring_banned_phrase_rejects():
    gw = mock_gateway([MockRule("QUESTION_STEM", [json.dumps(
        {"question": "According to the theorem, what holds?"})])])
    with pytest.raises(GenerationFailed):
        repair_stem(draft(), "ctx", "statement", gw)


def test_make_stem_regenerates_once_on_red_flag():
    gw = mock_gateway([
        MockRule("MAIN_THEOREM", [
            stem_reply(question="as proved above, which holds?"),
            stem_reply(),
        ]),
        MockRule("QUESTION_STEM", [json.dumps(
            {"question": "Which is the strongest conclusion about $F(G)$?"})]),
    ])
    out = make_stem(record(), gw)
    assert "strongest conclusion" in out.question


# --- distractors ------------------------------------------------------------------

def test_valid_distractors_accepted():
    gw = mock_gateway([
        MockRule("AUDIT TARGET", [distractor_reply(tag=" (rev)")]),
        MockRule("MAIN_THEOREM", [distractor_reply()]),
    ])
    result = generate_distractors("stmt", "sketch text", draft(), gw)
    assert result.weaker_true_label == "C"
    assert result.false_labels == frozenset({"B", "D", "E"})
    assert result.wildcard_false_label == "B"
    assert result.revision_applied is True
    assert [u.label for u in result.sketch_usage_meta] == ["B", "C", "D", "E"]
    assert result.sketch_usage_meta[1].template_used == "weaker_true"


def test_weaker_true_label_violation_retried():
    gw = mock_gateway([
        MockRule("AUDIT TARGET", [distractor_reply()]),
        MockRule("MAIN_THEOREM", [distractor_reply(weaker_true="D"),
                                  distractor_reply()]),
    ])
    result = generate_distractors("stmt", "sketch", draft(), gw)
    assert result.weaker_true_label == "C"


def test_missing_usage_entry_is_schema_violation():
    gw = mock_gateway([
        MockRule("MAIN_THEOREM", [distractor_reply(drop_label="E"),
                                  distractor_reply(drop_label="E")]),
    ])
    with pytest.raises(GenerationFailed):
        generate_distractors("stmt", "sketch", draft(), gw, revise=False)


def test_bad_wildcard_rejected():
    gw = mock_gateway([MockRule("MAIN_THEOREM",
                                [distractor_reply(wildcard="C"),
                                 distractor_reply(wildcard="C")])])
    with pytest.raises(GenerationFailed):
        generate_distractors("stmt", "sketch", draft(), gw, revise=False)


def test_invalid_revision_falls_back_to_original():
    gw = mock_gateway([
        MockRule("AUDIT TARGET", ["not json", "not json either"]),
        MockRule("MAIN_THEOREM", [distractor_reply()]),
    ])
    result = generate_distractors("stmt", "sketch", draft(), gw)
    assert result.revision_applied is False
    assert result.choices["B"] == "option B"


def test_no_sketch_marks_degraded():
    gw = mock_gateway([MockRule("MAIN_THEOREM", [distractor_reply()])])
    result = generate_distractors("stmt", None, draft(), gw, revise=False)
    assert result.degraded_no_sketch is True


# --- substitution resistance ----------------------------------------------------------

def item(item_id="2026-01_2601.00001_v0", correct="the true claim"):
    return McqItem(
        id=item_id, month="2026-01", source_theorem="2601.00001",
        question="Q?", correct_text=correct,
        distractors={label: f"option {label}" for label in "BCDE"},
    )


def test_fraction_zero_never_alters():
    for i in range(50):
        out = apply_substitution_resistance(item(f"id{i}"), 0.0, 7)
        assert out.substitution_resistant is False
        assert out.correct_text == "the true claim"


def test_fraction_one_always_replaces_with_exact_sentence():
    for i in range(50):
        out = apply_substitution_resistance(item(f"id{i}"), 1.0, 7)
        assert out.substitution_resistant is True
        assert out.correct_text == ("One of the remaining options is correct, "
                                    "but a stronger result can be proven.")
        assert out.correct_text == meta_option_sentence()
        assert out.original_correct_text == "the true claim"


def test_substitution_matches_committed_golden_set():
    golden = json.loads(
        (Path(__file__).parent / "data" / "substitution_golden.json")
        .read_text())
    ids = [f"q{i:04d}" for i in range(1000)]
    replaced = [
        i for i in ids
        if apply_substitution_resistance(
            item(i), golden["fraction"], golden["rng_seed"]
        ).substitution_resistant
    ]
    assert len(replaced) == golden["replaced_count"] == 494
    assert replaced == golden["replaced_ids"]
    assert 400 <= len(replaced) <= 600


def test_substitution_referentially_transparent():
    a = apply_substitution_resistance(item("qx"), 0.5, 123)
    b = apply_substitution_resistance(item("qx"), 0.5, 123)
    assert a.substitution_resistant == b.substitution_resistant


# --- rubric -----------------------------------------------------------------------

def test_rubric_boundaries():
    cases = [
        (rubric_reply(2, 2, 2, 2), 8, False),
        (rubric_reply(1, 1, 1, 1), 4, True),
        (rubric_reply(2, 1, 1, 1), 5, False),
    ]
    for reply, aggregate, discarded in cases:
        gw = mock_gateway([MockRule("QUALITY SCORING", [reply])])
        target = item()
        score = score_rubric(target, gw, keep_threshold=5)
        assert score.aggregate == aggregate
        assert target.discarded is discarded


def test_rubric_clamps_out_of_range():
    gw = mock_gateway([MockRule("QUALITY SCORING", [rubric_reply(9, -3, 1, 2)])])
    score = score_rubric(item(), gw)
    assert (score.als, score.tas, score.gps, score.dqs) == (2, 0, 1, 2)


def test_rubric_unparseable_twice_fails():
    gw = mock_gateway([MockRule("QUALITY SCORING", ["??", "??"])])
    with pytest.raises(GenerationFailed):
        score_rubric(item(), gw)


@given(st.integers(0, 2), st.integers(0, 2), st.integers(0, 2),
       st.integers(0, 2), st.integers(0, 8))
def test_keep_set_is_exactly_aggregate_ge_threshold(als, tas, gps, dqs,
                                                    threshold):
    gw = mock_gateway([MockRule("QUALITY SCORING",
                                [rubric_reply(als, tas, gps, dqs)])])
    target = item()
    score = score_rubric(target, gw, keep_threshold=threshold)
    assert score.aggregate == als + tas + gps + dqs
    assert target.discarded == (score.aggregate < threshold)


# --- whole item -------------------------------------------------------------------

def test_forge_item_end_to_end_invariants():
    gw = mock_gateway([
        MockRule("MAIN_THEOREM", [stem_reply()],
                 system_contains="multiple-choice question stem"),
        MockRule("MAIN_THEOREM", [distractor_reply()],
                 system_contains="hard-negative distractors"),
        MockRule("AUDIT TARGET", [distractor_reply(tag=" (revised)")]),
        MockRule("QUESTION_STEM", [json.dumps(
            {"question": "Which is the strongest conclusion about $F(G)$?"})]),
    ])
    judge = mock_gateway([MockRule("QUALITY SCORING", [rubric_reply()])])
    out = forge_item(record(sketch=None), gw, judge, "2026-01")
    data = out.to_json()
    labels = [c["label"] for c in data["mcq"]["choices"]]
    assert labels == ["B", "C", "D", "E"]
    assert data["mcq"]["correct_choice"]["label"] == "A"
    meta = data["mcq"]["meta"]
    assert meta["weaker_true_label"] == "C"
    assert set(meta["false_labels"]) == {"B", "D", "E"}
    assert meta["wildcard_false_label"] in {"B", "D", "E"}
    assert meta["score"] == 8
    assert out.id == "2026-01_2601.00001_v0"
    # round trip through the persisted schema
    again = McqItem.from_json(data)
    assert again.correct_text == out.correct_text
    assert again.rubric.aggregate == 8
