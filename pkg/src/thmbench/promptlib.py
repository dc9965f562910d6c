"""Prompt assets and builders for every gateway-facing stage.

The thirteen stem prompts and the distractor prompt live as text assets in
``prompts/``; smaller judge and utility prompts are inline templates. User
prompts start with a stable stage marker so scripted mocks can key on them.
"""

from __future__ import annotations

from importlib import resources

from .taxonomy import Category

_META_OPTION = ("One of the remaining options is correct, but a stronger "
                "result can be proven.")


def load_asset(name: str) -> str:
    return resources.files("thmbench.prompts").joinpath(name).read_text()


def stem_prompt_for(category: Category) -> str:
    return load_asset(f"stem_{category.value}.txt")


# Category-specific tampering guidance spliced into the distractor prompt.
CATEGORY_GUIDANCE = {
    Category.ALGORITHMIC_CONSTRUCTIVE:
        "Tamper with effectivity: claim computability of a quantity the "
        "construction only bounds, drop or add decidability of a side "
        "question, or strengthen an existence of an algorithm to a "
        "complexity guarantee that was never proven.",
    Category.ASYMPTOTIC_LIMIT:
        "Tamper with the regime or rate: shift the exponent or its epsilon "
        "loss, swap lower and upper asymptotics, or replace an eventual "
        "statement by a uniform one.",
    Category.BICONDITIONAL_EQUIVALENCE:
        "Modify a quantifier within one side of the biconditional, weaken "
        "an equivalence to a one-way implication, or swap a side for a "
        "closely related but inequivalent property.",
    Category.CLASSIFICATION_BIJECTION:
        "Replace the bijection with a mere surjection or injection, drop a "
        "family from the classification, or extend it to a class the "
        "theorem does not cover.",
    Category.EXISTENCE:
        "Add uniqueness not stated in the theorem, enlarge the family "
        "claimed to exist, or move the existence into a smaller ambient "
        "class.",
    Category.EXISTENTIAL_UNIVERSAL:
        "Make the existing object depend on parameters it must be "
        "independent of (or vice versa), or swap the quantifier order.",
    Category.IMPLICATION:
        "Strengthen the conclusion beyond what the assumptions give, drop "
        "one hypothesis silently, or replace the conclusion with a nearby "
        "property that does not follow.",
    Category.INDEPENDENCE_CONSISTENCY:
        "Upgrade independence to provable falsity or provability, or relate "
        "the statement to the wrong base theory.",
    Category.INEQUALITY_BOUND:
        "Alter the exponent or direction of the inequality, sharpen the "
        "constant beyond what is proven, or extend the validity range.",
    Category.NONEXISTENCE:
        "Shrink or enlarge the excluded class at its boundary, or permit a "
        "boundary case the theorem rules out.",
    Category.UNIQUENESS:
        "Weaken uniqueness to existence, strengthen it to a canonical or "
        "effective choice, or change the equivalence up to which the object "
        "is unique.",
    Category.UNIVERSAL:
        "Restrict or extend the quantified class at a subtle boundary, or "
        "strengthen the property that every member satisfies.",
    Category.UNIVERSAL_EXISTENTIAL:
        "Make the witness uniform in the quantified object when the theorem "
        "allows dependence, or weaken effective witnesses to bare "
        "existence.",
}


def agentic_extraction_prompts(window: str) -> tuple[str, str]:
    system = (
        "You are an expert mathematical editor. From the LaTeX document "
        "window you are given, return at most one primary theorem-level "
        "claim: the paper's main theorem. Prefer theorem environments over "
        "lemma, proposition, or corollary when multiple candidates appear. "
        "Reply with a JSON object {\"theorem\": \"<the theorem body, copied "
        "verbatim from the document>\"}. Copy the statement exactly; do not "
        "paraphrase. If the document states no theorem, reply with the "
        "single word NONE."
    )
    user = f"DOCUMENT WINDOW:\n{window}"
    return system, user


def classification_prompts(statement: str) -> tuple[str, str]:
    forms = "\n".join(
        f"- {c.value}: {c.canonical_form}" for c in Category)
    system = (
        "You classify mathematical theorem statements by logical form. "
        "Choose the single best-fitting primary category and optionally "
        "further applicable secondary categories from this list:\n"
        f"{forms}\n"
        "Reply with a JSON object {\"primary\": \"<category>\", "
        "\"secondary\": [\"<category>\", ...]} using the category names "
        "exactly as listed."
    )
    user = f"THEOREM STATEMENT:\n{statement}"
    return system, user


def sketch_prompts(statement: str, proof_material: str,
                   tighter: bool = False) -> tuple[str, str]:
    limit_clause = (" Keep the sketch substantially shorter this time; the "
                    "previous attempt was too long." if tighter else "")
    system = (
        "You are an expert mathematician. Write a concise proof sketch for "
        "the given theorem, capturing the high-level strategy without full "
        f"formal detail.{limit_clause} Reply with the sketch text only."
    )
    user = f"THEOREM:\n{statement}\n\nPROOF MATERIAL:\n{proof_material}"
    return system, user


def stem_prompts(category: Category, statement: str,
                 context: str) -> tuple[str, str]:
    system = stem_prompt_for(category)
    user = f"MAIN_THEOREM:\n{statement}\n\nRECOVERED CONTEXT:\n{context}"
    return system, user


def repair_prompts(stem: str, statement: str, context: str) -> tuple[str, str]:
    system = (
        "You are operating in theorem_only_repair mode. You are given a "
        "draft question stem together with the source theorem and recovered "
        "paper context, and nothing else. Inject any missing definitions or "
        "notation from the context so the stem is fully self-contained. Fix "
        "nothing else; never add, hint at, or strengthen answer content. If "
        "the stem is already self-contained, return it unchanged. Reply "
        "with a JSON object {\"question\": \"<repaired stem>\"}."
    )
    user = (f"QUESTION_STEM:\n{stem}\n\nTHEOREM:\n{statement}\n\n"
            f"RECOVERED CONTEXT:\n{context}")
    return system, user


def distractor_prompts(category: Category, statement: str,
                       sketch_text: str | None, stem: str,
                       correct_text: str) -> tuple[str, str]:
    guidance = CATEGORY_GUIDANCE[category]
    system = load_asset("distractors.txt").format(category_guidance=guidance)
    if sketch_text is None:
        # Degraded mode: no sketch hooks available; meta is still required.
        sketch_block = ("(no proof sketch is available for this theorem; "
                        "derive constraints from the statement itself and "
                        "use sketch_hook_type \"other\")")
    else:
        sketch_block = sketch_text
    user = (f"MAIN_THEOREM:\n{statement}\n\nPROOF_SKETCH:\n{sketch_block}\n\n"
            f"QUESTION_STEM:\n{stem}\n\nCORRECT_CHOICE:\n{correct_text}")
    return system, user


def revision_prompts(stem: str, correct_text: str,
                     current_set_json: str) -> tuple[str, str]:
    system = (
        "You are auditing multiple-choice distractors for surface-level "
        "distinguishability. Rewrite any option that can be rejected "
        "without genuine mathematical inspection (length mismatch, hedging, "
        "topic drift, missing notation) and keep the rest byte-identical. "
        "Reply with the full JSON object in exactly the same schema you "
        "received (choices, meta, sketch_usage_meta)."
    )
    user = (f"AUDIT TARGET\nQUESTION_STEM:\n{stem}\n\nCORRECT_CHOICE:\n"
            f"{correct_text}\n\nCURRENT_SET:\n{current_set_json}")
    return system, user


def rubric_prompts(question: str, options_block: str) -> tuple[str, str]:
    system = (
        "You are a strict benchmark quality judge. Score the multiple-choice "
        "item on four dimensions, each an integer from 0 to 2:\n"
        "- als: answer leakage (2 = the stem and distractor phrasing reveal "
        "nothing about the correct answer);\n"
        "- tas: tautology avoidance (2 = the correct option is not trivially "
        "true or self-evident without mathematical knowledge);\n"
        "- gps: generative pressure (2 = the distractors force genuine "
        "understanding rather than guessing);\n"
        "- dqs: distractor quality (2 = distractors are mathematically "
        "plausible, precise, and diverse).\n"
        "Reply with a JSON object {\"als\": n, \"tas\": n, \"gps\": n, "
        "\"dqs\": n}."
    )
    user = f"ITEM FOR QUALITY SCORING\nQUESTION:\n{question}\n\nOPTIONS:\n{options_block}"
    return system, user


def triviality_answer_prompts(stem: str) -> tuple[str, str]:
    system = (
        "You are an expert mathematician. Answer the following question "
        "directly and precisely in free form. No answer options exist; "
        "state the mathematical claim you believe is correct."
    )
    user = f"QUESTION (no options shown):\n{stem}"
    return system, user


def triviality_match_prompts(stem: str, freeform: str,
                             reference: str) -> tuple[str, str]:
    system = (
        "You compare a free-form answer against a reference answer for the "
        "same question. Decide whether the free-form answer expresses the "
        "same mathematical content as the reference. Reply with a JSON "
        "object {\"match\": true} or {\"match\": false}."
    )
    user = (f"QUESTION:\n{stem}\n\nFREE-FORM ANSWER:\n{freeform}\n\n"
            f"REFERENCE ANSWER:\n{reference}")
    return system, user


def latex_repair_prompts(snippet: str, diagnostics: str) -> tuple[str, str]:
    system = (
        "You repair LaTeX syntax. Fix syntax errors only (unbalanced braces "
        "or environments, malformed commands) and preserve the mathematical "
        "content exactly. Reply with the repaired LaTeX only, no commentary."
    )
    user = f"BROKEN LATEX:\n{snippet}\n\nDIAGNOSTICS:\n{diagnostics}"
    return system, user


EVAL_SYSTEM_PROMPT = (
    "You are an expert mathematician. Reason step by step and place your "
    "final answer inside \\boxed{}."
)


def meta_option_sentence() -> str:
    return _META_OPTION
