"""Build-time LaTeX validation for benchmark items.

Items are wrapped in a minimal standalone document and compiled with a
configured engine; without one the gate degrades to a structural lint
(balanced braces and environments, dollar parity, known-command
whitelist) and marks results lint-only. Failures get one gateway-driven
repair attempt before rejection.
"""

from __future__ import annotations

import re
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .forge import DISTRACTOR_LABELS, McqItem
from .gateway import ChatRequest, Gateway
from .promptlib import latex_repair_prompts

KNOWN_COMMANDS = frozenset("""
alpha beta gamma delta epsilon varepsilon zeta eta theta iota kappa lambda
mu nu xi pi rho sigma tau upsilon phi varphi chi psi omega
Gamma Delta Theta Lambda Xi Pi Sigma Upsilon Phi Psi Omega
frac sqrt sum prod int oint lim sup inf max min log ln exp sin cos tan
binom partial nabla infty emptyset varnothing
mathbb mathcal mathfrak mathrm mathbf mathsf mathit mathop text textbf
textit texttt operatorname mathopen mathclose
le leq ge geq ne neq equiv sim simeq approx cong propto ll gg prec succ
subset supset subseteq supseteq in notin ni cup cap setminus times div
pm mp cdot cdots ldots dots vdots ddots circ bullet star ast oplus otimes
to mapsto rightarrow leftarrow Rightarrow Leftarrow leftrightarrow
Leftrightarrow longrightarrow Longrightarrow implies iff hookrightarrow
forall exists nexists neg lnot land lor wedge vee vdash nvdash models
mid nmid parallel perp angle triangle square
langle rangle lceil rceil lfloor rfloor vert Vert lVert rVert
left right big Big bigg Bigg bigl bigr Bigl Bigr
hat bar tilde widehat widetilde overline underline vec dot ddot
prime dagger flat sharp natural
limsup liminf det dim ker hom deg gcd lcm bmod pmod mod
quad qquad hspace vspace smallskip medskip bigskip
label ref eqref cite emph textsc textrm mbox boxed
begin end item caption section subsection paragraph
aleph beth hbar ell Re Im wp top bot
varliminf varlimsup overset underset stackrel substack
geqslant leqslant lesssim gtrsim ll gg asymp
Zeckendorf
""".split())

WRAPPER = """\\documentclass{article}
\\usepackage{amsmath,amssymb,amsthm}
\\begin{document}
%s
\\end{document}
"""


@dataclass
class GateResult:
    verdict: str                 # "pass" | "repaired" | "rejected"
    mode: str                    # "compile" | "lint-only"
    item: McqItem
    problems: list[str] = field(default_factory=list)


def lint_latex(text: str, extra_whitelist: frozenset[str] = frozenset(),
               ) -> list[str]:
    """Structural problems in a LaTeX fragment (empty list = clean)."""
    problems = []
    depth = 0
    dollars = 0
    env_stack: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\\" and i + 1 < n:
            nxt = text[i + 1]
            if not nxt.isalpha():
                i += 2  # escaped symbol: \{, \}, \$, \%, \\ ...
                continue
            match = re.match(r"\\([a-zA-Z]+)", text[i:])
            name = match.group(1)
            if name in ("begin", "end"):
                group = re.match(r"\\(?:begin|end)\s*\{([^}]*)\}", text[i:])
                if group:
                    env = group.group(1)
                    if name == "begin":
                        env_stack.append(env)
                    elif not env_stack or env_stack.pop() != env:
                        problems.append(f"unbalanced environment: {env}")
                    i += group.end()
                    continue
            elif (name not in KNOWN_COMMANDS
                    and name not in extra_whitelist):
                problems.append(f"unknown command: \\{name}")
            i += match.end()
            continue
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth < 0:
                problems.append("unbalanced braces: stray }")
                depth = 0
        elif ch == "$":
            dollars += 1
        i += 1
    if depth > 0:
        problems.append(f"unbalanced braces: {depth} unclosed")
    if dollars % 2 == 1:
        problems.append("unbalanced math delimiters: odd $ count")
    for env in env_stack:
        problems.append(f"unclosed environment: {env}")
    return problems


def wrap_item_document(item: McqItem) -> str:
    parts = [item.question, item.correct_text]
    parts += [item.distractors[label] for label in DISTRACTOR_LABELS]
    return WRAPPER % "\n\n".join(parts)


def compile_check(document: str, engine: list[str],
                  timeout: float = 60.0) -> list[str]:
    """Run the engine on a throwaway document; problems on nonzero exit."""
    with tempfile.TemporaryDirectory() as workdir:
        tex_path = Path(workdir) / "item.tex"
        tex_path.write_text(document)
        try:
            result = subprocess.run(
                [*engine, "item.tex"], cwd=workdir, capture_output=True,
                text=True, timeout=timeout)
        except FileNotFoundError as exc:
            raise LatexEngineMissing(str(exc)) from exc
        if result.returncode == 0:
            return []
        tail = (result.stdout or result.stderr).splitlines()[-12:]
        return ["compile failed"] + tail


class LatexEngineMissing(Exception):
    pass


def _item_pieces(item: McqItem) -> dict[str, str]:
    pieces = {"question": item.question, "correct": item.correct_text}
    for label in DISTRACTOR_LABELS:
        pieces[f"choice_{label}"] = item.distractors[label]
    return pieces


def _apply_piece(item: McqItem, key: str, text: str) -> None:
    if key == "question":
        item.question = text
    elif key == "correct":
        item.correct_text = text
    else:
        item.distractors[key.removeprefix("choice_")] = text


def latex_gate(item: McqItem, gateway: Gateway,
               engine: list[str] | None = None,
               extra_whitelist: frozenset[str] = frozenset()) -> GateResult:
    """pass | repaired | rejected, with lint-only marking when no engine.

    Clean items make zero gateway calls. On failure each offending piece
    gets one repair attempt (syntax only), then the item is rechecked.
    """
    mode = "compile" if engine else "lint-only"

    def check(current: McqItem) -> list[str]:
        nonlocal mode
        if mode == "compile":
            try:
                doc_problems = compile_check(wrap_item_document(current), engine)
            except LatexEngineMissing:
                mode = "lint-only"  # degrade, never silently pass
            else:
                if not doc_problems:
                    return []
                lint_problems = _lint_pieces(current, extra_whitelist)
                return lint_problems or doc_problems
        return _lint_pieces(current, extra_whitelist)

    problems = check(item)
    if not problems:
        return GateResult("pass", mode, item)

    targets = [(key, text, lint_latex(text, extra_whitelist))
               for key, text in _item_pieces(item).items()]
    dirty = [(key, text, piece_problems)
             for key, text, piece_problems in targets if piece_problems]
    if not dirty:
        # compile-level failure with clean pieces: hand every piece the
        # engine diagnostics and let the repair model find the culprit
        dirty = [(key, text, problems) for key, text, _ in targets]

    repaired_any = False
    for key, text, diagnostics in dirty:
        system, user = latex_repair_prompts(text, "; ".join(diagnostics))
        response = gateway.complete_text(ChatRequest(
            system_prompt=system, user_prompt=user))
        if response.failed or not response.text.strip():
            continue
        candidate = response.text.strip()
        if candidate != text and not lint_latex(candidate, extra_whitelist):
            _apply_piece(item, key, candidate)
            repaired_any = True

    remaining = check(item)
    if remaining:
        return GateResult("rejected", mode, item, remaining)
    if repaired_any:
        return GateResult("repaired", mode, item)
    return GateResult("rejected", mode, item, problems)


def _lint_pieces(item: McqItem, extra_whitelist: frozenset[str]) -> list[str]:
    problems = []
    for key, text in _item_pieces(item).items():
        for problem in lint_latex(text, extra_whitelist):
            problems.append(f"{key}: {problem}")
    return problems
