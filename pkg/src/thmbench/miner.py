"""Main-theorem mining: fast-path extraction, normalization, context recovery.

The rule-based path searches only the introduction and prefers the standard
theorem environment; an agentic fallback asks the gateway for at most one
primary claim and verifies it verbatim against the document. Extracted
statements are macro-expanded and cross-reference-resolved, then a
two-layer scoring pass assembles a self-contained context bundle under a
character budget.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import ExtractionRefused
from .gateway import ChatRequest, Gateway
from .promptlib import agentic_extraction_prompts
from .texdoc import (
    AUX_KINDS,
    MacroDef,
    TexDocument,
    find_environments,
    read_group,
    read_optional,
)

STOPWORDS = frozenset("""
a an and are as at be by for from has have if in into is it its let of on
or such that the then there these this to we which with
""".split())

DEFINITIONAL_CUES = ("let", "denote", "suppose", "define", "assume", "write")

CONTEXT_HEADINGS = ("setup", "preliminar", "notation", "definition")


@dataclass
class MinerConfig:
    w_overlap: float = 3.0
    w_cue: float = 2.0
    w_density: float = 2.0
    w_proximity: float = 1.0
    intro_top_k: int = 6
    global_top_m: int = 4
    force_preceding_blocks: int = 2
    context_budget: int = 6000
    heading_boost: float = 2.0
    agentic_window_chars: int = 20000
    macro_depth_cap: int = 32


@dataclass
class TheoremCandidate:
    env_name: str
    raw_body: str
    section: str
    char_span: tuple[int, int]

    def to_json(self) -> dict:
        return {"env_name": self.env_name, "raw_body": self.raw_body,
                "section": self.section, "char_span": list(self.char_span)}

    @classmethod
    def from_json(cls, data: dict) -> "TheoremCandidate":
        return cls(data["env_name"], data["raw_body"], data["section"],
                   tuple(data["char_span"]))


@dataclass
class ScoredBlock:
    text: str
    scores: dict[str, float]
    start: int
    forced: bool = False

    @property
    def total(self) -> float:
        return self.scores.get("total", 0.0)


@dataclass
class ContextBundle:
    intro_blocks: list[ScoredBlock] = field(default_factory=list)
    global_blocks: list[ScoredBlock] = field(default_factory=list)
    resolved_appendices: list[str] = field(default_factory=list)
    char_budget: int = 0

    @property
    def total_chars(self) -> int:
        return (sum(len(b.text) for b in self.intro_blocks)
                + sum(len(b.text) for b in self.global_blocks)
                + sum(len(t) for t in self.resolved_appendices))

    def concatenated(self) -> str:
        parts = [b.text for b in self.intro_blocks]
        parts += [b.text for b in self.global_blocks]
        parts += self.resolved_appendices
        return "\n\n".join(parts)

    def to_json(self) -> dict:
        def dump(blocks):
            return [{"text": b.text, "scores": b.scores, "start": b.start,
                     "forced": b.forced} for b in blocks]
        return {"intro_blocks": dump(self.intro_blocks),
                "global_blocks": dump(self.global_blocks),
                "resolved_appendices": self.resolved_appendices,
                "total_chars": self.total_chars,
                "char_budget": self.char_budget}

    @classmethod
    def from_json(cls, data: dict) -> "ContextBundle":
        def load(blocks):
            return [ScoredBlock(b["text"], b["scores"], b["start"], b["forced"])
                    for b in blocks]
        return cls(load(data.get("intro_blocks", [])),
                   load(data.get("global_blocks", [])),
                   data.get("resolved_appendices", []),
                   data.get("char_budget", 0))


# --- sectioning ---------------------------------------------------------------

_SECTION_RE = re.compile(r"\\section\*?\{([^}]*)\}")


def section_spans(text: str) -> list[tuple[str, int, int]]:
    """(title, body_start, body_end) for every \\section, in order."""
    matches = list(_SECTION_RE.finditer(text))
    spans = []
    for i, match in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        spans.append((match.group(1).strip(), match.end(), end))
    return spans


def introduction_span(text: str) -> tuple[int, int] | None:
    for title, start, end in section_spans(text):
        if title.lower().startswith("introduction"):
            return start, end
    return None


def section_title_at(text: str, pos: int) -> str:
    title = ""
    for t, start, end in section_spans(text):
        if start <= pos < end:
            title = t
    return title


# --- rule-based fast path ---------------------------------------------------------

def _priority_class(env_name: str, title: str) -> int:
    """0 = standard theorem, 1 = custom theorem-like, 2 = auxiliary kinds."""
    name_l, title_l = env_name.lower(), title.lower()
    if name_l == "theorem" or title_l == "theorem":
        return 0
    if name_l in AUX_KINDS or title_l in AUX_KINDS:
        return 2
    return 1


def rule_based_extract(doc: TexDocument) -> TheoremCandidate | None:
    intro = introduction_span(doc.full_text)
    if intro is None or not doc.theorem_envs:
        return None
    lo, hi = intro
    by_class: dict[int, list[tuple[int, str, int, int]]] = {0: [], 1: [], 2: []}
    names = set(doc.theorem_envs)
    for name, start, body_start, body_end, _ in find_environments(
            doc.full_text, names):
        if not (lo <= start < hi):
            continue
        info = doc.theorem_envs[name]
        cls = _priority_class(name, info.title)
        by_class[cls].append((start, name, body_start, body_end))
    for cls in (0, 1, 2):
        if by_class[cls]:
            start, name, body_start, body_end = min(by_class[cls])
            return TheoremCandidate(
                env_name=name,
                raw_body=doc.full_text[body_start:body_end].strip(),
                section=section_title_at(doc.full_text, start).lower(),
                char_span=(body_start, body_end),
            )
    return None


# --- agentic fallback ----------------------------------------------------------

def whitespace_insensitive_find(haystack: str, needle: str,
                                ) -> tuple[int, int] | None:
    """Locate needle in haystack ignoring whitespace runs; original offsets."""
    needle_norm = " ".join(needle.split())
    if not needle_norm:
        return None
    chars: list[str] = []
    positions: list[int] = []
    for i, ch in enumerate(haystack):
        if ch.isspace():
            if chars and chars[-1] == " ":
                continue
            chars.append(" ")
        else:
            chars.append(ch)
        positions.append(i)
    idx = "".join(chars).find(needle_norm)
    if idx == -1:
        return None
    return positions[idx], positions[idx + len(needle_norm) - 1] + 1


def _candidate_blocks(reply: str) -> list[str]:
    """Candidate theorem texts from a model reply, most specific first."""
    texts: list[str] = []
    stripped = reply.strip()
    try:
        payload = json.loads(stripped)
    except ValueError:
        payload = None
    if isinstance(payload, dict) and "theorem" in payload:
        value = payload["theorem"]
        if isinstance(value, str):
            texts.append(value)
        elif isinstance(value, list) and value:
            texts.append(str(value[0]))
    if not texts:
        texts.append(stripped)
        blocks = [b.strip() for b in re.split(r"\n\s*\n", stripped) if b.strip()]
        if len(blocks) > 1:
            texts.extend(blocks)
    return texts


def agentic_window(doc: TexDocument, config: MinerConfig) -> str:
    """Abstract + introduction + a bounded prefix of the body."""
    pieces = []
    for name, _, body_start, body_end, _ in find_environments(
            doc.full_text, {"abstract"}):
        pieces.append(doc.full_text[body_start:body_end])
        break
    intro = introduction_span(doc.full_text)
    if intro is not None:
        pieces.append(doc.full_text[intro[0]:intro[1]])
    pieces.append(doc.full_text[:config.agentic_window_chars])
    return "\n\n".join(pieces)


def agentic_extract(doc: TexDocument, gateway: Gateway,
                    config: MinerConfig | None = None,
                    ) -> TheoremCandidate:
    """Ask the gateway for one primary claim; verify it verbatim or refuse."""
    config = config or MinerConfig()
    system, user = agentic_extraction_prompts(agentic_window(doc, config))
    response = gateway.complete_text(ChatRequest(
        system_prompt=system, user_prompt=user))
    if response.failed or not response.text.strip():
        raise ExtractionRefused(f"fallback extractor error: {response.provider_error}")
    for block in _candidate_blocks(response.text):
        span = whitespace_insensitive_find(doc.full_text, block)
        if span is None:
            continue
        env_name = _enclosing_theorem_env(doc, span) or "theorem"
        return TheoremCandidate(
            env_name=env_name,
            raw_body=doc.full_text[span[0]:span[1]],
            section=section_title_at(doc.full_text, span[0]).lower(),
            char_span=span,
        )
    raise ExtractionRefused("reply text not found verbatim in document")


def _enclosing_theorem_env(doc: TexDocument, span: tuple[int, int]) -> str | None:
    for name, _, body_start, body_end, _ in find_environments(
            doc.full_text, set(doc.theorem_envs)):
        if body_start <= span[0] and span[1] <= body_end:
            return name
    return None


# --- macro expansion -----------------------------------------------------------

class _DepthExceeded(Exception):
    def __init__(self, name):
        self.name = name


_PLACEHOLDER_RE = re.compile(r"#(\d)")
_COMMAND_RE = re.compile(r"\\([a-zA-Z]+)")


def _substitute(template: str, args: list[str]) -> str:
    def repl(match):
        i = int(match.group(1)) - 1
        return args[i] if 0 <= i < len(args) else match.group(0)
    return _PLACEHOLDER_RE.sub(repl, template)


def _parse_call(text: str, pos_after_name: int, macro: MacroDef,
                ) -> tuple[list[str], int] | None:
    """Consume the macro's arguments; returns (args, end) or None if short."""
    args: list[str] = []
    pos = pos_after_name
    remaining = macro.arity
    if macro.opt_default is not None and remaining > 0:
        opt = read_optional(text, pos)
        if opt is not None:
            args.append(opt[0])
            pos = opt[1]
        else:
            args.append(macro.opt_default)
        remaining -= 1
    for _ in range(remaining):
        group = read_group(text, pos)
        if group is None:
            return None
        args.append(group[0])
        pos = group[1]
    return args, pos


def _expand_text(text: str, table: dict[str, MacroDef], depth: int, cap: int,
                 flags: list[str]) -> str:
    out = []
    pos = 0
    while True:
        match = _COMMAND_RE.search(text, pos)
        if match is None:
            out.append(text[pos:])
            return "".join(out)
        name = match.group(1)
        if name not in table:
            out.append(text[pos:match.end()])
            pos = match.end()
            continue
        macro = table[name]
        parsed = _parse_call(text, match.end(), macro)
        out.append(text[pos:match.start()])
        if parsed is None:
            flags.append(f"args-missing:{name}")
            out.append(text[match.start():match.end()])
            pos = match.end()
            continue
        args, call_end = parsed
        try:
            out.append(_expand_call(macro, args, table, depth, cap, flags))
        except _DepthExceeded:
            if depth > 0:
                raise
            # keep the original call text untouched, flag, move on
            flags.append(f"depth-exceeded:{name}")
            out.append(text[match.start():call_end])
        pos = call_end


def _expand_call(macro: MacroDef, args: list[str], table: dict[str, MacroDef],
                 depth: int, cap: int, flags: list[str]) -> str:
    if depth + 1 > cap:
        raise _DepthExceeded(macro.name)
    body = _substitute(macro.template, args)
    return _expand_text(body, table, depth + 1, cap, flags)


def expand_macros(text: str, macro_table: dict[str, MacroDef],
                  depth_cap: int = 32) -> tuple[str, list[str]]:
    """Substitute defined macros to fixpoint (depth-capped).

    A definition cycle leaves the offending call in its original written
    form and records a depth-exceeded flag; everything else still expands.
    """
    flags: list[str] = []
    return _expand_text(text, macro_table, 0, depth_cap, flags), flags


# --- reference resolution --------------------------------------------------------

_REF_RE = re.compile(r"\\(?:ref|eqref)\{([^}]*)\}")


def resolve_refs(text: str, label_index) -> tuple[str, list[str]]:
    """Inline labeled content: equations verbatim, theorem-likes kind-prefixed."""
    flags: list[str] = []

    def repl(match):
        label = match.group(1)
        entry = label_index.get(label)
        if entry is None:
            flags.append(f"unresolved-ref:{label}")
            return match.group(0)
        if entry.kind == "equation":
            return f"[{entry.body}]"
        return f"[{entry.kind}: {entry.body}]"

    return _REF_RE.sub(repl, text), flags


# --- context recovery -------------------------------------------------------------

_TOKEN_RE = re.compile(r"\\[a-zA-Z]+|[A-Za-z0-9]+")


def _tokens(text: str) -> set[str]:
    return {t.lower() for t in _TOKEN_RE.findall(text)} - STOPWORDS


def _jaccard(a: set[str], b: set[str]) -> float:
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


def _cue_count(text: str) -> int:
    lowered = text.lower()
    return sum(len(re.findall(r"\b" + cue + r"\b", lowered))
               for cue in DEFINITIONAL_CUES)


def _math_density(text: str) -> float:
    if not text:
        return 0.0
    math_chars = 0
    in_math = False
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            if in_math:
                math_chars += 2
            i += 2
            continue
        if ch == "$":
            in_math = not in_math
        elif in_math:
            math_chars += 1
        i += 1
    return math_chars / len(text)


def split_blocks(text: str, base: int = 0) -> list[tuple[int, str]]:
    """Paragraph blocks (blank-line separated) with absolute start offsets."""
    blocks = []
    for match in re.finditer(r"(?:[^\n]|\n(?!\s*\n))+", text):
        chunk = match.group(0)
        if chunk.strip():
            blocks.append((base + match.start(), chunk.strip()))
    return blocks


def extract_anchor_terms(statement: str) -> list[str]:
    """Math tokens plus capitalized multiword phrases, stopwords removed."""
    anchors: list[str] = []
    for match in re.finditer(r"\$([^$]+)\$", statement):
        term = match.group(1).strip()
        if term and term.lower() not in STOPWORDS:
            anchors.append(term)
    for match in re.finditer(
            r"\b([A-Z][a-zA-Z]+(?:\s+[A-Z][a-zA-Z]+)+)\b", statement):
        words = match.group(1).split()
        while words and words[0].lower() in STOPWORDS:
            words = words[1:]
        if len(words) < 2:
            continue
        anchors.append(" ".join(words))
    seen = set()
    unique = []
    for a in anchors:
        if a not in seen:
            seen.add(a)
            unique.append(a)
    return unique


def _anchor_hit(anchor: str, text: str) -> bool:
    """Word-bounded for short plain anchors, substring otherwise."""
    if len(anchor) <= 2 and anchor.isalnum():
        return re.search(r"(?<![A-Za-z0-9])" + re.escape(anchor)
                         + r"(?![A-Za-z0-9])", text) is not None
    return anchor in text


def score_intro_block(block: str, statement_tokens: set[str], distance: int,
                      config: MinerConfig) -> dict[str, float]:
    overlap = _jaccard(_tokens(block), statement_tokens)
    cues = float(_cue_count(block))
    density = _math_density(block)
    proximity = config.w_proximity / (1.0 + distance)
    total = (config.w_overlap * overlap + config.w_cue * cues
             + config.w_density * density + proximity)
    return {"overlap": overlap, "cues": cues, "density": density,
            "proximity": proximity, "total": total}


def _env_span(doc: TexDocument, cand: TheoremCandidate) -> tuple[int, int]:
    """Full \\begin..\\end span of the candidate's environment."""
    begin_marker = f"\\begin{{{cand.env_name}}}"
    start = doc.full_text.rfind(begin_marker, 0, cand.char_span[0])
    if start == -1:
        start = cand.char_span[0]
    end_marker = f"\\end{{{cand.env_name}}}"
    end = doc.full_text.find(end_marker, cand.char_span[1])
    end = cand.char_span[1] if end == -1 else end + len(end_marker)
    return start, end


def recover_context(doc: TexDocument, cand: TheoremCandidate, budget: int,
                    config: MinerConfig | None = None) -> ContextBundle:
    config = config or MinerConfig()
    statement_tokens = _tokens(cand.raw_body)
    theorem_start, theorem_end = _env_span(doc, cand)

    # Layer 1: introduction blocks before the theorem.
    intro = introduction_span(doc.full_text)
    intro_selected: list[ScoredBlock] = []
    if intro is not None:
        lo, hi = intro
        region = doc.full_text[lo:min(hi, theorem_start)]
        blocks = split_blocks(region, base=lo)
        blocks = [b for b in blocks if b[0] + len(b[1]) <= theorem_start]
        scored = []
        for rank, (start, text) in enumerate(blocks):
            distance = len(blocks) - 1 - rank  # 0 = immediately preceding
            scores = score_intro_block(text, statement_tokens, distance, config)
            scored.append(ScoredBlock(
                text, scores, start,
                forced=distance < config.force_preceding_blocks))
        top = sorted(scored, key=lambda b: -b.total)[:config.intro_top_k]
        keep = {id(b) for b in top} | {id(b) for b in scored if b.forced}
        intro_selected = [b for b in scored if id(b) in keep]

    # Layer 2: anchor-driven whole-document scan.
    anchors = extract_anchor_terms(cand.raw_body)
    chosen_starts = {b.start for b in intro_selected}
    global_scored: list[ScoredBlock] = []
    doc_len = max(len(doc.full_text), 1)
    for start, text in split_blocks(doc.full_text):
        if start in chosen_starts:
            continue
        if start < theorem_end and start + len(text) > theorem_start:
            continue  # overlaps the theorem environment itself
        hits = sum(1 for a in anchors if _anchor_hit(a, text))
        heading = section_title_at(doc.full_text, start).lower()
        boost = config.heading_boost if heading.startswith(CONTEXT_HEADINGS) else 0.0
        distance_penalty = abs(start - theorem_start) / doc_len
        total = hits + boost - distance_penalty
        if hits > 0 and total > 0:
            global_scored.append(ScoredBlock(
                text, {"anchor_hits": float(hits), "heading_boost": boost,
                       "distance_penalty": distance_penalty, "total": total},
                start))
    global_selected = sorted(global_scored, key=lambda b: -b.total)
    global_selected = sorted(global_selected[:config.global_top_m],
                             key=lambda b: b.start)

    # Resolve cross-references inside the selected blocks.
    appendices: list[str] = []
    seen = set()
    for block in intro_selected + global_selected:
        for match in _REF_RE.finditer(block.text):
            entry = doc.label_index.get(match.group(1))
            if entry is None:
                continue
            rendered = (f"[{entry.body}]" if entry.kind == "equation"
                        else f"[{entry.kind}: {entry.body}]")
            if rendered not in seen:
                seen.add(rendered)
                appendices.append(rendered)

    bundle = ContextBundle(
        intro_blocks=sorted(intro_selected, key=lambda b: b.start),
        global_blocks=global_selected,
        resolved_appendices=appendices,
        char_budget=budget,
    )
    _trim_to_budget(bundle, budget)
    return bundle


def _trim_to_budget(bundle: ContextBundle, budget: int) -> None:
    # Appendices carry no score: they go first, most recently added first.
    while bundle.total_chars > budget and bundle.resolved_appendices:
        bundle.resolved_appendices.pop()
    while bundle.total_chars > budget:
        droppable = ([b for b in bundle.global_blocks]
                     + [b for b in bundle.intro_blocks if not b.forced])
        if not droppable:
            break
        victim = min(droppable, key=lambda b: b.total)
        if victim in bundle.global_blocks:
            bundle.global_blocks.remove(victim)
        else:
            bundle.intro_blocks.remove(victim)
    # Degenerate budgets: truncate forced blocks, farther one first.
    for block in bundle.intro_blocks:
        overshoot = bundle.total_chars - budget
        if overshoot <= 0:
            break
        keep = max(len(block.text) - overshoot, 0)
        block.text = block.text[:keep]
    bundle.intro_blocks = [b for b in bundle.intro_blocks if b.text]


# --- the mined record ---------------------------------------------------------

@dataclass
class TheoremRecord:
    paper: dict
    candidate: TheoremCandidate
    expanded_statement: str
    context: ContextBundle
    anchor_terms: list[str]
    extraction_path: str                 # "rule_based" | "agentic"
    sketch: "object | None" = None       # annotate.ProofSketch once filled
    categories: list[str] = field(default_factory=list)  # category ids
    flags: list[str] = field(default_factory=list)

    @property
    def arxiv_id(self) -> str:
        return self.paper.get("arxiv_id", "")

    def to_json(self) -> dict:
        return {
            "paper": self.paper,
            "candidate": self.candidate.to_json(),
            "expanded_statement": self.expanded_statement,
            "context": self.context.to_json(),
            "anchor_terms": self.anchor_terms,
            "extraction_path": self.extraction_path,
            "sketch": self.sketch.to_json() if self.sketch else None,
            "categories": self.categories,
            "flags": self.flags,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TheoremRecord":
        from .annotate import ProofSketch
        sketch = data.get("sketch")
        return cls(
            paper=data["paper"],
            candidate=TheoremCandidate.from_json(data["candidate"]),
            expanded_statement=data["expanded_statement"],
            context=ContextBundle.from_json(data["context"]),
            anchor_terms=data.get("anchor_terms", []),
            extraction_path=data.get("extraction_path", "rule_based"),
            sketch=ProofSketch.from_json(sketch) if sketch else None,
            categories=data.get("categories", []),
            flags=data.get("flags", []),
        )


def mine_theorem(doc: TexDocument, paper: dict, gateway: Gateway,
                 config: MinerConfig | None = None) -> TheoremRecord:
    """Full Stage-3a pass: locate, normalize, and contextualize one theorem.

    The agentic fallback runs only when the fast path returns nothing;
    ExtractionRefused propagates so the caller can drop the paper.
    """
    config = config or MinerConfig()
    candidate = rule_based_extract(doc)
    path = "rule_based"
    if candidate is None:
        candidate = agentic_extract(doc, gateway, config)
        path = "agentic"
    # Resolve references first (inlined content may carry macros), then
    # expand; repeat resolution in case labeled bodies reference further.
    expanded = candidate.raw_body
    ref_flags: list[str] = []
    for _ in range(5):
        expanded, flags = resolve_refs(expanded, doc.label_index)
        ref_flags = flags
        if not flags and "\\ref" not in expanded and "\\eqref" not in expanded:
            break
        if flags:
            break  # only unknown labels remain
    expanded, expansion_flags = expand_macros(
        expanded, doc.macro_table, config.macro_depth_cap)
    context = recover_context(doc, candidate, config.context_budget, config)
    return TheoremRecord(
        paper=paper,
        candidate=candidate,
        expanded_statement=expanded,
        context=context,
        anchor_terms=extract_anchor_terms(candidate.raw_body),
        extraction_path=path,
        flags=expansion_flags + ref_flags,
    )
