"""TeX source corpus: unpack e-print archives and assemble one logical document.

A submission arrives as a gzip tarball, a bare gzip'd single file, or a
plain text file. The assembled document has \\input/\\include resolved,
comments stripped, and its preamble indexed (theorem environments, macro
definitions, labeled environments) for the downstream miner.
"""

from __future__ import annotations

import gzip
import io
import re
import tarfile
from dataclasses import dataclass, field

from .errors import CorruptArchive, InclusionCycle, NoRootFile, UnsupportedArchive

DEFAULT_REMARK_NAMES = frozenset({
    "remark", "rem", "note", "example", "observation", "notation",
    "convention", "question",
})

MATH_ENV_NAMES = frozenset({
    "equation", "equation*", "align", "align*", "gather", "gather*",
    "multline", "multline*", "eqnarray", "eqnarray*", "displaymath",
})

VERBATIM_ENV_NAMES = ("verbatim", "lstlisting", "Verbatim", "verbatim*")

AUX_KINDS = frozenset({"lemma", "lem", "proposition", "prop", "corollary", "cor"})


@dataclass
class MacroDef:
    name: str            # without backslash
    arity: int
    template: str        # body with #1..#n placeholders
    opt_default: str | None = None  # default for #1 when declared optional


@dataclass
class TheoremEnvInfo:
    name: str
    title: str
    remark_like: bool


@dataclass
class LabelEntry:
    kind: str            # printed environment title, or "equation"
    body: str


@dataclass
class TexDocument:
    arxiv_id: str
    full_text: str
    theorem_envs: dict[str, TheoremEnvInfo] = field(default_factory=dict)
    remark_envs: dict[str, TheoremEnvInfo] = field(default_factory=dict)
    macro_table: dict[str, MacroDef] = field(default_factory=dict)
    label_index: dict[str, LabelEntry] = field(default_factory=dict)
    source_file_count: int = 0
    root_file: str = ""
    encoding_notes: dict[str, str] = field(default_factory=dict)
    missing_inclusions: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "arxiv_id": self.arxiv_id,
            "full_text": self.full_text,
            "theorem_envs": {
                k: {"title": v.title} for k, v in self.theorem_envs.items()
            },
            "remark_envs": {
                k: {"title": v.title} for k, v in self.remark_envs.items()
            },
            "macro_table": {
                k: {"arity": m.arity, "template": m.template,
                    "opt_default": m.opt_default}
                for k, m in self.macro_table.items()
            },
            "label_index": {
                k: {"kind": e.kind, "body": e.body}
                for k, e in self.label_index.items()
            },
            "source_file_count": self.source_file_count,
            "root_file": self.root_file,
            "encoding_notes": self.encoding_notes,
            "missing_inclusions": self.missing_inclusions,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TexDocument":
        doc = cls(arxiv_id=data["arxiv_id"], full_text=data["full_text"])
        doc.theorem_envs = {
            k: TheoremEnvInfo(k, v["title"], False)
            for k, v in data.get("theorem_envs", {}).items()
        }
        doc.remark_envs = {
            k: TheoremEnvInfo(k, v["title"], True)
            for k, v in data.get("remark_envs", {}).items()
        }
        doc.macro_table = {
            k: MacroDef(k, m["arity"], m["template"], m.get("opt_default"))
            for k, m in data.get("macro_table", {}).items()
        }
        doc.label_index = {
            k: LabelEntry(e["kind"], e["body"])
            for k, e in data.get("label_index", {}).items()
        }
        doc.source_file_count = data.get("source_file_count", 0)
        doc.root_file = data.get("root_file", "")
        doc.encoding_notes = data.get("encoding_notes", {})
        doc.missing_inclusions = data.get("missing_inclusions", [])
        return doc


# --- archive unpacking -------------------------------------------------------

def _decode(raw: bytes, name: str, notes: dict[str, str]) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        notes[name] = "latin-1"
        return raw.decode("latin-1")


def _is_escaping(member_name: str) -> bool:
    parts = member_name.replace("\\", "/").split("/")
    return member_name.startswith(("/", "~")) or ".." in parts


def unpack_archive(blob: bytes, encoding_notes: dict[str, str] | None = None,
                   ) -> dict[str, str]:
    """Extract the .tex members of an e-print blob as {name: text}.

    Single-file sources (bare gzip or plain text) come back as main.tex.
    Members whose paths escape the extraction root are rejected outright.
    """
    notes = encoding_notes if encoding_notes is not None else {}
    if blob.startswith(b"%PDF"):
        raise UnsupportedArchive("PDF-only submission")

    if blob[:2] == b"\x1f\x8b":
        try:
            inner = gzip.decompress(blob)
        except OSError as exc:
            raise CorruptArchive(f"bad gzip stream: {exc}") from exc
        if inner[:2] == b"\x1f\x8b" or _looks_like_tar(inner):
            return _untar(io.BytesIO(blob), notes)
        if inner.startswith(b"%PDF"):
            raise UnsupportedArchive("PDF-only submission")
        return {"main.tex": _decode(inner, "main.tex", notes)}

    if _looks_like_tar(blob):
        return _untar_stream(io.BytesIO(blob), notes, mode="r:")

    # Plain (uncompressed) single text file.
    try:
        text = _decode(blob, "main.tex", notes)
    except Exception as exc:  # undecodable binary
        raise UnsupportedArchive(f"unrecognized blob: {exc}") from exc
    return {"main.tex": text}


def _looks_like_tar(blob: bytes) -> bool:
    return len(blob) > 262 and blob[257:262] == b"ustar"


def _untar(buffer: io.BytesIO, notes: dict[str, str]) -> dict[str, str]:
    return _untar_stream(buffer, notes, mode="r:gz")


def _untar_stream(buffer: io.BytesIO, notes: dict[str, str],
                  mode: str) -> dict[str, str]:
    try:
        with tarfile.open(fileobj=buffer, mode=mode) as archive:
            files: dict[str, str] = {}
            for member in archive.getmembers():
                if _is_escaping(member.name):
                    raise CorruptArchive(f"path escapes root: {member.name}")
                if not member.isfile() or not member.name.endswith(".tex"):
                    continue
                handle = archive.extractfile(member)
                if handle is None:
                    continue
                files[member.name] = _decode(handle.read(), member.name, notes)
            return files
    except tarfile.TarError as exc:
        raise CorruptArchive(f"bad tar stream: {exc}") from exc


# --- brace-aware scanning helpers ---------------------------------------------

def read_group(text: str, pos: int) -> tuple[str, int] | None:
    """Read one {...} group starting at or after pos; returns (content, end).

    ``end`` is the index one past the closing brace. Whitespace before the
    opening brace is skipped. Returns None when no group starts there.
    """
    n = len(text)
    while pos < n and text[pos] in " \t\n":
        pos += 1
    if pos >= n or text[pos] != "{":
        return None
    depth = 0
    start = pos + 1
    i = pos
    while i < n:
        ch = text[i]
        if ch == "\\" and i + 1 < n:
            i += 2
            continue
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start:i], i + 1
        i += 1
    return None


def read_optional(text: str, pos: int) -> tuple[str, int] | None:
    """Read one [...] group (no nesting support needed for our inputs)."""
    n = len(text)
    while pos < n and text[pos] in " \t":
        pos += 1
    if pos >= n or text[pos] != "[":
        return None
    end = text.find("]", pos + 1)
    if end == -1:
        return None
    return text[pos + 1:end], end + 1


def find_environments(text: str, names: set[str] | None = None):
    """Yield (name, start, body_start, body_end, end) for each environment.

    Handles same-name nesting; malformed (unclosed) environments are
    skipped.
    """
    for match in re.finditer(r"\\begin\{([^}]+)\}", text):
        name = match.group(1)
        if names is not None and name not in names:
            continue
        body_start = match.end()
        depth = 1
        pos = body_start
        pattern = re.compile(r"\\(begin|end)\{" + re.escape(name) + r"\}")
        while True:
            nxt = pattern.search(text, pos)
            if nxt is None:
                break
            if nxt.group(1) == "begin":
                depth += 1
            else:
                depth -= 1
                if depth == 0:
                    yield name, match.start(), body_start, nxt.start(), nxt.end()
                    break
            pos = nxt.end()


# --- comments ------------------------------------------------------------------

def _protected_spans(text: str) -> list[tuple[int, int]]:
    spans = []
    for name in VERBATIM_ENV_NAMES:
        for _, start, _, _, end in find_environments(text, {name}):
            spans.append((start, end))
    spans.sort()
    return spans


def _in_spans(pos: int, spans: list[tuple[int, int]]) -> bool:
    return any(a <= pos < b for a, b in spans)


def strip_comment_envs(text: str) -> str:
    out = []
    last = 0
    for _, start, _, _, end in find_environments(text, {"comment"}):
        if start >= last:
            out.append(text[last:start])
            last = end
    out.append(text[last:])
    return "".join(out)


def strip_line_comments(text: str) -> str:
    """Drop unescaped %...end-of-line, preserving the newline and any \\%.

    Verbatim-like environments are protected so code listings survive.
    """
    protected = _protected_spans(text)
    out = []
    i = 0
    n = len(text)
    line_start = 0
    while i < n:
        ch = text[i]
        if ch == "\n":
            line_start = i + 1
            out.append(ch)
            i += 1
            continue
        if ch == "%" and not _in_spans(i, protected):
            backslashes = 0
            j = i - 1
            while j >= line_start and text[j] == "\\":
                backslashes += 1
                j -= 1
            if backslashes % 2 == 0:
                # comment: skip to end of line, keep the newline
                while i < n and text[i] != "\n":
                    i += 1
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def strip_comments(text: str) -> str:
    return strip_line_comments(strip_comment_envs(text))


# --- inclusion resolution --------------------------------------------------------

_INCLUDE_RE = re.compile(r"\\(?:input|include)\{([^}]+)\}")


def _commented_at(text: str, pos: int) -> bool:
    line_start = text.rfind("\n", 0, pos) + 1
    i = line_start
    while i < pos:
        if text[i] == "%":
            backslashes = 0
            j = i - 1
            while j >= line_start and text[j] == "\\":
                backslashes += 1
                j -= 1
            if backslashes % 2 == 0:
                return True
        i += 1
    return False


def _resolve_inclusions(name: str, files: dict[str, str], stack: list[str],
                        missing: list[str]) -> str:
    if name in stack:
        raise InclusionCycle(stack + [name])
    stack.append(name)
    text = files[name]
    out = []
    last = 0
    for match in _INCLUDE_RE.finditer(text):
        target = match.group(1).strip()
        if _commented_at(text, match.start()):
            continue  # honored as a comment; stripping runs after inclusion
        resolved = _lookup_member(target, files)
        out.append(text[last:match.start()])
        if resolved is None:
            missing.append(target)
            out.append("")
        else:
            out.append(_resolve_inclusions(resolved, files, stack, missing))
        last = match.end()
    out.append(text[last:])
    stack.pop()
    return "".join(out)


def _lookup_member(target: str, files: dict[str, str]) -> str | None:
    candidates = [target, target + ".tex"]
    for cand in candidates:
        if cand in files:
            return cand
    # tolerate ./ prefixes and directory-qualified references
    for cand in candidates:
        normalized = cand.lstrip("./")
        for known in files:
            if known == normalized or known.endswith("/" + normalized):
                return known
    return None


def pick_root(files: dict[str, str]) -> str:
    """Unique \\documentclass holder; prefer \\begin{document}, then main.tex."""
    with_class = [n for n, t in files.items() if "\\documentclass" in t]
    if not with_class:
        with_class = [n for n, t in files.items() if "\\begin{document}" in t]
    if not with_class:
        raise NoRootFile("no file contains \\documentclass or \\begin{document}")
    if len(with_class) == 1:
        return with_class[0]
    with_body = [n for n in with_class if "\\begin{document}" in files[n]]
    pool = with_body or with_class
    if "main.tex" in pool:
        return "main.tex"
    return sorted(pool)[0]


# --- preamble indexing --------------------------------------------------------

_NEWTHEOREM_RE = re.compile(
    r"\\newtheorem\*?\{(\w+)\}(?:\[\w+\])?\s*\{([^}]*)\}")


def scan_theorem_envs(preamble: str, remark_names=DEFAULT_REMARK_NAMES,
                      ) -> tuple[dict[str, TheoremEnvInfo], dict[str, TheoremEnvInfo]]:
    theorem_envs: dict[str, TheoremEnvInfo] = {}
    remark_envs: dict[str, TheoremEnvInfo] = {}
    for match in _NEWTHEOREM_RE.finditer(preamble):
        name, title = match.group(1), match.group(2)
        remark_like = (name.lower() in remark_names
                       or title.strip().lower() in remark_names)
        info = TheoremEnvInfo(name, title.strip(), remark_like)
        (remark_envs if remark_like else theorem_envs)[name] = info
    return theorem_envs, remark_envs


_NEWCOMMAND_RE = re.compile(
    r"\\(?:re)?newcommand\*?|\\providecommand\*?")


def scan_macros(preamble: str) -> dict[str, MacroDef]:
    macros: dict[str, MacroDef] = {}
    for match in _NEWCOMMAND_RE.finditer(preamble):
        pos = match.end()
        name, pos = _read_command_name(preamble, pos)
        if name is None:
            continue
        arity = 0
        opt_default = None
        opt = read_optional(preamble, pos)
        if opt is not None and opt[0].strip().isdigit():
            arity = int(opt[0].strip())
            pos = opt[1]
            opt2 = read_optional(preamble, pos)
            if opt2 is not None:
                opt_default, pos = opt2
        group = read_group(preamble, pos)
        if group is None:
            continue
        body, _ = group
        macros[name] = MacroDef(name, arity, body, opt_default)

    for match in re.finditer(r"\\def\s*\\(\w+)((?:#\d)*)\s*", preamble):
        name = match.group(1)
        params = match.group(2)
        arity = params.count("#")
        group = read_group(preamble, match.end())
        if group is None:
            continue
        body, _ = group
        macros[name] = MacroDef(name, arity, body, None)
    return macros


def _read_command_name(text: str, pos: int) -> tuple[str | None, int]:
    n = len(text)
    while pos < n and text[pos] in " \t\n":
        pos += 1
    if pos < n and text[pos] == "{":
        group = read_group(text, pos)
        if group is None:
            return None, pos
        inner, end = group
        inner = inner.strip()
        if inner.startswith("\\"):
            return inner[1:], end
        return None, end
    if pos < n and text[pos] == "\\":
        match = re.match(r"\\(\w+)", text[pos:])
        if match:
            return match.group(1), pos + match.end()
    return None, pos


_LABEL_RE = re.compile(r"\\label\{([^}]+)\}")


def build_label_index(text: str, theorem_envs: dict[str, TheoremEnvInfo],
                      remark_envs: dict[str, TheoremEnvInfo],
                      ) -> dict[str, LabelEntry]:
    """Label -> (kind, body). Math envs claim their labels before theorem
    envs do, so an equation labeled inside a theorem resolves as an
    equation, not as the whole theorem."""
    index: dict[str, LabelEntry] = {}

    def scan(names: set[str], kind_of) -> None:
        for name, _, body_start, body_end, _ in find_environments(text, names):
            body = text[body_start:body_end]
            labels = _LABEL_RE.findall(body)
            if not labels:
                continue
            clean = _LABEL_RE.sub("", body).strip()
            for label in labels:
                index.setdefault(label, LabelEntry(kind_of(name), clean))

    scan(set(MATH_ENV_NAMES), lambda name: "equation")
    scan(set(theorem_envs),
         lambda name: theorem_envs[name].title)
    scan(set(remark_envs),
         lambda name: remark_envs[name].title)
    return index


def assemble_document(files: dict[str, str], arxiv_id: str = "",
                      remark_names=DEFAULT_REMARK_NAMES,
                      encoding_notes: dict[str, str] | None = None,
                      ) -> TexDocument:
    """Splice inclusions, strip comments, and index the preamble."""
    if not files:
        raise NoRootFile("empty source set")
    root = pick_root(files)
    missing: list[str] = []
    spliced = _resolve_inclusions(root, files, [], missing)
    full_text = strip_comments(spliced)

    body_start = full_text.find("\\begin{document}")
    preamble = full_text[:body_start] if body_start != -1 else full_text

    theorem_envs, remark_envs = scan_theorem_envs(preamble, remark_names)
    macro_table = scan_macros(preamble)
    label_index = build_label_index(full_text, theorem_envs, remark_envs)

    return TexDocument(
        arxiv_id=arxiv_id,
        full_text=full_text,
        theorem_envs=theorem_envs,
        remark_envs=remark_envs,
        macro_table=macro_table,
        label_index=label_index,
        source_file_count=len(files),
        root_file=root,
        encoding_notes=dict(encoding_notes or {}),
        missing_inclusions=missing,
    )
