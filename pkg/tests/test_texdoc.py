"""Archive unpacking, document assembly, and preamble indexing."""

import gzip
import io
import random
import tarfile

import pytest

from thmbench.errors import CorruptArchive, InclusionCycle, NoRootFile, UnsupportedArchive
from thmbench.texdoc import (
    assemble_document,
    scan_macros,
    strip_comments,
    unpack_archive,
)


def make_tarball(members: dict[str, bytes]) -> bytes:
    buffer = io.BytesIO()
    with tarfile.open(fileobj=buffer, mode="w:gz") as archive:
        for name, payload in members.items():
            info = tarfile.TarInfo(name)
            info.size = len(payload)
            archive.addfile(info, io.BytesIO(payload))
    return buffer.getvalue()


# --- unpack_archive ---------------------------------------------------------

def test_tarball_filters_tex_members():
    blob = make_tarball({
        "main.tex": b"\\documentclass{article}",
        "sec1.tex": b"x",
        "refs.bib": b"@article{}",
    })
    files = unpack_archive(blob)
    assert set(files) == {"main.tex", "sec1.tex"}


def test_bare_gzip_single_file_becomes_main():
    blob = gzip.compress(b"\\documentclass{article}\\begin{document}hi\\end{document}")
    files = unpack_archive(blob)
    assert set(files) == {"main.tex"}
    assert "hi" in files["main.tex"]


def test_plain_text_blob_becomes_main():
    files = unpack_archive(b"\\documentclass{article} plain")
    assert set(files) == {"main.tex"}


def test_path_escape_is_rejected():
    blob = make_tarball({"../evil.tex": b"boom", "ok.tex": b"fine"})
    with pytest.raises(CorruptArchive):
        unpack_archive(blob)


def test_pdf_only_submission_unsupported():
    with pytest.raises(UnsupportedArchive):
        unpack_archive(b"%PDF-1.5 binary pdf payload")
    with pytest.raises(UnsupportedArchive):
        unpack_archive(gzip.compress(b"%PDF-1.5 gzipped pdf"))


def test_corrupt_gzip_rejected():
    with pytest.raises(CorruptArchive):
        unpack_archive(b"\x1f\x8b" + b"\x00" * 20)


def test_latin1_fallback_recorded():
    notes = {}
    unpack_archive("caf\xe9".encode("latin-1"), notes)
    assert notes.get("main.tex") == "latin-1"


# --- comments -----------------------------------------------------------------

def test_line_comment_strip_keeps_newline():
    assert strip_comments("keep % drop this\nnext") == "keep \nnext"


def test_escaped_percent_preserved():
    assert strip_comments("50\\% of cases % note\nx") == "50\\% of cases \nx"


def test_double_backslash_percent_is_comment():
    # \\% : the percent follows a linebreak command, so it comments.
    assert strip_comments("a\\\\% gone\nb") == "a\\\\\nb"


def test_comment_environment_removed():
    text = "pre\\begin{comment}secret\\end{comment}post"
    assert strip_comments(text) == "prepost"


def test_verbatim_protected_from_stripping():
    text = "\\begin{verbatim}100% raw\\end{verbatim} tail % gone\n"
    out = strip_comments(text)
    assert "100% raw" in out
    assert "gone" not in out


# --- assembly ------------------------------------------------------------------

ROOT = ("\\documentclass{article}\n"
        "\\newtheorem{thm}{Theorem}\n"
        "\\newtheorem{rem}{Remark}\n"
        "\\newcommand{\\R}{\\mathbb{R}}\n"
        "\\begin{document}\n"
        "A\\input{sec1}B\n"
        "\\end{document}\n")


def test_inclusion_splice():
    doc = assemble_document({"main.tex": ROOT, "sec1.tex": "X"}, "id1")
    assert "AXB" in doc.full_text
    assert doc.root_file == "main.tex"
    assert doc.source_file_count == 2


def test_inclusion_without_extension_and_missing_target():
    root = "\\documentclass{a}\\begin{document}\\input{sec2}\\input{gone}\\end{document}"
    doc = assemble_document({"main.tex": root, "sec2.tex": "Y"}, "id2")
    assert "Y" in doc.full_text
    assert doc.missing_inclusions == ["gone"]


def test_commented_input_is_honored_as_comment():
    root = ("\\documentclass{a}\\begin{document}\n"
            "ok\n%\\input{sec1}\nend\n\\end{document}")
    doc = assemble_document({"main.tex": root, "sec1.tex": "SHOULD-NOT-APPEAR"},
                            "id3")
    assert "SHOULD-NOT-APPEAR" not in doc.full_text


def test_inclusion_cycle_reports_path():
    files = {
        "main.tex": "\\documentclass{a}\\begin{document}\\input{a}\\end{document}",
        "a.tex": "\\input{b}",
        "b.tex": "\\input{a}",
    }
    with pytest.raises(InclusionCycle) as excinfo:
        assemble_document(files, "id4")
    assert "a.tex" in excinfo.value.path


def test_no_root_file():
    with pytest.raises(NoRootFile):
        assemble_document({"x.tex": "just text"}, "id5")


def test_root_preference_main_then_lexicographic():
    files = {
        "z.tex": "\\documentclass{a}\\begin{document}Z\\end{document}",
        "main.tex": "\\documentclass{a}\\begin{document}M\\end{document}",
    }
    assert assemble_document(files, "id6").root_file == "main.tex"
    files.pop("main.tex")
    files["a.tex"] = "\\documentclass{a}\\begin{document}A\\end{document}"
    assert assemble_document(files, "id7").root_file == "a.tex"


def test_newtheorem_scan_excludes_remark_like():
    doc = assemble_document({"main.tex": ROOT, "sec1.tex": "X"}, "id8")
    assert "thm" in doc.theorem_envs
    assert "rem" not in doc.theorem_envs
    assert "rem" in doc.remark_envs
    assert doc.theorem_envs["thm"].title == "Theorem"


def test_remark_detection_by_printed_title():
    root = ("\\documentclass{a}\\newtheorem{foo}{Observation}"
            "\\begin{document}x\\end{document}")
    doc = assemble_document({"main.tex": root}, "id9")
    assert "foo" not in doc.theorem_envs
    assert "foo" in doc.remark_envs


def test_macro_table_arities():
    preamble = (
        "\\newcommand{\\R}{\\mathbb{R}}\n"
        "\\newcommand{\\norm}[1]{\\|#1\\|}\n"
        "\\newcommand{\\pair}[2]{(#1,#2)}\n"
        "\\newcommand{\\opt}[2][z]{[#1:#2]}\n"
        "\\renewcommand{\\phi}{\\varphi}\n"
        "\\def\\eps{\\varepsilon}\n"
        "\\def\\twoargs#1#2{#1+#2}\n"
    )
    macros = scan_macros(preamble)
    arities = {name: m.arity for name, m in macros.items()}
    assert arities == {"R": 0, "norm": 1, "pair": 2, "opt": 2, "phi": 0,
                       "eps": 0, "twoargs": 2}
    assert macros["opt"].opt_default == "z"


def test_label_index_over_theorem_and_equation_envs():
    root = (
        "\\documentclass{a}\\newtheorem{thm}{Theorem}\n"
        "\\begin{document}\n"
        "\\begin{thm}\\label{thm:aux}Main claim\\end{thm}\n"
        "\\begin{equation}\\label{eq:main}a^2+b^2=c^2\\end{equation}\n"
        "\\end{document}")
    doc = assemble_document({"main.tex": root}, "id10")
    assert doc.label_index["thm:aux"].kind == "Theorem"
    assert doc.label_index["thm:aux"].body == "Main claim"
    assert doc.label_index["eq:main"].kind == "equation"
    assert doc.label_index["eq:main"].body == "a^2+b^2=c^2"


# --- property suites -------------------------------------------------------------

WORDS = ["alpha", "beta", "set", "group", "bound", "Let", "prime", "field"]


def _random_flat_doc(rng: random.Random) -> str:
    lines = []
    for _ in range(rng.randint(1, 12)):
        lines.append(" ".join(rng.choice(WORDS)
                              for _ in range(rng.randint(1, 8))))
        if rng.random() < 0.3:
            lines.append("")
    body = "\n".join(lines)
    return ("\\documentclass{article}\\begin{document}\n"
            + body + "\n\\end{document}")


def test_inclusion_idempotence_property():
    # Assembling an already-flat document changes nothing but comments.
    rng = random.Random(7)
    for _ in range(200):
        text = _random_flat_doc(rng)
        doc = assemble_document({"main.tex": text}, "prop")
        assert doc.full_text == strip_comments(text)


def test_comment_strip_escape_property():
    rng = random.Random(8)
    pieces = ["text", " ", "\\%", "%", "\n", "word", "%% double", "\\\\"]
    for _ in range(300):
        text = "".join(rng.choice(pieces) for _ in range(rng.randint(0, 14)))
        out = strip_comments(text)
        # no unescaped % survives outside verbatim
        for i, ch in enumerate(out):
            if ch != "%":
                continue
            backslashes = 0
            j = i - 1
            while j >= 0 and out[j] == "\\":
                backslashes += 1
                j -= 1
            assert backslashes % 2 == 1, (text, out)
        # newline count is preserved
        assert out.count("\n") == text.count("\n")


def test_nested_equation_label_resolves_as_equation():
    root = (
        "\\documentclass{a}\\newtheorem{thm}{Theorem}\n"
        "\\begin{document}\n"
        "\\begin{thm}\\label{thm:big}Claim with\n"
        "\\begin{equation}\\label{eq:inner}x=y\\end{equation}\n"
        "inside.\\end{thm}\n"
        "\\end{document}")
    doc = assemble_document({"main.tex": root}, "nested")
    assert doc.label_index["eq:inner"].kind == "equation"
    assert doc.label_index["eq:inner"].body == "x=y"
    assert doc.label_index["thm:big"].kind == "Theorem"
