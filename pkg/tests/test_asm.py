import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcndecomp.asm import (
    LabelDef,
    decompose_mnemonic,
    join_mnemonic,
    parse_config,
    parse_instruction,
    parse_operand,
    parse_program,
    split_kernels,
)
from gcndecomp.errors import InstructionParseError, StructuralFormatError

from conftest import CORPUS

LISTING_1 = """\
.kernel body_example
.config
    dims xyz
    .cws 8, 8, 2
.text
    s_endpgm
"""

TWO_KERNELS = """\
; preamble comment
.kernel first
.config
    .dims x
    .cws 16, 1, 1
.text
    v_mov_b32 v1, 0
    s_endpgm
.kernel second
.config
    .dims xy
.text
    s_mov_b32 s0, 1
    s_nop 0
    s_endpgm
"""


def partition_oracle(text):
    """Line-by-line classification written independently of split_kernels."""
    out = {}
    mode = "preamble"
    kernel = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith(".kernel"):
            kernel = s.split()[1]
            mode = "kernel"
            out[no] = ("name", kernel)
        elif s == ".config":
            mode = "config"
            out[no] = ("directive", kernel)
        elif s == ".text":
            mode = "text"
            out[no] = ("directive", kernel)
        elif not s:
            out[no] = ("blank", kernel)
        else:
            out[no] = (mode, kernel)
    return out


# -- split_kernels ----------------------------------------------------------


def test_listing_1_section_ends_with_endpgm():
    (section,) = split_kernels(LISTING_1)
    assert section.text_lines[-1] == "s_endpgm"
    cfg = parse_config(section.config_lines)
    assert cfg.cws == (8, 8, 2)
    assert cfg.ndims == 3
    assert cfg.group_size == 128


def test_empty_file_has_no_sections():
    assert split_kernels("") == []


def test_two_kernels_match_partition_oracle():
    sections = split_kernels(TWO_KERNELS)
    assert [s.name for s in sections] == ["first", "second"]
    oracle = partition_oracle(TWO_KERNELS)
    lines = TWO_KERNELS.splitlines()
    for sec in sections:
        expected_text = [lines[n - 1].strip() for n, (m, k) in sorted(oracle.items()) if m == "text" and k == sec.name]
        expected_cfg = [lines[n - 1].strip() for n, (m, k) in sorted(oracle.items()) if m == "config" and k == sec.name]
        assert list(sec.text_lines) == expected_text
        assert list(sec.config_lines) == expected_cfg
    # every non-blank line lands in exactly one bucket
    assigned = [n for s in sections for n in s.line_numbers]
    assert len(assigned) == len(set(assigned))
    assert sorted(assigned) == sorted(n for n, (m, _) in oracle.items() if m == "text")


def test_trailing_whitespace_and_blank_lines_are_ignored():
    noisy = "\n".join(line + "   \t" for line in TWO_KERNELS.splitlines()) + "\n\n\n"
    assert split_kernels(noisy) == split_kernels(TWO_KERNELS)
    spaced = TWO_KERNELS.replace("\n", "\n\n")
    a = [(s.name, s.config_lines, s.text_lines) for s in split_kernels(spaced)]
    b = [(s.name, s.config_lines, s.text_lines) for s in split_kernels(TWO_KERNELS)]
    assert a == b


def test_text_before_kernel_is_an_error():
    with pytest.raises(StructuralFormatError):
        split_kernels(".text\n s_endpgm\n")


# -- config -----------------------------------------------------------------


def test_missing_cws_defaults_to_one():
    assert parse_config([".dims x"]).cws == (1, 1, 1)


def test_listing_3_arguments():
    (section,) = split_kernels((CORPUS / "copy.asm").read_text())
    cfg = parse_config(section.config_lines)
    assert len(cfg.args) == 8
    assert [a.implicit for a in cfg.args] == [True] * 6 + [False] * 2
    data, x = cfg.args[6], cfg.args[7]
    assert (data.name, data.ocl_type, data.address_space) == ("data", "int*", "global")
    assert (x.name, x.ocl_type, x.address_space) == ("x", "int", "by-value")


def test_unknown_directives_are_preserved():
    cfg = parse_config([".dims x", ".floatmode 0xc0", ".priority 0"])
    assert cfg.raw_other == [".floatmode 0xc0", ".priority 0"]


# -- instructions -----------------------------------------------------------


def test_load_dwordx2_parses():
    ins = parse_instruction("s_load_dwordx2 s[2:3], s[4:5], 0x0")
    assert (ins.prefix, ins.root, ins.suffixes) == ("s", "load_dwordx2", ())
    kinds = [(op.kind, op.index, op.end) for op in ins.operands[:2]]
    assert kinds == [("sgpr_range", 2, 3), ("sgpr_range", 4, 5)]
    assert ins.operands[2].kind == "literal" and ins.operands[2].value == 0


def test_endpgm_has_no_operands():
    ins = parse_instruction("s_endpgm")
    assert (ins.prefix, ins.root, ins.operands) == ("s", "endpgm", ())


def test_label_line():
    assert parse_instruction(".L42:") == LabelDef(".L42")


def test_comments_and_blank_lines():
    assert parse_instruction("   ; only a comment") is None
    assert parse_instruction("# hash comment") is None
    ins = parse_instruction("s_nop 0 /* block */ ; tail")
    assert ins.mnemonic == "s_nop"


def test_register_bounds_rejected():
    with pytest.raises(InstructionParseError):
        parse_operand("s104")
    with pytest.raises(InstructionParseError):
        parse_operand("v256")


def test_bad_operand_becomes_opaque_with_error():
    errors = []
    program = parse_program(["v_mov_b32 v1, @@@", "s_endpgm"], errors=errors)
    assert len(errors) == 1
    assert program.instructions[0].prefix == "other"
    assert program.instructions[0].source_text == "v_mov_b32 v1, @@@"


def test_labels_map_to_following_instruction():
    program = parse_program(["s_branch .L1", ".L1:", "s_endpgm"])
    assert program.labels == {".L1": 1}
    assert program.instructions[1].label == ".L1"


# -- mnemonic decomposition ---------------------------------------------------


@pytest.mark.parametrize(
    "name, expected",
    [
        ("v_mul_hi_u32_u24", ("v", "mul_hi", ("u32", "u24"))),
        ("s_add_u32", ("s", "add", ("u32",))),
        ("s_endpgm", ("s", "endpgm", ())),
        ("s_load_dwordx2", ("s", "load_dwordx2", ())),
        ("flat_store_dword", ("flat", "store_dword", ())),
        ("ds_read_b32", ("ds", "read", ("b32",))),
    ],
)
def test_decompose_examples(name, expected):
    assert decompose_mnemonic(name) == expected


ROOT_WORDS = st.lists(st.sampled_from(["add", "mul", "hi", "lo", "cmp", "load", "dwordx2", "mad", "cvt"]), min_size=1, max_size=3)
SUFFIX = st.builds(lambda l, w: f"{l}{w}", st.sampled_from("iufb"), st.sampled_from([8, 16, 24, 32, 64]))


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(["s", "v", "ds", "flat"]), ROOT_WORDS, st.lists(SUFFIX, max_size=2))
def test_decompose_round_trip(prefix, words, suffixes):
    name = "_".join([prefix, *words, *suffixes])
    p, root, sfx = decompose_mnemonic(name)
    assert join_mnemonic(p, root, sfx) == name
    assert (p, root, list(sfx)) == (prefix, "_".join(words), suffixes)


def test_corpus_mnemonics_round_trip():
    for path in sorted(CORPUS.glob("*.asm")):
        for sec in split_kernels(path.read_text()):
            for ins in parse_program(sec.text_lines).instructions:
                assert join_mnemonic(ins.prefix, ins.root, ins.suffixes) == ins.mnemonic
