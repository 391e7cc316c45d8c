import re

from hypothesis import given, settings
from hypothesis import strategies as st

from gcndecomp.asm import parse_config, parse_instruction
from gcndecomp.codegen import (
    FALLBACK_NOTE,
    CBlock,
    KernelAst,
    emit_fallback,
    fallback_payload,
    render_block,
    render_expr,
    render_kernel,
)
from gcndecomp.dtypes import INT, UINT
from gcndecomp.expr import BinOp, Const, Deref, KernelArg, RawAsm, Store, UnOp, Var
from gcndecomp.pipeline import decompile_text

from clgrammar import check
from conftest import CORPUS

VARS = {"a": 0x1234, "b": 7, "c": 0xFFFF0001}
OPS = ["+", "-", "*", "&", "|", "^", "<<"]


@st.composite
def int_trees(draw, depth=0):
    if depth > 4 or draw(st.integers(0, 3)) == 0:
        if draw(st.booleans()):
            return Var(draw(st.sampled_from(sorted(VARS))), UINT)
        return Const(draw(st.integers(0, 300)), UINT)
    op = draw(st.sampled_from(OPS))
    if op == "<<":
        return BinOp(op, draw(int_trees(depth + 1)), Const(draw(st.integers(0, 5)), UINT), UINT)
    if draw(st.integers(0, 6)) == 0:
        return UnOp(draw(st.sampled_from(["-", "~"])), draw(int_trees(depth + 1)), UINT)
    return BinOp(op, draw(int_trees(depth + 1)), draw(int_trees(depth + 1)), UINT)


def value(e):
    if isinstance(e, Var):
        return VARS[e.name]
    if isinstance(e, Const):
        return e.value
    if isinstance(e, UnOp):
        v = value(e.operand)
        return (-v if e.op == "-" else ~v) & 0xFFFFFFFF
    a, b = value(e.lhs), value(e.rhs)
    ops = {
        "+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b, "&": lambda: a & b,
        "|": lambda: a | b, "^": lambda: a ^ b, "<<": lambda: a << b,
    }
    return ops[e.op]() & 0xFFFFFFFF


@settings(max_examples=300, deadline=None)
@given(int_trees())
def test_rendering_respects_precedence(e):
    # these operators bind in the same relative order in C and Python
    text = render_expr(e)
    python = re.sub(r"(\d)[uU]", r"\1", text)
    assert eval(python, {}, dict(VARS)) & 0xFFFFFFFF == value(e)


def test_double_negation_is_not_a_decrement():
    x = Var("a", INT)
    assert render_expr(UnOp("-", UnOp("-", x, INT), INT)) == "-(-a)"
    assert render_expr(UnOp("-", Const.of(-5, INT), INT)) == "-(-5)"


def test_empty_kernel():
    ast = KernelAst("k", [], CBlock())
    assert render_kernel(ast) == "__kernel void k() {\n}\n"
    text = decompile_text((CORPUS / "empty.asm").read_text()).text
    assert text == "__kernel void empty() {\n}\n"


def test_fallback_block_text():
    ins = parse_instruction("ds_read_b32 v1, v2")
    block = emit_fallback(ins)
    assert FALLBACK_NOTE in block
    assert 'ds_read_b32 v1, v2' in block
    assert fallback_payload(block) == "ds_read_b32 v1, v2"


@given(st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126), min_size=1))
def test_fallback_payload_round_trip(line):
    assert fallback_payload(emit_fallback(RawAsm(line))) == line


def test_asm_block_at_statement_position():
    data = KernelArg("data", INT.pointer_to())
    first = Store(Deref(data, INT), Const(1, INT))
    second = Store(Deref(BinOp("+", data, Const(4, UINT), data.type), INT), Const(2, INT))
    lines = render_block(CBlock([first, RawAsm("s_nop 0"), second]), 1)
    text = "\n".join(lines)
    assert text.index("= 1;") < text.index('__asm__ volatile("s_nop 0");') < text.index("= 2;")


def test_if_else_rendering():
    text = decompile_text((CORPUS / "if_else_form1.asm").read_text()).text
    lines = text.splitlines()
    assert lines[1].startswith("    if (") and lines[1].endswith(") {")
    assert "    } else {" in lines
    assert "__asm__" not in text
    assert check(text) == 1


def test_signature_lists_explicit_args_once_in_order():
    for path in sorted(CORPUS.glob("*.asm")):
        (kernel,) = decompile_text(path.read_text()).kernels
        header = kernel.text.split("{", 1)[0]
        params = header[header.index("(") + 1: header.rindex(")")]
        names = [p.split()[-1].lstrip("*") for p in params.split(", ")] if params else []
        assert names == [a.name for a in kernel.config.explicit_args]
        assert not any(n.startswith("_") for n in names)


def test_join_variable_declared_at_enclosing_scope():
    text = decompile_text((CORPUS / "scalar_diamond.asm").read_text()).text
    lines = text.splitlines()
    decl = next(i for i, l in enumerate(lines) if l.strip().startswith("int s11_"))
    branch = next(i for i, l in enumerate(lines) if l.strip().startswith("if ("))
    assert decl < branch and lines[decl].startswith("    int")


def test_unknown_declaration_noted():
    text = decompile_text((CORPUS / "lds_fallback.asm").read_text()).text
    assert "uint v6_1; /* type unknown */" in text
