"""OpenCL C rendering.

The region tree is first lowered to a small C statement tree (:class:`CBlock`
of statements, ``CIf``, labels and gotos). The same tree is rendered to text
and walked by the decompiled-program evaluator, so both see one program.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .asm import Instruction, KernelConfig
from .dtypes import ULONG, UINT, DataType, TypeEnv, arg_signature, c_type_name, concrete, declare
from .expr import (
    FALSE,
    TRUE,
    Assign,
    BinOp,
    Bitcast,
    Builtin,
    Call,
    Cast,
    Comment,
    Const,
    Decl,
    Deref,
    Expr,
    KernelArg,
    RawAsm,
    Return,
    Statement,
    Store,
    Ternary,
    UnOp,
    Var,
    logical_not,
    walk,
)

INDENT = "    "
FALLBACK_NOTE = "inline assembly is not supported by AMDGPU-Pro driver; this block does not compile"


# ---------------------------------------------------------------------------
# C statement tree


@dataclass
class CIf:
    cond: Expr
    then: "CBlock"
    else_: Optional["CBlock"] = None


@dataclass(frozen=True)
class CLabel:
    name: str


@dataclass(frozen=True)
class CGoto:
    name: str


@dataclass(frozen=True)
class CDeclare:
    var: Var


CNode = Union[Assign, Store, Decl, RawAsm, Return, Comment, CIf, CLabel, CGoto, CDeclare]


@dataclass
class CBlock:
    items: List[CNode] = field(default_factory=list)


@dataclass
class KernelAst:
    name: str
    params: List[str]
    body: CBlock
    header_comments: List[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# expression rendering

_PREC = {
    "||": 4, "&&": 5, "|": 6, "^": 7, "&": 8, "==": 9, "!=": 9,
    "<": 10, "<=": 10, ">": 10, ">=": 10, "<<": 11, ">>": 11,
    "+": 12, "-": 12, "*": 13, "/": 13, "%": 13,
}
_UNARY = 15
_POSTFIX = 16
_TERNARY = 3


def _float_literal(bits: int, width: int) -> str:
    if width == 64:
        value = float(np.array([bits], dtype=np.uint64).view(np.float64)[0])
        suffix = ""
    else:
        value = float(np.array([bits], dtype=np.uint32).view(np.float32)[0])
        suffix = "f"
    if math.isnan(value):
        return "NAN"
    if math.isinf(value):
        return "INFINITY" if value > 0 else "-INFINITY"
    text = repr(value)
    if "e" not in text and "." not in text:
        text += ".0"
    return text + suffix


def render_const(c: Const) -> str:
    t = c.type
    if t.base == "bool":
        return "true" if c.value else "false"
    if t.is_float:
        return _float_literal(c.value, t.width)
    w = t.width
    if t.is_signed:
        v = c.value - (1 << w) if c.value >> (w - 1) & 1 else c.value
        if w == 64:
            return f"{v}L"
        if v == -(1 << 31):
            return "(-2147483647 - 1)"
        return str(v)
    v = c.value
    if w == 64:
        return f"{v:#x}UL" if v > 0xFFFF else f"{v}UL"
    if v > 0xFFFF:
        return f"{v:#x}u"
    return f"{v}u" if v > 0x7FFFFFFF else str(v)


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Ternary):
        return _TERNARY
    if isinstance(e, (UnOp, Cast)):
        return _UNARY
    if isinstance(e, Const):
        return _UNARY if render_const(e).startswith(("-", "(")) else _POSTFIX + 1
    if isinstance(e, Deref):
        return _UNARY  # may render as *(...)
    return _POSTFIX + 1


def _wrap(e: Expr, need: int) -> str:
    text = render_expr(e)
    if _prec(e) < need:
        return f"({text})"
    return text


def _signed_view(e: Expr, signed: bool, need: int) -> str:
    """Render an operand so C sees it with the wanted signedness."""
    t = e.type
    if t.is_float or t.base == "bool" or t.is_pointer or t.is_signed == signed or isinstance(e, Const):
        if isinstance(e, Const) and not t.is_float and t.base != "bool" and t.is_signed != signed:
            return _wrap(Const(e.value, DataType("int" if signed else "uint", t.width)), need)
        return _wrap(e, need)
    target = DataType("int" if signed else "uint", t.width)
    return f"({c_type_name(target)}){_wrap(e, _UNARY)}"


def render_expr(e: Expr) -> str:
    if isinstance(e, Const):
        return render_const(e)
    if isinstance(e, (KernelArg, Var)):
        return e.name
    if isinstance(e, Builtin):
        return e.id.call
    if isinstance(e, UnOp):
        inner = _wrap(e.operand, _UNARY)
        if inner[:1] in ("-", "+") and e.op in ("-", "+"):
            # keep "- -x" from lexing as a decrement
            inner = f"({inner})"
        return f"{e.op}{inner}"
    if isinstance(e, Cast):
        if e.operand.type.is_float and not e.type.is_float and e.type.base in ("int", "uint"):
            # float to integer conversion saturates like the hardware does
            return f"convert_{c_type_name(e.type)}_sat({render_expr(e.operand)})"
        return f"({c_type_name(e.type)}){_wrap(e.operand, _UNARY)}"
    if isinstance(e, Bitcast):
        return f"as_{c_type_name(e.type)}({render_expr(e.operand)})"
    if isinstance(e, Call):
        return f"{e.name}(" + ", ".join(render_expr(a) for a in e.args) + ")"
    if isinstance(e, Ternary):
        return f"{_wrap(e.cond, _TERNARY + 1)} ? {_wrap(e.a, _TERNARY + 1)} : {_wrap(e.b, _TERNARY)}"
    if isinstance(e, Deref):
        return render_deref(e)
    if isinstance(e, BinOp):
        if e.type.is_pointer:
            return render_pointer(e)
        p = _PREC[e.op]
        ot = e.otype
        if (e.op in ("<", "<=", ">", ">=", ">>", "/", "%")) and not ot.is_float and ot.base != "bool" and not ot.is_pointer:
            signed = ot.is_signed
            lhs = _signed_view(e.lhs, signed, p)
            rhs = _signed_view(e.rhs, signed, p + 1) if e.op != ">>" else _wrap(e.rhs, p + 1)
        else:
            lhs, rhs = _wrap(e.lhs, p), _wrap(e.rhs, p + 1)
        return f"{lhs} {e.op} {rhs}"
    raise TypeError(f"cannot render {type(e).__name__}")


# pointers and dereferences -------------------------------------------------


def _pointer_terms(e: Expr) -> Tuple[Optional[Expr], List[Expr]]:
    """Split a pointer-valued expression into (base pointer, byte-offset terms)."""
    if isinstance(e, BinOp) and e.op == "+" and e.type.is_pointer:
        if e.lhs.type.is_pointer:
            base, terms = _pointer_terms(e.lhs)
            return base, terms + [e.rhs]
        if e.rhs.type.is_pointer:
            base, terms = _pointer_terms(e.rhs)
            return base, terms + [e.lhs]
    if e.type.is_pointer:
        return e, []
    return None, [e]


def _strip_extension(e: Expr) -> Expr:
    """Drop a widening cast C would apply implicitly to an index."""
    if isinstance(e, Cast) and e.type.width == 64 and not e.type.is_float and e.operand.type.width == 32:
        inner = e.operand
        if not inner.type.is_float and inner.type.is_signed == e.type.is_signed:
            return inner
    return e


def _index_term(term: Expr, size: int) -> Optional[Expr]:
    """Express a byte offset as an element count, or None."""
    shift = size.bit_length() - 1
    if isinstance(term, Const):
        v = term.value
        if term.type.width == 64 and v >> 63:
            v -= 1 << 64
        if v % size == 0:
            return Const.of(v // size, term.type if not term.type.is_signed else term.type)
        return None
    if size == 1:
        return _strip_extension(term)
    if isinstance(term, BinOp) and term.op == "<<" and isinstance(term.rhs, Const):
        k = term.rhs.value
        if k == shift:
            return _strip_extension(term.lhs)
        if k > shift:
            return BinOp("<<", term.lhs, Const(k - shift, UINT), term.type)
    if isinstance(term, BinOp) and term.op == "*":
        for x, c in ((term.lhs, term.rhs), (term.rhs, term.lhs)):
            if isinstance(c, Const) and c.value % size == 0:
                if c.value == size:
                    return _strip_extension(x)
                return BinOp("*", x, Const(c.value // size, c.type), term.type)
    return None


def _sum(terms: Sequence[Expr]) -> Expr:
    out = terms[0]
    for t in terms[1:]:
        out = BinOp("+", out, t, out.type if out.type.width >= t.type.width else t.type)
    return out


def _char_pointer(t: DataType) -> str:
    return c_type_name(DataType("int", 8, 1, t.address_space or "global"))


def render_pointer(e: Expr) -> str:
    base, terms = _pointer_terms(e)
    if base is None:
        return render_expr(e)
    if not terms:
        return render_expr(base)
    size = base.type.element().size if base.type.pointer == 1 else 8
    idx = [_index_term(t, size) for t in terms]
    if all(i is not None for i in idx):
        return f"{_wrap(base, _PREC['+'])} + {_wrap(_sum(idx), _PREC['+'] + 1)}"
    return f"({c_type_name(base.type)})(({_char_pointer(base.type)}){_wrap(base, _UNARY)} + {_wrap(_sum(terms), _PREC['+'] + 1)})"


def render_deref(d: Deref) -> str:
    base, terms = _pointer_terms(d.addr)
    space = "__" + d.space if d.space != "private" else ""
    target = f"{space} {c_type_name(d.type)} *".strip()
    if base is not None:
        elem = base.type.element() if base.type.pointer == 1 else None
        if elem is not None and concrete(elem) == concrete(d.type):
            idx = [_index_term(t, elem.size) for t in terms]
            if not terms:
                return f"*{_wrap(base, _UNARY)}"
            if all(i is not None for i in idx):
                return f"{_wrap(base, _POSTFIX)}[{render_expr(_sum(idx))}]"
        if not terms:
            return f"*({target}){_wrap(base, _UNARY)}"
        return f"*({target})(({_char_pointer(base.type)}){_wrap(base, _UNARY)} + {_wrap(_sum(terms), _PREC['+'] + 1)})"
    return f"*({target})({render_expr(d.addr)})"


# ---------------------------------------------------------------------------
# statements


def emit_fallback(instr: Union[Instruction, RawAsm, str]) -> str:
    """Inline-asm block carrying the original line verbatim."""
    if isinstance(instr, Instruction):
        text = instr.source_text
    elif isinstance(instr, RawAsm):
        text = instr.text
    else:
        text = instr
    escaped = text.replace("\\", "\\\\").replace('"', '\\"')
    return f"/* {FALLBACK_NOTE} */\n__asm__ volatile(\"{escaped}\");"


def fallback_payload(block_text: str) -> str:
    """Recover the verbatim source line from an emitted fallback block."""
    start = block_text.index('__asm__ volatile("') + len('__asm__ volatile("')
    end = block_text.rindex('");')
    return block_text[start:end].replace('\\"', '"').replace("\\\\", "\\")


def _render_statement(s: CNode) -> List[str]:
    if isinstance(s, Assign):
        return [f"{s.target.name} = {render_expr(s.value)};"]
    if isinstance(s, Store):
        return [f"{render_deref(s.target)} = {render_expr(s.value)};"]
    if isinstance(s, Decl):
        if s.value is None:
            return [f"{declare(s.var.type, s.var.name)};"]
        return [f"{declare(s.var.type, s.var.name)} = {render_expr(s.value)};"]
    if isinstance(s, CDeclare):
        note = " /* type unknown */" if s.var.type.base in ("unknown", "binary") else ""
        return [f"{declare(s.var.type, s.var.name)};{note}"]
    if isinstance(s, RawAsm):
        return emit_fallback(s).split("\n")
    if isinstance(s, Return):
        return ["return;"]
    if isinstance(s, Comment):
        return [f"/* {s.text} */"]
    if isinstance(s, CGoto):
        return [f"goto {s.name};"]
    raise TypeError(type(s).__name__)


def render_block(block: CBlock, depth: int) -> List[str]:
    pad = INDENT * depth
    lines: List[str] = []
    for item in block.items:
        if isinstance(item, CLabel):
            lines.append(f"{INDENT * max(depth - 1, 0)}{item.name}: ;")
        elif isinstance(item, CIf):
            lines.append(f"{pad}if ({render_expr(item.cond)}) {{")
            lines.extend(render_block(item.then, depth + 1))
            if item.else_ is not None and item.else_.items:
                lines.append(f"{pad}}} else {{")
                lines.extend(render_block(item.else_, depth + 1))
            lines.append(f"{pad}}}")
        else:
            lines.extend(pad + line for line in _render_statement(item))
    return lines


def render_kernel(ast: KernelAst) -> str:
    lines = [f"/* {c} */" for c in ast.header_comments]
    lines.append(f"__kernel void {ast.name}({', '.join(ast.params)}) {{")
    lines.extend(render_block(ast.body, 1))
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# region tree -> C tree


@dataclass
class LeafCode:
    """What symbolic execution produced for one block."""

    statements: List[Statement]
    taken_cond: Optional[Expr] = None


def region_to_block(region, leaves: Mapping[int, LeafCode], graph=None) -> CBlock:
    return CBlock(_lower(region, leaves, graph))


def _cond_for(region, leaves: Mapping[int, LeafCode]) -> Expr:
    leaf = region.header.exit
    taken = leaves[leaf].taken_cond if leaf is not None else None
    if taken is None:
        raise ValueError(f"region {region.id} has no branch condition")
    return taken if region.then_on_taken else logical_not(taken)


def _lower(region, leaves: Mapping[int, LeafCode], graph) -> List[CNode]:
    kind = region.kind
    if kind == "leaf":
        return list(leaves[region.block].statements)
    if kind == "linear":
        out: List[CNode] = []
        for c in region.children:
            out.extend(_lower(c, leaves, graph))
        return out
    if kind in ("if", "if_else"):
        out = _lower(region.header, leaves, graph)
        cond = _cond_for(region, leaves)
        then = CBlock(_lower(region.then, leaves, graph))
        else_ = CBlock(_lower(region.else_, leaves, graph)) if region.else_ is not None else None
        if else_ is not None and not then.items and else_.items:
            cond, then, else_ = logical_not(cond), else_, None
        if then.items or (else_ is not None and else_.items):
            out.append(CIf(cond, then, else_))
        if region.tail is not None:
            out.extend(_lower(region.tail, leaves, graph))
        return out
    if kind == "residue":
        return _lower_residue(region, leaves, graph)
    raise ValueError(f"unknown region kind {kind}")


def _label(rid: int) -> str:
    return f"region_{rid}"


def _lower_residue(region, leaves: Mapping[int, LeafCode], graph) -> List[CNode]:
    out: List[CNode] = [Comment("control flow could not be structured; emitted with goto")]
    order = [c.id for c in region.children]
    for pos, child in enumerate(region.children):
        out.append(CLabel(_label(child.id)))
        out.extend(_lower(child, leaves, graph))
        succs = graph.succ[child.id] if graph is not None else []
        nxt = order[pos + 1] if pos + 1 < len(order) else None
        if len(succs) == 2 and child.exit is not None and leaves[child.exit].taken_cond is not None:
            taken = graph.taken_region(child.id)
            other = succs[0] if succs[1] == taken else succs[1]
            out.append(CIf(leaves[child.exit].taken_cond, CBlock([CGoto(_label(taken))])))
            if other != nxt:
                out.append(CGoto(_label(other)))
        elif len(succs) == 1 and succs[0] != nxt:
            out.append(CGoto(_label(succs[0])))
        elif not succs and nxt is not None and not (out and isinstance(out[-1], Return)):
            out.append(Return())
    return out


# ---------------------------------------------------------------------------
# declaration placement


def _mentions(block: CBlock, path: Tuple, acc: Dict[str, List[Tuple[Tuple, int]]], counter: List[int]) -> None:
    for k, item in enumerate(block.items):
        counter[0] += 1
        here = (path, counter[0])
        exprs: List[Expr] = []
        names: List[str] = []
        if isinstance(item, Assign):
            names.append(item.target.name)
            exprs.append(item.value)
        elif isinstance(item, Decl):
            names.append(item.var.name)
            if item.value is not None:
                exprs.append(item.value)
        elif isinstance(item, Store):
            exprs += [item.target, item.value]
        elif isinstance(item, CIf):
            exprs.append(item.cond)
        for e in exprs:
            for n in walk(e):
                if isinstance(n, Var):
                    names.append(n.name)
        for name in names:
            acc.setdefault(name, []).append(here)
        if isinstance(item, CIf):
            _mentions(item.then, path + (k, "t"), acc, counter)
            if item.else_ is not None:
                _mentions(item.else_, path + (k, "e"), acc, counter)


def _var_types(block: CBlock, acc: Dict[str, DataType]) -> None:
    for item in block.items:
        exprs: List[Expr] = []
        if isinstance(item, Assign):
            acc.setdefault(item.target.name, item.target.type)
            exprs.append(item.value)
        elif isinstance(item, Decl):
            acc.setdefault(item.var.name, item.var.type)
            if item.value is not None:
                exprs.append(item.value)
        elif isinstance(item, Store):
            exprs += [item.target, item.value]
        elif isinstance(item, CIf):
            exprs.append(item.cond)
            _var_types(item.then, acc)
            if item.else_ is not None:
                _var_types(item.else_, acc)
        for e in exprs:
            for n in walk(e):
                if isinstance(n, Var):
                    acc.setdefault(n.name, n.type)


def _common_prefix(paths: Sequence[Tuple]) -> Tuple:
    first = paths[0]
    n = len(first)
    for p in paths[1:]:
        n = min(n, len(p))
        for i in range(n):
            if p[i] != first[i]:
                n = i
                break
    # a path is (k0, side0, k1, side1, ...); keep whole (index, side) pairs
    return first[: n - (n % 2)]


def _block_at(root: CBlock, path: Tuple) -> CBlock:
    block = root
    for i in range(0, len(path), 2):
        item = block.items[path[i]]
        block = item.then if path[i + 1] == "t" else item.else_
    return block


def place_declarations(body: CBlock) -> None:
    """Declare every local at the innermost scope enclosing all of its mentions."""
    mentions: Dict[str, List[Tuple[Tuple, int]]] = {}
    _mentions(body, (), mentions, [0])
    types: Dict[str, DataType] = {}
    _var_types(body, types)
    inline: set = set()
    hoist: Dict[Tuple, List[Tuple[int, str]]] = {}
    first_decl: Dict[str, Tuple[Tuple, int]] = {}
    _find_decls(body, (), first_decl, [0])
    for name, where in mentions.items():
        lca = _common_prefix([p for p, _ in where])
        first = min(where, key=lambda w: w[1])
        decl = first_decl.get(name)
        if decl is not None and decl[0] == lca and decl[1] == first[1]:
            inline.add(name)
            continue
        hoist.setdefault(lca, []).append((first[1], name))
    _demote_decls(body, inline)
    for path in sorted(hoist, key=len, reverse=True):
        block = _block_at(body, path)
        names = [n for _, n in sorted(hoist[path])]
        block.items[0:0] = [CDeclare(Var(n, types[n])) for n in names]


def _find_decls(block: CBlock, path: Tuple, acc: Dict[str, Tuple[Tuple, int]], counter: List[int]) -> None:
    for k, item in enumerate(block.items):
        counter[0] += 1
        if isinstance(item, Decl) and item.var.name not in acc:
            acc[item.var.name] = (path, counter[0])
        if isinstance(item, CIf):
            _find_decls(item.then, path + (k, "t"), acc, counter)
            if item.else_ is not None:
                _find_decls(item.else_, path + (k, "e"), acc, counter)


def _demote_decls(block: CBlock, inline: set) -> None:
    for k, item in enumerate(block.items):
        if isinstance(item, Decl) and item.var.name not in inline:
            block.items[k] = Assign(item.var, item.value) if item.value is not None else Comment("")
        elif isinstance(item, CIf):
            _demote_decls(item.then, inline)
            if item.else_ is not None:
                _demote_decls(item.else_, inline)
    block.items[:] = [i for i in block.items if not (isinstance(i, Comment) and i.text == "")]


def _drop_trailing_return(block: CBlock) -> None:
    while block.items and isinstance(block.items[-1], Return):
        block.items.pop()


def build_kernel_ast(root, leaves: Mapping[int, LeafCode], config: KernelConfig, types: TypeEnv, name: str,
                     graph=None, header_comments: Sequence[str] = ()) -> KernelAst:
    body = region_to_block(root, leaves, graph)
    _drop_trailing_return(body)
    place_declarations(body)
    params = [arg_signature(a, types) for a in config.explicit_args]
    return KernelAst(name, params, body, list(header_comments))


def emit_kernel(root, config: KernelConfig, types: TypeEnv, leaves: Mapping[int, LeafCode] = None,
                name: str = "kernel", graph=None) -> str:
    """Render one kernel from its region tree and per-block code."""
    ast = build_kernel_ast(root, leaves or {}, config, types, name, graph)
    return render_kernel(ast)


def walk_items(block: CBlock):
    """Every statement of a C tree, in program order."""
    for item in block.items:
        yield item
        if isinstance(item, CIf):
            yield from walk_items(item.then)
            if item.else_ is not None:
                yield from walk_items(item.else_)
