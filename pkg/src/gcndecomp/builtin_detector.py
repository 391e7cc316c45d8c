"""Work-item builtin recognition.

Two jobs: classify scalar loads off the kernarg base (``s[4:5]``) as builtin
calls or kernel arguments, and rewrite arithmetic idioms such as
``group_id * cws + local_id`` into ``get_global_id`` form. The folds match
the work-group size by value because the compiler bakes it in as a constant.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, List, Optional, Tuple, Union

from .asm import ArgDecl, Instruction, KernelConfig, Operand
from .dtypes import INT, UINT, ULONG, UNKNOWN, DataType, parse_c_type
from .expr import (
    BinOp,
    Builtin,
    BuiltinId,
    Call,
    Cast,
    Const,
    Expr,
    KernelArg,
    builtin_type,
    rebuild,
)

if TYPE_CHECKING:
    from .abi import AbiMap
    from .state import RegisterFile, SymContext, Writer

Match = Tuple[Tuple[str, ...], Union[BuiltinId, ArgDecl]]


def _load_dwords(instr: Instruction) -> int:
    root = instr.root
    if root == "load_dword":
        return 1
    if root.startswith("load_dwordx") and root[len("load_dwordx"):].isdigit():
        return int(root[len("load_dwordx"):])
    return 0


def _base_offset(instr: Instruction, state: "RegisterFile") -> Optional[Tuple[Expr, int]]:
    from .state import read_pair

    ops = instr.operands
    if len(ops) < 3 or ops[1].kind != "sgpr_range" or ops[1].width != 2 or ops[2].kind != "literal":
        return None
    lo, hi = ops[1].registers()
    return read_pair(state, lo, hi), ops[2].value


def match_settings_load(instr: Instruction, state: "RegisterFile", abi: "AbiMap") -> Optional[Match]:
    """Classify one whole load off the kernarg base; ``None`` when it is not one."""
    from .state import is_kernarg_base

    dwords = _load_dwords(instr)
    if instr.prefix != "s" or dwords not in (1, 2):
        return None
    found = _base_offset(instr, state)
    if found is None or not is_kernarg_base(found[0]):
        return None
    offset = found[1]
    dst = tuple(instr.operands[0].registers())
    bid = abi.lookup(offset, dwords)
    if bid is not None:
        return dst, bid
    arg = abi.arg_at(offset)
    if arg is not None:
        return dst, arg
    return None


def arg_type(arg: ArgDecl) -> DataType:
    space = arg.address_space if arg.address_space in ("global", "constant", "local") else "global"
    parsed = parse_c_type(arg.ocl_type, space)
    return parsed if parsed is not None else UNKNOWN


def scalar_load(state: "RegisterFile", instr: Instruction, abi: "AbiMap", w: "Writer", ctx: Optional["SymContext"]) -> None:
    """Bind the destinations of an ``s_load_dword*``.

    Loads off the kernarg base are split into builtin-sized and argument-sized
    pieces; any piece that is neither is unsupported. Loads off other bases
    become dereferences.
    """
    from .state import Unsupported, is_kernarg_base, read_pair
    from .expr import Deref

    dwords = _load_dwords(instr)
    found = _base_offset(instr, state)
    if dwords == 0 or found is None:
        raise Unsupported("scalar load form")
    base, offset = found
    regs = instr.operands[0].registers()
    if len(regs) != dwords:
        raise Unsupported("scalar load width")
    if not is_kernarg_base(base):
        if not base.type.is_pointer and base.type.base not in ("uint", "unknown", "binary"):
            raise Unsupported("scalar load base")
        addr = base if offset == 0 else BinOp("+", base, Const(offset, ULONG), base.type if base.type.is_pointer else ULONG)
        from .state import _element_type, _space

        for j in range(dwords):
            a = addr if j == 0 else BinOp("+", addr, Const(4 * j, ULONG), addr.type)
            w.write32(regs[j], Deref(a, _element_type(a, 4, UINT), _space(a)))
        return
    if abi is None:
        raise Unsupported("no ABI map")
    j = 0
    while j < dwords:
        off = offset + 4 * j
        if j + 1 < dwords:
            piece = _piece(abi, off, 2)
            if piece is not None:
                pair = Operand("sgpr_range", int(regs[j][1:]), int(regs[j + 1][1:]))
                w.write64(pair, piece)
                j += 2
                continue
        piece = _piece(abi, off, 1)
        if piece is None:
            raise Unsupported(f"unknown kernarg offset {off:#x}")
        w.write32(regs[j], piece)
        j += 1


def _piece(abi: "AbiMap", offset: int, dwords: int) -> Optional[Expr]:
    bid = abi.lookup(offset, dwords)
    if bid is not None:
        t = builtin_type(bid)
        if t.width != dwords * 32:
            return None
        return Builtin(bid, t)
    arg = abi.arg_at(offset)
    if arg is not None:
        t = arg_type(arg)
        if t.width == dwords * 32:
            return KernelArg(arg.name, t)
    return None


# ---------------------------------------------------------------------------
# idiom folds


def _const(e: Expr) -> Optional[int]:
    return e.value if isinstance(e, Const) else None


def _builtin_dim(e: Expr, name: str) -> Optional[int]:
    if isinstance(e, Builtin) and e.id.name == name:
        return e.id.dim
    return None


def _group_product(e: Expr, config: KernelConfig) -> Optional[int]:
    """Dimension d when ``e`` computes group_id(d) * cws[d]."""
    d = _builtin_dim(e, "group_id")
    if d is not None:
        return d if config.cws[d] == 1 else None
    if isinstance(e, BinOp) and e.op == "*":
        for g, c in ((e.lhs, e.rhs), (e.rhs, e.lhs)):
            d = _builtin_dim(g, "group_id")
            if d is not None and (_const(c) == config.cws[d] or _is_local_size(c, d)):
                return d
    if isinstance(e, BinOp) and e.op == "<<":
        d = _builtin_dim(e.lhs, "group_id")
        k = _const(e.rhs)
        if d is not None and k is not None and k < 32 and (1 << k) == config.cws[d]:
            return d
    if isinstance(e, Call) and e.name == "mul24" and len(e.args) == 2:
        for g, c in ((e.args[0], e.args[1]), (e.args[1], e.args[0])):
            d = _builtin_dim(g, "group_id")
            if d is not None and _const(c) == config.cws[d]:
                return d
    return None


def _is_local_size(e: Expr, d: int) -> bool:
    return _builtin_dim(e, "local_size") == d


def _sum_terms(e: Expr, width: int) -> List[Expr]:
    if isinstance(e, BinOp) and e.op == "+" and not e.type.is_float and not e.type.is_pointer and e.type.width == width:
        return _sum_terms(e.lhs, width) + _sum_terms(e.rhs, width)
    return [e]


def _offset_dim(e: Expr, width: int) -> Optional[int]:
    if width == 64:
        return _builtin_dim(e, "global_offset")
    if isinstance(e, Cast) and e.type.width == 32:
        return _builtin_dim(e.operand, "global_offset")
    return None


def _diff_dim(e: Expr) -> Optional[int]:
    """Dimension of a folded ``global_id(d) - global_offset(d)``, looking through zero extension."""
    if isinstance(e, Cast) and e.type.width == 64 and not e.type.is_signed and e.operand.type.width == 32:
        e = e.operand
    if isinstance(e, BinOp) and e.op == "-":
        d = _builtin_dim(e.lhs, "global_id")
        if d is not None and _builtin_dim(e.rhs, "global_offset") == d:
            return d
    return None


def global_id_diff(d: int, t: DataType = UINT) -> Expr:
    gid, goff = BuiltinId("global_id", d), BuiltinId("global_offset", d)
    return BinOp("-", Builtin(gid, builtin_type(gid)), Builtin(goff, builtin_type(goff)), t)


def _global_id(d: int, width: int) -> Expr:
    bid = BuiltinId("global_id", d)
    b = Builtin(bid, builtin_type(bid))
    return b if width == 64 else Cast(UINT, b)


def _rebuild_sum(terms: List[Expr], t: DataType) -> Expr:
    out = terms[0]
    for term in terms[1:]:
        out = BinOp("+", out, term, t)
    return out


def _fold_sum(e: BinOp, config: KernelConfig) -> Expr:
    width = e.type.width
    terms = _sum_terms(e, width)
    changed = False
    # group_id(d) * cws[d] + local_id(d)  ->  global_id(d) - global_offset(d)
    for d in range(3):
        prod = next((i for i, t in enumerate(terms) if _group_product(t, config) == d), None)
        local = next((i for i, t in enumerate(terms) if _builtin_dim(t, "local_id") == d), None)
        if prod is None or local is None or prod == local:
            continue
        diff = global_id_diff(d, UINT)
        if width == 64:
            diff = Cast(ULONG, diff)
        first = min(prod, local)
        terms = [diff if i == first else t for i, t in enumerate(terms) if i not in (prod, local) or i == first]
        changed = True
    # (global_id(d) - global_offset(d)) + global_offset(d)  ->  global_id(d)
    for d in range(3):
        diff = next((i for i, t in enumerate(terms) if _diff_dim(t) == d), None)
        off = next((i for i, t in enumerate(terms) if _offset_dim(t, width) == d), None)
        if diff is None or off is None:
            continue
        first = min(diff, off)
        terms = [_global_id(d, width) if i == first else t for i, t in enumerate(terms) if i not in (diff, off) or i == first]
        changed = True
    if not changed:
        return e
    if len(terms) == 1:
        only = terms[0]
        if only.type.width != width and isinstance(only, BinOp) and only.op == "-":
            return BinOp("-", only.lhs, only.rhs, e.type)
        return only
    return _rebuild_sum(terms, e.type)


def _bottom_up(e: Expr, visit) -> Expr:
    kids = e.children()
    if kids:
        new_kids = tuple(_bottom_up(k, visit) for k in kids)
        if new_kids != kids:
            e = rebuild(e, new_kids)
    return visit(e)


def fold_global_id(expr: Expr, config: KernelConfig) -> Expr:
    def visit(e: Expr) -> Expr:
        if isinstance(e, BinOp) and e.op == "+" and not e.type.is_float and not e.type.is_pointer:
            return _fold_sum(e, config)
        return e

    return _bottom_up(expr, visit)


def fold_num_groups(expr: Expr, config: KernelConfig) -> Expr:
    def visit(e: Expr) -> Expr:
        if isinstance(e, BinOp) and e.op in ("/", ">>"):
            d = _builtin_dim(e.lhs, "global_size")
            c = _const(e.rhs)
            if d is None or c is None:
                return e
            divisor = c if e.op == "/" else (1 << c if c < 32 else 0)
            if divisor == config.cws[d]:
                bid = BuiltinId("num_groups", d)
                return Builtin(bid, builtin_type(bid))
        return e

    return _bottom_up(expr, visit)


def fold_local_size(expr: Expr, config: KernelConfig, enabled: bool = False) -> Expr:
    """Render the work-group-size multiplier of a group_id product as get_local_size (off by default)."""
    if not enabled:
        return expr

    def ls(d: int) -> Expr:
        bid = BuiltinId("local_size", d)
        return Builtin(bid, builtin_type(bid))

    def visit(e: Expr) -> Expr:
        if isinstance(e, BinOp) and e.op == "*":
            for g, c, left in ((e.lhs, e.rhs, True), (e.rhs, e.lhs, False)):
                d = _builtin_dim(g, "group_id")
                if d is not None and _const(c) == config.cws[d]:
                    return BinOp("*", g, ls(d), e.type) if left else BinOp("*", ls(d), g, e.type)
        if isinstance(e, Call) and e.name == "mul24" and len(e.args) == 2:
            a, b = e.args
            if _builtin_dim(a, "group_id") is not None and _const(b) == config.cws[a.id.dim]:
                return Call("mul24", (a, ls(a.id.dim)), e.type)
        return e

    return _bottom_up(expr, visit)


def fold_all(expr: Expr, config: KernelConfig, local_size: bool = False) -> Expr:
    """Apply every fold until nothing changes."""
    while True:
        new = fold_num_groups(fold_global_id(expr, config), config)
        new = fold_local_size(new, config, local_size)
        if new == expr:
            return new
        expr = new
