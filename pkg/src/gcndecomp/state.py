"""Symbolic register state and per-instruction semantics.

Every 32-bit register is a :class:`RegisterSlot` holding a version, a type,
an integrity tag and the expression currently bound to it. A 64-bit value
spans two slots that both carry the full 64-bit expression, tagged
``low_part`` and ``high_part``. ``vcc`` and ``exec`` are single 64-bit slots;
masks are modelled as single-lane booleans.

``exec`` is tracked relative to the enclosing structured region: it is
``TRUE`` on region entry, narrowed by ``s_and_saveexec_b64`` and reset when
control follows an ``s_cbranch_execz`` edge (see :func:`edge_state`).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .asm import Instruction, KernelConfig, Operand
from .dtypes import (
    B32,
    B64,
    BOOL,
    FLOAT,
    INT,
    LONG,
    UINT,
    ULONG,
    UNKNOWN,
    DataType,
    type_from_suffix,
    unify,
)
from .expr import (
    FALSE,
    TRUE,
    Assign,
    BinOp,
    Bitcast,
    Builtin,
    BuiltinId,
    Call,
    Cast,
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
    as_type,
    builtin_type,
    concat,
    contains_deref,
    high32,
    logical_and,
    logical_not,
    logical_or,
    low32,
    mask,
    sext64,
    to_bool,
    zext64,
)

ENTIRE, LOW, HIGH = "entire", "low_part", "high_part"
KERNARG_POINTER = DataType("uint", 8, 1, "constant")  # opaque settings pointer
EXEC_UNKNOWN = Var("exec_mask", BOOL)
WIDE_SPECIALS = ("vcc", "exec")


class Unsupported(Exception):
    """The instruction has no modelled semantics; it becomes inline asm."""


@dataclass(frozen=True)
class RegisterSlot:
    version: int = 0
    type: DataType = UNKNOWN
    integrity: str = ENTIRE
    expr: Optional[Expr] = None
    partner: Optional[str] = None

    @property
    def bound(self) -> bool:
        return self.expr is not None


@dataclass(frozen=True)
class PendingCarry:
    """A low-half add/sub whose carry may feed a matching high-half op."""

    flag: str
    flag_version: int
    dst: str
    dst_version: int
    a: RegisterSlot
    b: RegisterSlot
    a_value: Expr
    b_value: Expr
    op: str


def _reg_key(name: str) -> Tuple[int, int]:
    order = {"s": 0, "v": 1}
    if name[0] in order and name[1:].isdigit():
        return (order[name[0]], int(name[1:]))
    return (2, hash(name) & 0xFFFF)


@dataclass(frozen=True)
class RegisterFile:
    """Immutable mapping register name -> slot; absent names are unbound."""

    slots: Mapping[str, RegisterSlot] = field(default_factory=dict)
    carry: Optional[PendingCarry] = None

    def __getitem__(self, name: str) -> RegisterSlot:
        return self.slots.get(name, RegisterSlot())

    def names(self) -> List[str]:
        return sorted(self.slots, key=_reg_key)

    def bound_names(self) -> List[str]:
        return [n for n in self.names() if self.slots[n].bound]

    def with_slots(self, updates: Mapping[str, RegisterSlot], carry: Optional[PendingCarry] = None) -> "RegisterFile":
        slots = dict(self.slots)
        slots.update(updates)
        return RegisterFile(slots, carry)

    def snapshot(self) -> "RegisterFile":
        return RegisterFile(dict(self.slots), self.carry)

    @classmethod
    def at_entry(cls, config: KernelConfig) -> "RegisterFile":
        slots: Dict[str, RegisterSlot] = {}
        ndims = config.ndims
        for d in range(ndims):
            bid = BuiltinId("local_id", d)
            slots[f"v{d}"] = RegisterSlot(0, UINT, ENTIRE, Builtin(bid, builtin_type(bid)))
        if config.uses_args:
            for d in range(ndims):
                bid = BuiltinId("group_id", d)
                slots[f"s{6 + d}"] = RegisterSlot(0, UINT, ENTIRE, Builtin(bid, builtin_type(bid)))
        base = KernelArg("__kernarg", KERNARG_POINTER)
        slots["s4"] = RegisterSlot(0, KERNARG_POINTER, LOW, base, "s5")
        slots["s5"] = RegisterSlot(0, KERNARG_POINTER, HIGH, base, "s4")
        slots["exec"] = RegisterSlot(0, BOOL, ENTIRE, TRUE)
        return cls(slots)


def snapshot(state: RegisterFile) -> RegisterFile:
    return state.snapshot()


def is_kernarg_base(e: Optional[Expr]) -> bool:
    return isinstance(e, KernelArg) and e.name == "__kernarg"


# ---------------------------------------------------------------------------
# execution context


@dataclass
class SymContext:
    """Per-kernel mutable bookkeeping shared across steps: names and diagnostics."""

    abi: object = None
    config: Optional[KernelConfig] = None
    used_names: Set[str] = field(default_factory=set)
    diagnostics: List[str] = field(default_factory=list)
    unknown_reads: Dict[str, DataType] = field(default_factory=dict)

    def fresh(self, base: str) -> str:
        name = base
        k = 1
        while name in self.used_names:
            name = f"{base}_{k}"
            k += 1
        self.used_names.add(name)
        return name


# ---------------------------------------------------------------------------
# def/use


def _operand_regs(op: Operand) -> List[str]:
    return op.registers() if op.is_register else []


def defs_uses(instr: Instruction) -> Tuple[Set[str], Set[str]]:
    """Registers written and read by ``instr`` (conservative for unknown ops)."""
    ops = instr.operands
    regs = [_operand_regs(o) for o in ops]
    defs: Set[str] = set()
    uses: Set[str] = set()
    op = instr.opcode
    if instr.is_branch() or instr.is_end() or op in ("s_waitcnt", "s_nop"):
        for r in regs:
            uses.update(r)
        root = instr.root
        if root.endswith(("scc0", "scc1")):
            uses.add("scc")
        elif root.endswith(("vccz", "vccnz")):
            uses.add("vcc")
        elif root.endswith(("execz", "execnz")):
            uses.add("exec")
        return defs, uses
    if op.startswith("flat_store") or op.startswith("s_store") or op.startswith("s_cmp"):
        for r in regs:
            uses.update(r)
        if op.startswith("s_cmp"):
            defs.add("scc")
        return defs, uses
    if regs:
        defs.update(regs[0])
    for r in regs[1:]:
        uses.update(r)
    if op in ("v_add", "v_sub", "v_subrev", "v_addc", "v_subb", "v_subbrev") and len(regs) >= 4:
        defs.update(regs[1])
        uses.difference_update(regs[1])
        if op in ("v_addc", "v_subb", "v_subbrev") and len(regs) >= 5:
            uses.update(regs[4])
    if op in ("v_mac",):
        uses.update(regs[0])
    if op.startswith("s_") and op not in ("s_mov", "s_load_dword", "s_load_dwordx2", "s_load_dwordx4", "s_cmov", "s_mul", "s_cselect"):
        defs.add("scc")
    if op in ("s_addc", "s_subb", "s_cselect", "s_cmov"):
        uses.add("scc")
    if op in ("s_and_saveexec", "s_or_saveexec"):
        defs.add("exec")
        uses.add("exec")
    if instr.prefix == "v" or op.startswith("flat_"):
        uses.add("exec")
    if instr.prefix == "other":
        uses.update(r for rr in regs for r in rr)
    return defs, uses


# ---------------------------------------------------------------------------
# reading and writing


def _fresh_unknown(state: RegisterFile, name: str, ctx: Optional[SymContext]) -> Expr:
    slot = state[name]
    var_name = f"{name}_{slot.version}"
    if ctx is not None:
        ctx.unknown_reads.setdefault(var_name, UNKNOWN)
        ctx.used_names.add(var_name)
    return Var(var_name, UNKNOWN)


def read_reg(state: RegisterFile, name: str, ctx: Optional[SymContext] = None) -> Expr:
    """The 32-bit value of one register (or the whole value of vcc/exec/scc)."""
    slot = state[name]
    if slot.expr is None:
        return _fresh_unknown(state, name, ctx)
    if slot.integrity == LOW:
        return low32(slot.expr)
    if slot.integrity == HIGH:
        return high32(slot.expr)
    return slot.expr


def read_pair(state: RegisterFile, lo: str, hi: str, ctx: Optional[SymContext] = None) -> Expr:
    """The 64-bit value held by (lo, hi).

    Returns the joint binding when the two slots are the low and high halves of
    one value; otherwise builds a concatenation of the halves.
    """
    ls, hs = state[lo], state[hi]
    if (
        ls.integrity == LOW
        and hs.integrity == HIGH
        and ls.expr is not None
        and ls.expr == hs.expr
    ):
        return ls.expr
    return concat(read_reg(state, hi, ctx), read_reg(state, lo, ctx))


def _literal(op: Operand, t: DataType) -> Expr:
    if op.is_float:
        if t.is_float and t.width == 64:
            bits = struct.unpack("<Q", struct.pack("<d", struct.unpack("<f", struct.pack("<I", op.value))[0]))[0]
            return Const(bits, t)
        return Const(op.value, FLOAT if not t.is_float else t)
    if t.width == 64:
        return Const.of(op.value, t if not t.base in ("binary", "unknown") else ULONG)
    # integer literals in float ops are taken as raw bits
    base = t if t.base in ("int", "uint", "float") else UINT
    return Const.of(op.value, base)


def read32(state: RegisterFile, op: Operand, t: DataType, ctx: Optional[SymContext] = None) -> Expr:
    if op.kind == "literal":
        return _literal(op, t)
    if op.kind in ("sgpr", "vgpr"):
        return as_type(read_reg(state, op.registers()[0], ctx), t)
    if op.kind == "special" and op.name in ("vcc", "exec", "scc", "m0"):
        return as_type(read_reg(state, op.name, ctx), t) if op.name != "vcc" else read_reg(state, "vcc", ctx)
    raise Unsupported(f"cannot read {op} as 32-bit")


def read64(state: RegisterFile, op: Operand, t: DataType = ULONG, ctx: Optional[SymContext] = None) -> Expr:
    if op.kind == "literal":
        return _literal(op, t if t.width == 64 else ULONG)
    if op.kind in ("sgpr_range", "vgpr_range") and op.width == 2:
        lo, hi = op.registers()
        return read_pair(state, lo, hi, ctx)
    if op.kind == "special" and op.name in WIDE_SPECIALS:
        return read_reg(state, op.name, ctx)
    raise Unsupported(f"cannot read {op} as 64-bit")


def _bump(state: RegisterFile, name: str, pending: Dict[str, RegisterSlot]) -> int:
    current = pending.get(name, state[name])
    return current.version + 1


class Writer:
    """Collects destination updates for one instruction."""

    def __init__(self, state: RegisterFile) -> None:
        self.state = state
        self.updates: Dict[str, RegisterSlot] = {}
        self.carry: Optional[PendingCarry] = None
        self.diagnostics: List[str] = []

    def write32(self, name: str, value: Expr, t: Optional[DataType] = None) -> RegisterSlot:
        prior = self.state[name]
        vt = unify(t or value.type, value.type, self.diagnostics) if t is not None else value.type
        slot = RegisterSlot(_bump(self.state, name, self.updates), vt, ENTIRE, value)
        self.updates[name] = slot
        return slot

    def write64(self, op: Operand, value: Expr) -> None:
        if op.kind == "special" and op.name in WIDE_SPECIALS:
            self.updates[op.name] = RegisterSlot(_bump(self.state, op.name, self.updates), value.type, ENTIRE, value)
            return
        if op.kind not in ("sgpr_range", "vgpr_range") or op.width != 2:
            raise Unsupported(f"64-bit destination {op}")
        lo, hi = op.registers()
        self.updates[lo] = RegisterSlot(_bump(self.state, lo, self.updates), value.type, LOW, value, hi)
        self.updates[hi] = RegisterSlot(_bump(self.state, hi, self.updates), value.type, HIGH, value, lo)

    def invalidate(self, names: Iterable[str]) -> None:
        for name in names:
            self.updates[name] = RegisterSlot(_bump(self.state, name, self.updates), UNKNOWN, ENTIRE, None)

    def result(self, keep_carry: bool = True) -> RegisterFile:
        # a pending carry survives until its flag or low-half destination is rewritten;
        # _high_with_carry checks both versions before pairing
        carry = self.carry
        if carry is None and keep_carry:
            carry = self.state.carry
        return self.state.with_slots(self.updates, carry)


# ---------------------------------------------------------------------------
# semantics


def _dest32(op: Operand) -> str:
    if op.kind in ("sgpr", "vgpr"):
        return op.registers()[0]
    if op.kind == "special" and op.name in ("m0", "scc"):
        return op.name
    raise Unsupported(f"32-bit destination {op}")


def _suffix_type(instr: Instruction, pos: int = 0) -> DataType:
    if len(instr.suffixes) > pos:
        return type_from_suffix(instr.suffixes[pos])
    return B32


def _arith_type(t: DataType) -> DataType:
    if t.base == "binary":
        return DataType("uint", t.bits)
    if t.bits == 24:
        return DataType(t.base, 32)
    return t


_BINOPS = {
    "add": "+", "sub": "-", "mul": "*", "and": "&", "or": "|", "xor": "^",
    "lshl": "<<", "lshr": ">>", "ashr": ">>", "mul_lo": "*",
}
_CMP = {"eq": "==", "lg": "!=", "ne": "!=", "neq": "!=", "lt": "<", "le": "<=", "gt": ">", "ge": ">=",
        "nlt": ">=", "nle": ">", "ngt": "<=", "nge": "<"}


def _compare(pred: str, a: Expr, b: Expr, t: DataType) -> Expr:
    if t.is_float:
        ordered = {"eq": "==", "lt": "<", "le": "<=", "gt": ">", "ge": ">="}
        if pred in ordered:
            return BinOp(ordered[pred], a, b, BOOL, t)
        if pred in ("neq", "ne"):
            return BinOp("!=", a, b, BOOL, t)
        if pred == "lg":
            return logical_or(BinOp("<", a, b, BOOL, t), BinOp(">", a, b, BOOL, t))
        if pred.startswith("n") and pred[1:] in ordered:
            return UnOp("!", BinOp(ordered[pred[1:]], a, b, BOOL, t), BOOL)
        raise Unsupported(f"float compare {pred}")
    if pred not in ("eq", "lg", "ne", "lt", "le", "gt", "ge"):
        raise Unsupported(f"compare {pred}")
    return BinOp(_CMP[pred], a, b, BOOL, t)


def _binop(op: str, a: Expr, b: Expr, t: DataType) -> Expr:
    """Typed binary op with constant folding for trivially constant operands."""
    if t == BOOL or (a.type == BOOL and b.type == BOOL):
        if op == "&":
            return logical_and(to_bool(a), to_bool(b))
        if op == "|":
            return logical_or(to_bool(a), to_bool(b))
        if op == "^":
            a, b = to_bool(a), to_bool(b)
            if b in (TRUE, FALSE):
                a, b = b, a
            if a == TRUE:
                return logical_not(b)
            if a == FALSE:
                return b
            return BinOp("!=", a, b, BOOL, BOOL)
    if op in ("<<", ">>"):
        if isinstance(b, Const) and b.value == 0:
            return a
    if op in ("+", "|", "^") and isinstance(b, Const) and b.value == 0 and not t.is_float:
        return a
    if op == "+" and isinstance(a, Const) and a.value == 0 and not t.is_float:
        return b
    if op == "*" and isinstance(b, Const) and b.value == 1 and not t.is_float:
        return a
    if isinstance(a, Const) and isinstance(b, Const) and not t.is_float and op in ("+", "-", "*", "&", "|", "^", "<<"):
        w = t.width
        av, bv = a.value, b.value
        value = {
            "+": av + bv, "-": av - bv, "*": av * bv, "&": av & bv, "|": av | bv, "^": av ^ bv,
            "<<": av << (bv & (w - 1)),
        }[op]
        return Const.of(value, t)
    if op == ">>" and t.is_signed:
        return BinOp(op, a, b, t, t)
    return BinOp(op, a, b, t)


def _shift_amount(e: Expr, width: int) -> Expr:
    if isinstance(e, Const):
        return Const(e.value & (width - 1), UINT)
    return BinOp("&", as_type(e, UINT), Const(width - 1, UINT), UINT)


def _as_mask(e: Expr) -> Expr:
    if e.type == BOOL:
        return e
    if isinstance(e, Const):
        return TRUE if e.value & 1 else FALSE
    return to_bool(e)


def _pointer_add(a: Expr, b: Expr) -> Expr:
    """64-bit add keeping pointer typing on the pointer side."""
    if b.type.is_pointer and not a.type.is_pointer:
        a, b = b, a
    t = a.type if a.type.is_pointer else ULONG
    if isinstance(b, Const) and b.value == 0:
        return a
    if isinstance(a, Const) and a.value == 0 and not b.type.is_pointer:
        return b
    if not a.type.is_pointer and isinstance(a, Const) and isinstance(b, Const):
        return Const.of(a.value + b.value, ULONG)
    if b.type.is_pointer:
        b = Cast(ULONG, b)
    return BinOp("+", a, b if b.type.width == 64 else zext64(b), t)


def _wide_operand(slot_lo: RegisterSlot, lo_value: Expr, hi: Expr) -> Expr:
    """Reassemble a 64-bit operand from its low half slot and high half value."""
    if slot_lo.integrity == LOW and slot_lo.expr is not None and hi == high32(slot_lo.expr):
        return slot_lo.expr
    return concat(hi, lo_value)


def _slot_of(state: RegisterFile, op: Operand) -> RegisterSlot:
    if op.kind in ("sgpr", "vgpr"):
        return state[op.registers()[0]]
    return RegisterSlot()


def _high_value(state: RegisterFile, op: Operand, ctx: Optional[SymContext]) -> Expr:
    slot = _slot_of(state, op)
    if op.kind == "literal":
        return Const.of(op.value, UINT)
    if slot.integrity == HIGH and slot.expr is not None:
        return high32(slot.expr)
    return read32(state, op, UINT, ctx)


@dataclass
class StepResult:
    state: RegisterFile
    statements: List[Statement]
    diagnostics: List[str]


def _flag_operand(instr: Instruction, pos: int) -> Optional[Operand]:
    if len(instr.operands) > pos:
        return instr.operands[pos]
    return None


def _carry_flag_name(op: Optional[Operand]) -> Optional[str]:
    if op is None:
        return None
    if op.kind == "special" and op.name == "vcc":
        return "vcc"
    if op.kind == "sgpr_range" and op.width == 2:
        return op.registers()[0]
    return None


def step(
    state: RegisterFile,
    instr: Instruction,
    abi=None,
    ctx: Optional[SymContext] = None,
    live_after: Optional[FrozenSet[str]] = None,
) -> Tuple[RegisterFile, List[Statement]]:
    """Symbolically execute one instruction.

    Arithmetic and moves only rebind registers. Stores and ``s_endpgm`` yield
    statements; unsupported instructions yield a :class:`RawAsm` statement and
    invalidate what they write.
    """
    result = _step(state, instr, abi, ctx, live_after)
    if ctx is not None:
        ctx.diagnostics.extend(result.diagnostics)
    return result.state, result.statements


def _step(state, instr, abi, ctx, live_after) -> StepResult:
    try:
        return _execute(state, instr, abi, ctx, live_after)
    except Unsupported as exc:
        defs, _ = defs_uses(instr)
        w = Writer(state)
        w.invalidate(sorted(d for d in defs if d != "exec"))
        diags = [f"unsupported instruction kept as inline asm: {instr.source_text} ({exc})"]
        return StepResult(w.result(), [RawAsm(instr.source_text)], diags)


def _execute(state: RegisterFile, instr: Instruction, abi, ctx, live_after) -> StepResult:
    op = instr.opcode
    ops = instr.operands
    w = Writer(state)
    stmts: List[Statement] = []
    diags: List[str] = []

    if instr.synthetic or op in ("s_waitcnt", "s_nop") or instr.is_branch():
        return StepResult(state, [], [])
    if instr.is_end():
        return StepResult(state, [Return()], [])
    if instr.prefix == "other" or instr.prefix == "ds":
        raise Unsupported("no semantics for this instruction")

    t0 = _suffix_type(instr, 0)
    at = _arith_type(t0)

    def r32(i: int, t: DataType = at) -> Expr:
        return read32(state, ops[i], t, ctx)

    # ---- memory -----------------------------------------------------------
    if op.startswith("s_load_dword"):
        from .builtin_detector import scalar_load

        scalar_load(state, instr, abi, w, ctx)
        return StepResult(w.result(), stmts, w.diagnostics)
    if op.startswith("flat_load_dword"):
        dwords = _dwords(op, "flat_load_dword")
        addr = read64(state, ops[1], ULONG, ctx)
        _vector_mask_check(state)
        _load_to(w, ops[0], addr, dwords)
        return StepResult(w.result(), stmts, w.diagnostics)
    if op.startswith("flat_store_dword"):
        dwords = _dwords(op, "flat_store_dword")
        if state["exec"].expr != TRUE:
            raise Unsupported("store under a partial exec mask")
        addr = read64(state, ops[0], ULONG, ctx)
        if dwords == 1:
            value = read32(state, ops[1], UINT, ctx)
            elem = _element_type(addr, 4, value.type)
            value = as_type(value, elem)
        elif dwords == 2:
            value = read64(state, ops[1], ULONG, ctx)
            elem = _element_type(addr, 8, value.type)
        else:
            raise Unsupported("wide store")
        materialized, new_state = _materialize_derefs(state, ctx, live_after)
        stmts.extend(materialized)
        if materialized:
            state = new_state
            w = Writer(state)
            addr = read64(state, ops[0], ULONG, ctx)
            value = read32(state, ops[1], elem, ctx) if dwords == 1 else read64(state, ops[1], ULONG, ctx)
        stmts.append(Store(Deref(addr, elem, _space(addr)), value))
        return StepResult(w.result(keep_carry=True), stmts, diags)

    # ---- exec / mask manipulation -----------------------------------------
    if op in ("s_and_saveexec", "s_or_saveexec"):
        src = _as_mask(read64(state, ops[1], BOOL, ctx))
        exec_now = state["exec"].expr or EXEC_UNKNOWN
        w.write64(ops[0], exec_now)
        new_exec = logical_and(exec_now, src) if op == "s_and_saveexec" else logical_or(exec_now, src)
        w.updates["exec"] = RegisterSlot(_bump(state, "exec", w.updates), BOOL, ENTIRE, new_exec)
        return StepResult(w.result(), stmts, diags)

    # ---- scalar ALU -------------------------------------------------------
    if instr.prefix == "s":
        return _scalar(state, instr, w, ctx, at, r32)

    # ---- vector ALU -------------------------------------------------------
    if instr.prefix == "v":
        _vector(state, instr, w, ctx, at, r32)
        return StepResult(w.result(), stmts, w.diagnostics)

    raise Unsupported("no semantics for this instruction")


def _dwords(op: str, stem: str) -> int:
    tail = op[len(stem):]
    if tail == "":
        return 1
    if tail.startswith("x") and tail[1:].isdigit():
        return int(tail[1:])
    raise Unsupported(f"memory width {op}")


def _space(addr: Expr) -> str:
    t = addr.type
    if t.is_pointer and t.address_space in ("global", "local", "private", "constant"):
        return t.address_space
    return "global"


def _element_type(addr: Expr, size: int, fallback: DataType) -> DataType:
    t = addr.type
    if t.is_pointer:
        elem = t.element()
        if not elem.is_pointer and elem.size == size and elem.base != "void":
            return elem
    if fallback.base not in ("unknown", "bool") and fallback.width == size * 8:
        return DataType("uint", fallback.bits) if fallback.base == "binary" else fallback
    return UINT if size == 4 else ULONG


def _load_to(w: Writer, dst: Operand, addr: Expr, dwords: int) -> None:
    if dwords == 1:
        elem = _element_type(addr, 4, UINT)
        w.write32(_dest32(dst), Deref(addr, elem, _space(addr)))
    elif dwords == 2:
        elem = _element_type(addr, 8, ULONG)
        w.write64(dst, Deref(addr, elem, _space(addr)))
    else:
        raise Unsupported("wide load")


def _vector_mask_check(state: RegisterFile) -> None:
    if state["exec"].expr not in (TRUE,):
        raise Unsupported("vector load under a partial exec mask")


def _materialize_derefs(
    state: RegisterFile, ctx: Optional[SymContext], live_after: Optional[FrozenSet[str]]
) -> Tuple[List[Statement], RegisterFile]:
    """Pin loaded values that are still needed after a store into variables."""
    stmts: List[Statement] = []
    updates: Dict[str, RegisterSlot] = {}
    done: Set[str] = set()
    for name in state.names():
        slot = state.slots[name]
        if name in done or slot.expr is None or not contains_deref(slot.expr):
            continue
        partner = slot.partner if slot.integrity in (LOW, HIGH) else None
        names = [name] + ([partner] if partner and state[partner].expr == slot.expr else [])
        if live_after is not None and name != "exec" and not any(n in live_after for n in names):
            continue
        base = names[0] if slot.integrity != HIGH else (partner or name)
        var_name = f"{base}_{slot.version}"
        var_name = ctx.fresh(var_name) if ctx is not None else var_name
        var = Var(var_name, slot.expr.type)
        stmts.append(Decl(var, slot.expr))
        for n in names:
            s = state[n]
            updates[n] = replace(s, expr=var)
            done.add(n)
    if not updates:
        return [], state
    return stmts, state.with_slots(updates, state.carry)


def _scalar(state: RegisterFile, instr: Instruction, w: Writer, ctx, at: DataType, r32) -> StepResult:
    op = instr.opcode
    ops = instr.operands
    root = instr.root
    wide = bool(instr.suffixes) and instr.suffixes[0].endswith("64")

    if root.startswith("cmp_"):
        a, b = r32(0), r32(1)
        w.write32("scc", _compare(root[4:], a, b, at), BOOL)
        return StepResult(w.result(), [], w.diagnostics)

    if root == "mov" or root == "cmov":
        if root == "cmov":
            raise Unsupported("conditional move")
        if wide:
            value = read64(state, ops[1], ULONG, ctx)
            if ops[0].kind == "special" and ops[0].name == "exec":
                value = _as_mask(value)
            w.write64(ops[0], value)
        else:
            w.write32(_dest32(ops[0]), r32(1, UINT if at.base == "binary" else at))
            if ops[1].kind == "literal":
                name = _dest32(ops[0])
                w.updates[name] = replace(w.updates[name], type=_suffix_type(instr, 0))
        return StepResult(w.result(keep_carry=True), [], w.diagnostics)

    if root == "cselect":
        cond = _as_mask(read_reg(state, "scc", ctx))
        if wide:
            a, b = read64(state, ops[1], ULONG, ctx), read64(state, ops[2], ULONG, ctx)
            w.write64(ops[0], _ternary(cond, a, b))
        else:
            a, b = r32(1, UINT), r32(2, UINT)
            w.write32(_dest32(ops[0]), _ternary(cond, a, b))
        return StepResult(w.result(), [], w.diagnostics)

    if root in ("addc", "subb"):
        _high_with_carry(state, instr, w, ctx, flag="scc", dst=ops[0], a_op=ops[1], b_op=ops[2], sub=root == "subb")
        return StepResult(w.result(), [], w.diagnostics)

    if root in ("add", "sub"):
        a, b = r32(1), r32(2)
        dst = _dest32(ops[0])
        value = _binop("+" if root == "add" else "-", a, b, at)
        slot = w.write32(dst, value, at)
        if at.base != "uint":
            # signed forms set scc to overflow, which is not modelled
            w.invalidate(["scc"])
            return StepResult(w.result(), [], w.diagnostics)
        flag = _carry_expr(root, a, b, at)
        w.updates["scc"] = RegisterSlot(_bump(state, "scc", w.updates), BOOL, ENTIRE, flag)
        if at.base == "uint":
            w.carry = PendingCarry(
                "scc", w.updates["scc"].version, dst, slot.version,
                _slot_of(state, ops[1]), _slot_of(state, ops[2]), a, b, root,
            )
        return StepResult(w.result(), [], w.diagnostics)

    if root in ("mul", "and", "or", "xor", "lshl", "lshr", "ashr", "andn2", "orn2", "not", "mul_hi"):
        if root == "mul_hi":
            raise Unsupported("scalar mul_hi")
        if wide:
            t = ULONG if at.base in ("uint", "binary") else LONG
            a = read64(state, ops[1], t, ctx)
            if root == "not":
                value = logical_not(a) if a.type == BOOL else UnOp("~", a, a.type)
            elif root in ("lshl", "lshr", "ashr"):
                amount = _shift_amount(r32(2, UINT), 64)
                value = _binop(_BINOPS[root], a, amount, LONG if root == "ashr" else ULONG)
            else:
                b = read64(state, ops[2], t, ctx)
                if root in ("andn2", "orn2"):
                    if a.type == BOOL or b.type == BOOL:
                        nb = logical_not(_as_mask(b))
                        value = _binop("&" if root == "andn2" else "|", _as_mask(a), nb, BOOL)
                    else:
                        value = _binop("&" if root == "andn2" else "|", a, UnOp("~", b, ULONG), ULONG)
                else:
                    value = _binop(_BINOPS[root], a, b, BOOL if (a.type == BOOL and b.type == BOOL) else (BOOL if _mask_like(a, b) else t))
            if ops[0].kind == "special" and ops[0].name == "exec":
                value = _as_mask(value)
            w.write64(ops[0], value)
            w.updates["scc"] = RegisterSlot(_bump(state, "scc", w.updates), BOOL, ENTIRE,
                                            _nonzero(value))
            return StepResult(w.result(), [], w.diagnostics)
        a = r32(1, at if root not in ("lshl", "lshr") else UINT)
        if root == "not":
            value = UnOp("~", a, a.type)
        elif root in ("lshl", "lshr", "ashr"):
            t = INT if root == "ashr" else UINT
            a = as_type(a, t)
            value = _binop(_BINOPS[root], a, _shift_amount(r32(2, UINT), 32), t)
        elif root in ("andn2", "orn2"):
            b = r32(2, UINT)
            value = _binop("&" if root == "andn2" else "|", a, UnOp("~", b, UINT), UINT)
        else:
            t = INT if root == "mul" and at.base == "int" else (UINT if at.base in ("binary", "uint") or root != "mul" else at)
            value = _binop(_BINOPS[root], as_type(a, t), r32(2, t), t)
        w.write32(_dest32(ops[0]), value)
        if root != "mul":
            w.updates["scc"] = RegisterSlot(_bump(state, "scc", w.updates), BOOL, ENTIRE, _nonzero(value))
        return StepResult(w.result(), [], w.diagnostics)

    raise Unsupported("no semantics for this scalar instruction")


def _mask_like(a: Expr, b: Expr) -> bool:
    return a.type == BOOL or b.type == BOOL


def _nonzero(value: Expr) -> Expr:
    if value.type == BOOL:
        return value
    if isinstance(value, Const):
        return TRUE if value.value else FALSE
    return BinOp("!=", value, Const(0, value.type), BOOL, value.type if not value.type.is_pointer else ULONG)


def _ternary(cond: Expr, a: Expr, b: Expr) -> Expr:
    if cond == TRUE:
        return a
    if cond == FALSE:
        return b
    if a == b:
        return a
    t = a.type if a.type.base not in ("unknown", "binary") else b.type
    return Ternary(cond, a, b, t)


def _carry_expr(root: str, a: Expr, b: Expr, t: DataType) -> Expr:
    """Carry/borrow out of a 32-bit add/sub as a comparison."""
    ut = UINT
    ua, ub = as_type(a, ut) if a.type.is_float else a, as_type(b, ut) if b.type.is_float else b
    if root in ("add",):
        total = BinOp("+", ua, ub, ut)
        return BinOp("<", total, ua, BOOL, ut)
    if root == "sub":
        return BinOp("<", ua, ub, BOOL, ut)
    return BinOp("<", ub, ua, BOOL, ut)  # subrev: b - a borrows when b < a


def _high_with_carry(state, instr, w: Writer, ctx, flag: Optional[str], dst: Operand, a_op: Operand,
                     b_op: Operand, sub: bool, carry_in: Optional[str] = None, flag_out: Optional[Operand] = None) -> None:
    carry_in = carry_in or flag
    pending = state.carry
    matched = (
        pending is not None
        and carry_in is not None
        and pending.flag == carry_in
        and state[carry_in].version == pending.flag_version
        and pending.op == ("sub" if sub else "add")
    )
    dst_name = _dest32(dst)
    if matched:
        a_hi = _high_value(state, a_op, ctx)
        b_hi = _high_value(state, b_op, ctx)
        wide_a = _wide_operand(pending.a, pending.a_value, a_hi)
        wide_b = _wide_operand(pending.b, pending.b_value, b_hi)
        if sub:
            total = BinOp("-", wide_a, wide_b, wide_a.type if wide_a.type.is_pointer else ULONG)
        else:
            total = _pointer_add(wide_a, wide_b)
        lo_slot = w.updates.get(pending.dst, state[pending.dst])
        w.updates[dst_name] = RegisterSlot(_bump(state, dst_name, w.updates), total.type, HIGH, total, pending.dst)
        if lo_slot.version == pending.dst_version:
            w.updates[pending.dst] = replace(lo_slot, integrity=LOW, expr=total, partner=dst_name, type=total.type)
        if flag_out is not None:
            w.invalidate(_operand_regs(flag_out))
        elif flag is not None:
            w.invalidate([flag])
        return
    a = read32(state, a_op, UINT, ctx)
    b = read32(state, b_op, UINT, ctx)
    cin = _as_mask(read_reg(state, carry_in, ctx)) if carry_in else FALSE
    c = Ternary(cin, Const(1, UINT), Const(0, UINT), UINT) if cin not in (TRUE, FALSE) else Const(1 if cin == TRUE else 0, UINT)
    value = _binop("-" if sub else "+", _binop("-" if sub else "+", a, b, UINT), c, UINT)
    w.write32(dst_name, value)
    if flag_out is not None:
        w.invalidate(_operand_regs(flag_out))
    elif flag is not None:
        w.invalidate([flag])


def _vector(state: RegisterFile, instr: Instruction, w: Writer, ctx, at: DataType, r32) -> None:
    ops = instr.operands
    root = instr.root
    exec_expr = state["exec"].expr

    def put(name: str, value: Expr, t: Optional[DataType] = None) -> None:
        if exec_expr != TRUE:
            old = read_reg(state, name, ctx)
            value = _ternary(exec_expr or EXEC_UNKNOWN, value, as_type(old, value.type))
        w.write32(name, value, t)

    def put64(op: Operand, value: Expr) -> None:
        if exec_expr != TRUE:
            old = read64(state, op, value.type, ctx)
            value = _ternary(exec_expr or EXEC_UNKNOWN, value, old)
        w.write64(op, value)

    if root.startswith("cmp_") or root.startswith("cmpx_"):
        if root.startswith("cmpx_"):
            raise Unsupported("compare writing exec")
        a, b = r32(1), r32(2)
        value = _compare(root[4:], a, b, at)
        if exec_expr != TRUE:
            value = logical_and(exec_expr or EXEC_UNKNOWN, value)
        w.write64(ops[0], value)
        return

    if root == "mov":
        if instr.suffixes and instr.suffixes[0] == "b64":
            raise Unsupported("v_mov_b64")
        src = ops[1]
        if src.kind in ("sgpr", "vgpr") and exec_expr == TRUE:
            # copying keeps the half-of-64-bit binding intact
            slot = state[src.registers()[0]]
            if slot.expr is not None:
                name = _dest32(ops[0])
                w.updates[name] = replace(slot, version=_bump(state, name, w.updates))
                return
        put(_dest32(ops[0]), r32(1, UINT))
        if src.kind == "literal":
            # a constant carries no type of its own beyond the move's suffix
            name = _dest32(ops[0])
            w.updates[name] = replace(w.updates[name], type=_suffix_type(instr, 0))
        return

    if root == "cndmask":
        cond = _as_mask(read64(state, ops[3], BOOL, ctx)) if len(ops) > 3 else _as_mask(read_reg(state, "vcc", ctx))
        a, b = r32(1, B32), r32(2, B32)
        if a.type.is_float or b.type.is_float:
            a, b = as_type(a, FLOAT), as_type(b, FLOAT)
        put(_dest32(ops[0]), _ternary(cond, b, a))
        return

    if root in ("add", "sub", "subrev") and (at.is_float):
        a, b = r32(1), r32(2)
        if root == "subrev":
            a, b = b, a
        put(_dest32(ops[0]), BinOp("+" if root == "add" else "-", a, b, FLOAT))
        return

    if root in ("add", "sub", "subrev"):
        # GCN3 form: v_add_u32 vdst, vcc, src0, src1; the carry-out operand is optional
        has_flag = len(ops) == 4
        src0, src1 = (ops[2], ops[3]) if has_flag else (ops[1], ops[2])
        a, b = read32(state, src0, at, ctx), read32(state, src1, at, ctx)
        if root == "subrev":
            a, b = b, a
        dst = _dest32(ops[0])
        value = _binop("+" if root == "add" else "-", a, b, at)
        put(dst, value, at)
        if has_flag:
            flag = _carry_flag_name(ops[1])
            if flag is None:
                raise Unsupported("carry destination")
            flag_val = _carry_expr(root, a, b, at)
            if exec_expr != TRUE:
                flag_val = logical_and(exec_expr or EXEC_UNKNOWN, flag_val)
            w.write64(ops[1], flag_val) if flag != "vcc" else w.updates.__setitem__(
                "vcc", RegisterSlot(_bump(state, "vcc", w.updates), BOOL, ENTIRE, flag_val))
            if exec_expr == TRUE:
                w.carry = PendingCarry(
                    flag, w.updates[flag].version, dst, w.updates[dst].version,
                    _slot_of(state, src0 if root != "subrev" else src1),
                    _slot_of(state, src1 if root != "subrev" else src0),
                    a, b, "add" if root == "add" else "sub",
                )
        return

    if root in ("addc", "subb", "subbrev"):
        if len(ops) != 5 or exec_expr != TRUE:
            raise Unsupported("carry form")
        a_op, b_op = (ops[2], ops[3]) if root != "subbrev" else (ops[3], ops[2])
        _high_with_carry(state, instr, w, ctx, flag=None, dst=ops[0], a_op=a_op, b_op=b_op,
                         sub=root != "addc", carry_in=_carry_flag_name(ops[4]), flag_out=ops[1])
        return

    if root in ("mul", "mac", "mad", "min", "max") and at.is_float:
        a, b = r32(1), r32(2)
        if root == "mul":
            value = BinOp("*", a, b, FLOAT)
        elif root == "mac":
            acc = read32(state, ops[0], FLOAT, ctx)
            value = BinOp("+", BinOp("*", a, b, FLOAT), acc, FLOAT)
        elif root == "mad":
            value = BinOp("+", BinOp("*", a, b, FLOAT), r32(3), FLOAT)
        else:
            value = Call("fmax" if root == "max" else "fmin", (a, b), FLOAT)
        put(_dest32(ops[0]), value)
        return

    if root in ("mul_lo", "mul_hi", "mul", "mad", "min", "max"):
        t = INT if at.base == "int" else UINT
        a, b = r32(1, t), r32(2, t)
        narrow = len(instr.suffixes) == 2 and instr.suffixes[1] in ("u24", "i24") or at.bits == 24
        if root == "mul_lo" or (root == "mul" and not narrow):
            value = _binop("*", a, b, t)
        elif root == "mul":
            value = _mul24(a, b, t)
        elif root == "mul_hi":
            if narrow:
                a, b = _mask24(a, t), _mask24(b, t)
            value = Call("mul_hi", (a, b), t)
        elif root == "mad":
            if not narrow:
                raise Unsupported("wide mad")
            value = _binop("+", _mul24(a, b, t), r32(3, t), t)
        else:
            value = Call(root, (a, b), t)
        put(_dest32(ops[0]), value)
        return

    if root in ("lshlrev", "lshrrev", "ashrrev"):
        bits = 64 if instr.suffixes and instr.suffixes[0].endswith("64") else 32
        amount = _shift_amount(r32(1, UINT), bits)
        opr = "<<" if root == "lshlrev" else ">>"
        if bits == 64:
            t = LONG if root == "ashrrev" else ULONG
            src = read64(state, ops[2], t, ctx)
            if root == "ashrrev" and not src.type.is_signed:
                src = Cast(LONG, src)
            put64(ops[0], _binop(opr, src, amount, t))
        else:
            t = INT if root == "ashrrev" else UINT
            put(_dest32(ops[0]), _binop(opr, r32(2, t), amount, t))
        return

    if root in ("and", "or", "xor"):
        a, b = r32(1, UINT), r32(2, UINT)
        put(_dest32(ops[0]), _binop(_BINOPS[root], a, b, UINT))
        return

    if root == "not":
        put(_dest32(ops[0]), UnOp("~", r32(1, UINT), UINT))
        return

    if root == "cvt" and len(instr.suffixes) == 2:
        dst_t, src_t = (type_from_suffix(s) for s in instr.suffixes)
        if dst_t.width != 32 or src_t.width != 32 or dst_t.is_float == src_t.is_float:
            raise Unsupported("conversion")
        put(_dest32(ops[0]), Cast(dst_t, r32(1, src_t)))
        return

    raise Unsupported("no semantics for this vector instruction")


def _mask24(e: Expr, t: DataType) -> Expr:
    if isinstance(e, Const):
        return Const(e.value & 0xFFFFFF, t)
    if isinstance(e, Builtin) and e.id.name in ("local_id", "group_id", "local_size", "work_dim"):
        return e
    return BinOp("&", e, Const(0xFFFFFF, t), t)


def _small(e: Expr) -> bool:
    if isinstance(e, Const):
        return e.value < (1 << 23)
    return isinstance(e, Builtin) and e.id.name in ("local_id", "local_size", "work_dim")


def _mul24(a: Expr, b: Expr, t: DataType) -> Expr:
    """24-bit multiply; a plain product when both operands are known to fit."""
    if (_small(a) or isinstance(a, Builtin) and a.id.name == "group_id") and _small(b):
        return _binop("*", a, b, t)
    if _small(a) and isinstance(b, Builtin) and b.id.name == "group_id":
        return _binop("*", a, b, t)
    return Call("mul24", (a, b), t)


# ---------------------------------------------------------------------------
# control-flow edges and joins


def edge_state(state: RegisterFile, branch: Optional[Instruction], taken: bool) -> RegisterFile:
    """State on one out-edge of a block, refining exec for execz/execnz."""
    if branch is None or not branch.is_conditional_branch():
        return state
    root = branch.root
    if root in ("cbranch_execz", "cbranch_execnz"):
        active = (root == "cbranch_execnz") == taken
        slot = state["exec"]
        return state.with_slots({"exec": replace(slot, expr=TRUE if active else FALSE)}, state.carry)
    return state


def branch_condition(state: RegisterFile, branch: Instruction, ctx: Optional[SymContext] = None) -> Expr:
    """Condition under which ``branch`` is taken."""
    root = branch.root
    if root == "branch":
        return TRUE
    if root in ("cbranch_scc0", "cbranch_scc1"):
        cond = _as_mask(read_reg(state, "scc", ctx))
        return cond if root.endswith("1") else logical_not(cond)
    if root in ("cbranch_vccz", "cbranch_vccnz"):
        cond = _as_mask(read_reg(state, "vcc", ctx))
        return cond if root.endswith("nz") else logical_not(cond)
    if root in ("cbranch_execz", "cbranch_execnz"):
        cond = _as_mask(state["exec"].expr or EXEC_UNKNOWN)
        return cond if root.endswith("nz") else logical_not(cond)
    raise Unsupported(f"branch {branch.mnemonic}")


def merge_at_join(
    states: Sequence[RegisterFile],
    live: Optional[Iterable[str]] = None,
    ctx: Optional[SymContext] = None,
) -> Tuple[RegisterFile, List[List[Statement]]]:
    """Merge predecessor states at a join.

    Registers that agree pass through. Disagreeing registers that are live
    become variables assigned at the end of every predecessor; dead ones become
    unbound. Returns the merged state and one assignment list per predecessor.
    """
    if not states:
        raise ValueError("merge_at_join needs at least one state")
    live_set = set(live) if live is not None else None
    names: Set[str] = set()
    for s in states:
        names.update(s.slots)
    merged: Dict[str, RegisterSlot] = {}
    assigns: List[List[Statement]] = [[] for _ in states]
    handled: Set[str] = set()
    for name in sorted(names, key=_reg_key):
        if name in handled:
            continue
        slots = [s[name] for s in states]
        first = slots[0]
        if all((sl.version, sl.expr) == (first.version, first.expr) for sl in slots[1:]):
            merged[name] = first
            continue
        version = max(sl.version for sl in slots) + 1
        group = _pair_group(states, name)
        if live_set is not None and not any(n in live_set for n in group):
            for n in group:
                merged[n] = RegisterSlot(max(s[n].version for s in states) + 1, UNKNOWN, ENTIRE, None)
                handled.add(n)
            continue
        if len(group) == 2:
            lo, hi = group
            version = max(s[lo].version for s in states) + 1
            values = [read_pair(s, lo, hi, ctx) for s in states]
            t = _join_type(values)
            values = [coerce(v, t) for v in values]
            var = Var(_join_name(ctx, lo, version), t)
            hv = max(s[hi].version for s in states) + 1
            merged[lo] = RegisterSlot(version, t, LOW, var, hi)
            merged[hi] = RegisterSlot(hv, t, HIGH, var, lo)
            handled.update(group)
        else:
            values = [read_reg(s, name, ctx) for s in states]
            t = _join_type(values)
            values = [coerce(v, t) for v in values]
            var = Var(_join_name(ctx, name, version), t)
            merged[name] = RegisterSlot(version, t, ENTIRE, var)
        for i, v in enumerate(values):
            assigns[i].append(Assign(var, v))
    return RegisterFile(merged), assigns


def _pair_group(states: Sequence[RegisterFile], name: str) -> Tuple[str, ...]:
    """``(lo, hi)`` when every predecessor holds ``name`` as one half of the same-shaped pair."""
    partner: Optional[str] = None
    for s in states:
        slot = s[name]
        if slot.integrity not in (LOW, HIGH) or slot.partner is None:
            return (name,)
        other = s[slot.partner]
        if other.expr != slot.expr or other.integrity == slot.integrity:
            return (name,)
        if partner is None:
            partner = slot.partner
        elif partner != slot.partner:
            return (name,)
    assert partner is not None
    lo, hi = (name, partner) if states[0][name].integrity == LOW else (partner, name)
    return (lo, hi)


def coerce(v: Expr, t: DataType) -> Expr:
    """Make ``v`` assignable to a variable of type ``t`` without changing its bits."""
    if t.base in ("unknown", "binary") or v.type == t:
        return v
    if t.base == "bool":
        return _as_mask(v)
    if v.type.base == "bool":
        return Ternary(v, Const(1, t), Const(0, t), t) if not t.is_pointer else v
    if v.type.is_float != t.is_float and v.type.width == t.width:
        return as_type(v, t)
    if v.type.width < t.width and not t.is_pointer:
        return sext64(v) if v.type.is_signed else zext64(v)
    return v


def _join_type(values: Sequence[Expr]) -> DataType:
    t = UNKNOWN
    for v in values:
        t = unify(t, v.type)
    return t


def _join_name(ctx: Optional[SymContext], reg: str, version: int) -> str:
    base = f"{reg}_{version}"
    return ctx.fresh(base) if ctx is not None else base
