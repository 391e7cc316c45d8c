"""Differential-testing oracle.

:func:`interpret_asm` runs the original instructions concretely for a single
lane: the lane's exec bit gates vector writes and stores, scalar code always
runs. :func:`evaluate_decompiled` runs the emitted C tree. Both return the
ordered list of global-memory writes, which must match exactly.

The interpreter shares no code with the symbolic layer: it keeps its own
kernarg image layout and its own instruction semantics.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .asm import ArgDecl, Instruction, KernelConfig, Operand, Program
from .dtypes import DataType
from .errors import OracleUnsupported
from .expr import (
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
    Store,
    Ternary,
    UnOp,
    Var,
)

M32 = 0xFFFFFFFF
M64 = 0xFFFFFFFFFFFFFFFF
WriteRecord = Tuple[int, int, int]  # (address, bytes, value bits)


# ---------------------------------------------------------------------------
# environment


@dataclass
class WorkItemEnv:
    """One work-item's coordinates, argument values and memory seed."""

    local_id: Tuple[int, int, int]
    group_id: Tuple[int, int, int]
    global_offset: Tuple[int, int, int]
    num_groups: Tuple[int, int, int]
    cws: Tuple[int, int, int]
    work_dim: int
    args: Dict[str, int]
    memory_seed: int = 0

    @property
    def global_size(self) -> Tuple[int, int, int]:
        return tuple(n * c for n, c in zip(self.num_groups, self.cws))

    @property
    def global_id(self) -> Tuple[int, int, int]:
        return tuple(g * c + l + o for g, c, l, o in zip(self.group_id, self.cws, self.local_id, self.global_offset))

    def builtin(self, name: str, dim: Optional[int]) -> int:
        table = {
            "local_id": self.local_id, "group_id": self.group_id, "global_offset": self.global_offset,
            "global_size": self.global_size, "local_size": self.cws, "num_groups": self.num_groups,
            "global_id": self.global_id,
        }
        if name == "work_dim":
            return self.work_dim
        return table[name][dim]


POINTER_BASE = 0x1_0000_0000
POINTER_STRIDE = 0x0100_0000


def sample_env(config: KernelConfig, rng: random.Random) -> WorkItemEnv:
    nd = config.ndims
    cws = tuple(config.cws)
    num_groups = tuple(rng.randint(1, 6) if d < nd else 1 for d in range(3))
    group_id = tuple(rng.randrange(num_groups[d]) for d in range(3))
    local_id = tuple(rng.randrange(cws[d]) if d < nd else 0 for d in range(3))
    offset = tuple(rng.choice((0, 0, rng.randint(1, 300), rng.randint(0, 1 << 12))) if d < nd else 0 for d in range(3))
    args: Dict[str, int] = {}
    pointer_index = 0
    for a in config.explicit_args:
        if a.is_pointer:
            args[a.name] = POINTER_BASE + pointer_index * POINTER_STRIDE
            pointer_index += 1
        elif a.ocl_type in ("float",):
            args[a.name] = struct.unpack("<I", struct.pack("<f", rng.uniform(-100.0, 100.0)))[0]
        elif a.ocl_type in ("double",):
            args[a.name] = struct.unpack("<Q", struct.pack("<d", rng.uniform(-100.0, 100.0)))[0]
        elif a.ocl_type in ("long", "ulong", "size_t"):
            args[a.name] = rng.choice((rng.randint(0, 1000), rng.getrandbits(64)))
        else:
            args[a.name] = rng.choice((rng.randint(0, 64), rng.randint(-50, 50) & M32, rng.getrandbits(32)))
    return WorkItemEnv(local_id, group_id, offset, num_groups, cws, nd, args, rng.getrandbits(32))


class Memory:
    """Byte-addressed memory; unwritten bytes come from a seeded hash."""

    def __init__(self, seed: int) -> None:
        self.seed = seed
        self.bytes: Dict[int, int] = {}
        self.trace: List[WriteRecord] = []

    def _initial(self, addr: int) -> int:
        x = (addr * 0x9E3779B97F4A7C15 + self.seed * 0xBF58476D1CE4E5B9) & M64
        x ^= x >> 29
        x = (x * 0x94D049BB133111EB) & M64
        return (x >> 32) & 0xFF

    def read(self, addr: int, size: int) -> int:
        value = 0
        for i in range(size):
            a = (addr + i) & M64
            b = self.bytes.get(a)
            if b is None:
                b = self._initial(a)
            value |= b << (8 * i)
        return value

    def write(self, addr: int, size: int, value: int) -> None:
        addr &= M64
        for i in range(size):
            self.bytes[(addr + i) & M64] = (value >> (8 * i)) & 0xFF
        self.trace.append((addr, size, value & ((1 << (8 * size)) - 1)))


# ---------------------------------------------------------------------------
# float helpers (float32 arithmetic through numpy)


def f32(bits: int) -> np.float32:
    return np.array([bits & M32], dtype=np.uint32).view(np.float32)[0]


def f32_bits(value) -> int:
    return int(np.array([value], dtype=np.float32).view(np.uint32)[0])


def f64(bits: int) -> np.float64:
    return np.array([bits & M64], dtype=np.uint64).view(np.float64)[0]


def f64_bits(value) -> int:
    return int(np.array([value], dtype=np.float64).view(np.uint64)[0])


def to_signed(v: int, width: int) -> int:
    v &= (1 << width) - 1
    return v - (1 << width) if v >> (width - 1) else v


def float_to_int_sat(value: float, signed: bool, width: int = 32) -> int:
    """Truncating conversion with saturation; NaN becomes 0."""
    if np.isnan(value):
        return 0
    lo, hi = (-(1 << (width - 1)), (1 << (width - 1)) - 1) if signed else (0, (1 << width) - 1)
    if value <= lo:
        return lo & ((1 << width) - 1)
    if value >= hi:
        return hi
    return int(value) & ((1 << width) - 1)


# ---------------------------------------------------------------------------
# kernarg image (independent layout)

_SCALAR_BYTES = {"char": 1, "uchar": 1, "short": 2, "ushort": 2, "int": 4, "uint": 4, "float": 4,
                 "long": 8, "ulong": 8, "double": 8, "size_t": 8, "half": 2}


def _bytes_of(arg: ArgDecl) -> int:
    return 8 if arg.ocl_type.rstrip().endswith("*") else _SCALAR_BYTES.get(arg.ocl_type.strip(), 4)


def kernarg_image(config: KernelConfig, env: WorkItemEnv) -> Dict[int, int]:
    """Byte image of the argument area: global offsets first, explicit args after the implicit block."""
    image: Dict[int, int] = {}

    def put(offset: int, size: int, value: int) -> None:
        for i in range(size):
            image[offset + i] = (value >> (8 * i)) & 0xFF

    for d in range(3):
        put(8 * d, 8, env.global_offset[d])
    implicit = [a for a in config.args if a.implicit]
    cursor = 0
    if implicit:
        for a in implicit:
            size = _bytes_of(a)
            cursor = -(-cursor // size) * size + size
    else:
        cursor = 48
    for a in config.args:
        if a.implicit:
            continue
        size = _bytes_of(a)
        cursor = -(-cursor // size) * size
        put(cursor, size, env.args.get(a.name, 0))
        cursor += size
    return image


def settings_dwords(env: WorkItemEnv) -> Dict[int, int]:
    gs = env.global_size
    return {0xC: gs[0], 0x10: gs[1], 0x14: gs[2], 0x20010: env.work_dim}


# ---------------------------------------------------------------------------
# instruction interpreter


class _Lane:
    def __init__(self, config: KernelConfig, env: WorkItemEnv) -> None:
        self.regs: Dict[str, int] = {}
        self.env = env
        self.config = config
        self.mem = Memory(env.memory_seed)
        for d in range(config.ndims):
            self.regs[f"v{d}"] = env.local_id[d]
            if config.uses_args:
                self.regs[f"s{6 + d}"] = env.group_id[d]
        self.kernarg_addr = 0x7000_0000_0000
        self.regs["s4"] = self.kernarg_addr & M32
        self.regs["s5"] = self.kernarg_addr >> 32
        self.regs["exec"] = 1
        self.regs["vcc"] = 0
        self.regs["scc"] = 0
        self.image = kernarg_image(config, env)
        self.settings = settings_dwords(env)

    # registers
    def get(self, name: str) -> int:
        if name not in self.regs:
            raise OracleUnsupported(f"read of uninitialized register {name}")
        return self.regs[name]

    @property
    def active(self) -> bool:
        return bool(self.regs["exec"] & 1)

    def read(self, op: Operand, width: int = 32) -> int:
        if op.kind == "literal":
            v = op.value
            return v & ((1 << width) - 1)
        if op.kind in ("sgpr", "vgpr"):
            if width == 64:
                raise OracleUnsupported("64-bit read of a single register")
            return self.get(op.registers()[0])
        if op.kind in ("sgpr_range", "vgpr_range"):
            regs = op.registers()
            if width != 32 * len(regs):
                raise OracleUnsupported(f"width mismatch reading {op}")
            v = 0
            for i, r in enumerate(regs):
                v |= self.get(r) << (32 * i)
            return v
        if op.kind == "special" and op.name in ("vcc", "exec"):
            v = self.get(op.name)
            return v if width == 64 else v & M32
        if op.kind == "special" and op.name in ("scc", "m0"):
            return self.get(op.name)
        raise OracleUnsupported(f"operand {op}")

    def write(self, op: Operand, value: int, width: int = 32, vector: bool = False) -> None:
        if vector and not self.active:
            return
        if op.kind in ("special",) and op.name in ("vcc", "exec"):
            self.regs[op.name] = value & M64
            return
        regs = op.registers()
        if op.kind == "special" and op.name in ("scc", "m0"):
            self.regs[op.name] = value & M32
            return
        if len(regs) * 32 != width:
            raise OracleUnsupported(f"width mismatch writing {op}")
        for i, r in enumerate(regs):
            self.regs[r] = (value >> (32 * i)) & M32


_CMP_INT = {
    "eq": lambda a, b: a == b, "lg": lambda a, b: a != b, "ne": lambda a, b: a != b,
    "lt": lambda a, b: a < b, "le": lambda a, b: a <= b, "gt": lambda a, b: a > b, "ge": lambda a, b: a >= b,
}


def _cmp_float(rel: str, a: float, b: float) -> bool:
    unordered = np.isnan(a) or np.isnan(b)
    base = {"eq": a == b, "lt": a < b, "le": a <= b, "gt": a > b, "ge": a >= b,
            "lg": (a < b) or (a > b), "neq": not (a == b), "ne": not (a == b)}
    if rel in base:
        return bool(base[rel])
    if rel.startswith("n") and rel[1:] in base:
        return not base[rel[1:]]
    if rel == "o":
        return not unordered
    if rel == "u":
        return unordered
    raise OracleUnsupported(f"float compare {rel}")


def _suffix_kind(instr: Instruction, i: int = 0) -> Tuple[str, int]:
    s = instr.suffixes[i] if len(instr.suffixes) > i else "b32"
    return s[0], int(s[1:])


def interpret_asm(
    program: Union[Program, Sequence[Instruction]],
    config: KernelConfig,
    env: WorkItemEnv,
    max_steps: int = 100_000,
) -> List[WriteRecord]:
    """Run one lane through the kernel and return its memory writes in order."""
    if isinstance(program, Program):
        instrs, labels = program.instructions, program.labels
    else:
        instrs = list(program)
        labels = {ins.label: i for i, ins in enumerate(instrs) if ins.label}
    lane = _Lane(config, env)
    pc = 0
    steps = 0
    while pc < len(instrs):
        steps += 1
        if steps > max_steps:
            raise OracleUnsupported("step limit exceeded")
        ins = instrs[pc]
        pc += 1
        if ins.is_end():
            break
        if ins.is_branch():
            if _branch_taken(lane, ins):
                pc = labels[ins.branch_target()]
            continue
        _execute(lane, ins)
    return lane.mem.trace


def _branch_taken(lane: _Lane, ins: Instruction) -> bool:
    root = ins.root
    if root == "branch":
        return True
    checks = {
        "cbranch_scc0": lambda: lane.get("scc") == 0,
        "cbranch_scc1": lambda: lane.get("scc") != 0,
        "cbranch_vccz": lambda: lane.get("vcc") == 0,
        "cbranch_vccnz": lambda: lane.get("vcc") != 0,
        "cbranch_execz": lambda: lane.get("exec") == 0,
        "cbranch_execnz": lambda: lane.get("exec") != 0,
    }
    if root not in checks:
        raise OracleUnsupported(f"branch {ins.mnemonic}")
    return checks[root]()


def _execute(lane: _Lane, ins: Instruction) -> None:
    op = ins.opcode
    if op in ("s_waitcnt", "s_nop"):
        return
    if ins.prefix == "s":
        _scalar(lane, ins)
    elif ins.prefix == "v":
        _vector(lane, ins)
    elif ins.prefix == "flat":
        _flat(lane, ins)
    else:
        raise OracleUnsupported(f"instruction {ins.mnemonic}")


def _scalar(lane: _Lane, ins: Instruction) -> None:
    ops = ins.operands
    root = ins.root
    kind, width = _suffix_kind(ins)
    mask = (1 << width) - 1

    if root.startswith("load_dword"):
        tail = root[len("load_dword"):]
        dwords = 1 if tail == "" else int(tail[1:])
        base = lane.read(ops[1], 64)
        offset = ops[2].value
        value = 0
        if base == lane.kernarg_addr:
            if dwords == 1 and offset in lane.settings:
                value = lane.settings[offset]
            else:
                for i in range(4 * dwords):
                    if offset + i not in lane.image:
                        raise OracleUnsupported(f"kernarg byte {offset + i:#x} not modelled")
                    value |= lane.image[offset + i] << (8 * i)
        else:
            value = lane.mem.read(base + offset, 4 * dwords)
        lane.write(ops[0], value, 32 * dwords)
        return
    if root in ("and_saveexec", "or_saveexec"):
        old = lane.get("exec")
        src = lane.read(ops[1], 64)
        lane.write(ops[0], old, 64)
        new = old & src if root == "and_saveexec" else old | src
        lane.regs["exec"] = new
        lane.regs["scc"] = int(new != 0)
        return
    if root.startswith("cmp_"):
        a, b = lane.read(ops[0]), lane.read(ops[1])
        if kind == "i":
            a, b = to_signed(a, 32), to_signed(b, 32)
        rel = root[4:]
        if rel not in _CMP_INT:
            raise OracleUnsupported(f"scalar compare {rel}")
        lane.regs["scc"] = int(_CMP_INT[rel](a, b))
        return
    if root == "mov":
        lane.write(ops[0], lane.read(ops[1], width), width)
        return
    if root == "cselect":
        pick = ops[1] if lane.get("scc") else ops[2]
        lane.write(ops[0], lane.read(pick, width), width)
        return
    if root in ("add", "sub", "addc", "subb"):
        a, b = lane.read(ops[1]), lane.read(ops[2])
        cin = lane.get("scc") if root in ("addc", "subb") else 0
        if root in ("add", "addc"):
            full = a + b + cin
            carry = full >> 32
        else:
            full = a - b - cin
            carry = int(full < 0)
        lane.write(ops[0], full & M32)
        if kind == "u" or root in ("addc", "subb"):
            lane.regs["scc"] = carry
        else:
            lane.regs.pop("scc", None)
        return
    if root == "mul":
        lane.write(ops[0], (lane.read(ops[1]) * lane.read(ops[2])) & M32)
        return
    if root in ("and", "or", "xor", "andn2", "orn2", "not", "lshl", "lshr", "ashr"):
        a = lane.read(ops[1], width)
        if root == "not":
            r = ~a & mask
        elif root in ("lshl", "lshr", "ashr"):
            amt = lane.read(ops[2]) & (width - 1)
            if root == "lshl":
                r = (a << amt) & mask
            elif root == "lshr":
                r = a >> amt
            else:
                r = (to_signed(a, width) >> amt) & mask
        else:
            b = lane.read(ops[2], width)
            r = {"and": a & b, "or": a | b, "xor": a ^ b, "andn2": a & ~b & mask, "orn2": (a | ~b) & mask}[root]
        lane.write(ops[0], r, width)
        lane.regs["scc"] = int(r != 0)
        return
    raise OracleUnsupported(f"scalar instruction {ins.mnemonic}")


def _vsrc(lane: _Lane, op: Operand) -> int:
    return lane.read(op) & M32


def _vector(lane: _Lane, ins: Instruction) -> None:
    ops = ins.operands
    root = ins.root
    kind, width = _suffix_kind(ins)
    active = lane.active

    def put(value: int) -> None:
        lane.write(ops[0], value & M32, 32, vector=True)

    if root.startswith("cmp_"):
        rel = root[4:]
        a, b = _vsrc(lane, ops[1]), _vsrc(lane, ops[2])
        if kind == "f":
            r = _cmp_float(rel, float(f32(a)), float(f32(b)))
        else:
            if kind == "i":
                a, b = to_signed(a, 32), to_signed(b, 32)
            if rel not in _CMP_INT:
                raise OracleUnsupported(f"vector compare {rel}")
            r = _CMP_INT[rel](a, b)
        bit = int(r and active)
        lane.write(ops[0], bit, 64)
        return
    if root == "mov":
        if width != 32:
            raise OracleUnsupported("v_mov width")
        put(_vsrc(lane, ops[1]))
        return
    if root == "cndmask":
        mask = lane.read(ops[3], 64) if len(ops) > 3 else lane.get("vcc")
        put(_vsrc(lane, ops[2]) if mask & 1 else _vsrc(lane, ops[1]))
        return
    if kind == "f" and root in ("add", "sub", "subrev", "mul", "mac", "mad", "max", "min"):
        a, b = f32(_vsrc(lane, ops[1])), f32(_vsrc(lane, ops[2]))
        with np.errstate(all="ignore"):
            if root == "add":
                r = a + b
            elif root == "sub":
                r = a - b
            elif root == "subrev":
                r = b - a
            elif root == "mul":
                r = a * b
            elif root == "mac":
                r = np.float32(a * b) + f32(lane.get(ops[0].registers()[0]) if active else 0)
            elif root == "mad":
                r = np.float32(a * b) + f32(_vsrc(lane, ops[3]))
            elif root == "max":
                r = np.fmax(a, b)
            else:
                r = np.fmin(a, b)
        put(f32_bits(r))
        return
    if root in ("add", "sub", "subrev"):
        has_flag = len(ops) == 4
        a, b = (_vsrc(lane, ops[2]), _vsrc(lane, ops[3])) if has_flag else (_vsrc(lane, ops[1]), _vsrc(lane, ops[2]))
        if root == "add":
            full, carry = a + b, (a + b) >> 32
        elif root == "sub":
            full, carry = a - b, int(a < b)
        else:
            full, carry = b - a, int(b < a)
        put(full)
        if has_flag:
            lane.write(ops[1], int(bool(carry) and active), 64)
        return
    if root in ("addc", "subb", "subbrev"):
        a, b = _vsrc(lane, ops[2]), _vsrc(lane, ops[3])
        cin = lane.read(ops[4], 64) & 1
        if root == "addc":
            full = a + b + cin
            carry = full >> 32
        elif root == "subb":
            full = a - b - cin
            carry = int(full < 0)
        else:
            full = b - a - cin
            carry = int(full < 0)
        put(full)
        lane.write(ops[1], int(bool(carry) and active), 64)
        return
    if root in ("mul_lo", "mul_hi", "mul", "mad", "min", "max"):
        narrow = len(ins.suffixes) == 2 and ins.suffixes[1] in ("u24", "i24") or width == 24
        signed = kind == "i"
        a, b = _vsrc(lane, ops[1]), _vsrc(lane, ops[2])
        if narrow:
            a, b = a & 0xFFFFFF, b & 0xFFFFFF
            if signed:
                a, b = to_signed(a, 24), to_signed(b, 24)
        elif signed:
            a, b = to_signed(a, 32), to_signed(b, 32)
        if root in ("mul_lo", "mul"):
            r = a * b
        elif root == "mul_hi":
            r = (a * b) >> 32
        elif root == "mad":
            if not narrow:
                raise OracleUnsupported("wide mad")
            r = a * b + _vsrc(lane, ops[3])
        elif root == "max":
            r = max(a, b)
        else:
            r = min(a, b)
        put(r & M32)
        return
    if root in ("lshlrev", "lshrrev", "ashrrev"):
        amt = _vsrc(lane, ops[1])
        if width == 64:
            v = lane.read(ops[2], 64)
            amt &= 63
            if root == "lshlrev":
                r = (v << amt) & M64
            elif root == "lshrrev":
                r = v >> amt
            else:
                r = (to_signed(v, 64) >> amt) & M64
            lane.write(ops[0], r, 64, vector=True)
            return
        v = _vsrc(lane, ops[2])
        amt &= 31
        if root == "lshlrev":
            r = v << amt
        elif root == "lshrrev":
            r = v >> amt
        else:
            r = to_signed(v, 32) >> amt
        put(r)
        return
    if root in ("and", "or", "xor"):
        a, b = _vsrc(lane, ops[1]), _vsrc(lane, ops[2])
        put({"and": a & b, "or": a | b, "xor": a ^ b}[root])
        return
    if root == "not":
        put(~_vsrc(lane, ops[1]))
        return
    if root == "cvt" and len(ins.suffixes) == 2:
        dst, src = ins.suffixes
        v = _vsrc(lane, ops[1])
        if dst == "f32" and src in ("u32", "i32"):
            n = v if src == "u32" else to_signed(v, 32)
            put(f32_bits(np.float32(n)))
            return
        if src == "f32" and dst in ("u32", "i32"):
            put(float_to_int_sat(float(f32(v)), dst == "i32"))
            return
    raise OracleUnsupported(f"vector instruction {ins.mnemonic}")


def _flat(lane: _Lane, ins: Instruction) -> None:
    root = ins.root
    ops = ins.operands
    if root.startswith("load_dword"):
        tail = root[len("load_dword"):]
        dwords = 1 if tail == "" else int(tail[1:])
        if not lane.active:
            return
        addr = lane.read(ops[1], 64)
        lane.write(ops[0], lane.mem.read(addr, 4 * dwords), 32 * dwords, vector=True)
        return
    if root.startswith("store_dword"):
        tail = root[len("store_dword"):]
        dwords = 1 if tail == "" else int(tail[1:])
        if not lane.active:
            return
        addr = lane.read(ops[0], 64)
        lane.mem.write(addr, 4 * dwords, lane.read(ops[1], 32 * dwords))
        return
    raise OracleUnsupported(f"memory instruction {ins.mnemonic}")


# ---------------------------------------------------------------------------
# decompiled-program evaluator


class _Return(Exception):
    pass


class _Goto(Exception):
    def __init__(self, label: str) -> None:
        self.label = label


def _ext(value: int, t: DataType, width: int) -> int:
    """Widen ``value`` of type ``t`` to ``width`` bits the way C converts it."""
    tw = t.width if t.base != "bool" else 32
    if t.is_signed and tw < width:
        return to_signed(value, tw) & ((1 << width) - 1)
    return value & ((1 << width) - 1)


def _num(value: int, t: DataType):
    if t.width == 64:
        return f64(value)
    return f32(value)


def _bits(value, t: DataType) -> int:
    return f64_bits(value) if t.width == 64 else f32_bits(value)


class Evaluator:
    def __init__(self, env: WorkItemEnv) -> None:
        self.env = env
        self.mem = Memory(env.memory_seed)
        self.vars: Dict[str, int] = {}

    # expressions ----------------------------------------------------------

    def eval(self, e: Expr) -> int:
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Builtin):
            v = self.env.builtin(e.id.name, e.id.dim)
            return v & ((1 << e.type.width) - 1)
        if isinstance(e, KernelArg):
            if e.name not in self.env.args:
                raise OracleUnsupported(f"argument {e.name} has no value")
            return self.env.args[e.name] & ((1 << e.type.width) - 1)
        if isinstance(e, Var):
            if e.name not in self.vars:
                raise OracleUnsupported(f"read of unassigned variable {e.name}")
            return self.vars[e.name]
        if isinstance(e, Deref):
            return self.mem.read(self.eval(e.addr), e.type.size)
        if isinstance(e, Ternary):
            return self.eval(e.a) if self.eval(e.cond) else self.eval(e.b)
        if isinstance(e, UnOp):
            v = self.eval(e.operand)
            t = e.type
            if e.op == "!":
                return int(v == 0)
            if e.op == "~":
                return ~v & ((1 << t.width) - 1)
            if t.is_float:
                return _bits(-_num(v, t), t)
            return (-v) & ((1 << t.width) - 1)
        if isinstance(e, Cast):
            return self._cast(self.eval(e.operand), e.operand.type, e.type)
        if isinstance(e, Bitcast):
            return self.eval(e.operand) & ((1 << e.type.width) - 1)
        if isinstance(e, Call):
            return self._call(e)
        if isinstance(e, BinOp):
            return self._binop(e)
        raise OracleUnsupported(f"cannot evaluate {type(e).__name__}")

    def _cast(self, v: int, src: DataType, dst: DataType) -> int:
        if dst.base == "bool":
            return int(v != 0)
        if src.is_float and dst.is_float:
            if src.width == dst.width:
                return v
            return _bits(_num(v, src).astype(np.float64 if dst.width == 64 else np.float32), dst)
        if src.is_float:
            return float_to_int_sat(float(_num(v, src)), dst.is_signed, dst.width)
        if dst.is_float:
            n = to_signed(v, src.width) if src.is_signed else v
            with np.errstate(all="ignore"):
                return _bits(np.float64(n) if dst.width == 64 else np.float32(n), dst)
        return _ext(v, src, max(dst.width, src.width if src.base != "bool" else 32)) & ((1 << dst.width) - 1)

    def _call(self, e: Call) -> int:
        args = [self.eval(a) for a in e.args]
        t = e.type
        w = t.width
        if e.name in ("fmax", "fmin"):
            a, b = (_num(x, t) for x in args)
            return _bits(np.fmax(a, b) if e.name == "fmax" else np.fmin(a, b), t)
        signed = t.is_signed
        vals = [to_signed(x, e.args[i].type.width) if signed else x for i, x in enumerate(args)]
        if e.name == "mul24":
            a, b = (x & 0xFFFFFF for x in args)
            if signed:
                a, b = to_signed(a, 24), to_signed(b, 24)
            return (a * b) & ((1 << w) - 1)
        if e.name == "mul_hi":
            return ((vals[0] * vals[1]) >> w) & ((1 << w) - 1)
        if e.name == "max":
            return max(vals) & ((1 << w) - 1)
        if e.name == "min":
            return min(vals) & ((1 << w) - 1)
        raise OracleUnsupported(f"call {e.name}")

    def _binop(self, e: BinOp) -> int:
        op = e.op
        if op == "&&":
            return int(bool(self.eval(e.lhs)) and bool(self.eval(e.rhs)))
        if op == "||":
            return int(bool(self.eval(e.lhs)) or bool(self.eval(e.rhs)))
        a, b = self.eval(e.lhs), self.eval(e.rhs)
        t, ot = e.type, e.otype
        if ot.is_float:
            x, y = _num(a, ot), _num(b, ot)
            with np.errstate(all="ignore"):
                if op in ("<", "<=", ">", ">=", "==", "!="):
                    return int({"<": x < y, "<=": x <= y, ">": x > y, ">=": x >= y, "==": x == y, "!=": x != y}[op])
                r = {"+": x + y, "-": x - y, "*": x * y, "/": x / y}[op]
            return _bits(r, t)
        if t.is_pointer or e.lhs.type.is_pointer or e.rhs.type.is_pointer:
            if op == "+":
                return (a + b) & M64
            if op == "-":
                return (a - b) & M64
        lt, rt = e.lhs.type, e.rhs.type
        if op in ("<<", ">>"):
            width = max(lt.width if lt.base != "bool" else 32, 32)
            if b >= width:
                raise OracleUnsupported("shift amount out of range")
            x = _ext(a, lt, width)
            if op == "<<":
                r = x << b
            elif ot.is_signed:
                r = to_signed(x, width) >> b
            else:
                r = x >> b
            return r & ((1 << t.width) - 1) if t.base != "bool" else int(r != 0)
        width = max(lt.width if lt.base != "bool" else 32, rt.width if rt.base != "bool" else 32, 32)
        x, y = _ext(a, lt, width), _ext(b, rt, width)
        if op in ("<", "<=", ">", ">=", "==", "!="):
            if ot.is_signed:
                x, y = to_signed(x, width), to_signed(y, width)
            return int({"<": x < y, "<=": x <= y, ">": x > y, ">=": x >= y, "==": x == y, "!=": x != y}[op])
        if op in ("/", "%"):
            if y == 0:
                raise OracleUnsupported("division by zero")
            if ot.is_signed:
                sx, sy = to_signed(x, width), to_signed(y, width)
                q = abs(sx) // abs(sy) * (1 if (sx < 0) == (sy < 0) else -1)
                r = q if op == "/" else sx - q * sy
            else:
                r = x // y if op == "/" else x % y
            return r & ((1 << t.width) - 1)
        r = {"+": x + y, "-": x - y, "*": x * y, "&": x & y, "|": x | y, "^": x ^ y}[op]
        if t.base == "bool":
            return int(r & 1)
        return r & ((1 << t.width) - 1)

    # statements -----------------------------------------------------------

    def assign(self, var: Var, value: Expr) -> None:
        v = self.eval(value)
        t = var.type
        if t.base == "bool":
            self.vars[var.name] = int(v != 0)
        elif value.type.is_float != t.is_float and value.type.base not in ("unknown", "binary", "bool"):
            self.vars[var.name] = self._cast(v, value.type, t)
        else:
            self.vars[var.name] = _ext(v, value.type, max(t.width, 32)) & ((1 << t.width) - 1)

    def run_block(self, items: Sequence, top: bool = False) -> None:
        from .codegen import CBlock, CDeclare, CGoto, CIf, CLabel

        labels = {item.name: k for k, item in enumerate(items) if isinstance(item, CLabel)}
        k = 0
        hops = 0
        while k < len(items):
            item = items[k]
            k += 1
            try:
                self.run(item)
            except _Goto as g:
                if not top or g.label not in labels:
                    raise
                hops += 1
                if hops > 10_000:
                    raise OracleUnsupported("goto loop")
                k = labels[g.label]

    def run(self, item) -> None:
        from .codegen import CBlock, CDeclare, CGoto, CIf, CLabel

        if isinstance(item, Assign):
            self.assign(item.target, item.value)
        elif isinstance(item, Decl):
            if item.value is not None:
                self.assign(item.var, item.value)
        elif isinstance(item, Store):
            addr = self.eval(item.target.addr)
            value = self.eval(item.value)
            t = item.target.type
            if item.value.type.is_float != t.is_float and item.value.type.base not in ("unknown", "binary", "bool"):
                value = self._cast(value, item.value.type, t)
            self.mem.write(addr, t.size, value)
        elif isinstance(item, CIf):
            if self.eval(item.cond):
                self.run_block(item.then.items)
            elif item.else_ is not None:
                self.run_block(item.else_.items)
        elif isinstance(item, Return):
            raise _Return()
        elif isinstance(item, CGoto):
            raise _Goto(item.name)
        elif isinstance(item, RawAsm):
            raise OracleUnsupported("inline assembly in decompiled code")
        elif isinstance(item, (CLabel, CDeclare, Comment)):
            return
        else:
            raise OracleUnsupported(f"statement {type(item).__name__}")


def evaluate_decompiled(kernel, env: WorkItemEnv) -> List[WriteRecord]:
    """Run a decompiled kernel (its C tree) for one work-item; returns memory writes."""
    ast = getattr(kernel, "ast", kernel)
    ev = Evaluator(env)
    try:
        ev.run_block(ast.body.items, top=True)
    except _Return:
        pass
    return ev.mem.trace
