"""Symbolic expression trees and statements produced by symbolic execution.

Expressions are immutable and hashable so structural equality doubles as
value identity for register bindings. Integer constants are stored as raw
bit patterns masked to their type width; float constants store IEEE bits.
Pointer arithmetic is byte-based (``ptr + 4`` means four bytes further);
the code generator turns it back into element indexing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple, Union

from .dtypes import BOOL, FLOAT, INT, LONG, UINT, ULONG, DataType

BUILTIN_NAMES = (
    "global_offset",
    "local_id",
    "group_id",
    "global_size",
    "local_size",
    "num_groups",
    "work_dim",
    "global_id",
)


@dataclass(frozen=True)
class BuiltinId:
    name: str
    dim: Optional[int] = None

    def __post_init__(self) -> None:
        if self.name not in BUILTIN_NAMES:
            raise ValueError(f"unknown work-item builtin {self.name!r}")
        if self.name == "work_dim":
            if self.dim is not None:
                raise ValueError("work_dim takes no dimension")
        elif self.dim not in (0, 1, 2):
            raise ValueError(f"{self.name} needs a dimension 0..2")

    @property
    def call(self) -> str:
        if self.dim is None:
            return f"get_{self.name}()"
        return f"get_{self.name}({self.dim})"


def builtin_type(bid: BuiltinId) -> DataType:
    if bid.name in ("global_offset", "global_id"):
        return ULONG
    return UINT


def mask(value: int, t: DataType) -> int:
    w = t.width
    return value & ((1 << w) - 1)


class Expr:
    type: DataType

    def children(self) -> Tuple["Expr", ...]:
        return ()


@dataclass(frozen=True)
class Const(Expr):
    value: int
    type: DataType = UINT

    @staticmethod
    def of(value: int, t: DataType = UINT) -> "Const":
        return Const(mask(value, t), t)


TRUE = Const(1, BOOL)
FALSE = Const(0, BOOL)


@dataclass(frozen=True)
class Builtin(Expr):
    id: BuiltinId
    type: DataType = UINT


@dataclass(frozen=True)
class KernelArg(Expr):
    name: str
    type: DataType = INT


@dataclass(frozen=True)
class Var(Expr):
    name: str
    type: DataType = UINT


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    lhs: Expr
    rhs: Expr
    type: DataType = UINT
    # how operands are interpreted for comparisons, shifts and division
    operand_type: Optional[DataType] = None

    def children(self) -> Tuple[Expr, ...]:
        return (self.lhs, self.rhs)

    @property
    def otype(self) -> DataType:
        return self.operand_type or self.type


@dataclass(frozen=True)
class UnOp(Expr):
    op: str  # '-', '~', '!'
    operand: Expr
    type: DataType = UINT

    def children(self) -> Tuple[Expr, ...]:
        return (self.operand,)


@dataclass(frozen=True)
class Cast(Expr):
    """Numeric conversion: truncation, sign/zero extension, int<->float."""

    type: DataType
    operand: Expr

    def children(self) -> Tuple[Expr, ...]:
        return (self.operand,)


@dataclass(frozen=True)
class Bitcast(Expr):
    """Reinterpretation of the same bits (``as_float``/``as_uint``)."""

    type: DataType
    operand: Expr

    def children(self) -> Tuple[Expr, ...]:
        return (self.operand,)


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: Tuple[Expr, ...]
    type: DataType = UINT

    def children(self) -> Tuple[Expr, ...]:
        return self.args


@dataclass(frozen=True)
class Deref(Expr):
    addr: Expr
    type: DataType
    space: str = "global"

    def __post_init__(self) -> None:
        if self.space not in ("global", "local", "private", "constant"):
            raise ValueError(f"bad address space {self.space!r}")

    def children(self) -> Tuple[Expr, ...]:
        return (self.addr,)


@dataclass(frozen=True)
class Ternary(Expr):
    cond: Expr
    a: Expr  # value when cond holds
    b: Expr
    type: DataType = UINT

    def children(self) -> Tuple[Expr, ...]:
        return (self.cond, self.a, self.b)


COMPARISONS = ("<", "<=", ">", ">=", "==", "!=")
NEGATED = {"<": ">=", ">=": "<", ">": "<=", "<=": ">", "==": "!=", "!=": "=="}


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    for c in e.children():
        yield from walk(c)


def contains_deref(e: Expr) -> bool:
    return any(isinstance(n, Deref) for n in walk(e))


def variables(e: Expr) -> Iterator[str]:
    for n in walk(e):
        if isinstance(n, Var):
            yield n.name


def rebuild(e: Expr, kids: Tuple[Expr, ...]) -> Expr:
    """Copy ``e`` with new children (same arity)."""
    if isinstance(e, BinOp):
        return BinOp(e.op, kids[0], kids[1], e.type, e.operand_type)
    if isinstance(e, UnOp):
        return UnOp(e.op, kids[0], e.type)
    if isinstance(e, Cast):
        return Cast(e.type, kids[0])
    if isinstance(e, Bitcast):
        return Bitcast(e.type, kids[0])
    if isinstance(e, Call):
        return Call(e.name, tuple(kids), e.type)
    if isinstance(e, Deref):
        return Deref(kids[0], e.type, e.space)
    if isinstance(e, Ternary):
        return Ternary(kids[0], kids[1], kids[2], e.type)
    return e


# ---------------------------------------------------------------------------
# smart constructors with light local simplification


def logical_not(e: Expr) -> Expr:
    if e == TRUE:
        return FALSE
    if e == FALSE:
        return TRUE
    if isinstance(e, UnOp) and e.op == "!":
        return e.operand
    if isinstance(e, BinOp) and e.op in NEGATED and not e.otype.is_float:
        return BinOp(NEGATED[e.op], e.lhs, e.rhs, BOOL, e.operand_type)
    return UnOp("!", e, BOOL)


def logical_and(a: Expr, b: Expr) -> Expr:
    if a == TRUE:
        return b
    if b == TRUE:
        return a
    if FALSE in (a, b):
        return FALSE
    if a == b:
        return a
    return BinOp("&&", a, b, BOOL)


def logical_or(a: Expr, b: Expr) -> Expr:
    if TRUE in (a, b):
        return TRUE
    if a == FALSE:
        return b
    if b == FALSE:
        return a
    if a == b:
        return a
    return BinOp("||", a, b, BOOL)


def to_bool(e: Expr) -> Expr:
    if e.type == BOOL:
        return e
    if isinstance(e, Const):
        return TRUE if e.value & 1 else FALSE
    return BinOp("!=", BinOp("&", e, Const(1, e.type), e.type), Const(0, e.type), BOOL)


def zext64(e: Expr) -> Expr:
    if e.type.width == 64:
        return e
    if isinstance(e, Const):
        return Const(e.value, ULONG)
    return Cast(ULONG if not e.type.is_signed else ULONG, e)


def sext64(e: Expr) -> Expr:
    if e.type.width == 64:
        return e
    if isinstance(e, Const):
        v = e.value - (1 << 32) if e.value & 0x80000000 else e.value
        return Const.of(v, LONG)
    inner = e if e.type.is_signed else Cast(INT, e)
    return Cast(LONG, inner)


def low32(e: Expr) -> Expr:
    if e.type.width <= 32:
        return e
    if isinstance(e, Const):
        return Const(e.value & 0xFFFFFFFF, UINT)
    if isinstance(e, Cast) and e.operand.type.width <= 32 and not e.type.is_float:
        return e.operand
    return Cast(UINT, e)


def high32(e: Expr) -> Expr:
    if isinstance(e, Const):
        return Const((e.value >> 32) & 0xFFFFFFFF, UINT)
    if isinstance(e, Cast) and e.operand.type.width <= 32 and not e.operand.type.is_float:
        if not e.type.is_signed:
            return Const(0, UINT)
    return Cast(UINT, BinOp(">>", e if not e.type.is_pointer else Cast(ULONG, e), Const(32, UINT), ULONG))


def concat(hi: Expr, lo: Expr) -> Expr:
    """64-bit value from two 32-bit halves."""
    if isinstance(hi, Const) and isinstance(lo, Const):
        return Const((hi.value << 32) | lo.value, ULONG)
    if hi == Const(0, UINT) or (isinstance(hi, Const) and hi.value == 0):
        return zext64(lo)
    if hi == high32(lo) and lo.type.width == 64:
        return lo
    return BinOp("|", BinOp("<<", zext64(hi), Const(32, UINT), ULONG), zext64(lo), ULONG)


def as_type(e: Expr, t: DataType) -> Expr:
    """View ``e`` as ``t``: a bitcast between float and integer, else unchanged."""
    if e.type.is_float == t.is_float or t.base in ("binary", "unknown") or e.type.base in ("binary", "unknown", "bool"):
        if isinstance(e, Const) and e.type != t and e.type.base in ("binary", "unknown", "uint", "int") and t.base in ("int", "uint", "float") and not t.is_pointer:
            return Const(mask(e.value, t), t)
        return e
    if isinstance(e, Const):
        return Const(mask(e.value, t), t)
    if isinstance(e, Bitcast) and e.operand.type.base == t.base and e.operand.type.width == t.width:
        return e.operand
    return Bitcast(DataType(t.base, t.width), e)


# ---------------------------------------------------------------------------
# statements


@dataclass(frozen=True)
class Assign:
    target: Var
    value: Expr


@dataclass(frozen=True)
class Store:
    target: Deref
    value: Expr


@dataclass(frozen=True)
class Decl:
    var: Var
    value: Optional[Expr] = None


@dataclass(frozen=True)
class RawAsm:
    text: str


@dataclass(frozen=True)
class Return:
    pass


@dataclass(frozen=True)
class Comment:
    text: str


Statement = Union[Assign, Store, Decl, RawAsm, Return, Comment]


def statement_exprs(s: Statement) -> Tuple[Expr, ...]:
    if isinstance(s, Assign):
        return (s.value,)
    if isinstance(s, Store):
        return (s.target, s.value)
    if isinstance(s, Decl):
        return (s.value,) if s.value is not None else ()
    return ()
