"""Data types recovered from suffixes and from ``.arg`` declarations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .asm import ArgDecl

BASES = ("int", "uint", "float", "binary", "void", "unknown", "bool")


@dataclass(frozen=True)
class DataType:
    base: str
    bits: int = 32
    pointer: int = 0
    address_space: Optional[str] = None

    @property
    def is_pointer(self) -> bool:
        return self.pointer > 0

    @property
    def is_float(self) -> bool:
        return self.base == "float" and not self.is_pointer

    @property
    def is_signed(self) -> bool:
        return self.base == "int" and not self.is_pointer

    @property
    def width(self) -> int:
        """Storage width in bits (pointers are 64-bit)."""
        if self.is_pointer:
            return 64
        if self.base == "bool":
            return 1
        return 32 if self.bits == 24 else self.bits

    @property
    def size(self) -> int:
        return max(self.width // 8, 1)

    def element(self) -> "DataType":
        if not self.is_pointer:
            raise ValueError(f"{self} is not a pointer")
        if self.pointer == 1:
            return DataType(self.base, self.bits)
        return DataType(self.base, self.bits, self.pointer - 1, self.address_space)

    def pointer_to(self, space: str = "global") -> "DataType":
        return DataType(self.base, self.bits, self.pointer + 1, space)

    def with_signedness(self, signed: bool) -> "DataType":
        if self.base not in ("int", "uint", "binary", "unknown") or self.is_pointer:
            return self
        return DataType("int" if signed else "uint", self.bits)

    def __str__(self) -> str:
        return c_type_name(self)


UNKNOWN = DataType("unknown", 32)
BOOL = DataType("bool", 1)
INT = DataType("int", 32)
UINT = DataType("uint", 32)
LONG = DataType("int", 64)
ULONG = DataType("uint", 64)
FLOAT = DataType("float", 32)
DOUBLE = DataType("float", 64)
B32 = DataType("binary", 32)
B64 = DataType("binary", 64)
VOID = DataType("void", 0)

_LETTER_BASE = {"i": "int", "u": "uint", "f": "float", "b": "binary"}


def type_from_suffix(suffix: str) -> DataType:
    """``u32`` -> unsigned 32-bit, ``f64`` -> double, ``b32`` -> binary 32."""
    if len(suffix) < 2 or suffix[0] not in _LETTER_BASE:
        return UNKNOWN
    try:
        bits = int(suffix[1:])
    except ValueError:
        return UNKNOWN
    if bits not in (8, 16, 24, 32, 64):
        return UNKNOWN
    if suffix[0] == "f" and bits not in (16, 32, 64):
        return UNKNOWN
    return DataType(_LETTER_BASE[suffix[0]], bits)


_C_SCALARS: Dict[str, DataType] = {
    "char": DataType("int", 8),
    "uchar": DataType("uint", 8),
    "short": DataType("int", 16),
    "ushort": DataType("uint", 16),
    "int": INT,
    "uint": UINT,
    "long": LONG,
    "ulong": ULONG,
    "size_t": ULONG,
    "float": FLOAT,
    "double": DOUBLE,
    "void": VOID,
    "bool": BOOL,
    "half": DataType("float", 16),
}


def parse_c_type(text: str, space: str = "global") -> Optional[DataType]:
    """Parse an OpenCL scalar or pointer type name; ``None`` when unknown."""
    text = text.replace(" ", "")
    depth = len(text) - len(text.rstrip("*"))
    base = text.rstrip("*")
    if base.startswith("unsigned"):
        base = "u" + base[len("unsigned"):]
    scalar = _C_SCALARS.get(base)
    if scalar is None:
        return None
    if depth:
        return DataType(scalar.base, scalar.bits, depth, space)
    return scalar


@dataclass
class TypeEnv:
    """Per-kernel argument types plus diagnostics collected while unifying."""

    args: Dict[str, DataType] = field(default_factory=dict)
    verbatim: Dict[str, str] = field(default_factory=dict)
    diagnostics: List[str] = field(default_factory=list)


def types_from_config(args: Sequence[ArgDecl]) -> TypeEnv:
    env = TypeEnv()
    for arg in args:
        space = arg.address_space if arg.address_space != "by-value" else "private"
        parsed = parse_c_type(arg.ocl_type, space)
        if parsed is None:
            env.verbatim[arg.name] = arg.ocl_type
            env.diagnostics.append(f"unknown type {arg.ocl_type!r} for argument {arg.name}")
            parsed = UNKNOWN
        env.args[arg.name] = parsed
    return env


def unify(a: DataType, b: DataType, diagnostics: Optional[List[str]] = None) -> DataType:
    """Merge two observations of one value's type.

    Unknown absorbs; binary yields the typed partner of equal width; a sign
    conflict keeps the first observation and a width conflict keeps the wider,
    both with a diagnostic.
    """
    if a == b:
        return a
    if a.base == "unknown":
        return b
    if b.base == "unknown":
        return a
    if a.is_pointer or b.is_pointer:
        if a.is_pointer and b.is_pointer:
            _note(diagnostics, f"pointer type conflict {a} vs {b}")
            return a
        return a if a.is_pointer else b
    if a.width != b.width:
        _note(diagnostics, f"width conflict {a} vs {b}")
        return a if a.width > b.width else b
    if a.base == "binary":
        return b
    if b.base == "binary":
        return a
    _note(diagnostics, f"sign conflict {a} vs {b}; keeping {a}")
    return a


def _note(diagnostics: Optional[List[str]], message: str) -> None:
    if diagnostics is not None:
        diagnostics.append(message)


def concrete(t: DataType) -> DataType:
    """The type used at a declaration site: no binary, no 24-bit, no unknown."""
    if t.is_pointer:
        return t
    if t.base in ("binary", "unknown"):
        return DataType("uint", 64 if t.width == 64 else 32)
    if t.bits == 24:
        return DataType(t.base, 32)
    return t


_SPACE_QUALIFIER = {"global": "__global", "constant": "__constant", "local": "__local", "private": ""}


def c_type_name(t: DataType) -> str:
    t = concrete(t)
    if t.base == "bool":
        return "bool"
    bits = 32 if t.bits == 24 else t.bits
    if t.base == "void":
        scalar = "void"
    elif t.base == "float":
        scalar = {16: "half", 32: "float", 64: "double"}[bits]
    else:
        names = {8: "char", 16: "short", 32: "int", 64: "long", 1: "int"}
        scalar = names[bits]
        if t.base != "int":
            scalar = "u" + scalar
    if not t.is_pointer:
        return scalar
    qual = _SPACE_QUALIFIER.get(t.address_space or "global", "")
    stars = "*" * t.pointer
    return f"{qual} {scalar} {stars}".strip() if qual else f"{scalar} {stars}"


def declare(t: DataType, name: str) -> str:
    """Render ``type name`` the way C spells it (``__global int *data``)."""
    text = c_type_name(t)
    if text.endswith("*"):
        return f"{text}{name}"
    return f"{text} {name}"


def arg_signature(arg: ArgDecl, env: TypeEnv) -> str:
    if arg.name in env.verbatim:
        return f"{arg.ocl_type} {arg.name}"
    return declare(env.args[arg.name], arg.name)


def suffix_types(suffixes: Tuple[str, ...]) -> List[DataType]:
    return [type_from_suffix(s) for s in suffixes]
