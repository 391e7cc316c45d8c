"""AMDGPU-Pro ABI: kernel entry register contents and the kernarg offset table.

At entry ``s[4:5]`` points at the kernel settings / argument area, ``v0..v2``
hold the local ids and, with ``.useargs``, ``s6..s8`` hold the group ids.
Loads off ``s[4:5]`` are classified by (byte offset, width in dwords): the
64-bit global offsets live in the first implicit argument slots, while the
32-bit global sizes and ``work_dim`` are read as single dwords.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Mapping, Optional, Tuple

from .asm import ArgDecl, KernelConfig
from .errors import AbiConstructionError
from .expr import BuiltinId

if TYPE_CHECKING:
    from .state import RegisterFile

KERNARG_BASE = 4  # s[4:5]
LOCAL_ID_REGS = (0, 1, 2)  # v0, v1, v2
GROUP_ID_REGS = (6, 7, 8)  # s6, s7, s8

# (byte offset, dwords) -> builtin
DEFAULT_BUILTIN_OFFSETS: Dict[Tuple[int, int], BuiltinId] = {
    (0x0, 2): BuiltinId("global_offset", 0),
    (0x8, 2): BuiltinId("global_offset", 1),
    (0x10, 2): BuiltinId("global_offset", 2),
    (0xC, 1): BuiltinId("global_size", 0),
    (0x10, 1): BuiltinId("global_size", 1),
    (0x14, 1): BuiltinId("global_size", 2),
    (0x20010, 1): BuiltinId("work_dim"),
}

# bytes taken by the six compiler-inserted arguments when .config lists none
DEFAULT_IMPLICIT_BLOCK = 6 * 8

_SIZES = {
    "char": 1, "uchar": 1, "short": 2, "ushort": 2, "half": 2,
    "int": 4, "uint": 4, "float": 4,
    "long": 8, "ulong": 8, "double": 8, "size_t": 8,
}


def arg_size(arg: ArgDecl) -> int:
    if arg.is_pointer:
        return 8
    return _SIZES.get(arg.ocl_type.replace("unsigned", "u").replace(" ", ""), 4)


def _align(offset: int, alignment: int) -> int:
    return (offset + alignment - 1) // alignment * alignment


@dataclass(frozen=True)
class AbiMap:
    kernarg_base: int = KERNARG_BASE
    local_id_regs: Tuple[int, ...] = (0,)
    group_id_regs: Tuple[int, ...] = ()
    builtin_offsets: Mapping[Tuple[int, int], BuiltinId] = field(default_factory=dict)
    arg_offsets: Mapping[int, ArgDecl] = field(default_factory=dict)

    def lookup(self, offset: int, dwords: int) -> Optional[BuiltinId]:
        return self.builtin_offsets.get((offset, dwords))

    def arg_at(self, offset: int) -> Optional[ArgDecl]:
        return self.arg_offsets.get(offset)

    def offset_of(self, name: str) -> Optional[int]:
        for off, arg in self.arg_offsets.items():
            if arg.name == name:
                return off
        return None


def _arg_layout(config: KernelConfig) -> Dict[int, ArgDecl]:
    implicit = [a for a in config.args if a.implicit]
    if implicit:
        end = 0
        for a in implicit:
            size = arg_size(a)
            end = _align(end, size) + size
    else:
        end = DEFAULT_IMPLICIT_BLOCK
    layout: Dict[int, ArgDecl] = {}
    offset = end
    for a in config.explicit_args:
        size = arg_size(a)
        offset = _align(offset, size)
        layout[offset] = a
        offset += size
    return layout


def build_abi_map(
    config: KernelConfig,
    overrides: Optional[Mapping[Tuple[int, int], BuiltinId]] = None,
) -> AbiMap:
    builtins = dict(DEFAULT_BUILTIN_OFFSETS)
    if overrides:
        builtins.update(overrides)
    args = _arg_layout(config)
    builtin_bytes = set()
    for (off, dwords) in builtins:
        builtin_bytes.update(range(off, off + 4 * dwords))
    for off, a in args.items():
        clash = builtin_bytes.intersection(range(off, off + arg_size(a)))
        if clash:
            raise AbiConstructionError(
                f"argument {a.name} at offset {off:#x} overlaps builtin offset {min(clash):#x}"
            )
    ndims = config.ndims
    return AbiMap(
        kernarg_base=KERNARG_BASE,
        local_id_regs=LOCAL_ID_REGS[:ndims],
        group_id_regs=GROUP_ID_REGS[:ndims] if config.uses_args else (),
        builtin_offsets=builtins,
        arg_offsets=args,
    )


def local_size(config: KernelConfig, dim: int) -> int:
    if dim not in (0, 1, 2):
        raise ValueError(f"dimension must be 0, 1 or 2, got {dim}")
    return config.cws[dim]


def initial_register_state(config: KernelConfig) -> "RegisterFile":
    from .state import RegisterFile

    return RegisterFile.at_entry(config)


_OVERRIDE_RE = re.compile(
    r"^\s*(0x[0-9a-fA-F]+|\d+)\s*(?::\s*(\d+))?\s*=\s*([a-z_]+)\s*(?:\(\s*(\d)?\s*\))?\s*$"
)


def parse_abi_override(text: str) -> Dict[Tuple[int, int], BuiltinId]:
    """Parse ``offset[:dwords] = builtin[(dim)]`` lines; ``#`` starts a comment.

    Example::

        0x0:2 = global_offset(0)
        0xc = global_size(0)
    """
    table: Dict[Tuple[int, int], BuiltinId] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#")[0].strip()
        if not line:
            continue
        m = _OVERRIDE_RE.match(line)
        if not m:
            raise AbiConstructionError(f"bad ABI override line {raw!r}", lineno)
        off = int(m.group(1), 0)
        dwords = int(m.group(2) or 1)
        name = m.group(3)
        if name.startswith("get_"):
            name = name[4:]
        dim = int(m.group(4)) if m.group(4) is not None else None
        try:
            table[(off, dwords)] = BuiltinId(name, dim)
        except ValueError as exc:
            raise AbiConstructionError(str(exc), lineno) from exc
    return table
