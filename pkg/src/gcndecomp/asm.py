"""Front end: split CLRX/CodeXL listings into kernels and parse them.

A listing holds zero or more kernels. Each kernel starts with a ``.kernel``
line, carries a ``.config`` block of metadata and a ``.text`` block of
instructions::

    .kernel copy
    .config
        .dims x
        .cws 64, 1, 1
        .arg data, "int*", int*, global,
    .text
        s_load_dwordx2 s[0:1], s[4:5], 0x30
        s_endpgm
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .errors import ConfigParseError, InstructionParseError, StructuralFormatError

PREFIXES = ("s", "v", "ds", "flat")
SUFFIX_RE = re.compile(r"^[iufb](8|16|24|32|64)$")
ENCODING_TAGS = ("e32", "e64", "sdwa", "dpp")

MAX_SGPR = 103
MAX_VGPR = 255

SPECIAL_REGISTERS = frozenset(
    {
        "vcc", "vcc_lo", "vcc_hi", "exec", "exec_lo", "exec_hi", "scc", "m0",
        "flat_scratch", "flat_scratch_lo", "flat_scratch_hi", "tba", "tma",
        "xnack_mask", "vccz", "execz", "lds_direct",
    }
)


@dataclass(frozen=True)
class KernelSection:
    name: str
    config_lines: Tuple[str, ...]
    text_lines: Tuple[str, ...]
    # 1-based file line of the first text line; used for diagnostics
    text_start: int = 0
    line_numbers: Tuple[int, ...] = ()


@dataclass(frozen=True)
class ArgDecl:
    name: str
    source_type: str
    ocl_type: str
    address_space: str  # global | constant | local | private | by-value
    implicit: bool
    raw: str = ""

    @property
    def is_pointer(self) -> bool:
        return self.ocl_type.endswith("*")


@dataclass
class KernelConfig:
    dims: str = "x"
    cws: Tuple[int, int, int] = (1, 1, 1)
    sgprsnum: Optional[int] = None
    vgprsnum: Optional[int] = None
    uses_args: bool = False
    args: List[ArgDecl] = field(default_factory=list)
    raw_other: List[str] = field(default_factory=list)

    @property
    def ndims(self) -> int:
        return len(self.dims)

    @property
    def explicit_args(self) -> List[ArgDecl]:
        return [a for a in self.args if not a.implicit]

    @property
    def group_size(self) -> int:
        x, y, z = self.cws
        return x * y * z


@dataclass(frozen=True)
class Operand:
    """One instruction operand.

    ``kind`` is one of sgpr, vgpr, sgpr_range, vgpr_range, literal, special,
    label_ref. Ranges keep ``index`` as the first and ``end`` as the last
    register (inclusive).
    """

    kind: str
    index: int = 0
    end: int = 0
    value: int = 0
    name: str = ""
    is_float: bool = False
    text: str = ""

    @property
    def width(self) -> int:
        if self.kind in ("sgpr_range", "vgpr_range"):
            return self.end - self.index + 1
        if self.kind == "special" and self.name in ("vcc", "exec", "flat_scratch"):
            return 2
        return 1

    @property
    def is_register(self) -> bool:
        return self.kind in ("sgpr", "vgpr", "sgpr_range", "vgpr_range", "special")

    def registers(self) -> List[str]:
        """Names of the 32-bit registers covered, e.g. ``['s2', 's3']``."""
        if self.kind in ("sgpr", "sgpr_range"):
            return [f"s{i}" for i in range(self.index, self.end + 1)]
        if self.kind in ("vgpr", "vgpr_range"):
            return [f"v{i}" for i in range(self.index, self.end + 1)]
        if self.kind == "special":
            return [self.name]
        return []

    def __str__(self) -> str:
        return self.text or self.name or str(self.value)


@dataclass(frozen=True)
class Instruction:
    mnemonic: str
    prefix: str
    root: str
    suffixes: Tuple[str, ...]
    operands: Tuple[Operand, ...]
    source_text: str
    label: Optional[str] = None
    modifiers: Tuple[str, ...] = ()
    encoding: Optional[str] = None
    line_no: int = 0
    synthetic: bool = False

    @property
    def opcode(self) -> str:
        """Prefix and root joined, without type suffixes (``v_mul_hi``)."""
        if self.prefix == "other":
            return self.root
        return f"{self.prefix}_{self.root}"

    def is_branch(self) -> bool:
        return self.prefix == "s" and (self.root == "branch" or self.root.startswith("cbranch_"))

    def is_conditional_branch(self) -> bool:
        return self.prefix == "s" and self.root.startswith("cbranch_")

    def is_end(self) -> bool:
        return self.mnemonic == "s_endpgm"

    def branch_target(self) -> Optional[str]:
        for op in self.operands:
            if op.kind == "label_ref":
                return op.name
        return None


@dataclass(frozen=True)
class LabelDef:
    name: str
    line_no: int = 0


@dataclass
class Program:
    """Parsed ``.text`` block: instructions plus label name -> instruction index."""

    instructions: List[Instruction]
    labels: Dict[str, int]


# ---------------------------------------------------------------------------
# kernel splitting


def _strip_block_comments(text: str) -> str:
    return re.sub(r"/\*.*?\*/", " ", text, flags=re.S)


def _directive(line: str) -> str:
    stripped = line.strip()
    return stripped.split()[0] if stripped else ""


def split_kernels(listing_text: str) -> List[KernelSection]:
    """Split a listing into one :class:`KernelSection` per ``.kernel`` directive."""
    sections: List[KernelSection] = []
    name: Optional[str] = None
    status = "start"
    config: List[str] = []
    text: List[str] = []
    numbers: List[int] = []
    text_start = 0

    def flush() -> None:
        if name is not None:
            sections.append(
                KernelSection(name, tuple(config), tuple(text), text_start, tuple(numbers))
            )

    for lineno, raw in enumerate(listing_text.splitlines(), start=1):
        line = raw.rstrip()
        head = _directive(_strip_block_comments(line))
        if head == ".kernel":
            flush()
            parts = line.split()
            if len(parts) < 2:
                raise StructuralFormatError(".kernel directive without a name", lineno)
            name = parts[1]
            status = "kernel"
            config, text, numbers = [], [], []
            text_start = 0
            continue
        if head == ".text":
            if name is None:
                raise StructuralFormatError(".text without a preceding .kernel", lineno)
            status = "instruction"
            text_start = lineno + 1
            continue
        if head == ".config" and name is not None:
            status = "config"
            continue
        if not line.strip():
            continue
        if status == "config":
            config.append(line.strip())
        elif status == "instruction":
            text.append(line.strip())
            numbers.append(lineno)
    flush()
    return sections


# ---------------------------------------------------------------------------
# .config


def _int(token: str) -> int:
    return int(token, 0)


def _split_fields(body: str) -> List[str]:
    fields: List[str] = []
    current = []
    quoted = False
    for ch in body:
        if ch == '"':
            quoted = not quoted
            current.append(ch)
        elif ch == "," and not quoted:
            fields.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    fields.append("".join(current).strip())
    return fields


ADDRESS_SPACES = ("global", "constant", "local", "private")


def parse_arg(line: str, body: str) -> ArgDecl:
    fields = _split_fields(body)
    if len(fields) < 3 or not all(fields[:3]):
        raise ConfigParseError(f"malformed .arg (need name, source type, type): {line!r}")
    name, source_type, ocl_type = fields[0], fields[1].strip('"'), fields[2].replace(" ", "")
    space = "by-value"
    if ocl_type.endswith("*"):
        space = "global"
        if len(fields) > 3 and fields[3] in ADDRESS_SPACES:
            space = fields[3]
    return ArgDecl(name, source_type, ocl_type, space, name.startswith("_"), line)


def parse_config(config_lines: Sequence[str]) -> KernelConfig:
    cfg = KernelConfig()
    dims_seen = False
    for line in config_lines:
        stripped = _strip_block_comments(line).split("#")[0].strip()
        if not stripped:
            continue
        key, _, body = stripped.partition(" ")
        key = key.lstrip(".").lower()
        body = body.strip()
        try:
            if key == "dims":
                dims = "".join(c for c in "xyz" if c in body.lower())
                if not dims:
                    raise ConfigParseError(f"bad dims directive: {line!r}")
                cfg.dims = dims
                dims_seen = True
            elif key == "cws":
                values = [_int(v) for v in body.split(",") if v.strip()]
                if len(values) > 3:
                    raise ConfigParseError(f"too many .cws components: {line!r}")
                values += [1] * (3 - len(values))
                cfg.cws = tuple(max(v, 1) for v in values)  # type: ignore[assignment]
            elif key in ("sgprsnum", "sgprnum"):
                cfg.sgprsnum = _int(body)
            elif key in ("vgprsnum", "vgprnum"):
                cfg.vgprsnum = _int(body)
            elif key == "useargs":
                cfg.uses_args = True
            elif key == "arg":
                cfg.args.append(parse_arg(line, body))
            else:
                cfg.raw_other.append(line)
        except ValueError as exc:
            raise ConfigParseError(f"cannot parse {line!r}: {exc}") from exc
    if not dims_seen:
        cfg.dims = "x"
    return cfg


# ---------------------------------------------------------------------------
# instructions


def decompose_mnemonic(name: str) -> Tuple[str, str, Tuple[str, ...]]:
    """Split a mnemonic into (prefix, root, suffixes).

    >>> decompose_mnemonic("v_mul_hi_u32_u24")
    ('v', 'mul_hi', ('u32', 'u24'))
    """
    tokens = name.split("_")
    if len(tokens) < 2 or tokens[0] not in PREFIXES:
        return "other", name, ()
    body = tokens[1:]
    suffixes: List[str] = []
    # keep at least one token in the root
    while len(body) - len(suffixes) > 1 and len(suffixes) < 2:
        candidate = body[len(body) - 1 - len(suffixes)]
        if not SUFFIX_RE.match(candidate):
            break
        suffixes.insert(0, candidate)
    root = "_".join(body[: len(body) - len(suffixes)])
    return tokens[0], root, tuple(suffixes)


def join_mnemonic(prefix: str, root: str, suffixes: Sequence[str]) -> str:
    if prefix == "other":
        return root
    return "_".join([prefix, root, *suffixes])


_REG_RE = re.compile(r"^([sv])(\d+)$")
_RANGE_RE = re.compile(r"^([sv])\[(\d+)\s*:\s*(\d+)\]$")
_INT_RE = re.compile(r"^-?(0x[0-9a-f]+|\d+)$")
_FLOAT_RE = re.compile(r"^-?(\d+\.\d*|\.\d+|\d+\.?\d*e[-+]?\d+)$")
_LABEL_RE = re.compile(r"^[.a-z_$][\w.$]*$")
_MODIFIER_RE = re.compile(r"^(\w+\(.*\)|&|[a-z_]+:\S+|glc|slc|tfe|offen|idxen|addr64|lds|clamp|neg\(.*\)|abs\(.*\))$")


def _float_bits(value: float) -> int:
    return struct.unpack("<I", struct.pack("<f", value))[0]


def _check_bound(kind: str, index: int, text: str, source: str) -> None:
    limit = MAX_SGPR if kind == "s" else MAX_VGPR
    if index > limit:
        raise InstructionParseError(f"register {text} out of range (max {kind}{limit})", source)


def parse_operand(token: str, source: str = "") -> Operand:
    tok = token.strip().lower()
    if tok.startswith("lit(") and tok.endswith(")"):
        tok = tok[4:-1].strip()
    m = _REG_RE.match(tok)
    if m:
        idx = int(m.group(2))
        _check_bound(m.group(1), idx, tok, source)
        return Operand("sgpr" if m.group(1) == "s" else "vgpr", idx, idx, text=tok)
    m = _RANGE_RE.match(tok)
    if m:
        lo, hi = int(m.group(2)), int(m.group(3))
        if hi < lo:
            raise InstructionParseError(f"empty register range {tok}", source)
        _check_bound(m.group(1), hi, tok, source)
        return Operand("sgpr_range" if m.group(1) == "s" else "vgpr_range", lo, hi, text=tok)
    if tok in SPECIAL_REGISTERS:
        return Operand("special", name=tok, text=tok)
    if _INT_RE.match(tok):
        return Operand("literal", value=int(tok, 0), text=tok)
    if _FLOAT_RE.match(tok):
        return Operand("literal", value=_float_bits(float(tok)), is_float=True, text=tok)
    if _LABEL_RE.match(tok):
        return Operand("label_ref", name=token.strip(), text=token.strip())
    raise InstructionParseError(f"unparseable operand {token.strip()!r}", source)


def _split_operands(rest: str) -> List[str]:
    parts: List[str] = []
    depth = 0
    current: List[str] = []
    for ch in rest:
        if ch in "[(":
            depth += 1
        elif ch in "])":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    tail = "".join(current).strip()
    if tail or parts:
        parts.append(tail)
    return parts


def _strip_line_comment(line: str) -> str:
    line = _strip_block_comments(line)
    for marker in ("//", "#", ";"):
        pos = line.find(marker)
        if pos >= 0:
            line = line[:pos]
    return line.strip()


def parse_instruction(line: str, line_no: int = 0) -> Union[Instruction, LabelDef, None]:
    """Classify one ``.text`` line.

    Returns ``None`` for blank/comment lines and a :class:`LabelDef` for a bare
    label. A label followed by an instruction on the same line yields the
    instruction with ``label`` set.
    """
    body = _strip_line_comment(line)
    if not body:
        return None
    label = None
    m = re.match(r"^([.\w$]+):\s*(.*)$", body)
    if m:
        label, body = m.group(1), m.group(2).strip()
        if not body:
            return LabelDef(label, line_no)
    head, _, rest = body.partition(" ")
    mnemonic = head.lower()
    encoding = None
    for tag in ENCODING_TAGS:
        if mnemonic.endswith("_" + tag):
            mnemonic, encoding = mnemonic[: -len(tag) - 1], tag
            break
    prefix, root, suffixes = decompose_mnemonic(mnemonic)
    operands: List[Operand] = []
    modifiers: List[str] = []
    for chunk in _split_operands(rest.strip()):
        words = _split_words(chunk)
        for i, word in enumerate(words):
            if i == 0 and not _MODIFIER_RE.match(word.lower()):
                operands.append(parse_operand(word, line.strip()))
            else:
                modifiers.append(word)
    return Instruction(
        mnemonic=mnemonic,
        prefix=prefix,
        root=root,
        suffixes=suffixes,
        operands=tuple(operands),
        source_text=line.strip(),
        label=label,
        modifiers=tuple(modifiers),
        encoding=encoding,
        line_no=line_no,
    )


def _split_words(chunk: str) -> List[str]:
    words: List[str] = []
    depth = 0
    current: List[str] = []
    for ch in chunk:
        if ch in "[(":
            depth += 1
        elif ch in "])":
            depth -= 1
        if ch.isspace() and depth == 0:
            if current:
                words.append("".join(current))
                current = []
        else:
            current.append(ch)
    if current:
        words.append("".join(current))
    return words


def opaque_instruction(line: str, line_no: int = 0) -> Instruction:
    """Fallback carrier for lines the operand grammar rejects."""
    body = _strip_line_comment(line)
    mnemonic = body.split()[0].lower() if body else ""
    return Instruction(mnemonic, "other", mnemonic, (), (), line.strip(), line_no=line_no)


def parse_program(
    text_lines: Sequence[str],
    line_numbers: Sequence[int] = (),
    errors: Optional[List[InstructionParseError]] = None,
) -> Program:
    """Parse a kernel's ``.text`` lines.

    Unparseable instructions become opaque ``prefix=other`` instructions; the
    parse errors are appended to ``errors`` when given.
    """
    instructions: List[Instruction] = []
    labels: Dict[str, int] = {}
    pending: List[str] = []
    for pos, line in enumerate(text_lines):
        line_no = line_numbers[pos] if pos < len(line_numbers) else pos + 1
        try:
            item = parse_instruction(line, line_no)
        except InstructionParseError as exc:
            exc.line = line_no
            if errors is not None:
                errors.append(exc)
            item = opaque_instruction(line, line_no)
        if item is None:
            continue
        if isinstance(item, LabelDef):
            pending.append(item.name)
            continue
        if item.label is not None:
            pending.append(item.label)
        for name in pending:
            labels[name] = len(instructions)
        if pending and item.label is None:
            item = _with_label(item, pending[0])
        pending = []
        instructions.append(item)
    for name in pending:
        labels[name] = len(instructions)
    return Program(instructions, labels)


def _with_label(instr: Instruction, label: str) -> Instruction:
    return replace(instr, label=label)
