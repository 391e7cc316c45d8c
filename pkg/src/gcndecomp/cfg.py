"""Basic blocks and the control flow graph of one kernel."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

from .asm import Instruction, Operand, Program
from .errors import GraphConstructionError

FALLTHROUGH = "fallthrough"
JUMP = "unconditional_branch"
COND = "conditional_branch"
END = "end_of_program"

NOP_OPCODES = ("s_waitcnt", "s_nop")


@dataclass(frozen=True)
class ExecOp:
    """An exec-mask manipulation: ``save``, ``invert`` or ``restore``."""

    kind: str
    index: int  # position inside the block
    saved: Tuple[str, ...]  # registers holding the saved mask
    condition: Optional[Operand] = None


@dataclass
class BasicBlock:
    id: int
    instructions: List[Instruction]
    start: int = 0  # index of the first instruction in the kernel stream
    labels: Tuple[str, ...] = ()
    terminator: str = FALLTHROUGH
    taken: Optional[int] = None
    not_taken: Optional[int] = None
    exec_ops: List[ExecOp] = field(default_factory=list)
    dead: bool = False

    @property
    def branch(self) -> Optional[Instruction]:
        if self.instructions and self.instructions[-1].is_branch():
            return self.instructions[-1]
        return None

    @property
    def successors(self) -> List[int]:
        if self.terminator == END:
            return []
        if self.terminator == COND:
            out = [self.not_taken, self.taken]
            return [b for i, b in enumerate(out) if b is not None and b not in out[:i]]
        return [self.taken] if self.terminator == JUMP else [self.not_taken]


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: str  # taken | not_taken | fallthrough | jump


@dataclass
class Cfg:
    blocks: List[BasicBlock]
    entry: int = 0
    edges: List[Edge] = field(default_factory=list)

    def block(self, bid: int) -> BasicBlock:
        return self.blocks[bid]

    def successors(self, bid: int) -> List[int]:
        return [e.dst for e in self.edges if e.src == bid]

    def predecessors(self, bid: int) -> List[int]:
        return [e.src for e in self.edges if e.dst == bid]

    def live_blocks(self) -> List[BasicBlock]:
        return [b for b in self.blocks if not b.dead]


def _labels_of(instructions: Sequence[Instruction], labels: Optional[Mapping[str, int]]) -> Dict[str, int]:
    if labels is not None:
        return dict(labels)
    return {ins.label: i for i, ins in enumerate(instructions) if ins.label is not None}


def build_cfg(
    instructions: Union[Program, Sequence[Instruction]],
    labels: Optional[Mapping[str, int]] = None,
) -> Cfg:
    """Split the stream at labels and after branches/``s_endpgm``."""
    if isinstance(instructions, Program):
        labels = instructions.labels if labels is None else labels
        instructions = instructions.instructions
    instrs = list(instructions)
    label_map = _labels_of(instrs, labels)
    n = len(instrs)
    for ins in instrs:
        target = ins.branch_target()
        if ins.is_branch() and target is None:
            raise GraphConstructionError(f"branch without a label operand: {ins.source_text}", ins.line_no)
        if ins.is_branch() and target not in label_map:
            raise GraphConstructionError(f"branch to undefined label {target!r}", ins.line_no)

    leaders: Set[int] = {0}
    for name, idx in label_map.items():
        leaders.add(idx)
    for i, ins in enumerate(instrs):
        if ins.is_branch() or ins.is_end():
            leaders.add(i + 1)
    needs_tail = any(idx >= n for idx in label_map.values())
    starts = sorted(i for i in leaders if i < n or (i == n and needs_tail))
    if not instrs:
        starts = [0]

    block_of: Dict[int, int] = {s: k for k, s in enumerate(starts)}
    names_at: Dict[int, List[str]] = {}
    for name, idx in sorted(label_map.items(), key=lambda kv: (kv[1], kv[0])):
        names_at.setdefault(idx, []).append(name)

    blocks: List[BasicBlock] = []
    for k, s in enumerate(starts):
        e = starts[k + 1] if k + 1 < len(starts) else n
        blocks.append(BasicBlock(k, instrs[s:e], s, tuple(names_at.get(s, ()))))

    edges: List[Edge] = []
    for b in blocks:
        nxt = b.id + 1 if b.id + 1 < len(blocks) else None
        last = b.instructions[-1] if b.instructions else None
        if last is not None and last.is_end():
            b.terminator = END
        elif last is not None and last.is_branch():
            target = block_of[label_map[last.branch_target()]]
            if last.is_conditional_branch():
                b.terminator, b.taken, b.not_taken = COND, target, nxt
                if nxt is None:
                    b.not_taken = None
            else:
                b.terminator, b.taken = JUMP, target
        elif nxt is not None:
            b.terminator, b.not_taken = FALLTHROUGH, nxt
        else:
            b.terminator = END
        if b.terminator == COND:
            if b.not_taken is not None:
                edges.append(Edge(b.id, b.not_taken, "not_taken"))
            if b.taken != b.not_taken:
                edges.append(Edge(b.id, b.taken, "taken"))
        elif b.terminator == JUMP:
            edges.append(Edge(b.id, b.taken, "jump"))
        elif b.terminator == FALLTHROUGH:
            edges.append(Edge(b.id, b.not_taken, "fallthrough"))
        b.exec_ops = annotate_exec(b)

    cfg = Cfg(blocks, 0, edges)
    _flag_dead(cfg)
    return cfg


def _flag_dead(cfg: Cfg) -> None:
    seen = {cfg.entry}
    stack = [cfg.entry]
    while stack:
        b = stack.pop()
        for s in cfg.successors(b):
            if s not in seen:
                seen.add(s)
                stack.append(s)
    for b in cfg.blocks:
        b.dead = b.id not in seen


def _pair(op: Operand) -> Optional[Tuple[str, ...]]:
    if op.kind == "sgpr_range" and op.width == 2:
        return tuple(op.registers())
    return None


def _is_exec(op: Operand) -> bool:
    return op.kind == "special" and op.name == "exec"


def classify_exec_op(ins: Instruction, index: int = 0) -> Optional[ExecOp]:
    """Recognize save / invert / restore of the exec mask."""
    ops = ins.operands
    op = ins.opcode
    wide = ins.suffixes[:1] == ("b64",)
    if op == "s_and_saveexec" and len(ops) == 2 and _pair(ops[0]):
        return ExecOp("save", index, _pair(ops[0]), ops[1])
    if not wide or len(ops) < 2 or not _is_exec(ops[0]):
        return None
    if op == "s_mov" and _pair(ops[1]):
        return ExecOp("restore", index, _pair(ops[1]))
    if len(ops) != 3:
        return None
    a, b = ops[1], ops[2]
    if op == "s_andn2" and _pair(a) and _is_exec(b):
        return ExecOp("invert", index, _pair(a))
    if op == "s_xor":
        if _is_exec(a) and _pair(b):
            return ExecOp("invert", index, _pair(b))
        if _pair(a) and _is_exec(b):
            return ExecOp("invert", index, _pair(a))
    if op == "s_or":
        if _is_exec(a) and _pair(b):
            return ExecOp("restore", index, _pair(b))
        if _pair(a) and _is_exec(b):
            return ExecOp("restore", index, _pair(a))
    return None


def annotate_exec(block: BasicBlock) -> List[ExecOp]:
    out = []
    for i, ins in enumerate(block.instructions):
        found = classify_exec_op(ins, i)
        if found is not None:
            out.append(found)
    return out


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def cfg_to_dot(cfg: Cfg, name: str = "cfg") -> str:
    lines = [f'digraph "{_dot_escape(name)}" {{', "  node [shape=box, fontname=monospace];"]
    for b in cfg.blocks:
        body = "\\l".join(_dot_escape(i.source_text) for i in b.instructions)
        style = ", style=dashed" if b.dead else ""
        lines.append(f'  b{b.id} [label="B{b.id}\\l{body}\\l"{style}];')
    for e in cfg.edges:
        lines.append(f'  b{e.src} -> b{e.dst} [label="{e.kind}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
