"""Random structured programs lowered to GCN branch-and-label form.

The generator keeps the source tree so a reduced region tree can be compared
against it. Leaves are marked by ``v_mov_b32 v1, <marker>`` so blocks can be
traced back to the leaf they came from.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import List, Tuple, Union

from gcndecomp.asm import parse_program
from gcndecomp.cfg import build_cfg
from gcndecomp.structurizer import Region, RegionGraph, normalize_all, normalize_stream, reduce

# how an if / if-else is lowered
IF_LOWERINGS = ("mask", "mask_branchless", "scalar")
IF_ELSE_LOWERINGS = ("form1", "form2", "form3", "mask_branchless", "scalar")


@dataclass
class Leaf:
    marker: int


@dataclass
class Seq:
    items: List["Node"]


@dataclass
class If:
    then: "Node"
    lowering: str


@dataclass
class IfElse:
    then: "Node"
    else_: "Node"
    lowering: str


Node = Union[Leaf, Seq, If, IfElse]


@dataclass
class Generator:
    rng: random.Random
    max_depth: int = 6
    counter: int = 0

    def leaf(self) -> Leaf:
        self.counter += 1
        return Leaf(self.counter)

    def node(self, depth: int) -> Node:
        if depth >= self.max_depth:
            return self.leaf()
        r = self.rng.random()
        if r < 0.25:
            return self.leaf()
        if r < 0.5:
            n = self.rng.randint(2, 3)
            return Seq([self.node(depth + 1) for _ in range(n)])
        if r < 0.72:
            return If(self.node(depth + 1), self.rng.choice(IF_LOWERINGS))
        return IfElse(self.node(depth + 1), self.node(depth + 1), self.rng.choice(IF_ELSE_LOWERINGS))


@dataclass
class Lowering:
    lines: List[str] = field(default_factory=list)
    labels: int = 0

    def label(self) -> str:
        self.labels += 1
        return f".LBB0_{self.labels}"

    def emit(self, text: str) -> None:
        self.lines.append("    " + text)

    def place(self, label: str) -> None:
        self.lines.append(f"{label}:")


def _mask(depth: int) -> str:
    return f"s[{10 + 2 * depth}:{11 + 2 * depth}]"


def lower(node: Node, out: Lowering, depth: int = 0) -> None:
    if isinstance(node, Leaf):
        out.emit(f"v_mov_b32 v1, {node.marker}")
        return
    if isinstance(node, Seq):
        for item in node.items:
            lower(item, out, depth)
        return
    saved = _mask(depth)
    if isinstance(node, If):
        if node.lowering == "scalar":
            end = out.label()
            out.emit(f"s_cmp_gt_u32 s6, {depth + 3}")
            out.emit(f"s_cbranch_scc0 {end}")
            lower(node.then, out, depth + 1)
            out.place(end)
            return
        out.emit(f"v_cmp_gt_u32 vcc, {depth + 5}, v0")
        out.emit(f"s_and_saveexec_b64 {saved}, vcc")
        end = out.label()
        if node.lowering == "mask":
            out.emit(f"s_cbranch_execz {end}")
        lower(node.then, out, depth + 1)
        out.place(end)
        out.emit(f"s_or_b64 exec, exec, {saved}")
        return
    # if-else
    if node.lowering == "scalar":
        other, end = out.label(), out.label()
        out.emit(f"s_cmp_lt_u32 s6, {depth + 2}")
        out.emit(f"s_cbranch_scc0 {other}")
        lower(node.then, out, depth + 1)
        out.emit(f"s_branch {end}")
        out.place(other)
        lower(node.else_, out, depth + 1)
        out.place(end)
        return
    out.emit(f"v_cmp_lt_u32 vcc, {depth + 1}, v0")
    out.emit(f"s_and_saveexec_b64 {saved}, vcc")
    first = node.lowering in ("form1", "form2")
    second = node.lowering in ("form1", "form3")
    inv, end = out.label(), out.label()
    if first:
        out.emit(f"s_cbranch_execz {inv}")
    lower(node.then, out, depth + 1)
    out.place(inv)
    out.emit(f"s_andn2_b64 exec, {saved}, exec" if depth % 2 else f"s_xor_b64 exec, exec, {saved}")
    if second:
        out.emit(f"s_cbranch_execz {end}")
    lower(node.else_, out, depth + 1)
    out.place(end)
    out.emit(f"s_or_b64 exec, exec, {saved}")


def to_asm_lines(node: Node) -> List[str]:
    out = Lowering()
    lower(node, out)
    out.emit("s_endpgm")
    return out.lines


# ---------------------------------------------------------------------------
# canonical forms


Canon = Tuple


def canon_source(node: Node) -> Canon:
    if isinstance(node, Leaf):
        return (node.marker,)
    if isinstance(node, Seq):
        return tuple(x for item in node.items for x in canon_source(item))
    if isinstance(node, If):
        return (("if", canon_source(node.then)),)
    return (("if_else", canon_source(node.then), canon_source(node.else_)),)


def _markers(cfg, block: int) -> Tuple[int, ...]:
    out = []
    for ins in cfg.block(block).instructions:
        if ins.prefix == "v" and ins.root == "mov" and ins.operands[0].registers() == ["v1"]:
            out.append(ins.operands[1].value)
    return tuple(out)


def canon_region(region: Region, cfg) -> Canon:
    kind = region.kind
    if kind == "leaf":
        return _markers(cfg, region.block)
    if kind == "linear":
        return tuple(x for c in region.children for x in canon_region(c, cfg))
    if kind in ("if", "if_else"):
        head = canon_region(region.header, cfg)
        then = canon_region(region.then, cfg)
        if kind == "if":
            mid = (("if", then),)
        else:
            mid = (("if_else", then, canon_region(region.else_, cfg)),)
        tail = canon_region(region.tail, cfg) if region.tail is not None else ()
        return head + mid + tail
    return (("residue",),)


# ---------------------------------------------------------------------------
# driver


def generate(rng: random.Random, max_blocks: int = 60, max_depth: int = 6):
    """A random tree whose lowering has at most ``max_blocks`` basic blocks."""
    while True:
        gen = Generator(rng, max_depth)
        tree = gen.node(0)
        lines = to_asm_lines(tree)
        program = normalize_stream(parse_program(lines))
        cfg = build_cfg(program)
        if len(cfg.blocks) <= max_blocks:
            return tree, lines


def structure(lines: List[str]):
    program = normalize_stream(parse_program(lines))
    cfg = build_cfg(program)
    g = RegionGraph.from_cfg(cfg)
    normalize_all(g)
    root = reduce(g)
    return root, cfg, g


def depth_of(node: Node) -> int:
    if isinstance(node, Leaf):
        return 0
    if isinstance(node, Seq):
        return max(depth_of(i) for i in node.items)
    if isinstance(node, If):
        return 1 + depth_of(node.then)
    return 1 + max(depth_of(node.then), depth_of(node.else_))
