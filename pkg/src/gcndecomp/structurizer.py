"""Control-structure recovery by region-graph reduction.

The region graph starts with one region per basic block. ``reduce`` walks it
in depth-first post-order (innermost structures first) and merges the first
node where a template fires, retrying the merged node before moving on, until
one region remains or nothing matches.

Mask-driven if-else code comes in three shapes. The two single-label shapes
are first rewritten in the instruction stream into the two-label shape by
inserting a synthetic ``s_cbranch_execz`` and label (:func:`normalize_stream`).
:func:`normalize_if_else` then turns the two-label shape into a plain diamond
in the block graph so ``match_if_else`` only ever sees the standard form.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .asm import Instruction, Operand, Program
from .cfg import COND, NOP_OPCODES, Cfg, classify_exec_op

# ---------------------------------------------------------------------------
# instruction-stream normalization


def _is_execz(ins: Optional[Instruction]) -> bool:
    return ins is not None and ins.prefix == "s" and ins.root == "cbranch_execz"


def synthetic_branch(label: str) -> Instruction:
    return Instruction(
        "s_cbranch_execz", "s", "cbranch_execz", (),
        (Operand("label_ref", name=label, text=label),),
        f"s_cbranch_execz {label}", synthetic=True,
    )


def mask_triples(instrs: Sequence[Instruction]) -> List[Tuple[int, Optional[int], int]]:
    """(save, invert or None, restore) index triples matched by saved register."""
    stack: List[list] = []
    out = []
    for i, ins in enumerate(instrs):
        op = classify_exec_op(ins, i)
        if op is None:
            continue
        if op.kind == "save":
            stack.append([op.saved, i, None])
        elif op.kind == "invert":
            if stack and stack[-1][0] == op.saved and stack[-1][2] is None:
                stack[-1][2] = i
        elif stack and stack[-1][0] == op.saved:
            _, s, v = stack.pop()
            out.append((s, v, i))
    return sorted(out)


def normalize_stream(program: Program) -> Program:
    """Rewrite single-label and branchless mask forms into the two-label form."""
    instrs = program.instructions
    labels = dict(program.labels)
    n = len(instrs)
    names_at: Dict[int, str] = {}
    for name, idx in sorted(labels.items(), key=lambda kv: (kv[1], kv[0])):
        names_at.setdefault(idx, name)
    counter = 0
    new_labels: Dict[str, int] = {}

    def label_at(idx: int) -> str:
        nonlocal counter
        if idx not in names_at:
            name = f".Lsyn{counter}"
            while name in labels:
                counter += 1
                name = f".Lsyn{counter}"
            counter += 1
            names_at[idx] = name
            new_labels[name] = idx
        return names_at[idx]

    inserts: Dict[int, List[str]] = {}
    for save, invert, restore in mask_triples(instrs):
        first = invert if invert is not None else restore
        if not _is_execz(instrs[save + 1] if save + 1 < n else None):
            inserts.setdefault(save, []).append(label_at(first))
        if invert is not None and not _is_execz(instrs[invert + 1] if invert + 1 < n else None):
            inserts.setdefault(invert, []).append(label_at(restore))
    if not inserts:
        return program

    out: List[Instruction] = []
    new_index: Dict[int, int] = {}
    for i, ins in enumerate(instrs):
        new_index[i] = len(out)
        if ins.label is None and i in names_at and names_at[i] in new_labels:
            ins = replace(ins, label=names_at[i])
        out.append(ins)
        for target in inserts.get(i, []):
            out.append(synthetic_branch(target))
    new_index[n] = len(out)
    merged = {name: new_index[idx] for name, idx in labels.items()}
    merged.update({name: new_index[idx] for name, idx in new_labels.items()})
    return Program(out, merged)


# ---------------------------------------------------------------------------
# regions


@dataclass
class Region:
    """A node of the region graph.

    ``kind`` is leaf, linear, if, if_else or residue. For if/if_else the
    ``tail`` is the join region when it was absorbed. ``then_on_taken`` says
    whether the then side is reached through the header's branch-taken edge.
    """

    id: int
    kind: str
    block: Optional[int] = None
    children: List["Region"] = field(default_factory=list)
    header: Optional["Region"] = None
    then: Optional["Region"] = None
    else_: Optional["Region"] = None
    tail: Optional["Region"] = None
    then_on_taken: bool = False
    exit: Optional[int] = None  # leaf whose branch picks the outgoing edge

    def leaves(self) -> List[int]:
        if self.kind == "leaf":
            return [self.block if self.block is not None else self.id]
        out: List[int] = []
        for part in self.parts():
            out.extend(part.leaves())
        return out

    def parts(self) -> List["Region"]:
        if self.kind in ("linear", "residue"):
            return list(self.children)
        return [p for p in (self.header, self.then, self.else_, self.tail) if p is not None]

    def describe(self) -> str:
        if self.kind == "leaf":
            return f"B{self.block if self.block is not None else self.id}"
        if self.kind in ("linear", "residue"):
            return f"{self.kind}(" + ", ".join(c.describe() for c in self.children) + ")"
        inner = [self.header.describe(), self.then.describe()]
        if self.else_ is not None:
            inner.append(self.else_.describe())
        if self.tail is not None:
            inner.append("tail=" + self.tail.describe())
        return f"{self.kind}(" + ", ".join(inner) + ")"


@dataclass(frozen=True)
class Merge:
    kind: str
    members: Tuple[int, ...]
    header: int
    then: Optional[int] = None
    else_: Optional[int] = None
    tail: Optional[int] = None
    then_on_taken: bool = False


class RegionGraph:
    """Mutable graph of live regions with ordered successor lists.

    ``leaf_edges`` keeps the block-level edges (after if-else normalization)
    with their kinds; symbolic execution walks those.
    """

    def __init__(self, entry: int) -> None:
        self.regions: Dict[int, Region] = {}
        self.succ: Dict[int, List[int]] = {}
        self.entry = entry
        self.leaf_edges: Dict[int, List[Tuple[int, str]]] = {}
        self.dropped_branch: Set[int] = set()
        self.owner: Dict[int, int] = {}
        self.merge_log: List[Tuple[FrozenSet[int], int]] = []
        self.next_id = 0

    # construction ---------------------------------------------------------

    @classmethod
    def from_edges(cls, nodes: Iterable[int], edges: Iterable[Tuple[int, int]], entry: Optional[int] = None) -> "RegionGraph":
        nodes = list(nodes)
        g = cls(entry if entry is not None else nodes[0])
        for v in nodes:
            g.regions[v] = Region(v, "leaf", block=v, exit=v)
            g.succ[v] = []
            g.leaf_edges[v] = []
            g.owner[v] = v
        for a, b in edges:
            if b not in g.succ[a]:
                g.succ[a].append(b)
                g.leaf_edges[a].append((b, "fallthrough"))
        g.next_id = max(nodes) + 1
        return g

    @classmethod
    def from_cfg(cls, cfg: Cfg) -> "RegionGraph":
        live = [b.id for b in cfg.blocks if not b.dead]
        g = cls(cfg.entry)
        g.cfg = cfg
        for bid in live:
            g.regions[bid] = Region(bid, "leaf", block=bid, exit=bid)
            g.owner[bid] = bid
            g.leaf_edges[bid] = []
        for e in cfg.edges:
            if e.src in g.regions and e.dst in g.regions:
                g.leaf_edges[e.src].append((e.dst, e.kind))
        for bid in live:
            g.succ[bid] = [d for d, _ in g.leaf_edges[bid]]
        g.next_id = max(live) + 1 if live else 1
        return g

    cfg: Optional[Cfg] = None

    # queries --------------------------------------------------------------

    def preds(self, r: int) -> List[int]:
        return [p for p in self.regions if r in self.succ[p]]

    def succs(self, r: int) -> List[int]:
        return list(self.succ[r])

    def leaf_preds(self, leaf: int) -> List[Tuple[int, str]]:
        out = []
        for src in sorted(self.leaf_edges):
            for dst, kind in self.leaf_edges[src]:
                if dst == leaf:
                    out.append((src, kind))
        return out

    def taken_region(self, r: int) -> Optional[int]:
        """Region reached through the branch-taken edge of r's exit leaf."""
        leaf = self.regions[r].exit
        if leaf is None:
            return None
        for dst, kind in self.leaf_edges.get(leaf, []):
            if kind == "taken":
                return self.owner.get(dst)
        return None

    def postorder(self) -> List[int]:
        seen: Set[int] = set()
        order: List[int] = []
        stack: List[Tuple[int, int]] = [(self.entry, 0)]
        seen.add(self.entry)
        while stack:
            node, i = stack[-1]
            kids = self.succ[node]
            if i < len(kids):
                stack[-1] = (node, i + 1)
                k = kids[i]
                if k not in seen:
                    seen.add(k)
                    stack.append((k, 0))
            else:
                stack.pop()
                order.append(node)
        for r in sorted(self.regions):
            if r not in seen:
                order.append(r)
        return order

    def topo_order(self) -> List[int]:
        """Regions in a deterministic topological order (entry first)."""
        indeg = {r: 0 for r in self.regions}
        for r in self.regions:
            for s in self.succ[r]:
                indeg[s] += 1
        ready = sorted(r for r, d in indeg.items() if d == 0)
        out = []
        while ready:
            r = ready.pop(0)
            out.append(r)
            for s in self.succ[r]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    ready.append(s)
                    ready.sort()
        out.extend(sorted(r for r in self.regions if r not in out))
        return out

    def leaf_topo_order(self) -> List[int]:
        indeg = {b: 0 for b in self.leaf_edges}
        for b, outs in self.leaf_edges.items():
            for d, _ in outs:
                indeg[d] += 1
        ready = sorted(b for b, d in indeg.items() if d == 0)
        out = []
        while ready:
            b = ready.pop(0)
            out.append(b)
            for d, _ in self.leaf_edges[b]:
                indeg[d] -= 1
                if indeg[d] == 0:
                    ready.append(d)
                    ready.sort()
        if len(out) != len(indeg):
            raise_cycle = [b for b in indeg if b not in out]
            from .errors import GraphConstructionError

            raise GraphConstructionError(f"control flow cycle through blocks {sorted(raise_cycle)} (loops are not supported)")
        return out

    # mutation -------------------------------------------------------------

    def merge(self, m: Merge) -> Region:
        members = set(m.members)
        nid = self.next_id
        self.next_id += 1
        R = self.regions
        if m.kind == "linear":
            a, b = R[m.header], R[m.then]
            kids = (a.children if a.kind == "linear" else [a]) + (b.children if b.kind == "linear" else [b])
            region = Region(nid, "linear", children=kids, exit=b.exit)
        else:
            tail = R[m.tail] if m.tail is not None else None
            region = Region(
                nid, m.kind, header=R[m.header], then=R[m.then],
                else_=R[m.else_] if m.else_ is not None else None,
                tail=tail, then_on_taken=m.then_on_taken,
                exit=tail.exit if tail is not None else None,
            )
        out: List[int] = []
        for v in m.members:
            for s in self.succ[v]:
                if s not in members and s not in out:
                    out.append(s)
        for p in list(self.regions):
            if p in members:
                continue
            lst = self.succ[p]
            if any(x in members for x in lst):
                new = []
                for x in lst:
                    y = nid if x in members else x
                    if y not in new:
                        new.append(y)
                self.succ[p] = new
        for v in m.members:
            del self.regions[v]
            del self.succ[v]
        self.regions[nid] = region
        self.succ[nid] = out
        if self.entry in members:
            self.entry = nid
        for leaf in region.leaves():
            self.owner[leaf] = nid
        self.merge_log.append((frozenset(m.members), nid))
        return region

    def to_dot(self, name: str = "regions") -> str:
        lines = [f'digraph "{name}" {{', "  node [shape=box, fontname=monospace];"]
        for r in sorted(self.regions):
            lines.append(f'  r{r} [label="{r}: {self.regions[r].describe()}"];')
        for r in sorted(self.regions):
            for s in self.succ[r]:
                lines.append(f"  r{r} -> r{s};")
        lines.append("}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# block-level if-else canonicalization


def _only_nops(instrs: Sequence[Instruction]) -> bool:
    return all(i.opcode in NOP_OPCODES for i in instrs)


def normalize_if_else(g: RegionGraph, r: int) -> bool:
    """Turn a two-label mask if-else headed by leaf ``r`` into the standard diamond.

    Shape: ``r`` saves the mask and branches on execz to block ``I``; ``I``
    only inverts the mask and branches on execz to the join ``J``. Every other
    predecessor of ``I`` (the end of the then side) is redirected to ``J`` and
    ``I`` drops its branch, becoming the entry of the else side.
    """
    cfg = g.cfg
    if cfg is None or r not in g.leaf_edges:
        return False
    H = cfg.block(r)
    if H.terminator != COND or not _is_execz(H.branch) or not H.exec_ops:
        return False
    save = H.exec_ops[-1]
    if save.kind != "save":
        return False
    taken = [d for d, k in g.leaf_edges[r] if k == "taken"]
    if len(taken) != 1:
        return False
    i_id = taken[0]
    I = cfg.block(i_id)
    if I.terminator != COND or not _is_execz(I.branch) or i_id in g.dropped_branch:
        return False
    ops = I.exec_ops
    if len(ops) != 1 or ops[0].kind != "invert" or ops[0].saved != save.saved:
        return False
    others = [ins for k, ins in enumerate(I.instructions[:-1]) if k != ops[0].index]
    if not _only_nops(others):
        return False
    i_edges = g.leaf_edges[i_id]
    j_ids = [d for d, k in i_edges if k == "taken"]
    e_ids = [d for d, k in i_edges if k == "not_taken"]
    if len(j_ids) != 1 or len(e_ids) != 1 or j_ids[0] == e_ids[0]:
        return False
    j_id = j_ids[0]
    for p, _ in g.leaf_preds(i_id):
        if p == r:
            continue
        new_edges = []
        for d, k in g.leaf_edges[p]:
            target = j_id if d == i_id else d
            if all(target != x for x, _ in new_edges):
                new_edges.append((target, k))
        g.leaf_edges[p] = new_edges
        g.succ[p] = [d for d, _ in new_edges]
    g.leaf_edges[i_id] = [(e_ids[0], "fallthrough")]
    g.succ[i_id] = [e_ids[0]]
    g.dropped_branch.add(i_id)
    return True


def normalize_all(g: RegionGraph) -> int:
    count = 0
    for r in sorted(g.leaf_edges):
        if normalize_if_else(g, r):
            count += 1
    return count


# ---------------------------------------------------------------------------
# templates


def _single_pred(g: RegionGraph, node: int, pred: int) -> bool:
    return node != g.entry and g.preds(node) == [pred]


def match_linear(g: RegionGraph, r: int) -> Optional[Merge]:
    succ = g.succ[r]
    if len(succ) != 1:
        return None
    s = succ[0]
    if s == r or not _single_pred(g, s, r):
        return None
    return Merge("linear", (r, s), header=r, then=s)


def _polarity(g: RegionGraph, r: int, then: int) -> bool:
    return g.taken_region(r) == then


def match_if_else(g: RegionGraph, r: int) -> Optional[Merge]:
    succ = g.succ[r]
    if len(succ) != 2:
        return None
    a, b = succ
    if r in (a, b) or not (_single_pred(g, a, r) and _single_pred(g, b, r)):
        return None
    sa, sb = g.succ[a], g.succ[b]
    if sa != sb or len(sa) > 1:
        return None
    j = sa[0] if sa else None
    if j in (r, a, b):
        return None
    if g.taken_region(r) == a:
        a, b = b, a
    tail = j if j is not None and j != g.entry and sorted(g.preds(j)) == sorted((a, b)) else None
    members = (r, a, b) + ((tail,) if tail is not None else ())
    return Merge("if_else", members, header=r, then=a, else_=b, tail=tail)


def match_if(g: RegionGraph, r: int) -> Optional[Merge]:
    succ = g.succ[r]
    if len(succ) != 2:
        return None
    for t, j in ((succ[0], succ[1]), (succ[1], succ[0])):
        if t == r or j == r or not _single_pred(g, t, r):
            continue
        st = g.succ[t]
        if st == [j]:
            expected = sorted((r, t))
        elif st == []:
            expected = [r]
        else:
            continue
        tail = j if j != g.entry and sorted(g.preds(j)) == expected else None
        members = (r, t) + ((tail,) if tail is not None else ())
        return Merge("if", members, header=r, then=t, tail=tail, then_on_taken=_polarity(g, r, t))
    return None


TEMPLATES: Tuple[Callable[[RegionGraph, int], Optional[Merge]], ...] = (match_if_else, match_if, match_linear)


def _try(g: RegionGraph, r: int) -> Optional[Merge]:
    for template in TEMPLATES:
        m = template(g, r)
        if m is not None:
            return m
    return None


def reduce(g: RegionGraph, steps: Optional[List[str]] = None) -> Region:
    """Reduce ``g`` to one region; leftover regions form a ``residue`` root."""
    if steps is not None:
        steps.append(g.to_dot("step0"))
    progress = True
    while len(g.regions) > 1 and progress:
        progress = False
        for r in g.postorder():
            if r not in g.regions:
                continue
            node = r
            while True:
                m = _try(g, node)
                if m is None:
                    break
                node = g.merge(m).id
                progress = True
                if steps is not None:
                    steps.append(g.to_dot(f"step{len(g.merge_log)}"))
            if progress:
                break
    if len(g.regions) == 1:
        return next(iter(g.regions.values()))
    order = g.topo_order()
    return Region(g.next_id, "residue", children=[g.regions[r] for r in order])


def residue_successors(g: RegionGraph, root: Region) -> Dict[int, List[int]]:
    """For a residue root: region id -> successor region ids."""
    return {c.id: list(g.succ[c.id]) for c in root.children}


# ---------------------------------------------------------------------------
# single-instruction selects


def detect_ternary(instr: Instruction, state) -> Optional["object"]:
    """The value bound by a ``v_cndmask_b32``, as a ternary expression when the mask is symbolic."""
    from .state import read_reg, step

    if instr.opcode != "v_cndmask":
        return None
    new_state, _ = step(state, instr)
    dst = instr.operands[0].registers()[0]
    return read_reg(new_state, dst)
