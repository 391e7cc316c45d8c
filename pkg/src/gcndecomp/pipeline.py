"""End-to-end decompilation of a listing: parse, structure, execute, render."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple

from .abi import build_abi_map
from .asm import KernelConfig, KernelSection, Program, parse_config, parse_program, split_kernels
from .builtin_detector import fold_all
from .cfg import Cfg, build_cfg, cfg_to_dot
from .codegen import KernelAst, LeafCode, build_kernel_ast, render_kernel, walk_items
from .dtypes import BOOL, types_from_config
from .errors import DecompileError, GraphConstructionError
from .expr import (
    Assign,
    Comment,
    Decl,
    Deref,
    Expr,
    RawAsm,
    Statement,
    Store,
    Var,
    walk,
)
from .expr import BuiltinId
from .state import (
    RegisterFile,
    SymContext,
    Unsupported,
    branch_condition,
    defs_uses,
    edge_state,
    merge_at_join,
    step,
)
from .structurizer import Region, RegionGraph, normalize_all, normalize_stream, reduce


@dataclass(frozen=True)
class Diagnostic:
    line: int
    severity: str  # error | warning | note
    message: str

    def format(self, filename: str) -> str:
        return f"{filename}:{self.line}: {self.severity}: {self.message}"


@dataclass
class Options:
    fold_local_size: bool = False
    abi_overrides: Optional[Mapping[Tuple[int, int], BuiltinId]] = None
    kernel: Optional[str] = None
    dump_cfg: bool = False
    dump_regions: bool = False


@dataclass
class DecompiledKernel:
    name: str
    config: KernelConfig
    program: Program
    cfg: Cfg
    graph: RegionGraph
    root: Region
    leaves: Dict[int, LeafCode]
    ast: KernelAst
    text: str
    diagnostics: List[Diagnostic] = field(default_factory=list)
    cfg_dot: str = ""
    region_dots: List[str] = field(default_factory=list)

    @property
    def fallback_count(self) -> int:
        return sum(1 for item in walk_items(self.ast.body) if isinstance(item, RawAsm))

    @property
    def structured(self) -> bool:
        return self.root.kind != "residue"


# ---------------------------------------------------------------------------
# liveness


def _liveness(g: RegionGraph, cfg: Cfg, order: Sequence[int]) -> Tuple[Dict[int, FrozenSet[str]], Dict[int, List[FrozenSet[str]]]]:
    """Live-in sets per block and live-after sets per instruction."""
    live_in: Dict[int, FrozenSet[str]] = {}
    live_after: Dict[int, List[FrozenSet[str]]] = {}
    for b in reversed(order):
        live: Set[str] = set()
        for dst, _ in g.leaf_edges[b]:
            live |= live_in.get(dst, frozenset())
        instrs = cfg.block(b).instructions
        after: List[FrozenSet[str]] = [frozenset()] * len(instrs)
        for k in range(len(instrs) - 1, -1, -1):
            after[k] = frozenset(live)
            defs, uses = defs_uses(instrs[k])
            live = (live - defs) | uses
        live_in[b] = frozenset(live)
        live_after[b] = after
    return live_in, live_after


# ---------------------------------------------------------------------------
# statement rewriting helpers


def _map_stmt(s: Statement, f) -> Statement:
    if isinstance(s, Assign):
        return Assign(s.target, f(s.value))
    if isinstance(s, Store):
        target = f(s.target)
        if not isinstance(target, Deref):
            target = s.target
        return Store(target, f(s.value))
    if isinstance(s, Decl):
        return Decl(s.var, f(s.value) if s.value is not None else None)
    return s


def _reads(s: Statement) -> List[str]:
    out: List[str] = []
    exprs: List[Expr] = []
    if isinstance(s, Assign):
        exprs.append(s.value)
    elif isinstance(s, Store):
        exprs += [s.target, s.value]
    elif isinstance(s, Decl) and s.value is not None:
        exprs.append(s.value)
    for e in exprs:
        out.extend(n.name for n in walk(e) if isinstance(n, Var))
    return out


def remove_dead_locals(leaves: Dict[int, LeafCode]) -> None:
    """Drop assignments and declarations of variables nothing reads."""
    while True:
        read: Set[str] = set()
        for code in leaves.values():
            for s in code.statements:
                read.update(_reads(s))
            if code.taken_cond is not None:
                read.update(n.name for n in walk(code.taken_cond) if isinstance(n, Var))
        changed = False
        for code in leaves.values():
            kept = []
            for s in code.statements:
                if isinstance(s, Assign) and s.target.name not in read:
                    changed = True
                    continue
                if isinstance(s, Decl) and s.var.name not in read:
                    changed = True
                    continue
                kept.append(s)
            code.statements = kept
        if not changed:
            return


# ---------------------------------------------------------------------------
# one kernel


def _cond_or_placeholder(state: RegisterFile, branch, ctx: SymContext, diags: List[Diagnostic]) -> Expr:
    try:
        return branch_condition(state, branch, ctx)
    except Unsupported as exc:
        diags.append(Diagnostic(branch.line_no, "warning", str(exc)))
        return Var(ctx.fresh("branch_cond"), BOOL)


def _verbatim_kernel(section, config, types, program, cfg, g, diags, options) -> DecompiledKernel:
    body: List[Statement] = [Comment("control flow with cycles is not decompiled")]
    for ins in program.instructions:
        if ins.synthetic:
            continue
        if ins.label is not None and not ins.label.startswith(".Lsyn"):
            body.append(RawAsm(f"{ins.label}:"))
        body.append(RawAsm(ins.source_text))
    leaves = {0: LeafCode(body)}
    root = Region(0, "leaf", block=0, exit=0)
    ast = build_kernel_ast(root, leaves, config, types, section.name, None)
    cfg_dot = cfg_to_dot(cfg, section.name) if options.dump_cfg else ""
    return DecompiledKernel(section.name, config, program, cfg, g, root, leaves, ast, render_kernel(ast), diags, cfg_dot)


def decompile_kernel(section: KernelSection, options: Optional[Options] = None) -> DecompiledKernel:
    options = options or Options()
    diags: List[Diagnostic] = []
    config = parse_config(section.config_lines)
    parse_errors: list = []
    program = parse_program(section.text_lines, section.line_numbers, parse_errors)
    for err in parse_errors:
        diags.append(Diagnostic(err.line or 0, "warning", f"{err.args[0]}; kept as inline assembly"))
    abi = build_abi_map(config, options.abi_overrides)
    types = types_from_config(config.args)
    for msg in types.diagnostics:
        diags.append(Diagnostic(section.text_start, "warning", msg))

    program = normalize_stream(program)
    cfg = build_cfg(program)
    for b in cfg.blocks:
        if b.dead and b.instructions:
            diags.append(Diagnostic(b.instructions[0].line_no, "warning", f"unreachable block B{b.id} ignored"))
    g = RegionGraph.from_cfg(cfg)
    normalize_all(g)

    try:
        order = g.leaf_topo_order()
    except GraphConstructionError as exc:
        diags.append(Diagnostic(section.text_start, "warning", f"{exc.message}; kernel body kept as inline assembly"))
        return _verbatim_kernel(section, config, types, program, cfg, g, diags, options)
    live_in, live_after = _liveness(g, cfg, order)
    ctx = SymContext(abi=abi, config=config)
    entry_state = RegisterFile.at_entry(config)
    out_state: Dict[int, RegisterFile] = {}
    leaves: Dict[int, LeafCode] = {}

    for b in order:
        block = cfg.block(b)
        preds = g.leaf_preds(b)
        if not preds:
            state = entry_state
        else:
            incoming = []
            for p, kind in preds:
                branch = cfg.block(p).branch if p not in g.dropped_branch else None
                if kind in ("taken", "not_taken"):
                    incoming.append(edge_state(out_state[p], branch, kind == "taken"))
                else:
                    incoming.append(out_state[p])
            if len(incoming) == 1:
                state = incoming[0]
            else:
                state, assigns = merge_at_join(incoming, live_in[b], ctx)
                for (p, _), extra in zip(preds, assigns):
                    leaves[p].statements.extend(extra)
        stmts: List[Statement] = []
        for k, ins in enumerate(block.instructions):
            before = len(ctx.diagnostics)
            state, produced = step(state, ins, abi, ctx, live_after[b][k])
            stmts.extend(produced)
            for msg in ctx.diagnostics[before:]:
                diags.append(Diagnostic(ins.line_no, "warning", msg))
        cond = None
        branch = block.branch
        if branch is not None and branch.is_conditional_branch() and b not in g.dropped_branch and len(g.leaf_edges[b]) == 2:
            cond = _cond_or_placeholder(state, branch, ctx, diags)
        leaves[b] = LeafCode(stmts, cond)
        out_state[b] = state

    for name in sorted(ctx.unknown_reads):
        diags.append(Diagnostic(section.text_start, "warning", f"register value {name} is read before it is written"))

    remove_dead_locals(leaves)
    fold = lambda e: fold_all(e, config, options.fold_local_size)  # noqa: E731
    for code in leaves.values():
        code.statements = [_map_stmt(s, fold) for s in code.statements]
        if code.taken_cond is not None:
            code.taken_cond = fold(code.taken_cond)

    cfg_dot = cfg_to_dot(cfg, section.name) if options.dump_cfg else ""
    steps: Optional[List[str]] = [] if options.dump_regions else None
    root = reduce(g, steps)
    if root.kind == "residue":
        diags.append(Diagnostic(section.text_start, "warning",
                                f"kernel {section.name}: control flow not fully structured; emitted with goto"))
    ast = build_kernel_ast(root, leaves, config, types, section.name, g)
    text = render_kernel(ast)
    return DecompiledKernel(
        section.name, config, program, cfg, g, root, leaves, ast, text, diags, cfg_dot, steps or [],
    )


@dataclass
class DecompileResult:
    text: str
    kernels: List[DecompiledKernel]
    diagnostics: List[Diagnostic]

    @property
    def fallback_count(self) -> int:
        return sum(k.fallback_count for k in self.kernels)


def decompile_text(listing: str, options: Optional[Options] = None) -> DecompileResult:
    """Decompile every kernel of a listing, in input order."""
    options = options or Options()
    sections = split_kernels(listing)
    if options.kernel is not None:
        sections = [s for s in sections if s.name == options.kernel]
        if not sections:
            raise DecompileError(f"kernel {options.kernel!r} not found")
    if not sections:
        raise DecompileError("no kernels found")
    kernels = [decompile_kernel(s, options) for s in sections]
    diags = [d for k in kernels for d in k.diagnostics]
    text = "\n".join(k.text for k in kernels)
    return DecompileResult(text, kernels, diags)
