import random

from hypothesis import given, settings
from hypothesis import strategies as st

from gcndecomp.asm import parse_config, parse_instruction, parse_program
from gcndecomp.cfg import build_cfg
from gcndecomp.dtypes import BOOL, UINT
from gcndecomp.expr import BinOp, Ternary, Var
from gcndecomp.oracle import Evaluator, interpret_asm, sample_env
from gcndecomp.state import ENTIRE, RegisterFile, RegisterSlot, read_reg, step
from gcndecomp.structurizer import RegionGraph, detect_ternary, normalize_all, normalize_stream, reduce

from gen_structured import IfElse, Leaf, canon_region, canon_source, generate, structure, to_asm_lines

SIX_REGION_EDGES = [(1, 2), (1, 6), (2, 3), (2, 6), (3, 4), (4, 5), (4, 6), (5, 6)]


def test_six_region_merge_sequence():
    g = RegionGraph.from_edges([1, 2, 3, 4, 5, 6], SIX_REGION_EDGES, 1)
    root = reduce(g)
    assert g.merge_log == [
        (frozenset({4, 5}), 7),
        (frozenset({3, 7}), 8),
        (frozenset({2, 8}), 9),
        (frozenset({1, 9, 6}), 10),
    ]
    assert root.id == 10 and list(g.regions) == [10]


def test_single_block_is_root():
    g = RegionGraph.from_edges([0], [])
    root = reduce(g)
    assert root.kind == "leaf" and g.merge_log == []


# -- if-else forms ------------------------------------------------------------------


def mask_if_else(form):
    tree = IfElse(Leaf(1), Leaf(2), form)
    return tree, to_asm_lines(tree)


def test_second_form_normalized():
    _, lines = mask_if_else("form2")
    program = normalize_stream(parse_program(lines))
    synthetic = [i for i in program.instructions if i.synthetic]
    assert len(synthetic) == 1
    # the missing execz after the invert jumps to the restore, reusing its label
    restore = next(i for i, ins in enumerate(program.instructions) if ins.source_text.startswith("s_or_b64 exec"))
    assert program.labels[synthetic[0].branch_target()] == restore
    _, masked = mask_if_else("mask_branchless")
    targets = [i.branch_target() for i in normalize_stream(parse_program(masked)).instructions if i.synthetic]
    assert len(targets) == 2
    g = RegionGraph.from_cfg(build_cfg(program))
    assert normalize_all(g) == 1
    root = reduce(g)
    assert root.kind == "if_else"


def test_standard_form_unchanged():
    _, lines = mask_if_else("form1")
    program = parse_program(lines)
    assert normalize_stream(program) is program
    scalar = to_asm_lines(IfElse(Leaf(1), Leaf(2), "scalar"))
    g = RegionGraph.from_cfg(build_cfg(parse_program(scalar)))
    assert normalize_all(g) == 0


def bodies_in_source(lines):
    """Marker sequences between save/invert and invert/restore, read off the text."""
    then, else_, part = [], [], None
    for line in lines:
        text = line.strip()
        if text.startswith("s_and_saveexec"):
            part = then
        elif text.startswith(("s_xor_b64 exec", "s_andn2_b64 exec")):
            part = else_
        elif text.startswith("s_or_b64 exec"):
            part = None
        elif text.startswith("v_mov_b32 v1,") and part is not None:
            part.append(int(text.split(",")[1]))
    return tuple(then), tuple(else_)


def test_forms_keep_bodies_in_source_order():
    for form in ("form1", "form2", "form3", "mask_branchless"):
        _, lines = mask_if_else(form)
        root, cfg, _ = structure(lines)
        assert root.kind == "if_else", form
        got = (canon_region(root.then, cfg), canon_region(root.else_, cfg))
        assert got == bodies_in_source(lines), form


# -- generated nests --------------------------------------------------------------


def control_ids(region, depth=0, out=None):
    out = [] if out is None else out
    if region.kind in ("if", "if_else"):
        out.append((region.id, depth))
        depth += 1
    for part in region.parts():
        control_ids(part, depth, out)
    return out


def nested_ids(region):
    inner = []
    for part in region.parts():
        inner += [i for i, _ in control_ids(part)]
    return inner


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32))
def test_generated_nests_round_trip(seed):
    tree, lines = generate(random.Random(seed))
    root, cfg, g = structure(lines)
    assert canon_region(root, cfg) == canon_source(tree)
    # inner templates merge before the templates enclosing them
    position = {nid: k for k, (_, nid) in enumerate(g.merge_log)}

    def check(region):
        if region.kind in ("if", "if_else"):
            for inner in nested_ids(region):
                assert position[inner] < position[region.id]
        for part in region.parts():
            check(part)

    check(root)


# -- termination and edge preservation ----------------------------------------------


@st.composite
def graphs(draw):
    n = draw(st.integers(1, 12))
    nodes = list(range(n))
    edges = set()
    for v in nodes:
        for _ in range(draw(st.integers(0, 2))):
            edges.add((v, draw(st.sampled_from(nodes))))
    return nodes, sorted(edges)


@settings(max_examples=300, deadline=None)
@given(graphs())
def test_reduce_terminates_and_preserves_edges(data):
    nodes, edges = data
    g = RegionGraph.from_edges(nodes, edges, 0)
    original = g.merge
    count = [len(g.regions)]

    def checked(m):
        members = set(m.members)
        outside_succ = {s for v in members for s in g.succ[v] if s not in members}
        outside_pred = {p for p in g.regions if p not in members and any(s in members for s in g.succ[p])}
        region = original(m)
        assert set(g.succ[region.id]) == outside_succ
        assert {p for p in g.regions if region.id in g.succ[p] and p != region.id} == outside_pred
        assert len(g.regions) < count[0]
        count[0] = len(g.regions)
        return region

    g.merge = checked
    reduce(g)
    assert len(g.merge_log) <= len(nodes) - 1


# -- selects ----------------------------------------------------------------------------

CFG = parse_config([".dims x"])


def test_cndmask_operand_order():
    x, y = Var("x", UINT), Var("y", UINT)
    state = RegisterFile.at_entry(CFG)
    ins = parse_instruction("v_cndmask_b32 v3, v1, v2, vcc")
    state = state.with_slots({
        "v1": RegisterSlot(1, UINT, ENTIRE, Var("a", UINT)),
        "v2": RegisterSlot(1, UINT, ENTIRE, Var("b", UINT)),
        "vcc": RegisterSlot(1, BOOL, ENTIRE, BinOp("<", x, y, BOOL, UINT)),
    })
    value = detect_ternary(ins, state)
    assert isinstance(value, Ternary)
    assert value.a == Var("b", UINT) and value.b == Var("a", UINT)
    assert value.cond == BinOp("<", x, y, BOOL, UINT)


def test_cndmask_constant_mask():
    state = RegisterFile.at_entry(CFG).with_slots({
        "v1": RegisterSlot(1, UINT, ENTIRE, Var("a", UINT)),
        "v2": RegisterSlot(1, UINT, ENTIRE, Var("b", UINT)),
    })
    ins = parse_instruction("v_cndmask_b32 v3, v1, v2, -1")
    assert detect_ternary(ins, state) == Var("b", UINT)


def test_cndmask_agrees_with_interpreter_on_both_lanes():
    lines = [
        "s_load_dwordx2 s[0:1], s[4:5], 0x30",
        "v_mov_b32 v1, 10",
        "v_mov_b32 v2, 20",
        "v_cmp_gt_u32 vcc, 3, v0",
        "v_cndmask_b32 v3, v1, v2, vcc",
        "v_cmp_lt_u32 vcc, 1, v0",
        "v_cndmask_b32 v4, v3, 30, vcc",
        "s_waitcnt lgkmcnt(0)",
        "v_mov_b32 v5, s0",
        "v_mov_b32 v6, s1",
        "flat_store_dword v[5:6], v4",
        "s_endpgm",
    ]
    program = parse_program(lines)
    cfg = parse_config([".dims x", ".cws 64, 1, 1", '.arg out, "uint*", uint*, global,'])
    state = RegisterFile.at_entry(cfg)
    for ins in program.instructions[:7]:
        state, _ = step(state, ins)
    v4 = read_reg(state, "v4")
    assert isinstance(v4, Ternary) and isinstance(v4.b, Ternary)
    rng = random.Random(1)
    for lane in (0, 1, 2, 5):
        env = sample_env(cfg, rng)
        env.local_id = (lane, 0, 0)
        expected = 30 if lane > 1 else 20
        assert Evaluator(env).eval(v4) == expected
        assert interpret_asm(program, cfg, env) == [(env.args["out"], 4, expected)]
