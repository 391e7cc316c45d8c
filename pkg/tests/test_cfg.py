import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcndecomp.asm import parse_program
from gcndecomp.cfg import COND, END, JUMP, annotate_exec, build_cfg, cfg_to_dot
from gcndecomp.errors import GraphConstructionError

from gen_structured import generate


def edges(cfg):
    return sorted((e.src, e.dst, e.kind) for e in cfg.edges)


def test_straight_line_single_block():
    cfg = build_cfg(parse_program(["s_mov_b32 s0, 1", "v_mov_b32 v1, s0", "s_endpgm"]))
    assert len(cfg.blocks) == 1 and cfg.edges == []
    assert cfg.blocks[0].terminator == END


def test_if_template_shape():
    cfg = build_cfg(parse_program([
        "s_cmp_eq_u32 s6, 0",
        "s_cbranch_scc1 .L1",
        "v_mov_b32 v1, 1",
        ".L1:",
        "s_endpgm",
    ]))
    assert len(cfg.blocks) == 3
    assert edges(cfg) == [(0, 1, "not_taken"), (0, 2, "taken"), (1, 2, "fallthrough")]
    assert cfg.blocks[0].terminator == COND


def test_diamond_shape():
    cfg = build_cfg(parse_program([
        "s_cmp_eq_u32 s6, 0",
        "s_cbranch_scc1 .Lelse",
        "v_mov_b32 v1, 1",
        "s_branch .Lend",
        ".Lelse:",
        "v_mov_b32 v1, 2",
        ".Lend:",
        "s_endpgm",
    ]))
    assert len(cfg.blocks) == 4
    assert edges(cfg) == [(0, 1, "not_taken"), (0, 2, "taken"), (1, 3, "jump"), (2, 3, "fallthrough")]
    assert cfg.blocks[1].terminator == JUMP
    assert cfg.blocks[2].labels == (".Lelse",)


def test_save_annotation():
    cfg = build_cfg(parse_program(["v_cmp_gt_u32 vcc, 5, v0", "s_and_saveexec_b64 s[0:1], vcc", "s_endpgm"]))
    (op,) = cfg.blocks[0].exec_ops
    assert op.kind == "save" and op.saved == ("s0", "s1") and op.condition.name == "vcc"


def test_no_exec_writes():
    cfg = build_cfg(parse_program(["s_mov_b32 s0, 1", "s_endpgm"]))
    assert annotate_exec(cfg.blocks[0]) == []


def test_restore_pairs_with_save():
    lines = [
        "v_cmp_gt_u32 vcc, 5, v0",
        "s_and_saveexec_b64 s[0:1], vcc",
        "s_cbranch_execz .L1",
        "v_mov_b32 v1, 1",
        ".L1:",
        "s_mov_b64 exec, s[0:1]",
        "s_endpgm",
    ]
    cfg = build_cfg(parse_program(lines))
    ops = [(b.id, op) for b in cfg.blocks for op in b.exec_ops]
    kinds = [op.kind for _, op in ops]
    assert kinds == ["save", "restore"]
    assert ops[0][1].saved == ops[1][1].saved == ("s0", "s1")
    # the restore sits in the join block, after the guarded body
    assert ops[1][0] == 2


def test_dead_block_flagged():
    cfg = build_cfg(parse_program(["s_branch .L1", "v_mov_b32 v1, 1", ".L1:", "s_endpgm"]))
    assert [b.dead for b in cfg.blocks] == [False, True, False]


def test_branch_to_missing_label():
    with pytest.raises(GraphConstructionError):
        build_cfg(parse_program(["s_branch .Lnowhere", "s_endpgm"]))


def test_dot_output():
    dot = cfg_to_dot(build_cfg(parse_program(["s_endpgm"])), "k")
    assert dot.startswith('digraph "k"') and "s_endpgm" in dot


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32))
def test_blocks_partition_stream(seed):
    _, lines = generate(random.Random(seed), max_blocks=60)
    program = parse_program(lines)
    cfg = build_cfg(program)
    flat = [ins for b in cfg.blocks for ins in b.instructions]
    assert flat == program.instructions
    reachable = {cfg.entry}
    stack = [cfg.entry]
    while stack:
        for s in cfg.successors(stack.pop()):
            if s not in reachable:
                reachable.add(s)
                stack.append(s)
    for b in cfg.blocks:
        assert b.dead == (b.id not in reachable)
