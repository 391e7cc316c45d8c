import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gcndecomp.asm import parse_config
from gcndecomp.dtypes import (
    B32,
    DOUBLE,
    INT,
    UINT,
    ULONG,
    UNKNOWN,
    DataType,
    arg_signature,
    c_type_name,
    concrete,
    type_from_suffix,
    types_from_config,
    unify,
)

SCALARS = (
    [DataType(b, w) for b in ("int", "uint", "binary") for w in (8, 16, 24, 32, 64)]
    + [DataType("float", w) for w in (16, 32, 64)]
    + [UNKNOWN]
)
types = st.sampled_from(SCALARS)


def test_suffix_table():
    assert type_from_suffix("u32") == UINT
    assert type_from_suffix("f64") == DOUBLE
    assert type_from_suffix("b32") == B32
    assert type_from_suffix("i24") == DataType("int", 24)
    assert type_from_suffix("x32") == UNKNOWN
    assert type_from_suffix("f8") == UNKNOWN


def test_listing_3_argument_types():
    env = types_from_config(parse_config(['.arg data, "int*", int*, global,', '.arg x, "int", int']).args)
    assert env.args["data"] == INT.pointer_to("global")
    assert env.args["x"] == INT
    cfg = parse_config(['.arg data, "int*", int*, global,', '.arg x, "int", int'])
    assert [arg_signature(a, env) for a in cfg.args] == ["__global int *data", "int x"]


def test_no_args_empty_env():
    assert types_from_config([]).args == {}


def test_unify_examples():
    assert unify(UNKNOWN, UINT) == UINT
    assert unify(B32, INT) == INT
    diags = []
    assert unify(UINT, ULONG, diags) == ULONG
    assert diags


def expected_unify(a, b):
    """The merge rules written out case by case."""
    if a == b:
        return a, False
    if a.base == "unknown":
        return b, False
    if b.base == "unknown":
        return a, False
    if a.width != b.width:
        return (a if a.width > b.width else b), True
    if "binary" in (a.base, b.base):
        return (b if a.base == "binary" else a), False
    return a, True


@pytest.mark.parametrize("a, b", list(itertools.product(SCALARS, SCALARS)))
def test_unify_table(a, b):
    diags = []
    got = unify(a, b, diags)
    want, noted = expected_unify(a, b)
    assert got == want
    assert bool(diags) == noted


@given(types)
def test_unify_idempotent(a):
    assert unify(a, a) == a


@given(types)
def test_unknown_absorbed(a):
    assert unify(UNKNOWN, a) == a
    assert unify(a, UNKNOWN) == a


@given(types)
def test_concrete_types_render(a):
    c = concrete(a)
    assert c.base not in ("binary", "unknown")
    assert c.bits != 24
    assert "binary" not in c_type_name(a) and "unknown" not in c_type_name(a)


def test_pointer_renders_element_width():
    assert c_type_name(INT.pointer_to("global")) == "__global int *"
    assert c_type_name(DataType("float", 32, 1, "constant")) == "__constant float *"
