import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expfit.expr import (
    BinOp,
    Call,
    ExprError,
    ExprSyntaxError,
    Neg,
    Num,
    Var,
    Vec,
    check_variables,
    evaluate,
    free_variables,
    parse_expr,
    parse_field,
    shape_of,
    to_text,
)

PTS = np.array([[0.1, 0.2, 0.3], [0.5, -0.25, 1.0], [2.0, 0.75, -0.5]])


@pytest.mark.parametrize("text,expected", [
    ("1 + 2*3", lambda x, y, z: 7.0),
    ("2^3^2", lambda x, y, z: 512.0),
    ("-x^2", lambda x, y, z: -x ** 2),
    ("x - y - z", lambda x, y, z: x - y - z),
    ("x / y / 2", lambda x, y, z: x / y / 2),
    ("sin(pi*x) * cos(y)", lambda x, y, z: np.sin(np.pi * x) * np.cos(y)),
    ("exp(-abs(z)) + sqrt(x)", lambda x, y, z: np.exp(-abs(z)) + np.sqrt(x)),
    ("max(x, y) - min(x, 1e-1)", lambda x, y, z: np.maximum(x, y) - np.minimum(x, 0.1)),
    ("1.5e2 * .5", lambda x, y, z: 75.0),
])
def test_evaluate_matches_numpy(text, expected):
    got = evaluate(parse_expr(text), PTS)
    x, y, z = PTS.T
    with np.errstate(all="ignore"):
        want = np.broadcast_to(expected(x, y, z), (len(PTS),))
    np.testing.assert_allclose(got, want, rtol=1e-15)


def test_vector_and_matrix_literals():
    node = parse_field("[[1 + x, 0.5], [0.5, y]]")
    assert shape_of(node) == (2, 2)
    vals = evaluate(node, PTS[:, :2])
    assert vals.shape == (3, 2, 2)
    assert vals[1, 0, 0] == pytest.approx(1.5)
    assert shape_of(parse_field("(x, y, 1)")) == (3,)


def test_parenthesised_scalar_is_not_a_vector():
    assert shape_of(parse_field("(x + 1)")) == ()


def test_ragged_literal_rejected():
    with pytest.raises(ExprError):
        shape_of(parse_field("[[1, 2], [3]]"))


@pytest.mark.parametrize("text,offset", [("2*(x", 4), ("1 +", 3), ("x y", 2), ("3 $ 4", 2)])
def test_syntax_error_offsets(text, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr(text)
    assert info.value.offset == offset


def test_unknown_function_and_arity():
    with pytest.raises(ExprError):
        parse_expr("tanh(x)")
    with pytest.raises(ExprError):
        parse_expr("max(x)")


def test_variable_checks():
    node = parse_expr("x + z")
    assert free_variables(node) == {"x", "z"}
    check_variables(node, 3)
    with pytest.raises(ExprError, match="'z'"):
        check_variables(node, 2)
    assert free_variables(parse_expr("pi * 2")) == set()


# --- round trip -----------------------------------------------------------------

leaves = st.one_of(
    st.floats(min_value=-1e3, max_value=1e3, allow_nan=False).map(lambda v: Num(abs(v))),
    st.sampled_from(["x", "y", "z", "pi"]).map(Var),
)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda t: BinOp(t[0], t[1], t[2])),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "abs"]), children).map(
            lambda t: Call(t[0], (t[1],))),
        st.tuples(st.sampled_from(["min", "max"]), children, children).map(
            lambda t: Call(t[0], (t[1], t[2]))),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(trees)
def test_to_text_round_trip(node):
    text = to_text(node)
    back = parse_field(text)
    assert to_text(back) == text
    with np.errstate(all="ignore"):
        a, b = evaluate(node, PTS), evaluate(back, PTS)
    np.testing.assert_array_equal(np.isnan(a), np.isnan(b))
    np.testing.assert_allclose(a[~np.isnan(a)], b[~np.isnan(b)], rtol=0, atol=0)


@settings(max_examples=50, deadline=None)
@given(st.lists(trees, min_size=2, max_size=3))
def test_vector_round_trip(items):
    node = Vec(tuple(items))
    assert to_text(parse_field(to_text(node))) == to_text(node)
