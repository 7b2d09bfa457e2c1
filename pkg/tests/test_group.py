import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heisenkern.errors import InputError
from heisenkern.group import (
    AlgebraElement,
    GroupContext,
    GroupElement,
    dilate,
    exp,
    frame,
    identity,
    inverse,
    lie_bracket,
    log,
    map_F,
    multiply,
    omega,
    product_multiply,
    project_pi,
    project_pi_omega,
)

H1 = GroupContext([1.0])
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def points(n, count=1):
    return st.lists(finite, min_size=(2 * n + 1) * count, max_size=(2 * n + 1) * count).map(
        lambda xs: np.array(xs).reshape(count, 2 * n + 1))


alpha_lists = st.lists(st.floats(0.1, 5.0), min_size=1, max_size=3)


def test_omega_example():
    ctx = GroupContext([2.0])
    assert omega(ctx, [1.0, 0.0], [0.0, -1.0]) == -2.0


def test_multiply_example():
    g = multiply(H1, GroupElement([1.0, 0.0], 0.0), GroupElement([0.0, 1.0], 0.5))
    assert g == GroupElement([1.0, 1.0], 1.0)


def test_identity_and_inverse():
    g = GroupElement([0.3, -1.2], 4.0)
    assert multiply(H1, g, inverse(g)) == identity(H1)
    assert multiply(H1, identity(H1), g) == g


def test_frame_example():
    F = frame(H1, [2.0, 4.0, 0.0])
    np.testing.assert_array_equal(F[0], [1.0, 0.0, -2.0])
    np.testing.assert_array_equal(F[1], [0.0, 1.0, 1.0])
    np.testing.assert_array_equal(F[2], [0.0, 0.0, 1.0])


def test_map_F_example():
    np.testing.assert_array_equal(map_F(3.0, [1.0, 2.0, 5.0]), [1.0, 2.0, 15.0])


def test_map_F_rejects_higher_rank():
    with pytest.raises(InputError):
        map_F(2.0, np.zeros(5))


def test_project_pi_example():
    ctx = GroupContext([1.0, 3.0])
    out = project_pi(ctx, [np.array([1.0, 0.0, 1.0]), np.array([0.0, 1.0, 2.0])])
    np.testing.assert_array_equal(out, [1.0, 0.0, 0.0, 1.0, 3.0])


def test_project_pi_omega_example():
    ctx = GroupContext([1.0, 3.0])
    out = project_pi_omega(ctx, [np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, 2.0])])
    np.testing.assert_array_equal(out, [0.0, 0.0, 0.0, 0.0, 7.0])


def test_unsorted_parameters_follow_caller_order():
    ctx = GroupContext([3.0, 1.0])
    assert ctx.alphas == (1.0, 3.0)
    out = project_pi_omega(ctx, [np.array([1.0, 2.0, 1.0]), np.array([5.0, 6.0, 2.0])],
                           original_alphas=[3.0, 1.0])
    # the alpha = 1 factor lands in the first block
    np.testing.assert_array_equal(out, [5.0, 6.0, 1.0, 2.0, 5.0])


def test_dilation_rejects_nonpositive():
    with pytest.raises(InputError):
        dilate(H1, 0.0, np.zeros(3))


def test_exp_log_are_coordinate_identity():
    X = AlgebraElement([1.0, 2.0], 3.0)
    assert log(exp(X)).coords.tolist() == [1.0, 2.0, 3.0]


def test_bracket_is_vertical():
    b = lie_bracket(H1, AlgebraElement([1.0, 0.0]), AlgebraElement([0.0, 1.0]))
    np.testing.assert_array_equal(b.coords, [0.0, 0.0, 1.0])


def test_shape_mismatch():
    with pytest.raises(InputError):
        multiply(H1, np.zeros(5), np.zeros(5))


def test_bad_alphas():
    for bad in ([], [0.0], [-1.0], [np.inf]):
        with pytest.raises(InputError):
            GroupContext(bad)


@settings(max_examples=200, deadline=None)
@given(alpha_lists, st.data())
def test_associativity(alphas, data):
    ctx = GroupContext(alphas)
    a, b, c = data.draw(points(ctx.n, 3))
    lhs = multiply(ctx, multiply(ctx, a, b), c)
    rhs = multiply(ctx, a, multiply(ctx, b, c))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(alpha_lists, st.floats(0.1, 10.0), st.data())
def test_dilation_is_automorphism(alphas, lam, data):
    ctx = GroupContext(alphas)
    a, b = data.draw(points(ctx.n, 2))
    lhs = dilate(ctx, lam, multiply(ctx, a, b))
    rhs = multiply(ctx, dilate(ctx, lam, a), dilate(ctx, lam, b))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-8)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 5.0), st.data())
def test_map_F_is_homomorphism(alpha, data):
    a, b = data.draw(points(1, 2))
    lhs = map_F(alpha, multiply(H1, a, b))
    rhs = multiply(GroupContext([alpha]), map_F(alpha, a), map_F(alpha, b))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(alpha_lists, st.sampled_from(["pi", "pi_omega"]), st.data())
def test_projections_are_homomorphisms(alphas, variant, data):
    ctx = GroupContext(alphas)
    fctxs = [GroupContext([a if variant == "pi" else 1.0]) for a in alphas]
    gs = list(data.draw(points(1, len(alphas))))
    hs = list(data.draw(points(1, len(alphas))))

    def proj(factors):
        if variant == "pi":
            return project_pi(ctx, factors)
        return project_pi_omega(ctx, factors, alphas)

    lhs = proj(product_multiply(fctxs, gs, hs))
    rhs = multiply(ctx, proj(gs), proj(hs))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(alpha_lists, st.data())
def test_bracket_antisymmetric(alphas, data):
    ctx = GroupContext(alphas)
    a, b = data.draw(points(ctx.n, 2))
    np.testing.assert_allclose(lie_bracket(ctx, a, b), -lie_bracket(ctx, b, a), atol=1e-12)


def test_json_round_trip():
    ctx = GroupContext([2.0, 0.5])
    assert GroupContext.from_json(ctx.to_json()) == ctx
    g = GroupElement([1.0, 2.0, 3.0, 4.0], 0.1)
    assert GroupElement.from_json(g.to_json()) == g
