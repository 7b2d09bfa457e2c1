import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heisenkern.errors import InputError, StructuralError
from heisenkern.symplectic import (
    J2,
    SkewForm,
    block_diagonal,
    normalize,
    standard_matrix,
    symplectic_basis,
    validate,
)


def random_form(rng, n, spread=1.0):
    """``Q block_diag(a J) Q^T`` with a random orthogonal ``Q`` and known ``a``."""
    alphas = np.sort(np.exp(spread * rng.uniform(-2, 2, n)))
    Q, _ = np.linalg.qr(rng.standard_normal((2 * n, 2 * n)))
    return Q @ block_diagonal(alphas) @ Q.T, alphas


def test_j2_is_already_normal():
    nf = normalize(J2)
    np.testing.assert_allclose(nf.alphas, [1.0])
    np.testing.assert_allclose(nf.basis, np.eye(2), atol=1e-14)


def test_scaled_j2():
    nf = normalize(3 * J2)
    np.testing.assert_allclose(nf.alphas, [3.0])
    assert nf.residual <= 1e-12


def test_symplectic_basis_rescales_pairs():
    B = symplectic_basis(4 * J2)
    np.testing.assert_allclose(np.abs(B), np.eye(2) / 2, atol=1e-14)
    np.testing.assert_allclose(B.T @ (4 * J2) @ B, J2, atol=1e-14)


def test_standard_matrix_round_trip():
    nf = normalize(standard_matrix([2.0, 0.5, 1.0]))
    np.testing.assert_allclose(nf.alphas, [0.5, 1.0, 2.0], atol=1e-14)


def test_odd_dimension_rejected():
    with pytest.raises(StructuralError):
        SkewForm(np.zeros((3, 3)))


def test_asymmetry_rejected():
    A = np.array([[0.0, 1.0], [-1.0 + 1e-6, 0.0]])
    with pytest.raises(InputError):
        SkewForm(A)


def test_degenerate_form():
    A = scipy_block(J2, 1e-16 * J2)
    assert not validate(A, tol=1e-12).ok
    with pytest.raises(InputError):
        normalize(A)


def scipy_block(*blocks):
    n = sum(len(b) for b in blocks)
    out = np.zeros((n, n))
    i = 0
    for b in blocks:
        out[i:i + len(b), i:i + len(b)] = b
        i += len(b)
    return out


def test_small_asymmetry_is_symmetrized():
    A = np.array([[0.0, 1.0], [-1.0 + 1e-14, 0.0]])
    M = SkewForm(A).matrix
    np.testing.assert_array_equal(M, -M.T)
    assert M[0, 1] == pytest.approx(1.0 - 5e-15, abs=1e-16)


def test_nonfinite_rejected():
    with pytest.raises(InputError):
        SkewForm(np.array([[0.0, np.nan], [-np.nan, 0.0]]))


def test_validate_reports_singular_values():
    rep = validate(standard_matrix([1.0, 5.0]))
    assert rep.ok
    assert rep.min_singular_value == pytest.approx(1.0)
    assert rep.norm == pytest.approx(5.0)


def test_repeated_parameters_give_orthonormal_basis():
    rng = np.random.default_rng(3)
    Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    A = Q @ block_diagonal([2.0, 2.0, 2.0]) @ Q.T
    nf = normalize(A)
    np.testing.assert_allclose(nf.alphas, [2.0, 2.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(nf.basis.T @ nf.basis, np.eye(6), atol=1e-12)
    assert nf.residual <= 1e-12


def test_thousand_random_instances():
    rng = np.random.default_rng(20261019)
    worst_res = worst_alpha = 0.0
    for i in range(1000):
        n = 1 + i % 5
        A, alphas = random_form(rng, n)
        nf = normalize(A)
        worst_res = max(worst_res, nf.residual)
        worst_alpha = max(worst_alpha, np.abs(nf.alphas - alphas).max())
    assert worst_res <= 1e-10
    assert worst_alpha <= 1e-10


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_normal_form_reconstructs(n, seed):
    A, alphas = random_form(np.random.default_rng(seed), n)
    nf = normalize(A)
    U = nf.basis
    np.testing.assert_allclose(U.T @ U, np.eye(2 * n), atol=1e-10)
    np.testing.assert_allclose(U.T @ A @ U, block_diagonal(nf.alphas), atol=1e-10)
    assert np.all(np.diff(nf.alphas) >= 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_symplectic_basis_is_symplectic(n, seed):
    A, _ = random_form(np.random.default_rng(seed), n)
    B = symplectic_basis(A)
    np.testing.assert_allclose(B.T @ A @ B, block_diagonal(np.ones(n)), atol=1e-9)


def test_json_and_csv_round_trip(tmp_path):
    form = standard_matrix([1.0, 3.0])
    assert np.array_equal(SkewForm.from_json(form.to_json()).matrix, form.matrix)
    assert np.array_equal(SkewForm.from_csv(form.to_csv()).matrix, form.matrix)
    p = tmp_path / "form.csv"
    p.write_text(form.to_csv())
    assert np.array_equal(SkewForm.load(p).matrix, form.matrix)


def test_from_upper():
    form = SkewForm.from_upper(2, [2.0])
    np.testing.assert_array_equal(form.matrix, 2 * J2)
