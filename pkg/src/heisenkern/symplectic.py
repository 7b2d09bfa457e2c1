"""Skew-symmetric bilinear forms on R^{2n} and their orthogonal normal form.

A nondegenerate skew form ``omega(u, v) = u^T A v`` can be rotated by an
orthogonal matrix ``U`` into ``block_diag(a_1 J, ..., a_n J)`` with
``J = [[0, 1], [-1, 0]]`` and ``0 < a_1 <= ... <= a_n``.  The ``a_j`` are the
parameters of a non-isotropic Heisenberg group.  We obtain ``U`` from the
eigenvectors of the Hermitian matrix ``iA``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import InputError, NumericError, StructuralError

J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])

ASYMMETRY_TOL = 1e-12
NONDEGENERACY_TOL = 1e-12
CLUSTER_GAP = 1e-8


@dataclass(frozen=True)
class SkewForm:
    """Dense skew-symmetric matrix; only the strict upper triangle is kept.

    ``SkewForm(A)`` accepts a square matrix whose asymmetry
    ``max|A + A^T|`` is at most ``1e-12 * ||A||`` and skew-symmetrizes it.
    """

    upper: np.ndarray = field(repr=False)
    dim: int

    def __init__(self, matrix):
        A = np.asarray(matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InputError(f"expected a square matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise InputError("matrix has non-finite entries")
        dim = A.shape[0]
        if dim == 0 or dim % 2:
            raise StructuralError(f"dimension must be even and positive, got {dim}")
        scale = np.abs(A).max()
        asym = np.abs(A + A.T).max()
        if asym > ASYMMETRY_TOL * scale:
            raise InputError(
                f"matrix is not skew-symmetric: max|A + A^T| = {asym:.3e}"
            )
        iu = np.triu_indices(dim, k=1)
        upper = 0.5 * (A - A.T)[iu]
        upper.setflags(write=False)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "dim", dim)

    @classmethod
    def from_upper(cls, dim, upper):
        dim = int(dim)
        if dim <= 0 or dim % 2:
            raise StructuralError(f"dimension must be even and positive, got {dim}")
        upper = np.asarray(upper, dtype=float).ravel()
        if upper.size != dim * (dim - 1) // 2:
            raise InputError(
                f"expected {dim * (dim - 1) // 2} upper entries, got {upper.size}"
            )
        A = np.zeros((dim, dim))
        A[np.triu_indices(dim, k=1)] = upper
        return cls(A - A.T)

    @property
    def matrix(self):
        A = np.zeros((self.dim, self.dim))
        A[np.triu_indices(self.dim, k=1)] = self.upper
        return A - A.T

    @property
    def n(self):
        return self.dim // 2

    def __call__(self, u, v):
        return np.asarray(u) @ self.matrix @ np.asarray(v)

    # -- I/O ---------------------------------------------------------------
    def to_json(self):
        return json.dumps({"dim": self.dim, "upper": [float(x) for x in self.upper]})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls.from_upper(data["dim"], data["upper"])

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in self.matrix:
            writer.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        return cls(np.array([[float(x) for x in r] for r in rows]))

    @classmethod
    def load(cls, path):
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".json":
            return cls.from_json(text)
        return cls.from_csv(text)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    min_singular_value: float
    norm: float


@dataclass(frozen=True)
class NormalForm:
    """``alphas`` ascending; columns of ``basis`` are ``(u_1, v_1, ..., u_n, v_n)``."""

    alphas: np.ndarray
    basis: np.ndarray
    residual: float


def _as_form(A):
    return A if isinstance(A, SkewForm) else SkewForm(A)


def validate(A, tol=NONDEGENERACY_TOL):
    """Check nondegeneracy: smallest singular value at least ``tol * ||A||_2``."""
    form = _as_form(A)
    s = np.linalg.svd(form.matrix, compute_uv=False)
    norm, smin = float(s[0]), float(s[-1])
    ok = smin > 0.0 and smin >= tol * norm
    return ValidationReport(ok=ok, min_singular_value=smin, norm=norm)


def block_diagonal(alphas):
    alphas = np.asarray(alphas, dtype=float)
    return scipy.linalg.block_diag(*[a * J2 for a in alphas]) if alphas.size else np.zeros((0, 0))


def standard_matrix(alphas):
    """``block_diag(a_1 J, ..., a_n J)`` with the parameters sorted ascending."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    if alphas.ndim != 1 or alphas.size == 0:
        raise InputError("alphas must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(alphas)) or np.any(alphas <= 0):
        raise InputError(f"alphas must be finite and positive, got {alphas}")
    return SkewForm(block_diagonal(np.sort(alphas)))


def _fix_phase(w, tol):
    k = int(np.argmax(np.abs(w) > tol))
    return w * (np.conj(w[k]) / abs(w[k]))


def _canonical_cluster(W):
    # basis-independent orthonormal frame for span(W): pivoted QR of the projector
    P = W @ W.conj().T
    Q, _, _ = scipy.linalg.qr(P, pivoting=True)
    return Q[:, : W.shape[1]]


def normalize(A, tol=NONDEGENERACY_TOL):
    """Orthogonal normal form of a nondegenerate skew form.

    Raises
    ------
    InputError
        if the form is degenerate at tolerance ``tol``.
    NumericError
        if the reconstruction residual exceeds ``1e-8 * ||A||``.
    """
    form = _as_form(A)
    report = validate(form, tol)
    if not report.ok:
        raise InputError(
            f"degenerate form: min singular value {report.min_singular_value:.3e}"
        )
    M = form.matrix
    n = form.n
    try:
        evals, evecs = np.linalg.eigh(1j * M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericError(f"eigensolver failed: {exc}") from exc

    # eigenvalue -a of iA  <=>  A w = i a w; these come first in ascending order
    alphas = -evals[:n][::-1]
    W = evecs[:, :n][:, ::-1]

    start = 0
    phase_tol = 1e-10
    while start < n:
        stop = start + 1
        while stop < n and alphas[stop] - alphas[stop - 1] < CLUSTER_GAP * max(1.0, report.norm):
            stop += 1
        if stop - start > 1:
            W[:, start:stop] = _canonical_cluster(W[:, start:stop])
        start = stop
    for j in range(n):
        W[:, j] = _fix_phase(W[:, j], phase_tol)

    U = np.empty((2 * n, 2 * n))
    U[:, 0::2] = np.sqrt(2.0) * W.real
    U[:, 1::2] = np.sqrt(2.0) * W.imag
    residual = float(np.abs(U.T @ M @ U - block_diagonal(alphas)).max())
    orth = float(np.abs(U.T @ U - np.eye(2 * n)).max())
    if residual > 1e-8 * max(1.0, report.norm) or orth > 1e-8:
        raise NumericError(
            "normal form reconstruction failed", residual=residual, orthogonality=orth
        )
    alphas = alphas.copy()
    alphas.setflags(write=False)
    U.setflags(write=False)
    return NormalForm(alphas=alphas, basis=U, residual=residual)


def symplectic_basis(A, tol=NONDEGENERACY_TOL):
    """Columns ``(p_1, q_1, ..., p_n, q_n)`` with ``omega(p_i, q_j) = delta_ij``.

    Each pair is the normal-form pair rescaled by ``1/sqrt(a_j)``, so
    ``|p_j| = |q_j|`` and pairs are mutually orthogonal.
    """
    nf = normalize(A, tol)
    scale = np.repeat(1.0 / np.sqrt(nf.alphas), 2)
    return nf.basis * scale
