"""Horizontal gradient and sub-Laplacian of scalar fields.

Derivatives are taken in coordinates first (analytically when the field
provides them, otherwise by central differences) and then contracted with
the left-invariant frame.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CapabilityError, InputError, NumericError
from .group import frame

EPS = np.finfo(float).eps
H1 = EPS ** (1.0 / 3.0)
H2 = EPS ** (1.0 / 4.0)


@dataclass(frozen=True)
class ScalarField:
    """Real function on R^{dim}, vectorized over leading axes.

    ``partials(p)`` returns shape ``(..., dim)`` and ``second_partials(p)``
    shape ``(..., dim, dim)``.  Either may be ``None``; finite differences
    then stand in.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    partials: Optional[Callable[[np.ndarray], np.ndarray]] = None
    second_partials: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "field"
    smoothness: str = "smooth"
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, p):
        return self.eval(np.asarray(p, dtype=float))

    def compose_linear(self, M, name=None):
        """``p -> f(M p)`` for a fixed matrix ``M`` (chain rule applied exactly)."""
        M = np.asarray(M, dtype=float)
        f = self
        grad = (lambda p: f.partials(p @ M.T) @ M) if f.partials else None
        hess = (
            (lambda p: np.einsum("ki,...kl,lj->...ij", M, f.second_partials(p @ M.T), M))
            if f.second_partials
            else None
        )
        return ScalarField(
            lambda p: f.eval(p @ M.T),
            grad,
            hess,
            name=name or f"{f.name}∘M",
            smoothness=f.smoothness,
        )


def _steps(p, base):
    return base * np.maximum(1.0, np.abs(p))


def fd_partials(f, p):
    p = np.asarray(p, dtype=float)
    dim = p.shape[-1]
    h = _steps(p, H1)
    out = np.empty(p.shape)
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = 1.0
        hk = h[..., k:k + 1]
        out[..., k] = (f.eval(p + hk * e) - f.eval(p - hk * e)) / (2.0 * h[..., k])
    return out


def fd_second_partials(f, p):
    p = np.asarray(p, dtype=float)
    dim = p.shape[-1]
    h = _steps(p, H2)
    f0 = f.eval(p)
    out = np.empty(p.shape + (dim,))
    eye = np.eye(dim)
    for i in range(dim):
        hi = h[..., i:i + 1] * eye[i]
        out[..., i, i] = (f.eval(p + hi) - 2.0 * f0 + f.eval(p - hi)) / h[..., i] ** 2
        for j in range(i + 1, dim):
            hj = h[..., j:j + 1] * eye[j]
            val = (
                f.eval(p + hi + hj) - f.eval(p + hi - hj)
                - f.eval(p - hi + hj) + f.eval(p - hi - hj)
            ) / (4.0 * h[..., i] * h[..., j])
            out[..., i, j] = out[..., j, i] = val
    return out


def coordinate_partials(f, p, allow_fd=True):
    if f.partials is not None:
        return np.asarray(f.partials(p), dtype=float)
    if not allow_fd:
        raise CapabilityError(f"{f.name}: no partials and finite differences disabled")
    return fd_partials(f, p)


def coordinate_hessian(f, p, allow_fd=True):
    if f.second_partials is not None:
        return np.asarray(f.second_partials(p), dtype=float)
    if not allow_fd:
        raise CapabilityError(
            f"{f.name}: no second partials and finite differences disabled"
        )
    return fd_second_partials(f, p)


def _horizontal_rows(ctx, p):
    F = frame(ctx, p)
    n = ctx.n
    # reorder rows to (X_1..X_n, Y_1..Y_n)
    order = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    return F[..., order, :]


def horizontal_gradient(ctx, f, g, allow_fd=True):
    """Frame coefficients ``(X_1 f, ..., X_n f, Y_1 f, ..., Y_n f)`` at ``g``."""
    p = np.asarray(g, dtype=float)
    if p.shape[-1] != ctx.dim:
        raise InputError(f"expected trailing dimension {ctx.dim}, got {p.shape[-1]}")
    d = coordinate_partials(f, p, allow_fd)
    out = np.einsum("...kj,...j->...k", _horizontal_rows(ctx, p), d)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"{f.name}: non-finite horizontal derivative")
    return out


def horizontal_gradient_sq(ctx, f, g, allow_fd=True):
    return np.sum(horizontal_gradient(ctx, f, g, allow_fd) ** 2, axis=-1)


def sub_laplacian(ctx, f, g, allow_fd=True):
    """``sum_i X_i^2 f + Y_i^2 f`` at ``g``.

    Each frame field's coefficients are constant along its own flow, so
    ``V(Vf) = c^T (D^2 f) c`` with ``c`` the coefficient row of ``V``.
    """
    p = np.asarray(g, dtype=float)
    if p.shape[-1] != ctx.dim:
        raise InputError(f"expected trailing dimension {ctx.dim}, got {p.shape[-1]}")
    H = coordinate_hessian(f, p, allow_fd)
    C = _horizontal_rows(ctx, p)
    return np.einsum("...ki,...ij,...kj->...", C, H, C)


def product_horizontal_gradient(ctxs, f, p, allow_fd=True):
    """Horizontal gradient on a product of groups, factors concatenated.

    ``p`` has trailing dimension ``sum(ctx.dim)``; the result concatenates
    the per-factor frame coefficients.
    """
    p = np.asarray(p, dtype=float)
    d = coordinate_partials(f, p, allow_fd)
    parts = []
    start = 0
    for ctx in ctxs:
        sl = slice(start, start + ctx.dim)
        rows = _horizontal_rows(ctx, p[..., sl])
        parts.append(np.einsum("...kj,...j->...k", rows, d[..., sl]))
        start += ctx.dim
    return np.concatenate(parts, axis=-1)


def gradient_selfcheck(f, points):
    """Largest deviation between analytic and finite-difference partials.

    Deviation is ``|analytic - fd| / max(1, |analytic|)``; values above
    ``1e-5`` indicate inconsistent partials.
    """
    if f.partials is None:
        raise CapabilityError(f"{f.name}: no analytic partials to check")
    p = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.asarray(f.partials(p), dtype=float)
    d = fd_partials(f, p)
    return float(np.max(np.abs(a - d) / np.maximum(1.0, np.abs(a))))


# ---------------------------------------------------------------------------
# field catalog

def _coord_index(label, dim):
    n = (dim - 1) // 2
    if label == "z":
        return dim - 1
    m = re.fullmatch(r"([xy])(\d+)", label)
    if not m:
        raise InputError(f"unknown coordinate {label!r}")
    i = int(m.group(2))
    if not 1 <= i <= n:
        raise InputError(f"coordinate {label!r} out of range for n = {n}")
    return 2 * (i - 1) + (m.group(1) == "y")


def coordinate_field(dim, label):
    k = _coord_index(label, dim)
    e = np.zeros(dim)
    e[k] = 1.0
    return ScalarField(
        lambda p: p[..., k].copy(),
        lambda p: np.broadcast_to(e, p.shape).copy(),
        lambda p: np.zeros(p.shape + (dim,)),
        name=f"coord:{label}",
    )


def constant_field(dim, c=1.0):
    return ScalarField(
        lambda p: np.full(p.shape[:-1], float(c)),
        lambda p: np.zeros(p.shape),
        lambda p: np.zeros(p.shape + (dim,)),
        name=f"const:{c}",
    )


def exp_field(dim, lam, coord="x1"):
    """``exp(lam * coord / 2)``; saturates the Gaussian log-Sobolev bound."""
    k = _coord_index(coord, dim)
    half = 0.5 * lam

    def ev(p):
        return np.exp(half * p[..., k])

    def grad(p):
        out = np.zeros(p.shape)
        out[..., k] = half * ev(p)
        return out

    def hess(p):
        out = np.zeros(p.shape + (dim,))
        out[..., k, k] = half * half * ev(p)
        return out

    name = f"exp_x1:{lam:g}" if coord == "x1" else f"exp_{coord}:{lam:g}"
    return ScalarField(ev, grad, hess, name=name)


def linear_z_field(dim, eps):
    """``1 + eps * z``."""
    grad_row = np.zeros(dim)
    grad_row[-1] = eps
    return ScalarField(
        lambda p: 1.0 + eps * p[..., -1],
        lambda p: np.broadcast_to(grad_row, p.shape).copy(),
        lambda p: np.zeros(p.shape + (dim,)),
        name=f"linear_z:{eps:g}",
    )


def polynomial_field(dim, terms, name="poly"):
    """Sum of ``coef * prod_k p_k ** e_k`` for ``(coef, exponents)`` in ``terms``."""
    coefs = np.array([c for c, _ in terms], dtype=float)
    E = np.array([e for _, e in terms], dtype=int).reshape(len(terms), dim)

    def _mono(p, E_):
        # p (..., dim), E_ (T, dim) with possibly negative entries meaning zero term
        valid = np.all(E_ >= 0, axis=1)
        vals = np.prod(p[..., None, :] ** np.maximum(E_, 0), axis=-1)
        return vals * valid

    def ev(p):
        return _mono(p, E) @ coefs

    def grad(p):
        out = np.empty(p.shape)
        for k in range(dim):
            Ek = E.copy()
            Ek[:, k] -= 1
            out[..., k] = _mono(p, Ek) @ (coefs * E[:, k])
        return out

    def hess(p):
        out = np.empty(p.shape + (dim,))
        for i in range(dim):
            for j in range(i, dim):
                Eij = E.copy()
                Eij[:, i] -= 1
                Eij[:, j] -= 1
                fac = E[:, i] * (E[:, j] - (i == j))
                out[..., i, j] = out[..., j, i] = _mono(p, Eij) @ (coefs * fac)
        return out

    return ScalarField(ev, grad, hess, name=name)


def parse_polynomial(dim, expr):
    """Parse ``"2*x1^2*z + 0.5*y1 - 3"`` into a polynomial field."""
    terms = []
    text = expr.replace(" ", "").replace("-", "+-")
    for raw in filter(None, text.split("+")):
        coef = 1.0
        exps = [0] * dim
        for factor in raw.split("*"):
            if factor in ("", "-"):
                coef = -coef if factor == "-" else coef
                continue
            sign = -1.0 if factor.startswith("-") else 1.0
            factor = factor.lstrip("-")
            coef *= sign
            base, _, power = factor.partition("^")
            try:
                coef *= float(base)
                continue
            except ValueError:
                pass
            exps[_coord_index(base, dim)] += int(power or 1)
        terms.append((coef, exps))
    if not terms:
        raise InputError(f"empty polynomial {expr!r}")
    return polynomial_field(dim, terms, name=f"poly:{expr}")


def bump_field(dim, r):
    """Compactly supported ``exp(-1 / (1 - |p|^2 / r^2))`` on the ball of radius ``r``."""
    if not r > 0:
        raise InputError("bump radius must be positive")
    r2 = r * r

    def ev(p):
        u = 1.0 - np.sum(p * p, axis=-1) / r2
        out = np.zeros(u.shape)
        inside = u > 0
        out[inside] = np.exp(-1.0 / u[inside])
        return out

    def grad(p):
        u = 1.0 - np.sum(p * p, axis=-1) / r2
        f = ev(p)
        fac = np.zeros(u.shape)
        inside = u > 0
        fac[inside] = f[inside] / u[inside] ** 2 * (-2.0 / r2)
        return fac[..., None] * p

    return ScalarField(ev, grad, None, name=f"bump:{r:g}")


def catalog_field(dim, name):
    """Resolve a catalog name such as ``"exp_x1:1"`` or ``"poly:x1*y1*z"``."""
    kind, _, arg = name.partition(":")
    try:
        if kind == "coord":
            return coordinate_field(dim, arg)
        if kind == "exp_x1":
            return exp_field(dim, float(arg))
        if kind == "linear_z":
            return linear_z_field(dim, float(arg))
        if kind == "poly":
            return parse_polynomial(dim, arg)
        if kind == "bump":
            return bump_field(dim, float(arg))
        if kind == "const":
            return constant_field(dim, float(arg or 1.0))
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad field argument in {name!r}: {exc}") from exc
    raise InputError(f"unknown field {name!r}")
