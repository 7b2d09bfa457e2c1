"""Hypoelliptic heat kernel on H^n_omega by oscillatory quadrature.

After reduction to an even integrand,

    p_t(v, z) = 2 (2 pi t)^{-(n+1)} int_0^inf cos(2 z s / t)
                 * exp(-(1/t) sum_j (a_j s / 2) coth(a_j s) |v_j|^2)
                 * prod_j a_j s / sinh(a_j s) ds.

The integral is truncated where the envelope ``prod 2 a_j s exp(-a_j s)``
drops below the tolerance and evaluated with :func:`quadrature.gk_batch`
on panels no wider than ``pi t / (8 |z|)``.

Integrated over the whole group this formula has mass 1/2; see
:func:`normalization_check`.  Consumers needing the probability law use
self-normalized expectations (:class:`PolarGrid`).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InputError, NumericError
from .group import GroupContext, GroupElement, dilate, inverse, multiply
from .quadrature import gauss_legendre_panels, gk_batch

log = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-10
SERIES_CUTOFF = 1e-4
_CHUNK_BUDGET = 3_000_000  # points * abscissae per quadrature sweep


@dataclass(frozen=True)
class KernelQuery:
    ctx: GroupContext
    t: float
    g: GroupElement
    rel_tol: float = DEFAULT_REL_TOL

    def __post_init__(self):
        if not (self.t > 0 and math.isfinite(self.t)):
            raise InputError(f"time must be positive, got {self.t}")
        if not 0 < self.rel_tol <= 1e-2:
            raise InputError(f"rel_tol must lie in (0, 1e-2], got {self.rel_tol}")
        if len(self.g.v) != 2 * self.ctx.n:
            raise InputError("group element does not match the context dimension")


def _log_x_over_sinh(x):
    out = np.empty_like(x)
    small = x < SERIES_CUTOFF
    xs = x[small]
    out[small] = -xs * xs / 6.0 + xs ** 4 / 180.0
    xl = x[~small]
    out[~small] = np.log(xl) - (xl - math.log(2.0) + np.log(-np.expm1(-2.0 * xl)))
    return out


def _x_coth(x):
    out = np.empty_like(x)
    small = x < SERIES_CUTOFF
    xs = x[small]
    out[small] = 1.0 + xs * xs / 3.0
    out[~small] = x[~small] / np.tanh(x[~small])
    return out


def truncation_point(alphas, rel_tol):
    """Smallest ``S`` with ``sum_j log(2 a_j S) - a_j S < log(rel_tol) - 20``."""
    alphas = np.asarray(alphas, dtype=float)
    target = math.log(rel_tol) - 20.0

    def g(S):
        return float(np.sum(np.log(2.0 * alphas * S) - alphas * S))

    lo, hi = 1.0 / alphas.min(), 2.0 / alphas.min()
    while g(hi) >= target:
        lo, hi = hi, 2.0 * hi
    if g(lo) < target:
        lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid > 0 and g(mid) < target:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-12 * hi:
            break
    return hi


def _integrand(alphas, t, r2, z):
    """Returns ``f(s)`` with shape ``(P, len(s))`` for blocks ``r2`` (P, n)."""
    alphas = np.asarray(alphas, dtype=float)

    def f(s):
        x = alphas[:, None] * s[None, :]  # (n, M)
        logamp = _log_x_over_sinh(x).sum(axis=0)[None, :]
        logamp = logamp - (0.5 / t) * (r2 @ _x_coth(x))
        return np.cos((2.0 / t) * z[:, None] * s[None, :]) * np.exp(logamp)

    return f


def _prefactor(n, t):
    return 2.0 / (2.0 * math.pi * t) ** (n + 1)


def _block_norms(ctx, pts):
    v = pts[:, :-1]
    return v[:, 0::2] ** 2 + v[:, 1::2] ** 2


def _panel_count(S, t, zmax):
    # panels no wider than pi t / (8 |z|), written without dividing by |z|
    return max(8, math.ceil(8.0 * S * zmax / (math.pi * t)))


def _raw_density(ctx, t, pts, rel_tol, max_panels=200_000):
    """Unclamped kernel values and absolute error estimates for ``pts``."""
    pts = np.asarray(pts, dtype=float).reshape(-1, ctx.dim)
    out = np.empty(len(pts))
    err = np.empty(len(pts))
    if not len(pts):
        return out, err
    S = truncation_point(ctx.alphas, rel_tol)
    pref = _prefactor(ctx.n, t)
    order = np.argsort(np.abs(pts[:, -1]), kind="stable")
    r2_all = _block_norms(ctx, pts)
    start = 0
    while start < len(order):
        zmax = abs(pts[order[min(start + 63, len(order) - 1)], -1])
        panels = _panel_count(S, t, zmax)
        size = max(64, _CHUNK_BUDGET // (15 * panels))
        while True:
            idx = order[start:start + size]
            zmax = abs(pts[idx[-1], -1])
            panels = _panel_count(S, t, zmax)
            if size <= 64 or 15 * panels * len(idx) <= 2 * _CHUNK_BUDGET:
                break
            size //= 2
        f = _integrand(ctx.alphas, t, r2_all[idx], pts[idx, -1])
        val, e, _, _ = gk_batch(f, np.linspace(0.0, S, panels + 1), rel_tol, max_panels)
        out[idx] = pref * val
        err[idx] = pref * e
        start += len(idx)
    return out, err


@lru_cache(maxsize=256)
def _origin_scale(alphas, t, rel_tol):
    ctx = GroupContext(alphas)
    val, _ = _raw_density(ctx, t, np.zeros((1, ctx.dim)), rel_tol)
    return float(val[0])


def density_many(ctx, t, points, rel_tol=DEFAULT_REL_TOL):
    """Kernel values at each row of ``points`` (shape ``(N, 2n + 1)``)."""
    if not (t > 0 and math.isfinite(t)):
        raise InputError(f"time must be positive, got {t}")
    if not 0 < rel_tol <= 1e-2:
        raise InputError(f"rel_tol must lie in (0, 1e-2], got {rel_tol}")
    pts = np.asarray(points, dtype=float)
    shape = pts.shape[:-1]
    if pts.shape[-1] != ctx.dim:
        raise InputError(f"expected trailing dimension {ctx.dim}, got {pts.shape[-1]}")
    if not np.all(np.isfinite(pts)):
        raise InputError("points contain non-finite coordinates")
    val, _ = _raw_density(ctx, t, pts.reshape(-1, ctx.dim), rel_tol)
    neg = val < 0
    if np.any(neg):
        scale = _origin_scale(ctx.alphas, float(t), rel_tol)
        worst = float(val.min())
        if worst < -rel_tol * scale:
            raise NumericError(
                "negative kernel value beyond tolerance", value=worst, scale=scale
            )
        log.debug("clamping %d slightly negative kernel values (min %.3e)", neg.sum(), worst)
        val[neg] = 0.0
    return val.reshape(shape)


def density(q: KernelQuery):
    return float(density_many(q.ctx, q.t, q.g.coords[None, :], q.rel_tol)[0])


def _report(lhs, rhs, tol):
    residual = abs(lhs - rhs) / abs(rhs) if rhs != 0 else abs(lhs - rhs)
    return {
        "lhs": float(lhs), "rhs": float(rhs), "residual": float(residual),
        "tol": float(tol), "pass": bool(residual <= tol),
    }


def scaling_check(ctx, t, lam, g, tol=1e-8, rel_tol=1e-12):
    """``p_t(delta_lam g)`` against ``lam^{-2(n+1)} p_{t/lam^2}(g)``."""
    if not lam > 0:
        raise InputError(f"dilation factor must be positive, got {lam}")
    g = g if isinstance(g, GroupElement) else GroupElement.from_coords(g)
    lhs = density(KernelQuery(ctx, t, dilate(ctx, lam, g), rel_tol))
    rhs = lam ** (-2 * (ctx.n + 1)) * density(KernelQuery(ctx, t / lam ** 2, g, rel_tol))
    return _report(lhs, rhs, tol)


def comparison_check(alpha, t, g, tol=1e-8, rel_tol=1e-12):
    """``alpha * p^alpha_t(x, y, alpha z)`` against ``p^1_t(x, y, z)`` on H^1."""
    g = g if isinstance(g, GroupElement) else GroupElement.from_coords(g)
    if g.v.size != 2:
        raise InputError("comparison identity is stated on the three-dimensional group")
    lifted = GroupElement(g.v, alpha * g.z)
    lhs = alpha * density(KernelQuery(GroupContext([alpha]), t, lifted, rel_tol))
    rhs = density(KernelQuery(GroupContext([1.0]), t, g, rel_tol))
    return _report(lhs, rhs, tol)


# ---------------------------------------------------------------------------
# n = 1 iterated quadrature

def radial_range(t):
    return 12.0 * math.sqrt(t)


def vertical_range(ctx, t):
    # z-marginal decays like exp(-2 pi |z| / (a t)); 8 a t leaves < 1e-20
    return 8.0 * max(ctx.alphas) * t


@dataclass(frozen=True)
class PolarGrid:
    """Tensor quadrature grid on H^1 in coordinates ``(r, theta, z)``.

    ``weights`` already include the Jacobian ``r``; ``kernel`` holds the
    heat-kernel values on the ``(r, z)`` nodes.
    """

    ctx: GroupContext
    t: float
    r: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    w_r: np.ndarray
    w_theta: np.ndarray
    w_z: np.ndarray
    kernel: np.ndarray  # (len(r), len(z))

    @property
    def mass(self):
        return float(2.0 * math.pi * (self.w_r @ self.kernel @ self.w_z))

    def points(self):
        R, TH, Z = np.meshgrid(self.r, self.theta, self.z, indexing="ij")
        return np.stack([R * np.cos(TH), R * np.sin(TH), Z], axis=-1)

    def integrate(self, values):
        """``int values * p_t`` for ``values`` on :meth:`points` (shape (r, theta, z))."""
        return float(np.einsum("i,j,k,ik,ijk->", self.w_r, self.w_theta, self.w_z, self.kernel, values))

    def expectation(self, values):
        """Self-normalized expectation under the probability law ``p_t / mass``."""
        return self.integrate(values) / self.mass


def polar_grid(ctx, t, r_panels=12, z_panels=16, order=12, n_theta=64, rel_tol=1e-11):
    if ctx.n != 1:
        raise InputError("iterated quadrature is implemented for n = 1 only")
    R, Z = radial_range(t), vertical_range(ctx, t)
    r, w_r = gauss_legendre_panels(0.0, R, r_panels, order)
    w_r = w_r * r
    z, w_z = gauss_legendre_panels(-Z, Z, 2 * z_panels, order)
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    w_theta = np.full(n_theta, 2.0 * math.pi / n_theta)
    rr, zz = np.meshgrid(r, z, indexing="ij")
    pts = np.stack([rr.ravel(), np.zeros(rr.size), zz.ravel()], axis=-1)
    ker = density_many(ctx, t, pts, rel_tol).reshape(rr.shape)
    return PolarGrid(ctx, float(t), r, theta, z, w_r, w_theta, w_z, ker)


def normalization_check(ctx, t, tol=1e-6, rel_tol=1e-11):
    """Total mass of the kernel over R^3 by iterated quadrature (n = 1).

    Returns a report with ``value`` and ``pass = |value - 1| <= tol``.
    """
    if ctx.n != 1:
        raise InputError("normalization check is implemented for n = 1 only")
    R, Z = radial_range(t), vertical_range(ctx, t)
    r, w_r = gauss_legendre_panels(0.0, R, 12, 10)
    z, w_z = gauss_legendre_panels(0.0, Z, 16, 10)
    rr, zz = np.meshgrid(r, z, indexing="ij")
    pts = np.stack([rr.ravel(), np.zeros(rr.size), zz.ravel()], axis=-1)
    ker = density_many(ctx, t, pts, rel_tol).reshape(rr.shape)
    if np.any(~np.isfinite(ker)):
        raise NumericError("non-finite kernel values in normalization grid")
    # even in z; tail mass beyond the box is below the quadrature tolerance
    value = 2.0 * 2.0 * math.pi * float((w_r * r) @ ker @ w_z)
    edge = float(np.max(ker[-1, :]) + np.max(ker[:, -1]))
    return {
        "value": value, "target": 1.0, "residual": abs(value - 1.0), "tol": tol,
        "pass": bool(abs(value - 1.0) <= tol), "edge_max": edge,
        "r_max": R, "z_max": Z, "t": t, "alphas": list(ctx.alphas),
    }


def z_marginal(ctx, t, z, r_panels=12, order=10, rel_tol=1e-10):
    """``int_{R^2} p_t(v, z) dv`` at each ``z`` (n = 1)."""
    if ctx.n != 1:
        raise InputError("z_marginal is implemented for n = 1 only")
    z = np.asarray(z, dtype=float)
    r, w_r = gauss_legendre_panels(0.0, radial_range(t), r_panels, order)
    rr, zz = np.meshgrid(r, z, indexing="ij")
    pts = np.stack([rr.ravel(), np.zeros(rr.size), zz.ravel()], axis=-1)
    ker = density_many(ctx, t, pts, rel_tol).reshape(rr.shape)
    return 2.0 * math.pi * ((w_r * r) @ ker)


def density_profile(ctx, t, axis, lo, hi, count, base=None, rel_tol=DEFAULT_REL_TOL):
    """Tabulate the kernel along one coordinate axis.

    ``axis`` is ``"z"`` or ``"x<i>"``/``"y<i>"``; other coordinates are
    taken from ``base`` (the identity by default).  Returns ``(coord, density)``.
    """
    from .calculus import _coord_index

    k = _coord_index(axis, ctx.dim)
    coords = np.linspace(lo, hi, int(count))
    base = np.zeros(ctx.dim) if base is None else np.asarray(base, dtype=float)
    pts = np.tile(base, (len(coords), 1))
    pts[:, k] = coords
    return coords, density_many(ctx, t, pts, rel_tol)


def profile_csv(coords, values):
    lines = ["coord,density"]
    lines += [f"{float(c)!r},{float(v)!r}" for c, v in zip(coords, values)]
    return "\n".join(lines) + "\n"


def semigroup_check(ctx, t, s, g, N=100_000, seed=0, m=1000, rel_tol=1e-9, workers=None):
    """Monte Carlo ``E_{h ~ mu_t}[p_s(h^{-1} g)]`` against ``p_{t+s}(g)``.

    The contract is ``|difference| <= 3 SE``.
    """
    from .sampler import BrownianConfig, sample_measure

    if N < 1000:
        raise InputError("semigroup check needs N >= 1000")
    g = g if isinstance(g, GroupElement) else GroupElement.from_coords(g)
    batch = sample_measure(BrownianConfig(ctx, t, m, N, seed), workers=workers)
    moved = multiply(ctx, inverse(batch.endpoints), g.coords)
    vals = density_many(ctx, s, moved, rel_tol)
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(N))
    target = density(KernelQuery(ctx, t + s, g, rel_tol))
    zscore = (est - target) / se if se > 0 else float("inf")
    return {
        "estimate": est, "std_error": se, "target": target, "z_score": zscore,
        "pass": bool(abs(est - target) <= 3.0 * se), "N": N, "m": m, "seed": seed,
    }


def report_json(report):
    return json.dumps(report, sort_keys=True)
