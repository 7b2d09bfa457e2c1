"""Upper bounds on the Carnot-Caratheodory distance from the identity.

A horizontal path is stored by its breakpoints ``A_0 = 0, A_1, .., A_K`` in
R^{2n}; on a piecewise-linear path the vertical coordinate is determined
and equals ``(1/2) sum_k omega(A_k, A_{k+1})`` exactly.  The distance
estimate minimizes the discrete energy ``K sum |A_{k+1} - A_k|^2`` with
``A_K`` fixed and the vertical gain pinned to the target by an augmented
Lagrangian.  The square root of the minimal energy bounds the length of
the best path from above, and bounds ``d_CC`` from above as ``K`` grows.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InputError, NonConvergenceError
from .group import GroupContext, GroupElement, dilate, inverse

PENALTY_START = 10.0
PENALTY_GROWTH = 10.0
ARMIJO_C = 1e-4
GRAD_TOL = 1e-8
MAX_INNER = 10_000
MAX_OUTER = 40
STARTS = 8


def _omega_matrix(ctx):
    n = ctx.n
    W = np.zeros((2 * n, 2 * n))
    for i, a in enumerate(ctx.alphas):
        W[2 * i, 2 * i + 1] = a
        W[2 * i + 1, 2 * i] = -a
    return W


@dataclass(frozen=True)
class HorizontalPath:
    ctx: GroupContext
    breakpoints: np.ndarray  # (K + 1, 2n), first row zero

    def __post_init__(self):
        A = np.asarray(self.breakpoints, dtype=float)
        if A.ndim != 2 or A.shape[1] != 2 * self.ctx.n or A.shape[0] < 2:
            raise InputError(f"breakpoints must have shape (K + 1, {2 * self.ctx.n})")
        if np.any(A[0] != 0.0):
            raise InputError("a horizontal path from the identity starts at A_0 = 0")
        object.__setattr__(self, "breakpoints", A)

    @property
    def K(self):
        return len(self.breakpoints) - 1

    def holonomy(self):
        """Accumulated vertical coordinate after each breakpoint (length K + 1)."""
        A = self.breakpoints
        W = _omega_matrix(self.ctx)
        seg = 0.5 * np.einsum("ki,ij,kj->k", A[:-1], W, A[1:])
        return np.concatenate([[0.0], np.cumsum(seg)])

    def endpoint(self):
        return GroupElement(self.breakpoints[-1], float(self.holonomy()[-1]))

    def to_csv(self):
        n = self.ctx.n
        header = ["k"] + [f"{c}{i}" for i in range(1, n + 1) for c in "xy"] + ["a"]
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for k, (row, a) in enumerate(zip(self.breakpoints, self.holonomy())):
            buf.write(",".join([str(k)] + [repr(float(x)) for x in row] + [repr(float(a))]) + "\n")
        return buf.getvalue()


def vertical_gain(path):
    return float(path.holonomy()[-1])


def path_length(path):
    """``(length, energy)`` with ``energy = K sum |A_{k+1} - A_k|^2``."""
    d = np.diff(path.breakpoints, axis=0)
    seg = np.sqrt(np.sum(d * d, axis=1))
    return float(seg.sum()), float(path.K * np.sum(d * d))


# ---------------------------------------------------------------------------
# optimizer

@dataclass(frozen=True)
class OptimizerConfig:
    starts: int = STARTS
    penalty: float = PENALTY_START
    growth: float = PENALTY_GROWTH
    armijo: float = ARMIJO_C
    grad_tol: float = GRAD_TOL
    max_inner: int = MAX_INNER
    max_outer: int = MAX_OUTER
    residual_tol: float = 1e-8  # relative to the target scale


@dataclass
class DistanceResult:
    d_hat: float
    path: HorizontalPath
    constraint_residual: float
    energy: float
    starts: int
    best_start: int
    K: int
    plane: int
    per_start: list = field(default_factory=list)

    def report(self):
        return {
            "d_hat": self.d_hat, "constraint_residual": self.constraint_residual,
            "starts": self.starts, "K": self.K, "best_start": self.best_start,
            "plane": self.plane, "energy": self.energy,
        }

    def to_json(self):
        return json.dumps(self.report(), sort_keys=True)


class _Problem:
    """Energy and holonomy of the free breakpoints ``A_1 .. A_{K-1}``."""

    def __init__(self, ctx, v, z, K):
        self.W = _omega_matrix(ctx)
        self.v, self.z, self.K = v, z, K
        # energy Hessian: 2K times the Dirichlet Laplacian, one copy per coordinate
        T = 2.0 * np.eye(K - 1) - np.eye(K - 1, k=1) - np.eye(K - 1, k=-1)
        self.chol = cho_factor(2.0 * K * T)

    def full(self, X):
        return np.vstack([np.zeros(len(self.v)), X, self.v])

    def energy(self, X):
        d = np.diff(self.full(X), axis=0)
        return self.K * float(np.sum(d * d))

    def energy_grad(self, X):
        A = self.full(X)
        return 2.0 * self.K * (2.0 * A[1:-1] - A[:-2] - A[2:])

    def gain(self, X):
        A = self.full(X)
        return 0.5 * float(np.einsum("ki,ij,kj->", A[:-1], self.W, A[1:]))

    def gain_grad(self, X):
        A = self.full(X)
        return 0.5 * (A[2:] - A[:-2]) @ self.W.T

    def precondition(self, G):
        return cho_solve(self.chol, G)


def _lagrangian(P, X, mu, rho):
    c = P.gain(X) - P.z
    return P.energy(X) - mu * c + 0.5 * rho * c * c


def _lagrangian_grad(P, X, mu, rho):
    c = P.gain(X) - P.z
    return P.energy_grad(X) + (rho * c - mu) * P.gain_grad(X)


def _inner(P, X, mu, rho, cfg, tol):
    """Preconditioned gradient descent with Armijo backtracking.

    The preconditioner is the energy Hessian plus the penalty's rank-one
    Gauss-Newton term.
    """
    L = _lagrangian(P, X, mu, rho)
    step = 1.0
    for it in range(cfg.max_inner):
        G = _lagrangian_grad(P, X, mu, rho)
        if np.max(np.abs(G)) <= tol:
            return X, it, True
        # (H + rho g g^T)^{-1} G by Sherman-Morrison; without the rank-one
        # penalty term the step degrades like 1 / rho
        g = P.gain_grad(X)
        MG, Mg = P.precondition(G), P.precondition(g)
        D = -(MG - Mg * (rho * float(np.sum(g * MG)) / (1.0 + rho * float(np.sum(g * Mg)))))
        slope = float(np.sum(G * D))
        step = min(1.0, 2.0 * step)
        while True:
            Xn = X + step * D
            Ln = _lagrangian(P, Xn, mu, rho)
            if Ln <= L + cfg.armijo * step * slope or step < 1e-16:
                break
            step *= 0.5
        if step < 1e-16:
            return X, it, False
        X, L = Xn, Ln
    return X, cfg.max_inner, False


def _initial_path(ctx, v, z, K, plane, orientation, rng=None, jitter=0.0):
    """Straight line to ``v`` plus a closed K-gon loop in coordinate pair ``plane``."""
    k = np.arange(K + 1) / K
    A = np.outer(k, v)
    a = ctx.alphas[plane]
    if z != 0.0:
        area = abs(z) / a
        r = math.sqrt(2.0 * area / (K * math.sin(2.0 * math.pi / K)))
        sign = orientation * (1.0 if z > 0 else -1.0)
        th = 2.0 * math.pi * k
        A[:, 2 * plane] += r * (np.cos(th) - 1.0)
        A[:, 2 * plane + 1] += sign * r * np.sin(th)
        if rng is not None and jitter > 0:
            A[1:-1] += jitter * r * rng.standard_normal(A[1:-1].shape)
    return A[1:-1]


def _solve(P, X, cfg, scale):
    # least-squares multiplier of the start; mu = 0 would let the first
    # step collapse a loop onto the zero path, a saddle with zero gradient
    gg = P.gain_grad(X)
    norm2 = float(np.sum(gg * gg))
    mu = float(np.sum(P.energy_grad(X) * gg)) / norm2 if norm2 > 0 else 0.0
    rho = cfg.penalty
    c_prev = abs(P.gain(X) - P.z)
    tol_c = cfg.residual_tol * scale
    for _ in range(cfg.max_outer):
        gtol = cfg.grad_tol * max(1.0, math.sqrt(scale) * P.K)
        X, _, ok = _inner(P, X, mu, rho, cfg, gtol)
        c = P.gain(X) - P.z
        if abs(c) <= tol_c and ok:
            return X, abs(c), True
        mu -= rho * c
        if abs(c) > max(0.25 * c_prev, tol_c):
            rho *= cfg.growth
        c_prev = abs(c)
    return X, abs(P.gain(X) - P.z), False


def estimate_distance(ctx, target, K=64, cfg=None, seed=0):
    """Best-of-``cfg.starts`` upper bound on ``d_CC(e, target)``."""
    cfg = cfg or OptimizerConfig()
    if K < 8:
        raise InputError("need K >= 8 segments")
    g = target if isinstance(target, GroupElement) else GroupElement.from_coords(target)
    v, z = np.asarray(g.v, dtype=float), float(g.z)
    if v.size != 2 * ctx.n:
        raise InputError("target dimension does not match the group")
    plane = int(np.argmax(ctx.alphas))
    scale = float(v @ v + abs(z))
    if scale == 0.0:
        path = HorizontalPath(ctx, np.zeros((K + 1, 2 * ctx.n)))
        return DistanceResult(0.0, path, 0.0, 0.0, 0, 0, K, plane)
    P = _Problem(ctx, v, z, K)
    rng = np.random.default_rng(seed)
    results = []
    for s in range(cfg.starts):
        if s == 0:
            X0 = _initial_path(ctx, v, z, K, plane, 1.0)
        else:
            X0 = _initial_path(ctx, v, z, K, int(rng.integers(ctx.n)),
                               float(rng.choice([-1.0, 1.0])), rng, jitter=0.05)
        X, res, ok = _solve(P, X0, cfg, scale)
        results.append((P.energy(X), s, X, res, ok))
    good = [r for r in results if r[4]]
    if not good:
        best = min(results, key=lambda r: (r[3], r[0], r[1]))
        path = HorizontalPath(ctx, P.full(best[2]))
        raise NonConvergenceError(
            "holonomy constraint not met by any start",
            residual=best[3], best_path=path, d_hat=math.sqrt(best[0]),
        )
    energy, s, X, res, _ = min(good, key=lambda r: (r[0], r[1]))
    per_start = [{"start": r[1], "energy": r[0], "residual": r[3], "converged": r[4]}
                 for r in results]
    return DistanceResult(math.sqrt(energy), HorizontalPath(ctx, P.full(X)), res, energy,
                          cfg.starts, s, K, plane, per_start)


def polygon_vertical_distance(alpha, z, K):
    """Perimeter of the regular K-gon enclosing area ``|z| / alpha``."""
    return math.sqrt(4.0 * K * math.tan(math.pi / K) * abs(z) / alpha)


def vertical_distance(alpha, z):
    """``sqrt(4 pi |z| / alpha)``: the circle enclosing area ``|z| / alpha``."""
    return math.sqrt(4.0 * math.pi * abs(z) / alpha)


# ---------------------------------------------------------------------------
# checks

def homogeneity_check(ctx, g, lams=(0.5, 2.0), K=64, seed=0, tol=0.02, cfg=None):
    g = g if isinstance(g, GroupElement) else GroupElement.from_coords(g)
    base = estimate_distance(ctx, g, K, cfg, seed).d_hat
    rows = []
    for lam in lams:
        d = estimate_distance(ctx, dilate(ctx, lam, g), K, cfg, seed).d_hat
        rel = abs(d - lam * base) / (lam * base)
        rows.append({"lambda": lam, "d_hat": d, "expected": lam * base, "rel_error": rel,
                     "pass": bool(rel <= tol)})
    d_inv = estimate_distance(ctx, inverse(g), K, cfg, seed).d_hat
    sym = abs(base - d_inv) / base
    return {
        "d_hat": base, "dilations": rows,
        "symmetry": {"d_hat_inverse": d_inv, "rel_error": sym, "pass": bool(sym <= tol)},
        "pass": bool(all(r["pass"] for r in rows) and sym <= tol), "K": K, "seed": seed,
    }


def norm_equivalence_scan(ctx, samples, K=64, seed=0, cfg=None):
    """Range of ``d_hat / (|v| + sqrt|z|)`` over ``samples``."""
    q = []
    for g in samples:
        g = g if isinstance(g, GroupElement) else GroupElement.from_coords(g)
        denom = float(np.linalg.norm(g.v) + math.sqrt(abs(g.z)))
        if denom == 0.0:
            continue
        q.append(estimate_distance(ctx, g, K, cfg, seed).d_hat / denom)
    q = np.array(q)
    lo, hi = float(q.min()), float(q.max())
    return {"min": lo, "max": hi, "count": int(q.size),
            "pass": bool(np.all(np.isfinite(q)) and lo > 0), "quotients": q.tolist()}
