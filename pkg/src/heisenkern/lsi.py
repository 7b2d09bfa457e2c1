"""Entropy, horizontal Dirichlet energy and log-Sobolev ratios under mu_t.

Two backends supply the measure: a Monte Carlo batch from the sampler
(any n) and the n = 1 polar quadrature grid of the heat kernel.  Monte
Carlo estimates carry delta-method standard errors; ratios additionally get
a 20-block jackknife error as a cross-check.
"""
from __future__ import annotations

import io
import json
import math
import re
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .calculus import (
    ScalarField,
    catalog_field,
    constant_field,
    exp_field,
    horizontal_gradient_sq,
    linear_z_field,
    product_horizontal_gradient,
)
from .errors import InputError
from .group import GroupContext
from .heatkernel import PolarGrid, polar_grid
from .sampler import BrownianConfig, SampleBatch, sample_measure

JACKKNIFE_BLOCKS = 20
DEFAULT_EPS = 0.05
EXP_LAMBDAS = (0.5, 1.0, 2.0)

# versioned so that scan outputs stay comparable across runs
CATALOG_VERSION = 1
DEFAULT_CATALOG = tuple(f"exp_x1:{lam:g}" for lam in EXP_LAMBDAS) + (f"linear_z:{DEFAULT_EPS:g}",)


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    N: int
    method: str = "MC"
    tolerance: Optional[float] = None  # quadrature only

    def to_dict(self):
        return {"value": self.value, "std_error": self.std_error, "N": self.N,
                "method": self.method, "tolerance": self.tolerance}


@dataclass(frozen=True)
class RatioRecord:
    n: int
    alphas: tuple
    t: float
    field: str
    entropy: Estimate
    energy: Estimate
    ratio: float
    ratio_se: float
    jackknife_se: Optional[float] = None

    def to_dict(self):
        return {
            "n": self.n, "alphas": list(self.alphas), "t": self.t, "field": self.field,
            "entropy": self.entropy.to_dict(), "energy": self.energy.to_dict(),
            "ratio": self.ratio, "ratio_se": self.ratio_se, "jackknife_se": self.jackknife_se,
        }


# ---------------------------------------------------------------------------
# backends

@dataclass(frozen=True)
class MonteCarloBackend:
    batch: SampleBatch
    method: str = "MC"

    @classmethod
    def sample(cls, ctx, t, N, m, seed, stream=0, workers=None):
        return cls(sample_measure(BrownianConfig(ctx, t, m, N, seed, stream), workers))

    @property
    def points(self):
        return self.batch.endpoints

    @property
    def N(self):
        return self.batch.N


@dataclass(frozen=True)
class QuadratureBackend:
    """Expectations against the normalized kernel on a polar grid (n = 1)."""

    grid: PolarGrid
    tolerance: float = 1e-6
    method: str = "quadrature"

    @classmethod
    def build(cls, ctx, t, **kw):
        return cls(polar_grid(ctx, t, **kw))

    @property
    def points(self):
        return self.grid.points()

    @property
    def N(self):
        return int(np.prod(self.grid.kernel.shape) * len(self.grid.theta))


def _check_backend(ctx, t, backend):
    if isinstance(backend, MonteCarloBackend):
        b = backend.batch
        if b.endpoints.shape[1] != ctx.dim or not math.isclose(b.t, t, rel_tol=1e-12):
            raise InputError("sample batch does not match (ctx, t)")
    elif isinstance(backend, QuadratureBackend):
        g = backend.grid
        if g.ctx != ctx or not math.isclose(g.t, t, rel_tol=1e-12):
            raise InputError("quadrature grid does not match (ctx, t)")
    else:
        raise InputError(f"unknown backend {type(backend).__name__}")


def _mean(backend, values):
    if isinstance(backend, QuadratureBackend):
        return backend.grid.expectation(values)
    return float(np.mean(values))


def _se(values):
    values = np.asarray(values, dtype=float).ravel()
    return float(np.std(values, ddof=1) / math.sqrt(values.size))


def _xlogx(u):
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = u[pos] * np.log(u[pos])
    return out


# ---------------------------------------------------------------------------
# estimators

def _entropy_parts(backend, f2):
    if not np.any(f2 > 0):
        raise InputError("entropy undefined: field vanishes at every node")
    flat = f2.ravel()
    if np.all(flat == flat[0]):
        return 0.0, float(flat[0]), np.zeros_like(f2)
    m = _mean(backend, f2)
    ent = _mean(backend, _xlogx(f2)) - m * math.log(m)
    influence = _xlogx(f2) - (math.log(m) + 1.0) * f2
    return ent, m, influence


def entropy(ctx, t, f, backend):
    """``E[f^2 log f^2] - E[f^2] log E[f^2]`` with ``0 log 0 = 0``."""
    _check_backend(ctx, t, backend)
    f2 = np.asarray(f(backend.points), dtype=float) ** 2
    ent, _, influence = _entropy_parts(backend, f2)
    return _estimate(backend, ent, influence)


def dirichlet_energy(ctx, t, f, backend):
    """``E |grad_H f|^2``."""
    _check_backend(ctx, t, backend)
    g = horizontal_gradient_sq(ctx, f, backend.points)
    return _estimate(backend, _mean(backend, g), g)


def _estimate(backend, value, per_sample):
    if isinstance(backend, QuadratureBackend):
        return Estimate(float(value), 0.0, backend.N, backend.method, backend.tolerance)
    return Estimate(float(value), _se(per_sample), backend.N, backend.method)


def _ratio_jackknife(f2, g, blocks=JACKKNIFE_BLOCKS):
    N = f2.size
    if N < 2 * blocks:
        return None
    edges = np.linspace(0, N, blocks + 1).astype(int)
    xl = _xlogx(f2)
    s_f2 = np.add.reduceat(f2, edges[:-1])
    s_xl = np.add.reduceat(xl, edges[:-1])
    s_g = np.add.reduceat(g, edges[:-1])
    counts = np.diff(edges)
    loo_n = N - counts
    m = (s_f2.sum() - s_f2) / loo_n
    ent = (s_xl.sum() - s_xl) / loo_n - m * np.log(m)
    en = (s_g.sum() - s_g) / loo_n
    r = ent / en
    return float(math.sqrt((blocks - 1) / blocks * np.sum((r - r.mean()) ** 2)))


def _descriptor(ctx):
    return ctx.n, tuple(ctx.alphas)


def lsi_ratio(ctx, t, f, backend):
    """Entropy over energy for one field, with delta-method and jackknife errors."""
    _check_backend(ctx, t, backend)
    pts = backend.points
    f2 = np.asarray(f(pts), dtype=float) ** 2
    g = horizontal_gradient_sq(ctx, f, pts)
    energy_value = _mean(backend, g)
    if not energy_value > 0:
        raise InputError(f"{f.name}: zero Dirichlet energy, ratio undefined")
    ent, _, phi = _entropy_parts(backend, f2)
    ratio = ent / energy_value
    if isinstance(backend, QuadratureBackend):
        ratio_se, jk = 0.0, None
    else:
        ratio_se = _se((phi - ratio * g) / energy_value)
        jk = _ratio_jackknife(f2, g)
    n, alphas = _descriptor(ctx)
    return RatioRecord(
        n, alphas, float(t), f.name,
        _estimate(backend, ent, phi), _estimate(backend, energy_value, g),
        float(ratio), float(ratio_se), jk,
    )


def poincare_ratio(ctx, t, phi, backend):
    """``Var(phi) / E |grad_H phi|^2``; informational, no bound asserted."""
    _check_backend(ctx, t, backend)
    pts = backend.points
    u = np.asarray(phi(pts), dtype=float)
    g = horizontal_gradient_sq(ctx, phi, pts)
    energy_value = _mean(backend, g)
    if not energy_value > 0:
        raise InputError(f"{phi.name}: zero Dirichlet energy, ratio undefined")
    mu = _mean(backend, u)
    c2 = (u - mu) ** 2
    var = _mean(backend, c2)
    ratio = var / energy_value
    se = 0.0 if isinstance(backend, QuadratureBackend) else _se((c2 - ratio * g) / energy_value)
    n, alphas = _descriptor(ctx)
    return RatioRecord(
        n, alphas, float(t), phi.name,
        _estimate(backend, var, c2), _estimate(backend, energy_value, g),
        float(ratio), float(se), None,
    )


# ---------------------------------------------------------------------------
# scans

@dataclass
class ScanResult:
    records: list
    summary: dict
    failures: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("n,alphas,t,field,entropy,entropy_se,energy,energy_se,ratio,ratio_se\n")
        for r in self.records:
            alphas = ";".join(repr(float(a)) for a in r.alphas)
            row = [str(r.n), alphas, repr(r.t), r.field,
                   repr(r.entropy.value), repr(r.entropy.std_error),
                   repr(r.energy.value), repr(r.energy.std_error),
                   repr(r.ratio), repr(r.ratio_se)]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def to_json(self):
        return json.dumps(self.summary, sort_keys=True, indent=2)


def _depends_on_first_block(name):
    kind, _, arg = name.partition(":")
    if kind in ("exp_x1", "linear_z", "const"):
        return True
    if kind == "poly":
        return not re.search(r"[xy]([2-9]|1\d)", arg)
    return False


def lsi_scan(ctxs, ts, fields=DEFAULT_CATALOG, N=100_000, m=100, seed=0,
             backend="MC", workers=None):
    """Ratios for every (ctx, t, field) plus the scan assertions.

    Assertions in the summary:

    * ``t_scaling``: sup ratio at ``t`` is at most ``t`` times the sup ratio
      at ``t = 1``, inflated by four relative standard errors;
    * ``n_stability``: sup ratios over fields depending only on
      ``(x1, y1, z)`` agree across contexts at each ``t`` within four
      combined standard errors;
    * ``exponential_law``: every ``exp_x1`` ratio equals ``2 t`` within three
      standard errors;
    * ``t_linearity``: for each (ctx, field), ``ratio / t`` agrees across
      ``t`` within four combined standard errors.

    Every (ctx, t) cell samples with the same seed, so cells share their
    Brownian increments.
    """
    ctxs = [c if isinstance(c, GroupContext) else GroupContext(c) for c in ctxs]
    ts = [float(t) for t in ts]
    if any(not t > 0 for t in ts):
        raise InputError("times must be positive")
    records, failures = [], []
    for ctx in ctxs:
        for t in ts:
            if backend == "MC":
                be = MonteCarloBackend.sample(ctx, t, N, m, seed, workers=workers)
            elif backend == "quadrature":
                be = QuadratureBackend.build(ctx, t)
            else:
                raise InputError(f"unknown backend {backend!r}")
            for name in fields:
                try:
                    records.append(lsi_ratio(ctx, t, catalog_field(ctx.dim, name), be))
                except InputError as exc:
                    failures.append({"n": ctx.n, "alphas": list(ctx.alphas), "t": t,
                                     "field": name, "error": str(exc)})
    summary = _scan_summary(records, ts)
    summary.update({"N": N, "m": m, "seed": seed, "backend": backend,
                    "catalog_version": CATALOG_VERSION, "failures": failures})
    return ScanResult(records, summary, failures)


def _key(r):
    return (r.n, r.alphas)


def _sup(records, only_first_block=False):
    best = {}
    for r in records:
        if only_first_block and not _depends_on_first_block(r.field):
            continue
        k = (_key(r), r.t)
        if k not in best or r.ratio > best[k].ratio:
            best[k] = r
    return best


def _combined(*ses):
    return math.sqrt(sum(s * s for s in ses))


def _scan_summary(records, ts):
    sups = _sup(records)
    cells = [
        {"n": k[0][0], "alphas": list(k[0][1]), "t": k[1], "sup_ratio": r.ratio,
         "sup_ratio_se": r.ratio_se, "sup_field": r.field,
         "lower_bound_C": r.ratio / k[1]}
        for k, r in sorted(sups.items())
    ]

    violations = {"t_scaling": [], "n_stability": [], "exponential_law": [], "t_linearity": []}
    for (ck, t), r in sorted(sups.items()):
        base = sups.get((ck, 1.0))
        if base is None or t == 1.0:
            continue
        rel = _combined(r.ratio_se / r.ratio, base.ratio_se / base.ratio)
        if r.ratio > base.ratio * t * (1.0 + 4.0 * rel):
            violations["t_scaling"].append({"n": ck[0], "alphas": list(ck[1]), "t": t})

    first = _sup(records, only_first_block=True)
    for t in ts:
        at_t = [(ck, r) for (ck, tt), r in sorted(first.items()) if tt == t]
        for (c1, r1), (c2, r2) in combinations(at_t, 2):
            if abs(r1.ratio - r2.ratio) > 4.0 * _combined(r1.ratio_se, r2.ratio_se):
                violations["n_stability"].append(
                    {"t": t, "a": [c1[0], list(c1[1])], "b": [c2[0], list(c2[1])]})

    for r in records:
        if r.field.startswith("exp_x1:") and abs(r.ratio - 2.0 * r.t) > 3.0 * r.ratio_se:
            violations["exponential_law"].append(
                {"n": r.n, "alphas": list(r.alphas), "t": r.t, "field": r.field,
                 "ratio": r.ratio, "ratio_se": r.ratio_se,
                 "z_score": (r.ratio - 2.0 * r.t) / r.ratio_se if r.ratio_se else None})

    by_field = {}
    for r in records:
        by_field.setdefault((_key(r), r.field), []).append(r)
    for (ck, name), rs in sorted(by_field.items()):
        for r1, r2 in combinations(sorted(rs, key=lambda r: r.t), 2):
            q1, q2 = r1.ratio / r1.t, r2.ratio / r2.t
            if abs(q1 - q2) > 4.0 * _combined(r1.ratio_se / r1.t, r2.ratio_se / r2.t):
                violations["t_linearity"].append(
                    {"n": ck[0], "alphas": list(ck[1]), "field": name, "t": [r1.t, r2.t]})

    return {
        "cells": cells,
        "assertions": {k: {"pass": not v, "violations": v} for k, v in violations.items()},
        "pass": not any(violations.values()),
    }


# ---------------------------------------------------------------------------
# product and quotient structure

@dataclass(frozen=True)
class ProductField:
    """``(p1, p2) -> f(p1) h(p2)`` on a product of two three-dimensional groups."""

    f: ScalarField
    h: ScalarField

    @property
    def name(self):
        return f"{self.f.name}*{self.h.name}"


def product_catalog():
    """The three fixed product fields with their factor parameters."""
    return [
        ((1.0, 3.0), ProductField(exp_field(3, 1.0), constant_field(3, 1.0))),
        ((1.0, 3.0), ProductField(exp_field(3, 1.0), exp_field(3, 1.0))),
        ((1.0, 3.0), ProductField(linear_z_field(3, DEFAULT_EPS), exp_field(3, 1.0))),
    ]


def tensorization_check(alphas, t, pf, N=100_000, m=200, seed=0, k=3.0, workers=None):
    """Entropy and energy additivity for a product field on H^1 x H^1.

    Factor ``i`` is sampled on its own stream; sample ``j`` of the product
    measure is the pair of the two factors' ``j``-th endpoints.
    """
    if not isinstance(pf, ProductField):
        raise InputError("tensorization needs a ProductField (one factor per group)")
    ctxs = [GroupContext([a]) for a in alphas]
    if len(ctxs) != 2:
        raise InputError("tensorization check takes exactly two factors")
    p1, p2 = (sample_measure(BrownianConfig(c, t, m, N, seed, 100 + i), workers).endpoints
              for i, c in enumerate(ctxs))
    f, h = pf.f(p1), pf.h(p2)
    f2, h2 = f * f, h * h
    Gf = horizontal_gradient_sq(ctxs[0], pf.f, p1)
    Gh = horizontal_gradient_sq(ctxs[1], pf.h, p2)
    Mf, Mh = f2.mean(), h2.mean()
    Ef, Eh = Gf.mean(), Gh.mean()
    ent_f, _, phi_f = _entropy_parts(None, f2)
    ent_h, _, phi_h = _entropy_parts(None, h2)
    F2 = f2 * h2
    ent_p, _, phi_p = _entropy_parts(None, F2)
    Gp = h2 * Gf + f2 * Gh
    En_p = Gp.mean()

    ent_rhs = Mh * ent_f + Mf * ent_h
    ent_infl = phi_p - (ent_f * h2 + Mh * phi_f + ent_h * f2 + Mf * phi_h)
    en_rhs = Mh * Ef + Mf * Eh
    en_infl = Gp - (Ef * h2 + Mh * Gf + Eh * f2 + Mf * Gh)
    ent_se, en_se = _se(ent_infl), _se(en_infl)

    # product ratio and its delta-method error on the paired sample
    R = ent_p / En_p
    R_se = _se((phi_p - R * Gp) / En_p)
    factor = []
    for ctx, pts, fld, g2, G, ent, phi, M in (
        (ctxs[0], p1, pf.f, f2, Gf, ent_f, phi_f, Mf),
        (ctxs[1], p2, pf.h, h2, Gh, ent_h, phi_h, Mh),
    ):
        E = G.mean()
        if E > 0:
            r = ent / E
            factor.append({"field": fld.name, "ratio": r, "ratio_se": _se((phi - r * G) / E)})
        else:
            factor.append({"field": fld.name, "ratio": None, "ratio_se": None})
    finite = [c for c in factor if c["ratio"] is not None]
    top = max(finite, key=lambda c: c["ratio"])
    bound_ok = R <= top["ratio"] + k * _combined(R_se, top["ratio_se"])
    ent_ok = abs(ent_p - ent_rhs) <= k * ent_se
    en_ok = abs(En_p - en_rhs) <= k * en_se
    return {
        "field": pf.name, "alphas": list(alphas), "t": t,
        "entropy": {"lhs": ent_p, "rhs": ent_rhs, "se": ent_se, "pass": bool(ent_ok)},
        "energy": {"lhs": En_p, "rhs": en_rhs, "se": en_se, "pass": bool(en_ok)},
        "product_ratio": R, "product_ratio_se": R_se, "factors": factor,
        "ratio_bound_pass": bool(bound_ok),
        "pass": bool(ent_ok and en_ok and bound_ok), "N": N, "m": m, "seed": seed,
    }


def invariance_F_check(alpha, t, f, N=100_000, m=200, seed=0, k=3.0, workers=None):
    """Ratio of ``f`` on H^1 with ``alpha`` against ratio of ``f o F`` on H^1."""
    ctx_a, ctx_1 = GroupContext([alpha]), GroupContext([1.0])
    direct = lsi_ratio(ctx_a, t, f, MonteCarloBackend.sample(ctx_a, t, N, m, seed, 0, workers))
    fF = f.compose_linear(np.diag([1.0, 1.0, alpha]), name=f"{f.name}∘F")
    pulled = lsi_ratio(ctx_1, t, fF, MonteCarloBackend.sample(ctx_1, t, N, m, seed, 1, workers))
    tol = k * _combined(direct.ratio_se, pulled.ratio_se)
    return {"direct": direct.to_dict(), "pulled_back": pulled.to_dict(),
            "difference": direct.ratio - pulled.ratio, "tol": tol,
            "pass": bool(abs(direct.ratio - pulled.ratio) <= tol)}


def projection_matrix(n):
    """Matrix of the map ``(x_i, y_i, z_i)_i -> (x_1, y_1, .., x_n, y_n, sum z_i)``."""
    P = np.zeros((2 * n + 1, 3 * n))
    for i in range(n):
        P[2 * i, 3 * i] = 1.0
        P[2 * i + 1, 3 * i + 1] = 1.0
        P[2 * n, 3 * i + 2] = 1.0
    return P


def invariance_pi_check(ctx, t, f, N=100_000, m=200, seed=0, k=3.0, workers=None):
    """Ratio of ``f`` on H^n against ratio of ``f o pi`` on the product of H^1's."""
    direct = lsi_ratio(ctx, t, f, MonteCarloBackend.sample(ctx, t, N, m, seed, 0, workers))
    factors = [GroupContext([a]) for a in ctx.alphas]
    pts = np.concatenate(
        [sample_measure(BrownianConfig(c, t, m, N, seed, 100 + i), workers).endpoints
         for i, c in enumerate(factors)], axis=1)
    fpi = f.compose_linear(projection_matrix(ctx.n), name=f"{f.name}∘pi")
    f2 = fpi(pts) ** 2
    g = np.sum(product_horizontal_gradient(factors, fpi, pts) ** 2, axis=-1)
    ent, _, phi = _entropy_parts(None, f2)
    E = g.mean()
    R = ent / E
    R_se = _se((phi - R * g) / E)
    tol = k * _combined(direct.ratio_se, R_se)
    return {"direct": direct.to_dict(), "product_ratio": R, "product_ratio_se": R_se,
            "difference": direct.ratio - R, "tol": tol,
            "pass": bool(abs(direct.ratio - R) <= tol)}


def backend_agreement(ctx, t, fields, N=100_000, m=1000, seed=0, k=3.0, workers=None):
    """Monte Carlo ratios against quadrature ratios on H^1."""
    mc = MonteCarloBackend.sample(ctx, t, N, m, seed, workers=workers)
    qb = QuadratureBackend.build(ctx, t)
    rows = []
    for name in fields:
        f = catalog_field(ctx.dim, name)
        a, b = lsi_ratio(ctx, t, f, mc), lsi_ratio(ctx, t, f, qb)
        rows.append({"field": name, "mc": a.ratio, "mc_se": a.ratio_se, "quadrature": b.ratio,
                     "pass": bool(abs(a.ratio - b.ratio) <= k * a.ratio_se)})
    return {"rows": rows, "pass": all(r["pass"] for r in rows), "N": N, "m": m, "seed": seed}
