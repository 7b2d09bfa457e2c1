"""Hypoelliptic Brownian motion on H^n_omega and measure-level checks.

The horizontal part is a standard Brownian motion ``B`` on R^{2n}; the
vertical part accumulates ``(1/2) omega(B_mid, dB)`` with the midpoint
``B_k + dB_k / 2`` on each step.  Increments come from the counter-based
streams of :mod:`heisenkern.rng`, so every sample is a pure function of
``(seed, stream, index)``.
"""
from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate, stats

from .errors import InputError, ResourceError
from .group import GroupContext, GroupElement, dilate, map_F, project_pi, project_pi_omega
from .rng import planar_pairs

KS_LEVEL = 1.63  # 1% critical value of the Kolmogorov distribution
DISCRETIZATION_ALLOWANCE = 0.001

# stream ids keep batches of one seed independent of each other
STREAM_DIRECT = 0
STREAM_ISOTROPIC = 1
STREAM_FACTOR_BASE = 100


def default_workers():
    env = os.environ.get("HEISENKERN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class BrownianConfig:
    ctx: GroupContext
    t: float
    steps: int
    batch: int
    seed: int
    stream: int = STREAM_DIRECT

    def __post_init__(self):
        if not (self.t > 0 and math.isfinite(self.t)):
            raise InputError(f"time must be positive, got {self.t}")
        if int(self.steps) < 2:
            raise InputError("need at least two time steps")
        if int(self.batch) < 1:
            raise InputError("batch size must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InputError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SampleBatch:
    endpoints: np.ndarray  # (N, 2n + 1)
    t: float
    provenance: dict = field(default_factory=dict)

    @property
    def N(self):
        return len(self.endpoints)

    @property
    def v(self):
        return self.endpoints[:, :-1]

    @property
    def z(self):
        return self.endpoints[:, -1]

    def to_csv(self):
        n = (self.endpoints.shape[1] - 1) // 2
        header = ",".join([f"{c}{i}" for i in range(1, n + 1) for c in "xy"] + ["z"])
        buf = io.StringIO()
        buf.write(header + "\n")
        for row in self.endpoints:
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
        return buf.getvalue()


def _block_size(cfg):
    # depends on the config only, so blocks (and their rounding) never vary
    per_sample = cfg.steps * 2 * cfg.ctx.n * 8 * 4
    return int(max(1, min(1024, 1000000 // per_sample)))


def _endpoints_block(cfg, indices):
    ctx = cfg.ctx
    d = planar_pairs(cfg.seed, cfg.stream, indices, ctx.n, cfg.steps)
    dx, dy = d[:, :, 0], d[:, :, 1]
    X = np.cumsum(dx, axis=-1)
    Y = np.cumsum(dy, axis=-1)
    # The midpoint sum  sum (X_prev + dx/2) dy - (Y_prev + dy/2) dx  equals
    # sum X dy - Y dx  term by term, since the dx dy products cancel.
    area = (X * dy - Y * dx).sum(axis=-1)
    # increments are unit normals; scale by sqrt(t/m) only at the end
    h = cfg.t / cfg.steps
    out = np.empty((len(indices), ctx.dim))
    out[:, 0:-1:2] = X[:, :, -1]
    out[:, 1:-1:2] = Y[:, :, -1]
    out[:, :-1] *= math.sqrt(h)
    out[:, -1] = 0.5 * h * (area * ctx.alpha_array).sum(axis=-1)
    return out


def sample_endpoint(cfg, index):
    if not 0 <= index < cfg.batch:
        raise InputError(f"index {index} outside batch of {cfg.batch}")
    return GroupElement.from_coords(_endpoints_block(cfg, np.array([index]))[0])


def sample_measure(cfg, workers=None):
    """All ``cfg.batch`` endpoints; identical for any ``workers``."""
    size = _block_size(cfg)
    starts = range(0, cfg.batch, size)
    out = np.empty((cfg.batch, cfg.ctx.dim))

    def job(s):
        idx = np.arange(s, min(s + size, cfg.batch))
        out[idx] = _endpoints_block(cfg, idx)

    _run_blocks(job, starts, workers)
    prov = {
        "m": cfg.steps, "seed": cfg.seed, "stream": cfg.stream, "N": cfg.batch,
        "alphas": list(cfg.ctx.alphas), "t": cfg.t,
    }
    return SampleBatch(out, cfg.t, prov)


# ---------------------------------------------------------------------------
# moment checks

def mean_with_se(x):
    x = np.asarray(x, dtype=float)
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(len(x)))


def variance_with_se(x):
    """Sample variance and its standard error from the fourth central moment."""
    x = np.asarray(x, dtype=float)
    c = x - x.mean()
    var = float(np.mean(c * c))
    m4 = float(np.mean(c ** 4))
    return var, math.sqrt(max(m4 - var * var, 0.0) / len(x))


def levy_variance(ctx, t):
    return t * t * float(np.sum(ctx.alpha_array ** 2)) / 4.0


def levy_variance_check(batch, ctx, k=3.0):
    var, se = variance_with_se(batch.z)
    target = levy_variance(ctx, batch.t)
    return {
        "statistic": var, "std_error": se, "target": target,
        "z_score": (var - target) / se, "pass": bool(abs(var - target) <= k * se),
        **_prov(batch),
    }


def _prov(batch):
    p = batch.provenance
    return {"N": batch.N, "m": p.get("m"), "seed": p.get("seed")}


def v_marginal_check(batch, k=4.0):
    """Per-coordinate mean 0 and variance ``t`` within ``k`` standard errors."""
    rows = []
    for j in range(batch.v.shape[1]):
        mean, mse = mean_with_se(batch.v[:, j])
        var, vse = variance_with_se(batch.v[:, j])
        rows.append({
            "coord": j, "mean": mean, "mean_se": mse, "var": var, "var_se": vse,
            "pass": bool(abs(mean) <= k * mse and abs(var - batch.t) <= k * vse),
        })
    return {"coords": rows, "pass": all(r["pass"] for r in rows), **_prov(batch)}


def heat_equation_moment_check(ctx, t, N, m, seed, dt=None, k=3.0, workers=None):
    """Heat-equation identity for ``f = z^2``.

    Left side: central difference in ``t`` of ``E[z_t^2]`` with common
    random numbers.  Right side: ``E[(1/2) sub_laplacian(z^2)]`` under
    ``mu_t``, and the closed form ``t sum a_i^2 / 2``.
    """
    from .calculus import polynomial_field, sub_laplacian

    dt = dt or 0.05 * t
    second = [np.mean(sample_measure(BrownianConfig(ctx, s, m, N, seed), workers).z ** 2)
              for s in (t - dt, t + dt)]
    lhs = (second[1] - second[0]) / (2 * dt)
    batch = sample_measure(BrownianConfig(ctx, t, m, N, seed), workers)
    exps = [0] * ctx.dim
    exps[-1] = 2
    zsq = polynomial_field(ctx.dim, [(1.0, exps)], name="z^2")
    rhs_vals = 0.5 * sub_laplacian(ctx, zsq, batch.endpoints)
    rhs, rhs_se = mean_with_se(rhs_vals)
    exact = t * float(np.sum(ctx.alpha_array ** 2)) / 2.0
    return {
        "ddt_second_moment": float(lhs), "generator_mean": rhs, "generator_se": rhs_se,
        "exact": exact, "pass": bool(abs(rhs - exact) <= k * rhs_se),
        "N": N, "m": m, "seed": seed,
    }


# ---------------------------------------------------------------------------
# distribution checks

def one_sample_threshold(N, m=None):
    return KS_LEVEL / math.sqrt(N) + DISCRETIZATION_ALLOWANCE


def two_sample_threshold(N1, N2=None):
    N2 = N1 if N2 is None else N2
    return KS_LEVEL * math.sqrt((N1 + N2) / (N1 * N2))


def ks_two_sample(a, b):
    return float(stats.ks_2samp(a, b).statistic)


def ks_one_sample(a, cdf):
    return float(stats.kstest(a, cdf).statistic)


def z_marginal_cdf(ctx, t, nodes=401, rel_tol=1e-10):
    """CDF of the z-marginal from kernel quadrature (n = 1).

    Returns ``(cdf, mass)`` where ``mass`` is the integral of the kernel
    and ``cdf`` is normalized by it.
    """
    from .heatkernel import vertical_range, z_marginal

    Z = vertical_range(ctx, t)
    zg = np.linspace(-Z, Z, nodes)
    q = z_marginal(ctx, t, zg, rel_tol=rel_tol)
    spline = interpolate.CubicSpline(zg, q).antiderivative()
    mass = float(spline(Z) - spline(-Z))

    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), -Z, Z)
        return np.clip((spline(x) - spline(-Z)) / mass, 0.0, 1.0)

    return cdf, mass


def mc_vs_quadrature(cfg, nodes=401, workers=None):
    """KS distances of the sampled z- and v-marginals against quadrature / N(0, t)."""
    if cfg.ctx.n != 1:
        raise InputError("mc_vs_quadrature is implemented for n = 1 only")
    batch = sample_measure(cfg, workers)
    cdf, mass = z_marginal_cdf(cfg.ctx, cfg.t, nodes)
    thr_z = one_sample_threshold(cfg.batch, cfg.steps)
    thr_v = KS_LEVEL / math.sqrt(cfg.batch)
    gauss = stats.norm(scale=math.sqrt(cfg.t)).cdf
    entries = {"z": ks_one_sample(batch.z, cdf)}
    entries.update({name: ks_one_sample(batch.v[:, j], gauss) for j, name in enumerate(("x1", "y1"))})
    report = {
        name: {"statistic": s, "threshold": thr_z if name == "z" else thr_v,
               "pass": bool(s < (thr_z if name == "z" else thr_v))}
        for name, s in entries.items()
    }
    return {
        "marginals": report, "kernel_mass": mass,
        "pass": all(r["pass"] for r in report.values()),
        "N": cfg.batch, "m": cfg.steps, "seed": cfg.seed,
    }


def _compare(a_pts, b_pts, labels):
    N1, N2 = len(a_pts), len(b_pts)
    thr = two_sample_threshold(N1, N2)
    rows = {}
    for j, name in enumerate(labels):
        s = ks_two_sample(a_pts[:, j], b_pts[:, j])
        rows[name] = {"statistic": s, "threshold": thr, "pass": bool(s < thr)}
    return rows


def _labels(n):
    return [f"{c}{i}" for i in range(1, n + 1) for c in "xy"] + ["z"]


def pushforward_F_check(alpha, t, N, seed, m=200, alpha_target=None, workers=None):
    """Image of the isotropic law under ``map_F`` against the direct law.

    ``alpha_target`` differing from ``alpha`` gives a negative control.
    """
    alpha_target = alpha if alpha_target is None else alpha_target
    iso = sample_measure(
        BrownianConfig(GroupContext([1.0]), t, m, N, seed, STREAM_ISOTROPIC), workers
    )
    mapped = map_F(alpha, iso.endpoints)
    direct = sample_measure(
        BrownianConfig(GroupContext([alpha_target]), t, m, N, seed, STREAM_DIRECT), workers
    )
    rows = _compare(mapped, direct.endpoints, _labels(1))
    return {
        "alpha": alpha, "alpha_target": alpha_target, "marginals": rows,
        "pass": all(r["pass"] for r in rows.values()), "N": N, "m": m, "seed": seed,
    }


def pushforward_pi_check(ctx, t, N, seed, m=200, variant="pi", original_alphas=None,
                         workers=None):
    """Projected product-group law against the direct law on H^n_omega.

    ``variant="pi"`` samples factor ``i`` on H^1 with parameter ``a_i`` and
    sums the vertical parts; ``"pi_omega"`` samples isotropic factors and
    weights the vertical parts by ``a_i``.
    """
    alphas = list(original_alphas) if original_alphas is not None else list(ctx.alphas)
    factors = []
    for i, a in enumerate(alphas):
        fctx = GroupContext([a if variant == "pi" else 1.0])
        cfg = BrownianConfig(fctx, t, m, N, seed, STREAM_FACTOR_BASE + i)
        factors.append(sample_measure(cfg, workers).endpoints)
    if variant == "pi":
        projected = project_pi(ctx, factors)
    elif variant == "pi_omega":
        projected = project_pi_omega(ctx, factors, alphas)
    else:
        raise InputError(f"unknown variant {variant!r}")
    direct = sample_measure(BrownianConfig(ctx, t, m, N, seed, STREAM_DIRECT), workers)
    rows = _compare(projected, direct.endpoints, _labels(ctx.n))
    return {
        "variant": variant, "alphas": alphas, "marginals": rows,
        "pass": all(r["pass"] for r in rows.values()), "N": N, "m": m, "seed": seed,
    }


def dilation_law_check(ctx, t, lam, N, seed, m=200, workers=None):
    """Law at time ``lam^2 t`` against the dilated law at time ``t``."""
    late = sample_measure(BrownianConfig(ctx, lam * lam * t, m, N, seed, STREAM_DIRECT), workers)
    early = sample_measure(BrownianConfig(ctx, t, m, N, seed, STREAM_ISOTROPIC), workers)
    rows = _compare(late.endpoints, dilate(ctx, lam, early.endpoints), _labels(ctx.n))
    return {"lambda": lam, "marginals": rows, "pass": all(r["pass"] for r in rows.values()),
            "N": N, "m": m, "seed": seed}


def discretization_study(ctx, t, N, seed, steps=(250, 500, 1000, 2000), workers=None):
    """Sample variance of ``z`` for each step count."""
    rows = []
    for m in steps:
        batch = sample_measure(BrownianConfig(ctx, t, m, N, seed), workers)
        var, se = variance_with_se(batch.z)
        rows.append({"m": m, "var": var, "se": se})
    return rows


# ---------------------------------------------------------------------------
# finite-rank projections

def dyadic_alphas(count):
    return [2.0 ** -(j + 1) for j in range(count)]


def projection_cascade(alphas=None, N_max=12, t=1.0, m=1000, N=1000, seed=0,
                       memory_budget=256 * 2 ** 20, workers=None):
    """Sup-norm gaps between nested projections and the rank-``N_max`` surrogate.

    Projection ``P_n`` keeps the first ``n`` coordinate pairs of one shared
    Brownian driver.  The gap is ``E sup_tau sqrt(|w|^2 + |c|)`` with
    ``(w, c)`` the coordinate difference to ``P_{N_max}``.  Returns rows
    ``{"n", "gap", "se"}`` for ``n = 1 .. N_max``.
    """
    alphas = dyadic_alphas(N_max) if alphas is None else [float(a) for a in alphas]
    if len(alphas) != N_max:
        raise InputError("need exactly N_max parameters")
    if any(not a > 0 for a in alphas) or sum(a * a for a in alphas) > 1e6:
        raise InputError("parameters must be positive with sum of squares <= 1e6")
    a = np.array(alphas)[:, None]
    per_sample = 10 * N_max * m * 8  # increments, paths, areas and tails
    if per_sample > memory_budget:
        raise ResourceError(
            f"one path needs {per_sample} bytes, budget is {memory_budget}"
        )
    block = int(max(1, min(N, memory_budget // per_sample, 256)))
    sups = np.empty((N, N_max))
    scale = math.sqrt(t / m)

    def job(start):
        idx = np.arange(start, min(start + block, N))
        d = planar_pairs(seed, STREAM_DIRECT, idx, N_max, m)
        d *= scale
        dx, dy = d[:, :, 0], d[:, :, 1]
        X = np.cumsum(dx, axis=-1)
        Y = np.cumsum(dy, axis=-1)
        area = 0.5 * np.cumsum((X - 0.5 * dx) * dy - (Y - 0.5 * dy) * dx, axis=-1)
        # tails over pairs j > n for n = 1 .. N_max; the last one is empty
        tail_sq = np.zeros_like(X)
        tail_z = np.zeros_like(X)
        tail_sq[:, :-1] = np.cumsum((X * X + Y * Y)[:, :0:-1], axis=1)[:, ::-1]
        tail_z[:, :-1] = np.cumsum((a * area)[:, :0:-1], axis=1)[:, ::-1]
        sups[idx] = np.sqrt(tail_sq + np.abs(tail_z)).max(axis=-1)

    _run_blocks(job, range(0, N, block), workers)
    rows = []
    for n in range(1, N_max + 1):
        g, se = mean_with_se(sups[:, n - 1])
        rows.append({"n": n, "gap": g, "se": se})
    return rows


def _run_blocks(job, starts, workers):
    workers = workers or default_workers()
    if workers == 1 or len(starts) == 1:
        for s in starts:
            job(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(job, starts))
