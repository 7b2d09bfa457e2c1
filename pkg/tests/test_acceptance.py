"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) before
asserting.  Tolerances, sample sizes and runtime limits are pinned here.
"""
import math
import time

import numpy as np
import pytest

from heisenkern.ccdist import estimate_distance, homogeneity_check, vertical_distance
from heisenkern.cli import PROFILES, run
from heisenkern.group import GroupContext, GroupElement
from heisenkern.heatkernel import (
    KernelQuery,
    density,
    density_profile,
    normalization_check,
    scaling_check,
    semigroup_check,
)
from heisenkern.lsi import EXP_LAMBDAS, lsi_scan, product_catalog, tensorization_check
from heisenkern.sampler import (
    BrownianConfig,
    levy_variance_check,
    projection_cascade,
    pushforward_F_check,
    pushforward_pi_check,
    sample_measure,
)
from heisenkern.symplectic import block_diagonal, normalize

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

SEED = 20261019


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def test_01_identity_value(criterion):
    with Clock() as c:
        val = density(KernelQuery(GroupContext([1.0]), 1.0, GroupElement([0.0, 0.0], 0.0)))
    err = abs(val - 0.125)
    ok = criterion(1, err <= 1e-8 and c.elapsed < 1.0,
                   f"p_1(e) = {val!r}, |err| = {err:.1e} (tol 1e-8), {c.elapsed:.2f} s (< 1 s)")
    assert ok


def test_02_vertical_profile(criterion):
    with Clock() as c:
        z, vals = density_profile(GroupContext([1.0]), 1.0, "z", -2.0, 2.0, 101)
    sup = float(np.max(np.abs(vals - 1.0 / (8.0 * np.cosh(np.pi * z) ** 2))))
    ok = criterion(2, sup <= 1e-8 and c.elapsed < 10.0,
                   f"sup |p - sech^2(pi z)/8| = {sup:.1e} (tol 1e-8), {c.elapsed:.2f} s (< 10 s)")
    assert ok


def test_03_scaling(criterion):
    rng = np.random.default_rng(SEED)
    contexts = [GroupContext([1.0]), GroupContext([1.0, 3.0]), GroupContext([0.5, 1.0, 2.0])]
    worst, count = 0.0, 0
    with Clock() as c:
        for ctx in contexts:
            for _ in range(5):
                g = rng.uniform(-1.5, 1.5, ctx.dim)
                for lam in (0.5, 0.8, 1.25, 2.0):
                    r = scaling_check(ctx, 1.0, lam, g, tol=1e-8)
                    worst = max(worst, r["residual"])
                    count += 1
    ok = criterion(3, worst <= 1e-8 and c.elapsed < 30.0,
                   f"max residual {worst:.1e} over {count} cases (tol 1e-8), {c.elapsed:.1f} s (< 30 s)")
    assert ok


def test_04_normalization(criterion):
    values = []
    with Clock() as c:
        for t in (0.25, 1.0, 4.0):
            for a in (0.5, 1.0, 4.0):
                values.append(normalization_check(GroupContext([a]), t, tol=1e-6)["value"])
    worst = max(abs(v - 1.0) for v in values)
    ok = criterion(4, worst <= 1e-6 and c.elapsed < 120.0,
                   f"integral in [{min(values):.10f}, {max(values):.10f}], max |I - 1| = {worst:.3g} "
                   f"(tol 1e-6), {c.elapsed:.1f} s (< 120 s); the kernel as defined has mass 1/2")
    assert ok


def test_05_levy_variance(criterion):
    cases = [[1.0], [4.0], [1.0, 3.0], [1.0, 2.0, 3.0]]
    zs, passes = [], []
    with Clock() as c:
        for alphas in cases:
            ctx = GroupContext(alphas)
            batch = sample_measure(BrownianConfig(ctx, 1.0, 2000, 100_000, SEED))
            r = levy_variance_check(batch, ctx, k=3.0)
            zs.append(r["z_score"])
            passes.append(r["pass"])
    ok = criterion(5, all(passes) and c.elapsed < 120.0,
                   "z-scores " + ", ".join(f"{z:+.2f}" for z in zs)
                   + f" (|z| <= 3), N = 1e5, m = 2000, {c.elapsed:.1f} s (< 120 s)")
    assert ok


def test_06_semigroup(criterion):
    ctx = GroupContext([1.0])
    with Clock() as c:
        reports = [semigroup_check(ctx, 0.5, 0.5, g, N=100_000, seed=SEED, m=1000)
                   for g in ([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])]
    ok = criterion(6, all(r["pass"] for r in reports) and c.elapsed < 60.0,
                   "z-scores " + ", ".join(f"{r['z_score']:+.2f}" for r in reports)
                   + f" (|z| <= 3), N = 1e5, {c.elapsed:.1f} s (< 60 s)")
    assert ok


def test_07_pushforward(criterion):
    N = 100_000
    with Clock() as c:
        f = pushforward_F_check(3.0, 1.0, N, SEED)
        ctrl = pushforward_F_check(3.0, 1.0, N, SEED, alpha_target=2.0)
        pi = pushforward_pi_check(GroupContext([1.0, 3.0]), 1.0, N, SEED, variant="pi",
                                  original_alphas=[1.0, 3.0])
        pio = pushforward_pi_check(GroupContext([2.0, 5.0]), 1.0, N, SEED, variant="pi_omega",
                                   original_alphas=[2.0, 5.0])
    thr = 1.63 * math.sqrt(2.0 / N)

    def worst(r):
        return max(m["statistic"] for m in r["marginals"].values())

    ok = (f["pass"] and pi["pass"] and pio["pass"] and worst(ctrl) > thr and c.elapsed < 180.0)
    criterion(7, ok, f"max KS: F {worst(f):.4f}, pi {worst(pi):.4f}, pi_omega {worst(pio):.4f} "
                     f"(< {thr:.4f}); control {worst(ctrl):.4f} (> {thr:.4f}); {c.elapsed:.1f} s (< 180 s)")
    assert ok


@pytest.fixture(scope="module")
def exp_scan():
    ctxs, seen = [], set()
    for prof in ("ones", "linear", "dyadic"):
        for n in (1, 2, 3, 5):
            ctx = GroupContext(PROFILES[prof](n))
            if ctx.alphas not in seen:
                seen.add(ctx.alphas)
                ctxs.append(ctx)
    fields = [f"exp_x1:{lam:g}" for lam in EXP_LAMBDAS]
    start = time.perf_counter()
    res = lsi_scan(ctxs, [0.5, 1.0, 2.0], fields, N=100_000, m=100, seed=SEED)
    return res, time.perf_counter() - start


def test_08_exponential_law(criterion, exp_scan):
    res, elapsed = exp_scan
    law = res.summary["assertions"]["exponential_law"]
    worst = max(abs(r.ratio - 2 * r.t) / r.ratio_se for r in res.records)
    lower = min(c["lower_bound_C"] for c in res.summary["cells"])
    detail = (f"{len(res.records)} ratios, {len(law['violations'])} outside 3 SE, "
              f"max |z| = {worst:.2f}; empirical C >= {lower:.4f}; {elapsed:.1f} s (< 300 s)")
    if law["violations"]:
        detail += "; outside: " + ", ".join(
            f"n={v['n']} t={v['t']:g} {v['field']} z={v['z_score']:+.2f}" for v in law["violations"])
    ok = criterion(8, law["pass"] and elapsed < 300.0, detail)
    assert ok


def test_09_t_linearity(criterion, exp_scan):
    res, _ = exp_scan
    lin = res.summary["assertions"]["t_linearity"]
    ok = criterion(9, lin["pass"],
                   f"ratio/t agrees across t within 4 SE for every (context, field); "
                   f"{len(lin['violations'])} violations")
    assert ok


def test_10_tensorization(criterion):
    reports = []
    with Clock() as c:
        for alphas, pf in product_catalog():
            reports.append(tensorization_check(alphas, 1.0, pf, N=100_000, m=200, seed=SEED, k=3.0))

    def z(part):
        return (part["lhs"] - part["rhs"]) / part["se"] if part["se"] else 0.0

    ok = all(r["entropy"]["pass"] and r["energy"]["pass"] for r in reports) and c.elapsed < 60.0
    criterion(10, ok, "; ".join(f"{r['field']}: ent z={z(r['entropy']):+.2f}, en z={z(r['energy']):+.2f}"
                                for r in reports) + f" (|z| <= 3), {c.elapsed:.1f} s (< 60 s)")
    assert ok


def test_11_symplectic(criterion):
    rng = np.random.default_rng(SEED)
    res = alpha_err = 0.0
    with Clock() as c:
        for i in range(1000):
            n = 1 + i % 5
            alphas = np.sort(np.exp(rng.uniform(-2, 2, n)))
            Q, _ = np.linalg.qr(rng.standard_normal((2 * n, 2 * n)))
            A = Q @ block_diagonal(alphas) @ Q.T
            nf = normalize(A)
            res = max(res, float(np.abs(nf.basis.T @ A @ nf.basis - block_diagonal(nf.alphas)).max()))
            alpha_err = max(alpha_err, float(np.abs(nf.alphas - alphas).max()))
    ok = criterion(11, res <= 1e-10 and alpha_err <= 1e-10 and c.elapsed < 30.0,
                   f"max residual {res:.1e}, max alpha error {alpha_err:.1e} (tol 1e-10), "
                   f"{c.elapsed:.1f} s (< 30 s)")
    assert ok


def test_12_cc_distance(criterion):
    with Clock() as c:
        horiz = []
        for alphas, v in (([1.0], [0.6, -0.8]), ([1.0, 3.0], [0.3, 0.0, -1.2, 0.5])):
            d = estimate_distance(GroupContext(alphas), GroupElement(v, 0.0), K=64).d_hat
            horiz.append(abs(d - float(np.linalg.norm(v))))
        vert = []
        for a in (0.5, 1.0, 4.0):
            d = estimate_distance(GroupContext([a]), [0.0, 0.0, 1.0], K=64).d_hat
            vert.append(abs(d - vertical_distance(a, 1.0)) / vertical_distance(a, 1.0))
        homs = [homogeneity_check(GroupContext(al), g, (0.5, 2.0), K=64, tol=0.02)
                for al, g in (([1.0], [0.4, -0.3, 0.7]), ([1.0, 2.0], [0.5, 0.0, 0.0, 0.3, 0.4]))]
    hom_err = max(max(r["rel_error"] for r in h["dilations"]) for h in homs)
    sym_err = max(h["symmetry"]["rel_error"] for h in homs)
    ok = (max(horiz) <= 1e-6 and max(vert) <= 0.01 and all(h["pass"] for h in homs)
          and c.elapsed < 300.0)
    criterion(12, ok, f"horizontal err {max(horiz):.1e} (1e-6), vertical rel err {max(vert):.2e} (1%), "
                      f"homogeneity {hom_err:.1e}, symmetry {sym_err:.1e} (2%), {c.elapsed:.1f} s (< 300 s)")
    assert ok


def test_13_cascade(criterion):
    with Clock() as c:
        rows = projection_cascade(N_max=12, N=1000, seed=SEED)
    gaps = [r["gap"] for r in rows]
    monotone = all(b < a for a, b in zip(gaps, gaps[1:]))
    ok = criterion(13, monotone and c.elapsed < 120.0,
                   "gaps " + ", ".join(f"{g:.3g}" for g in gaps) + f"; {c.elapsed:.1f} s (< 120 s)")
    assert ok


STOCHASTIC_CONFIGS = {
    "sample": "seed = 20261019\nalphas = [1.0, 3.0]\nN = 20000\nm = 200\n",
    "lsi-scan": "seed = 20261019\nn_values = [1, 2]\nts = [0.5, 1.0]\nN = 20000\nm = 50\n",
    "tensor-check": "seed = 20261019\nN = 20000\nm = 100\n",
    "pushforward": "seed = 20261019\nN = 20000\nm = 100\n",
    "cascade": "seed = 20261019\nN = 300\nN_max = 8\nm = 200\n",
    "distance": "seed = 20261019\nalphas = [1.0, 2.0]\ntargets = [[0.5, 0, 0, 0.3, 0.4]]\n",
}


def test_14_reproducibility(criterion, tmp_path, monkeypatch):
    differing = []
    for command, text in STOCHASTIC_CONFIGS.items():
        cfg = tmp_path / f"{command}.toml"
        cfg.write_text(text)
        outputs = []
        for threads in ("1", "4"):
            monkeypatch.setenv("HEISENKERN_THREADS", threads)
            out = tmp_path / f"{command}-{threads}"
            run(command, cfg, out)
            outputs.append({p.name: p.read_bytes() for p in out.iterdir() if p.name != "manifest.json"})
        if outputs[0] != outputs[1] or not outputs[0]:
            differing.append(command)
    ok = criterion(14, not differing,
                   f"{len(STOCHASTIC_CONFIGS)} stochastic commands rerun with 1 and 4 workers; "
                   + ("all artifacts byte-identical" if not differing else f"differ: {differing}"))
    assert ok
