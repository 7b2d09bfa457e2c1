import math

import numpy as np
import pytest

from heisenkern.calculus import catalog_field, constant_field, coordinate_field, exp_field
from heisenkern.errors import InputError
from heisenkern.group import GroupContext
from heisenkern.lsi import (
    MonteCarloBackend,
    QuadratureBackend,
    backend_agreement,
    dirichlet_energy,
    entropy,
    invariance_F_check,
    invariance_pi_check,
    lsi_ratio,
    lsi_scan,
    poincare_ratio,
    product_catalog,
    tensorization_check,
)

H1 = GroupContext([1.0])

# int (1 + e z)^2 log (1 + e z)^2 sech(pi z) dz - (1 + e^2/4) log(1 + e^2/4), e = 0.05,
# by mpmath.quad at 30 digits; sech(pi z) is the z-law at t = 1
LINEAR_Z_ENTROPY = 0.00124947870838163610288346689648


@pytest.fixture(scope="module")
def quad():
    return QuadratureBackend.build(H1, 1.0, r_panels=8, z_panels=8, order=10, n_theta=16)


@pytest.fixture(scope="module")
def mc():
    return MonteCarloBackend.sample(H1, 1.0, 50_000, 100, seed=20261019)


def exp_law(lam, t):
    # f = exp(lam x1 / 2), x1 ~ N(0, t)
    m = math.exp(lam * lam * t / 2)
    return lam * lam * t / 2 * m, lam * lam / 4 * m


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_exp_field_quadrature(quad, lam):
    ent, en = exp_law(lam, 1.0)
    f = exp_field(3, lam)
    assert entropy(H1, 1.0, f, quad).value == pytest.approx(ent, rel=1e-5)
    assert dirichlet_energy(H1, 1.0, f, quad).value == pytest.approx(en, rel=1e-5)
    assert lsi_ratio(H1, 1.0, f, quad).ratio == pytest.approx(2.0, rel=1e-5)


def test_linear_z_quadrature(quad):
    r = lsi_ratio(H1, 1.0, catalog_field(3, "linear_z:0.05"), quad)
    assert r.entropy.value == pytest.approx(LINEAR_Z_ENTROPY, rel=1e-7)
    assert r.energy.value == pytest.approx(0.05 ** 2 / 2, rel=1e-9)


def test_exp_field_monte_carlo(mc):
    ent, en = exp_law(1.0, 1.0)
    r = lsi_ratio(H1, 1.0, exp_field(3, 1.0), mc)
    assert abs(r.entropy.value - ent) <= 4 * r.entropy.std_error
    assert abs(r.energy.value - en) <= 4 * r.energy.std_error
    assert abs(r.ratio - 2.0) <= 4 * r.ratio_se
    # delta-method and jackknife errors describe the same spread
    assert r.jackknife_se == pytest.approx(r.ratio_se, rel=0.5)


def test_constant_field_has_zero_entropy(mc):
    e = entropy(H1, 1.0, constant_field(3, 2.0), mc)
    assert e.value == 0.0 and e.std_error == 0.0


def test_zero_energy_is_an_input_error(mc):
    with pytest.raises(InputError):
        lsi_ratio(H1, 1.0, constant_field(3, 1.0), mc)


def test_backend_mismatch(mc):
    with pytest.raises(InputError):
        lsi_ratio(H1, 2.0, exp_field(3, 1.0), mc)
    with pytest.raises(InputError):
        lsi_ratio(GroupContext([1.0, 1.0]), 1.0, exp_field(5, 1.0), mc)


def test_poincare_for_coordinates(quad):
    assert poincare_ratio(H1, 1.0, coordinate_field(3, "x1"), quad).ratio == pytest.approx(1.0, rel=1e-6)
    # Var z = 1/4, E |grad z|^2 = E (x^2 + y^2) / 4 = 1/2
    assert poincare_ratio(H1, 1.0, coordinate_field(3, "z"), quad).ratio == pytest.approx(0.5, rel=1e-6)


def test_scan_small():
    res = lsi_scan([[1.0], [1.0, 2.0]], [0.5, 1.0], N=20_000, m=50, seed=3)
    assert len(res.records) == 2 * 2 * 4
    assert res.summary["assertions"]["exponential_law"]["pass"]
    header = res.to_csv().splitlines()[0]
    assert header == "n,alphas,t,field,entropy,entropy_se,energy,energy_se,ratio,ratio_se"
    assert "1.0;2.0" in res.to_csv()
    assert all(c["lower_bound_C"] > 0 for c in res.summary["cells"])


def test_scan_is_reproducible():
    a = lsi_scan([[1.0]], [1.0], N=5000, m=20, seed=3)
    b = lsi_scan([[1.0]], [1.0], N=5000, m=20, seed=3, workers=3)
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()


@pytest.mark.parametrize("index", [0, 1, 2])
def test_tensorization(index):
    alphas, pf = product_catalog()[index]
    r = tensorization_check(alphas, 1.0, pf, N=30_000, m=100, seed=4)
    assert r["entropy"]["pass"] and r["energy"]["pass"], r


def test_tensorization_needs_product_field():
    with pytest.raises(InputError):
        tensorization_check((1.0, 3.0), 1.0, exp_field(3, 1.0), N=100)


def test_invariance_under_F():
    assert invariance_F_check(2.0, 1.0, catalog_field(3, "linear_z:0.05"), N=30_000, m=100, seed=1)["pass"]


def test_invariance_under_projection():
    r = invariance_pi_check(GroupContext([1.0, 3.0]), 1.0, catalog_field(5, "poly:x1*y2 + z"),
                            N=30_000, m=100, seed=1)
    assert r["pass"], r


def test_backend_agreement_exp():
    assert backend_agreement(H1, 1.0, ["exp_x1:1"], N=20_000, m=50, seed=2)["pass"]
