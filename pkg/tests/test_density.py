import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from jkoflow import density as dn


def half_block(n=8):
    v = np.zeros(n)
    v[: n // 2] = 2.0
    return dn.GridDensity(1.0, v)


def test_unit_mass_enforced():
    with pytest.raises(ValueError):
        dn.GridDensity(1.0, np.full(4, 0.9))
    with pytest.raises(ValueError):
        dn.GridDensity(1.0, np.array([2.0, -0.5, 0.5, 0.0]))


@pytest.mark.parametrize("make", [lambda: dn.uniform(2.0, 64), lambda: dn.exp_normalized(1.0, 100),
                                  lambda: dn.spike(1.0, 128, 0.3, 0.05, 8.0),
                                  lambda: dn.random_smooth(np.random.default_rng(3), 1.0, 96)])
def test_factories_have_unit_mass(make):
    assert abs(make().mass - 1) <= 1e-12


def test_exp_normalized_cell_averages():
    rho = dn.exp_normalized(1.0, 10)
    h = 0.1
    x0 = np.arange(10) * h
    exact = (np.exp(-x0) - np.exp(-x0 - h)) / h / (1 - math.exp(-1))
    assert np.allclose(rho.values, exact, rtol=1e-13)


def test_quantile_examples():
    assert dn.quantile(dn.uniform(1.0, 16), 0.25) == pytest.approx(0.25)
    assert dn.quantile(half_block(), 0.5) == pytest.approx(0.25)
    assert dn.quantile(half_block(), 1.0) == pytest.approx(0.5)


def test_wasserstein_examples():
    u = dn.uniform(1.0, 8)
    assert dn.wasserstein2(u, u) == 0.0
    left = dn.GridDensity(2.0, np.r_[np.ones(8), np.zeros(8)])
    right = dn.GridDensity(2.0, np.r_[np.zeros(8), np.ones(8)])
    assert dn.wasserstein2(left, right) == pytest.approx(1.0, abs=1e-14)
    assert dn.wasserstein2(u, half_block()) == pytest.approx(1 / math.sqrt(12), abs=1e-14)


def test_wasserstein_against_quadrature_of_quantiles():
    rng = np.random.default_rng(11)
    a = dn.random_smooth(rng, 1.0, 12)
    b = dn.random_smooth(rng, 1.0, 12)
    s = (np.arange(200000) + 0.5) / 200000
    ref = np.mean((dn.quantile(a, s) - dn.quantile(b, s)) ** 2)
    assert dn.wasserstein2_squared(a, b) == pytest.approx(ref, rel=1e-8)


def test_kantorovich_identity():
    u = dn.uniform(1.0, 16)
    td = dn.kantorovich(u, u)
    assert np.allclose(td.map_values, u.centers, atol=1e-14)
    assert np.allclose(td.potential_values, 0.0, atol=1e-14)
    assert td.w2 == 0.0


def test_kantorovich_translation():
    a = 0.375
    n = 32
    rho = dn.GridDensity(2.0, np.r_[np.ones(16), np.zeros(16)])
    shift = int(a / (2.0 / n))
    nu = dn.GridDensity(2.0, np.roll(rho.values, shift))
    td = dn.kantorovich(rho, nu)
    support = rho.values > 0
    grad = np.gradient(td.potential_values, rho.centers)
    assert np.allclose(grad[support][1:-1], -a, atol=1e-12)
    assert td.w2 == pytest.approx(a, abs=1e-13)
    h = rho.h
    midpoint = h * np.sum(rho.values * (rho.centers - td.map_values) ** 2)
    assert td.w2**2 == pytest.approx(midpoint, abs=1e-10)


def test_atomic_formula_against_assignment():
    rng = np.random.default_rng(5)
    K = 40
    for _ in range(20):
        x = np.sort(rng.uniform(0, 1, K))
        y = np.sort(rng.uniform(0, 1, K))
        cost = (x[:, None] - y[None, :]) ** 2
        r, c = linear_sum_assignment(cost)
        lp = cost[r, c].sum() / K
        got = dn.atomic_wasserstein2_squared(x, np.full(K, 1 / K), y, np.full(K, 1 / K))
        assert got == pytest.approx(lp, abs=1e-12)


def test_refined_atomization_converges_to_continuous_w2():
    rng = np.random.default_rng(8)
    a = dn.random_smooth(rng, 1.0, 8)
    b = dn.random_smooth(rng, 1.0, 8)
    exact = dn.wasserstein2_squared(a, b)
    errs = []
    for M in (64, 128, 256):
        s = (np.arange(M) + 0.5) / M
        x, y = dn.quantile(a, s), dn.quantile(b, s)
        cost = (x[:, None] - y[None, :]) ** 2
        r, c = linear_sum_assignment(cost)
        errs.append(abs(cost[r, c].sum() / M - exact))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 1e-5


def test_lp_distance_examples():
    u = dn.uniform(1.0, 8)
    assert dn.lp_distance(u, u) == 0.0
    assert dn.lp_distance(u, half_block()) == pytest.approx(1.0)
    assert dn.lp_distance(u, half_block(), np.inf) == pytest.approx(1.0)


def test_lp_distance_grid_mismatch():
    with pytest.raises(dn.DomainMismatch):
        dn.lp_distance(dn.uniform(1.0, 8), dn.uniform(1.0, 16))


def test_load_csv_round_trip(tmp_path):
    rho = dn.exp_normalized(1.0, 20)
    path = tmp_path / "rho.csv"
    path.write_text("x,rho\n" + "".join(f"{x!r},{2 * v!r}\n" for x, v in
                                         zip(rho.centers.tolist(), rho.values.tolist())))
    got, factor = dn.load_csv(path)
    assert np.allclose(got.values, rho.values, rtol=1e-14)
    assert factor == pytest.approx(0.5)


densities = st.lists(st.floats(0.0, 5.0), min_size=2, max_size=16).filter(lambda v: sum(v) > 1e-3)


@settings(max_examples=80, deadline=None)
@given(a=densities, b=densities, c=densities)
def test_w2_metric_properties(a, b, c):
    n = min(len(a), len(b), len(c))
    ra, rb, rc = (dn.normalized(v[:n], 1.0) if sum(v[:n]) > 1e-3 else dn.uniform(1.0, n)
                  for v in (a, b, c))
    dab = dn.wasserstein2(ra, rb)
    assert dab == pytest.approx(dn.wasserstein2(rb, ra), abs=1e-12)
    assert dab <= dn.wasserstein2(ra, rc) + dn.wasserstein2(rc, rb) + 1e-12
    assert 0.0 <= dab <= 1.0


@settings(max_examples=60, deadline=None)
@given(v=densities, s=st.lists(st.floats(0, 1), min_size=2, max_size=20))
def test_quantile_is_monotone_and_inverts_cdf(v, s):
    rho = dn.normalized(v, 1.0)
    s = np.sort(np.array(s))
    q = dn.quantile(rho, s)
    assert np.all(np.diff(q) >= -1e-14)
    inner = (s > 1e-9) & (s < 1 - 1e-9)
    assert np.allclose(rho.cdf(q[inner]), s[inner], atol=1e-12)
