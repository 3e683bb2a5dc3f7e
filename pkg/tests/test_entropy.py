import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from jkoflow import entropy as en

FAMILIES = [en.loglog(), en.logpow(2.0), en.powpow_equal(2.0), en.powpow(3.0, 2.0)]
IDS = [s.label for s in FAMILIES]


def test_eval_entropy_examples():
    assert en.eval_entropy(en.loglog(), 1.0) == 0.0
    assert en.eval_entropy(en.loglog(), 2.0) == pytest.approx(4 * math.log(2), abs=1e-12)
    assert en.eval_entropy(en.powpow_equal(2.0), 0.5) == pytest.approx(0.25, abs=1e-14)


def test_negative_density_rejected():
    with pytest.raises(en.EntropyDomainError):
        en.eval_entropy(en.loglog(), -0.1)


def test_subdifferential_examples():
    assert en.subdifferential(en.loglog(), 1.0) == (1.0, 2.0)
    lo, hi = en.subdifferential(en.loglog(), 0.5)
    assert lo == hi == pytest.approx(1 + math.log(0.5))
    assert en.subdifferential(en.powpow_equal(2.0), 1.0) == pytest.approx((2.0, 4.0))


def test_generalized_inverse_examples():
    spec = en.loglog()
    assert en.generalized_inverse(spec, 1.5) == 1.0
    assert en.generalized_inverse(spec, 0.5) == pytest.approx(math.exp(-0.5), rel=1e-12)
    assert en.generalized_inverse(spec, 3.0) == pytest.approx(math.exp(0.5), rel=1e-12)


def test_l_s_examples():
    assert en.l_s(en.loglog(), 0.5, 1.0) == pytest.approx(0.5)
    assert en.l_s(en.loglog(), 1.0, 1.3) == pytest.approx(1.3)
    assert en.l_s(en.powpow_equal(2.0), 0.5, 2.0) == pytest.approx(1.25)


def test_l_s_rejects_inconsistent_pair():
    with pytest.raises(en.ConstraintViolation):
        en.l_s(en.loglog(), 0.5, 1.7)
    with pytest.raises(en.ConstraintViolation):
        en.l_s(en.loglog(), 1.0, 2.5)


@pytest.mark.parametrize("spec", FAMILIES, ids=IDS)
def test_entropy_matches_integral_of_derivative(spec):
    # S(x) - S(1) = integral of S' from 1 to x, computed by adaptive quadrature
    for x in (0.05, 0.3, 0.9, 1.4, 3.0, 7.5):
        ref, _ = quad(lambda t: spec.ds(t), 1.0, x, epsabs=1e-13, epsrel=1e-12)
        assert spec.s(x) - spec.s_at_1 == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("spec", FAMILIES, ids=IDS)
def test_second_derivative_matches_finite_difference(spec):
    for x in (0.2, 0.7, 1.6, 4.0):
        d = 1e-5 * x
        fd = (spec.ds(x + d) - spec.ds(x - d)) / (2 * d)
        assert spec.d2s(x) == pytest.approx(fd, rel=1e-7)


@pytest.mark.parametrize("spec", FAMILIES, ids=IDS)
def test_generalized_inverse_against_root_finder(spec):
    vals = np.concatenate([np.linspace(spec.s_prime_1_minus - 2.0, spec.s_prime_1_minus - 1e-3, 7),
                           np.linspace(spec.s_prime_1_plus + 1e-3, spec.s_prime_1_plus + 3, 7)])
    for v in vals:
        got = en.generalized_inverse(spec, v)
        if v > spec.s_prime_1_plus:
            ref = brentq(lambda r: spec.ds(r) - v, 1 + 1e-15, 1e6, xtol=1e-15)
        elif v <= spec.s_prime_0:
            ref = 0.0
        else:
            ref = brentq(lambda r: spec.ds(r) - v, 1e-300, 1.0, xtol=1e-15)
        assert got == pytest.approx(ref, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("spec", FAMILIES, ids=IDS)
def test_generalized_inverse_maps_kink_interval_to_one(spec):
    v = np.linspace(spec.s_prime_1_minus, spec.s_prime_1_plus, 11)
    assert np.all(en.generalized_inverse(spec, v) == 1.0)


@pytest.mark.parametrize("spec", FAMILIES, ids=IDS)
@settings(max_examples=60, deadline=None)
@given(a=st.floats(-6, 8), b=st.floats(-6, 8))
def test_generalized_inverse_is_monotone(spec, a, b):
    lo, hi = min(a, b), max(a, b)
    assert en.generalized_inverse(spec, lo) <= en.generalized_inverse(spec, hi)


def test_pinned_pressure_by_phase():
    spec = en.loglog()
    p = en.pinned_pressure(spec, np.array([0.5, 1.0, 1.5]), plateau_value=1.4)
    assert p.tolist() == [1.0, 1.4, 2.0]


def test_subgradient_distance():
    spec = en.loglog()
    d = en.subgradient_distance(spec, np.array([1.0, 1.0, 0.5]), np.array([1.5, 2.5, 0.0]))
    assert d[0] == 0.0
    assert d[1] == pytest.approx(0.5)
    assert d[2] == pytest.approx(abs(1 + math.log(0.5)))


def test_decompose_loglog_has_trivial_smooth_part():
    dec = en.decompose(en.loglog())
    rho = np.array([0.1, 0.5, 0.9, 1.5, 3.0])
    sb = dec.s_b(rho)
    assert np.allclose(sb, sb[0], atol=1e-13)
    p = en.pinned_pressure(en.loglog(), rho)
    assert np.allclose(dec.l_s(rho, p), p * rho, atol=1e-13)


def test_decompose_logpow_smooth_part_is_flat_at_one():
    dec = en.decompose(en.logpow(2.0))
    assert float(dec.s_b_prime(1.0)) == 0.0
    left = float(dec.s_b_prime(1 - 1e-9))
    right = float(dec.s_b_prime(1 + 1e-9))
    assert abs(left) < 1e-7 and abs(right) < 1e-7


def test_decompose_powpow_sums_back():
    spec = en.powpow(3.0, 2.0)
    dec = en.decompose(spec, 1.5)
    rho = np.array([0.3, 1.0, 2.7])
    assert np.allclose(dec.s_a(rho) + dec.s_b(rho), spec.s(rho), atol=1e-10)


@pytest.mark.parametrize("spec", FAMILIES, ids=IDS)
def test_decomposition_reproduces_l_s(spec):
    dec = en.decompose(spec)
    rho = np.array([0.2, 0.6, 1.0, 1.0, 1.8, 4.0])
    p = en.pinned_pressure(spec, rho)
    p[3] = 0.5 * (spec.s_prime_1_minus + spec.s_prime_1_plus)
    assert np.allclose(dec.l_s(rho, p), en.l_s(spec, rho, p), atol=1e-10)


def test_validate_loglog_passes_with_expected_constants():
    spec = en.loglog()
    rep = en.validate_assumptions(spec)
    assert rep.passed
    assert spec.m == 1 and spec.sigma2 == 1
    assert rep.positivity_of_iterates


def test_validate_logpow_uses_r_equal_m():
    spec = en.logpow(3.0)
    assert spec.r == 3.0
    assert en.validate_assumptions(spec).passed


@pytest.mark.parametrize("spec", FAMILIES, ids=IDS)
def test_builtin_families_validate(spec):
    assert en.validate_assumptions(spec).passed


def test_custom_table_with_concave_dip_fails(tmp_path):
    rho = np.concatenate([np.linspace(0.01, 1.0, 60), np.linspace(1.0, 5.0, 80)[1:]])
    sp = np.where(rho <= 1, 1 + np.log(rho), 2 * (1 + np.log(rho)))
    dip = (rho > 2.0) & (rho < 2.6)
    sp[dip] = sp[dip] - 0.8 * np.sin(np.pi * (rho[dip] - 2.0) / 0.6)
    lines = ["s_prime_1_minus=1", "s_prime_1_plus=2", "s_at_1=0", "rho,s_prime"]
    lines += [f"{float(r)!r},{float(v)!r}" for r, v in zip(rho, sp) if r != 1.0]
    path = tmp_path / "dip.csv"
    path.write_text("\n".join(lines) + "\n")
    spec = en.custom(en.load_table(path))
    rep = en.validate_assumptions(spec)
    assert not rep.passed
    bad = rep.failures()
    assert bad and all(c.location is not None for c in bad)
    assert any(2.0 <= c.location <= 2.7 for c in bad)


def test_from_name_dispatch():
    assert en.from_name("loglog") == en.loglog()
    assert en.from_name("powpow", 3, 2) == en.powpow(3.0, 2.0)
    with pytest.raises(ValueError):
        en.from_name("nope")
