import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize

from jkoflow import density as dn
from jkoflow import entropy as en
from jkoflow import potential as pot
from jkoflow.quantile_oracle import (OracleFailure, SmoothedEntropy, _objective,
                                     bin_particles, step_oracle_quantile)


@pytest.mark.parametrize("spec", [en.loglog(), en.powpow_equal(2.0), en.powpow(3.0, 2.0)],
                         ids=lambda s: s.label)
def test_smoothed_entropy_is_consistent(spec):
    eps = 0.05
    ent = SmoothedEntropy(spec, eps)
    # equal to S outside the patch
    out = np.array([0.3, 0.9, 1.1, 2.5])
    assert np.allclose(ent.s(out), spec.s(out), atol=1e-14)
    # S_eps' integrates to S_eps across the patch
    for x in (0.97, 1.0, 1.03, 1.05):
        ref, _ = quad(lambda t: float(ent.ds(t)), 1 - eps, x, epsabs=1e-14)
        assert float(ent.s(x)) - float(spec.s(1 - eps)) == pytest.approx(ref, abs=1e-12)
    # C^1 in S' at both patch ends and increasing inside
    for x in (1 - eps, 1 + eps):
        assert float(ent.ds(x - 1e-12)) == pytest.approx(float(ent.ds(x + 1e-12)), abs=1e-9)
        assert float(ent.d2s(x - 1e-10)) == pytest.approx(float(ent.d2s(x + 1e-10)), rel=1e-6)
    grid = np.linspace(1 - eps, 1 + eps, 401)
    assert np.all(np.diff(ent.ds(grid)) > 0)


def test_uniform_stays_uniform_without_potential():
    rho = dn.uniform(1.0, 64)
    res = step_oracle_quantile(en.loglog(), pot.zero(), rho, 0.05, n_particles=64)
    assert np.allclose(res.positions, np.linspace(0, 1, 65), atol=1e-12)
    assert dn.lp_distance(res.rho, rho) <= 1e-10


def test_oracle_matches_generic_minimizer_on_few_particles():
    # cross-check the Newton iteration against scipy's L-BFGS on the same objective
    spec, phi, tau, N = en.loglog(), pot.linear(2.0), 0.05, 32
    rho = dn.exp_normalized(1.0, 32)
    res = step_oracle_quantile(spec, phi, rho, tau, epsilon=0.05, n_particles=N)
    ent = SmoothedEntropy(spec, 0.05)
    Y = np.asarray(dn.quantile(rho, np.arange(N + 1) / N))
    Y[0], Y[-1] = 0.0, 1.0

    def f(z):
        # softmax spacings keep the particles ordered without constraints
        w = np.exp(z - z.max())
        X = np.r_[0.0, np.cumsum(w / w.sum())]
        X[-1] = 1.0
        return _objective(ent, phi, X, Y, N, tau)

    ref = minimize(f, np.log(np.diff(Y)), method="BFGS", options={"gtol": 1e-10, "maxiter": 5000})
    w = np.exp(ref.x - ref.x.max())
    ref_x = np.cumsum(w / w.sum())[:-1]
    assert res.objective <= ref.fun + 1e-10
    assert np.max(np.abs(res.positions[1:-1] - ref_x)) <= 1e-5


def test_bin_particles_preserves_mass_and_uniform():
    grid = dn.uniform(1.0, 16)
    X = np.linspace(0, 1, 33)
    out = bin_particles(X, grid)
    assert abs(out.mass - 1) <= 1e-12
    assert np.allclose(out.values, 1.0)


def test_oracle_rejects_bad_inputs():
    rho = dn.uniform(1.0, 16)
    with pytest.raises(ValueError):
        step_oracle_quantile(en.loglog(), pot.zero(), rho, 0.05, n_particles=8)
    with pytest.raises(ValueError):
        step_oracle_quantile(en.loglog(), pot.zero(), rho, -1.0)


def test_oracle_reports_nonconvergence():
    with pytest.raises(OracleFailure):
        step_oracle_quantile(en.loglog(), pot.linear(2.0), dn.exp_normalized(1.0, 64), 0.05,
                             n_particles=64, max_iters=1)
