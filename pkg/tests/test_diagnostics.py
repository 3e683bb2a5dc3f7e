import math

import numpy as np
import pytest

from jkoflow import density as dn
from jkoflow import diagnostics as dg
from jkoflow import entropy as en
from jkoflow import potential as pot
from jkoflow import stationary as st
from jkoflow.jko import Frame, LedgerEntry, Trajectory, run_trajectory
from jkoflow.pde_fd import fd_run


def test_phase_partition_examples():
    u = dn.uniform(1.0, 64)
    assert dg.phase_partition(u, 1e-6).plateau == pytest.approx(1.0)
    n = 512
    rho, _ = st.stationary_log_linear(1.0).sample(n)
    assert abs(dg.phase_partition(rho, 1e-6).plateau - 0.5) <= 1.0 / n
    e = dn.exp_normalized(1.0, n)
    pp = dg.phase_partition(e, 1e-6)
    assert pp.plateau <= 2.0 / n
    assert pp.total == pytest.approx(1.0)


def test_plateau_runs():
    assert dg.plateau_runs(np.array([0, 1, 1, 0, 1], dtype=bool)) == [(1, 2), (4, 4)]
    assert dg.plateau_runs(np.zeros(4, dtype=bool)) == []


def test_emergence_after_one_step():
    traj = run_trajectory(en.loglog(), pot.linear(2.0), dn.exp_normalized(1.0, 256), 0.05, 0.1)
    assert dg.emergence_check(traj) == pytest.approx(0.05)


def test_emergence_for_uniform_critical_density():
    traj = run_trajectory(en.loglog(), pot.zero(), dn.uniform(1.0, 32), 0.1, 0.2)
    assert dg.emergence_check(traj) == 0.0


def test_no_emergence_below_threshold():
    rho0 = dn.from_function(lambda x: 1 + 0.5 * np.cos(np.pi * x / 4), 4.0, 64)
    assert rho0.values.max() < 1
    traj = fd_run(en.loglog(), pot.zero(), rho0, 1.0, frame_dt=0.25)
    assert dg.emergence_check(traj) is None


def test_contraction_identical_and_mismatch():
    traj = run_trajectory(en.loglog(), pot.linear(2.0), dn.exp_normalized(1.0, 64), 0.05, 0.2)
    assert dg.contraction_check(traj, traj) == 0.0
    other = run_trajectory(en.loglog(), pot.linear(2.0), dn.exp_normalized(1.0, 32), 0.05, 0.2)
    with pytest.raises(dg.GridMismatch):
        dg.contraction_check(traj, other)
    slow = run_trajectory(en.loglog(), pot.linear(2.0), dn.exp_normalized(1.0, 64), 0.1, 0.2)
    with pytest.raises(dg.GridMismatch):
        dg.contraction_check(traj, slow)


def test_ordered_pair_is_exactly_nonincreasing_under_fd():
    # comparison principle: rho1 <= rho2 pointwise up to scaling keeps L1 distance monotone
    n = 64
    base = dn.exp_normalized(1.0, n).values
    bump = np.where(np.arange(n) < n // 4, 1.0, 0.0)
    a = dn.normalized(base, 1.0)
    b = dn.normalized(base + 0.3 * bump, 1.0)
    ta = fd_run(en.loglog(), pot.linear(2.0), a, 0.2, frame_dt=0.02)
    tb = fd_run(en.loglog(), pot.linear(2.0), b, 0.2, frame_dt=0.02)
    d = [dn.lp_distance(x.rho, y.rho) for x, y in zip(ta.frames, tb.frames)]
    assert all(q <= p + 1e-12 for p, q in zip(d, d[1:]))


def test_plateau_harmonicity_examples():
    rho = dn.uniform(1.0, 32)
    assert dg.plateau_harmonicity(rho, np.full(32, 1.5), pot.zero()) == 0.0
    x = rho.centers
    kinked = 1.5 + 0.3 * np.abs(x - 0.5)
    assert dg.plateau_harmonicity(rho, kinked, pot.zero()) > 1.0
    assert dg.plateau_harmonicity(dn.exp_normalized(1.0, 32), np.ones(32), pot.zero()) is None


def test_flux_jump_examples():
    spec = en.loglog()
    u = dn.uniform(1.0, 32)
    assert dg.flux_jump_check(u, np.full(32, 1.5), spec) == []
    # plateau with p = 2 - x on [0.25, 0.75]; below-phase density with a different slope
    n = 64
    x = (np.arange(n) + 0.5) / n
    v = np.where(x < 0.25, 1.2, np.where(x > 0.75, 0.8 - 2.0 * (x - 0.75), 1.0))
    rho = _rescale_off_plateau(v)
    v = rho.values
    p = np.where(v > 1, 2.0, np.where(v < 1, 1.0, 1.7 - 0.4 * (x - 0.25)))
    jumps = dg.flux_jump_check(rho, p, spec)
    right = [j for j in jumps if j.outer_phase == "below"][0]
    assert right.slope_plateau == pytest.approx(-0.4, abs=1e-12)
    assert right.mismatch == pytest.approx(abs(right.slope_outer) - 0.4, abs=1e-12)
    assert abs(right.slope_outer) > 1.0


def _rescale_off_plateau(v):
    n = v.size
    on = v == 1.0
    off = ~on
    w = v.copy()
    w[off] *= (n - on.sum()) / w[off].sum()
    return dn.GridDensity(1.0, w)


def _toy_traj(values_list, pressures, tau=0.1):
    frames = [Frame(k * tau, dn.GridDensity(1.0, v), p) for k, (v, p) in
              enumerate(zip(values_list, pressures))]
    ledger = [LedgerEntry(k, k * tau, 1.0 - 0.1 * k, 0.0, 0.0, 0, 0.0) for k in range(len(frames))]
    return Trajectory(tau, frames, ledger)


def test_pressure_report_flags_unpinned_cell():
    spec = en.loglog()
    v = np.r_[np.full(8, 1.5), np.full(8, 0.5)]
    good = en.pinned_pressure(spec, v)
    bad = good.copy()
    bad[12] = 1.3
    assert dg.pressure_report(_toy_traj([v], [good]), spec).status == dg.PASS
    rep = dg.pressure_report(_toy_traj([v, v], [good, bad]), spec)
    assert rep.status == dg.FAIL
    assert rep.location["frame"] == 1 and rep.location["cell"] == 12


def test_linf_and_positivity_reports():
    spec = en.loglog()
    v0 = np.r_[np.full(8, 1.5), np.full(8, 0.5)]
    v1 = np.r_[np.full(8, 1.6), np.full(8, 0.4)]
    p = [en.pinned_pressure(spec, v) for v in (v0, v1)]
    traj = _toy_traj([v0, v1], p)
    assert dg.linf_report(traj, pot.zero()).status == dg.FAIL
    assert dg.linf_report(traj, pot.linear(2.0)).status == dg.NOT_APPLICABLE
    assert dg.positivity_report(traj, spec).status == dg.PASS
    v2 = np.r_[np.full(8, 2.0), np.zeros(8)]
    traj = _toy_traj([v0, v2], [p[0], en.pinned_pressure(spec, v2)])
    assert dg.positivity_report(traj, spec).status == dg.FAIL
    assert dg.positivity_report(traj, en.powpow_equal(2.0)).status == dg.NOT_APPLICABLE


def test_reports_serialize():
    traj = run_trajectory(en.loglog(), pot.linear(2.0), dn.exp_normalized(1.0, 64), 0.05, 0.2)
    reps = dg.trajectory_reports(traj, en.loglog(), pot.linear(2.0))
    names = {r.check_name for r in reps}
    assert {"mass_conservation", "energy_dissipation_step", "pressure_constraints",
            "holder_estimate"} <= names
    for r in reps:
        d = r.to_dict()
        assert set(d) == {"check_name", "status", "worst_value", "location", "tolerances"}
        # free-boundary residuals only apply to converged runs
        if r.check_name not in ("plateau_harmonicity", "flux_jump"):
            assert r.passed


def test_summability_norms():
    traj = run_trajectory(en.loglog(), pot.zero(), dn.uniform(1.0, 16), 0.1, 0.2)
    rep = dg.summability(traj, en.loglog())
    assert math.isinf(rep.beta_nominal)
    assert np.allclose(rep.lp_norms[2.0], 1.0)
    assert dg.nominal_beta(2.0, 3) == pytest.approx(9.0)
