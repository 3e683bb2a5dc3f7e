"""Checkers run over frames and trajectories.

Every checker is a pure function of its inputs.  The ``*_report`` helpers
wrap results as ``CheckReport`` records, which serialize to the diagnostic
JSON schema {check_name, status, worst_value, location, tolerances}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import density as dn
from . import entropy as en
from .jko import Trajectory
from .potential import Potential

PASS = "pass"
FAIL = "fail"
FLAGGED = "flagged"
NOT_APPLICABLE = "not_applicable"
DEFAULT_TOL_PHASE = 1e-6


@dataclass
class CheckReport:
    check_name: str
    status: str
    worst_value: float | None
    location: dict | None = None
    tolerances: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status in (PASS, NOT_APPLICABLE, FLAGGED)

    def to_dict(self) -> dict:
        worst = self.worst_value
        if worst is not None and not math.isfinite(worst):
            worst = str(worst)
        return {"check_name": self.check_name, "status": self.status, "worst_value": worst,
                "location": self.location, "tolerances": self.tolerances}


def _status(ok: bool) -> str:
    return PASS if ok else FAIL


# -- phases -------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class PhasePartition:
    tol_phase: float
    below: float
    plateau: float
    above: float
    idx_below: np.ndarray
    idx_plateau: np.ndarray
    idx_above: np.ndarray

    @property
    def total(self) -> float:
        return self.below + self.plateau + self.above


def phase_partition(rho: dn.GridDensity, tol_phase: float = DEFAULT_TOL_PHASE) -> PhasePartition:
    if tol_phase < 0:
        raise ValueError("tol_phase must be nonnegative")
    v = rho.values
    on = np.abs(v - 1) <= tol_phase
    lo = (v < 1) & ~on
    hi = (v > 1) & ~on
    h = rho.h
    return PhasePartition(tol_phase, h * int(lo.sum()), h * int(on.sum()), h * int(hi.sum()),
                          np.flatnonzero(lo), np.flatnonzero(on), np.flatnonzero(hi))


def plateau_runs(mask) -> list[tuple[int, int]]:
    """Maximal runs [a, b] (inclusive) of True entries."""
    mask = np.asarray(mask, dtype=bool)
    d = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


@dataclass(frozen=True)
class Emergence:
    time: float | None
    frame: int | None
    plateau_measure: float
    hypothesis_holds: bool


def emergence(traj: Trajectory, tol_phase: float = DEFAULT_TOL_PHASE) -> Emergence:
    """First frame whose plateau exceeds 2h with both side phases of positive measure.

    A plateau filling the whole domain counts as emerged; it is the trivial
    case of a uniform critical density.
    """
    if not traj.frames:
        raise ValueError("empty trajectory")
    for k, fr in enumerate(traj.frames):
        pp = phase_partition(fr.rho, tol_phase)
        full = pp.plateau >= fr.rho.l - 1e-12
        sides = pp.below > 0 and pp.above > 0
        if full or (pp.plateau > 2 * fr.rho.h and sides):
            return Emergence(fr.t, k, pp.plateau, sides or full)
    return Emergence(None, None, 0.0, False)


def emergence_check(traj: Trajectory, tol_phase: float = DEFAULT_TOL_PHASE) -> float | None:
    return emergence(traj, tol_phase).time


# -- contraction --------------------------------------------------------------
class GridMismatch(ValueError):
    pass


def contraction_check(traj1: Trajectory, traj2: Trajectory) -> float:
    """max_t ||rho1_t - rho2_t||_1 - ||rho1_0 - rho2_0||_1 over matched frames."""
    if not math.isclose(traj1.tau, traj2.tau, rel_tol=1e-12, abs_tol=0.0):
        raise GridMismatch(f"time steps differ: {traj1.tau!r} vs {traj2.tau!r}")
    if not traj1.frames[0].rho.same_grid(traj2.frames[0].rho):
        raise GridMismatch("trajectories live on different grids")
    count = min(len(traj1.frames), len(traj2.frames))
    for a, b in zip(traj1.frames[:count], traj2.frames[:count]):
        if not math.isclose(a.t, b.t, rel_tol=1e-12, abs_tol=1e-12):
            raise GridMismatch("frame times differ")
    d0 = dn.lp_distance(traj1.frames[0].rho, traj2.frames[0].rho)
    worst = 0.0
    for a, b in zip(traj1.frames[1:count], traj2.frames[1:count]):
        worst = max(worst, dn.lp_distance(a.rho, b.rho) - d0)
    return float(worst)


# -- free-boundary residuals --------------------------------------------------
def plateau_harmonicity(rho: dn.GridDensity, p, phi: Potential,
                        tol_phase: float = DEFAULT_TOL_PHASE) -> float | None:
    """max |D2 p + D2 Phi| / h^2 over interior plateau cells; None when no run has 3 interior cells."""
    p = np.asarray(p, dtype=float)
    on = np.abs(rho.values - 1) <= tol_phase
    x = rho.centers
    q = p + phi(x)
    worst = None
    for a, b in plateau_runs(on):
        if b - a - 1 < 3:
            continue
        i = np.arange(a + 1, b)
        r = np.abs(q[i - 1] - 2 * q[i] + q[i + 1]) / rho.h**2
        m = float(np.max(r))
        worst = m if worst is None else max(worst, m)
    return worst


@dataclass(frozen=True)
class FluxJump:
    index: int
    x: float
    outer_phase: str
    slope_plateau: float
    slope_outer: float

    @property
    def mismatch(self) -> float:
        return abs(self.slope_outer) - abs(self.slope_plateau)

    def to_dict(self) -> dict:
        return {"index": self.index, "x": self.x, "outer_phase": self.outer_phase,
                "slope_plateau": self.slope_plateau, "slope_outer": self.slope_outer,
                "mismatch": self.mismatch}


def flux_jump_check(rho: dn.GridDensity, p, spec: en.EntropySpec,
                    tol_phase: float = DEFAULT_TOL_PHASE) -> list[FluxJump]:
    """One-sided slopes of L_S on each side of every plateau boundary.

    Each slope uses two cells lying entirely in one phase, so the interface
    cell itself never enters a difference.
    """
    v = rho.values
    L = en.l_s(spec, v, p, tol_phase)
    on = np.abs(v - 1) <= tol_phase
    n, h = v.size, rho.h
    out = []
    for a, b in plateau_runs(on):
        if b > a:
            if a >= 2:
                outer = "above" if v[a - 1] > 1 else "below"
                out.append(FluxJump(a, float(rho.edges[a]), outer,
                                    (L[a + 1] - L[a]) / h, (L[a - 1] - L[a - 2]) / h))
            if b <= n - 3:
                outer = "above" if v[b + 1] > 1 else "below"
                out.append(FluxJump(b + 1, float(rho.edges[b + 1]), outer,
                                    (L[b] - L[b - 1]) / h, (L[b + 2] - L[b + 1]) / h))
    return out


# -- summability --------------------------------------------------------------
@dataclass
class SummabilityReport:
    beta_nominal: float
    sup_norms: list[float]
    lp_norms: dict[float, list[float]]

    def to_dict(self) -> dict:
        return {"beta_nominal": "inf" if math.isinf(self.beta_nominal) else self.beta_nominal,
                "sup_norms": self.sup_norms,
                "lp_norms": {str(k): v for k, v in self.lp_norms.items()}}


def nominal_beta(r: float, d: int = 1) -> float:
    return math.inf if d <= 2 else (2 * r - 1) * d / (d - 2)


def summability(traj: Trajectory, spec: en.EntropySpec, exponents=(1.0, 2.0, 4.0)) -> SummabilityReport:
    sups = [float(fr.rho.values.max()) for fr in traj.frames]
    norms = {float(q): [float((fr.rho.h * np.sum(fr.rho.values**q)) ** (1 / q)) for fr in traj.frames]
             for q in exponents}
    return SummabilityReport(nominal_beta(spec.r), sups, norms)


# -- trajectory-level reports -------------------------------------------------
def dissipation_report(traj: Trajectory, step_tol: float = 1e-8,
                       total_tol: float = 1e-6) -> list[CheckReport]:
    """Per-step energy inequality and the telescoped dissipation bound."""
    steps = traj.ledger[1:]
    worst = max((e.dissipation_slack for e in steps), default=0.0)
    k = max(steps, key=lambda e: e.dissipation_slack).k if steps else None
    total = sum(e.w2_step**2 for e in steps) / (2 * traj.tau)
    e0 = traj.ledger[0].energy
    gap = e0 - min(e.energy for e in traj.ledger)
    return [
        CheckReport("energy_dissipation_step", _status(worst <= step_tol), worst,
                    {"k": k}, {"slack": step_tol}),
        CheckReport("energy_dissipation_total", _status(total <= gap + total_tol), total - gap,
                    None, {"slack": total_tol}),
    ]


def mass_report(traj: Trajectory, tol: float = 1e-10) -> CheckReport:
    errs = [abs(fr.rho.mass - 1.0) for fr in traj.frames]
    i = int(np.argmax(errs))
    return CheckReport("mass_conservation", _status(errs[i] <= tol), errs[i],
                       {"frame": i, "t": traj.frames[i].t}, {"mass": tol})


def pressure_report(traj: Trajectory, spec: en.EntropySpec, tol_phase: float = DEFAULT_TOL_PHASE,
                    tol_pin: float = 1e-8) -> CheckReport:
    """Pressure inside [S'(1-), S'(1+)] and pinned to the right endpoint off the plateau."""
    lo, hi = spec.s_prime_1_minus, spec.s_prime_1_plus
    worst, box, where = 0.0, 0.0, None
    for k, fr in enumerate(traj.frames):
        p, v = np.asarray(fr.pressure, dtype=float), fr.rho.values
        if np.all(np.isnan(p)):
            continue
        box = max(box, float(np.max(np.maximum(lo - p, p - hi))))
        pin = np.where(v < 1 - tol_phase, np.abs(p - lo),
                       np.where(v > 1 + tol_phase, np.abs(p - hi), 0.0))
        if float(np.max(pin)) > worst or where is None:
            worst = max(worst, float(np.max(pin)))
            where = {"frame": k, "t": fr.t, "cell": int(np.argmax(pin))}
    if where is not None:
        where["box_excess"] = box
    return CheckReport("pressure_constraints", _status(worst <= tol_pin and box <= 0.0), worst,
                       where, {"pin": tol_pin, "tol_phase": tol_phase, "box": 0.0})


def linf_report(traj: Trajectory, phi: Potential, tol: float = 1e-6) -> CheckReport:
    """max rho_k <= max rho_0 + tol, armed only for constant Phi or inward drift at both ends."""
    l = traj.frames[0].rho.l
    armed = phi.linf_bound_armed(l)
    m0 = float(traj.frames[0].rho.values.max())
    excess = [float(fr.rho.values.max()) - m0 for fr in traj.frames]
    i = int(np.argmax(excess))
    if not armed:
        return CheckReport("linf_propagation", NOT_APPLICABLE, excess[i], {"frame": i},
                           {"excess": tol, "armed": False})
    return CheckReport("linf_propagation", _status(excess[i] <= tol), excess[i],
                       {"frame": i, "t": traj.frames[i].t}, {"excess": tol, "armed": True})


def positivity_report(traj: Trajectory, spec: en.EntropySpec) -> CheckReport:
    """Every cell strictly positive for k >= 1 when S'(0+) = -inf."""
    mins = [float(fr.rho.values.min()) for fr in traj.frames[1:]]
    worst = min(mins, default=math.inf)
    if spec.s_prime_0 != en.NEG_INF:
        return CheckReport("positivity", NOT_APPLICABLE, worst, None, {"required": False})
    i = int(np.argmin(mins)) + 1 if mins else None
    return CheckReport("positivity", _status(worst > 0), worst, {"frame": i}, {"required": True})


def holder_report(traj: Trajectory) -> CheckReport:
    """max W2(rho_t, rho_s) / sqrt(t - s + tau) against 2 sqrt(2 (E_0 - min E)); flagged, not failed."""
    gap = traj.ledger[0].energy - min(e.energy for e in traj.ledger)
    bound = 2 * math.sqrt(2 * max(gap, 0.0))
    frames = traj.frames
    if len(frames) > 64:
        frames = [frames[i] for i in np.unique(np.linspace(0, len(frames) - 1, 64).astype(int))]
    worst, where = 0.0, None
    for i, a in enumerate(frames):
        for b in frames[i + 1:]:
            r = dn.wasserstein2(a.rho, b.rho) / math.sqrt(b.t - a.t + traj.tau)
            if r > worst:
                worst, where = r, {"s": a.t, "t": b.t}
    return CheckReport("holder_estimate", PASS if worst <= bound + 1e-12 else FLAGGED, worst, where,
                       {"bound": bound})


def stationary_distance_report(traj: Trajectory, profile_rho: dn.GridDensity,
                               tol: float = 2e-2) -> CheckReport:
    d = dn.lp_distance(traj.final.rho, profile_rho)
    return CheckReport("stationary_l1", _status(d <= tol), d, {"t": traj.final.t}, {"l1": tol})


def emergence_report(traj: Trajectory, tol_phase: float = DEFAULT_TOL_PHASE) -> CheckReport:
    em = emergence(traj, tol_phase)
    status = PASS if em.time is not None else NOT_APPLICABLE
    return CheckReport("plateau_emergence", status, em.time,
                       {"frame": em.frame, "plateau_measure": em.plateau_measure,
                        "hypothesis_holds": em.hypothesis_holds}, {"tol_phase": tol_phase})


def free_boundary_reports(traj: Trajectory, spec: en.EntropySpec, phi: Potential,
                          tol_phase: float = DEFAULT_TOL_PHASE, tol_harm: float = 1e-4,
                          tol_jump: float = 0.05) -> list[CheckReport]:
    fr = traj.final
    if np.all(np.isnan(np.asarray(fr.pressure, dtype=float))):
        return []
    harm = plateau_harmonicity(fr.rho, fr.pressure, phi, tol_phase)
    reports = [CheckReport("plateau_harmonicity", NOT_APPLICABLE if harm is None else
                           _status(harm <= tol_harm), harm, {"t": fr.t},
                           {"residual": tol_harm, "tol_phase": tol_phase})]
    jumps = flux_jump_check(fr.rho, fr.pressure, spec, tol_phase)
    if not jumps:
        reports.append(CheckReport("flux_jump", NOT_APPLICABLE, None, None, {"mismatch": tol_jump}))
    else:
        j = max(jumps, key=lambda z: abs(z.mismatch))
        reports.append(CheckReport("flux_jump", _status(abs(j.mismatch) <= tol_jump), j.mismatch,
                                   j.to_dict(), {"mismatch": tol_jump}))
    return reports


def trajectory_reports(traj: Trajectory, spec: en.EntropySpec, phi: Potential,
                       tol_phase: float = DEFAULT_TOL_PHASE) -> list[CheckReport]:
    reports = [mass_report(traj)]
    if traj.meta.get("solver", "jko") == "jko":
        reports += dissipation_report(traj)
        reports.append(pressure_report(traj, spec, tol_phase))
    reports += [linf_report(traj, phi), positivity_report(traj, spec), holder_report(traj),
                emergence_report(traj, tol_phase)]
    reports += free_boundary_reports(traj, spec, phi, tol_phase)
    return reports
