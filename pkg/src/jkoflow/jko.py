"""Minimizing-movement steps and trajectories.

A step from rho_prev solves the first-order conditions of

    min_rho  E(rho) + W2(rho, rho_prev)^2 / (2 tau),

namely rho = s^{-1}(C - phi / tau - Phi) with phi the Kantorovich potential
from rho to rho_prev and C fixed by unit mass.  On the line phi' = x - T with
T = Q_prev(F_rho), so the conditions close into a banded system in the
unknowns f = C - phi / tau - Phi and the CDF values m = F_rho at the cell
centers.  The default solver runs a damped semismooth Newton method on that
system; the plain damped Picard iteration on rho is kept as a fallback.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from . import density as dn
from . import entropy as en
from .potential import Potential


class JkoStepError(RuntimeError):
    def __init__(self, message, best=None, residuals=None):
        super().__init__(message)
        self.best = best
        self.residuals = residuals or {}


class MassConstantError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    method: str = "newton"
    damping: float = 0.5
    max_iters: int = 5000
    tol_fix: float = 1e-8
    tol_mass: float = 1e-12
    tol_phase: float = 1e-6
    newton_iters: int = 100
    fallback: bool = True


@dataclass(eq=False)
class JkoStepResult:
    rho_new: dn.GridDensity
    pressure: np.ndarray
    potential: np.ndarray
    mass_constant: float
    velocity: np.ndarray
    w2_step: float
    iterations: int
    optimality_residual: float
    mass_residual: float
    method: str = "newton"
    warm: np.ndarray | None = None


def energy(spec: en.EntropySpec, phi: Potential, rho: dn.GridDensity) -> float:
    v = rho.values
    return float(rho.h * np.sum(spec.s(v) + phi(rho.centers) * v))


def jko_objective(spec, phi, rho, rho_prev, tau) -> float:
    return energy(spec, phi, rho) + dn.wasserstein2_squared(rho, rho_prev) / (2 * tau)


def mass_constant(spec: en.EntropySpec, g, h: float, tol_mass: float = 1e-12,
                  max_growth: int = 1000, guess: float | None = None) -> float:
    """C with h * sum(s^{-1}(C - g)) = 1, by bisection on a geometrically grown bracket.

    A guess that already meets tol_mass is returned unchanged.
    """
    g = np.asarray(g, dtype=float)

    def excess(c):
        return h * float(np.sum(en.generalized_inverse(spec, c - g))) - 1.0

    if guess is not None and abs(excess(guess)) <= tol_mass:
        return float(guess)
    lo = float(g.min()) + spec.s_prime_1_minus - 1.0
    hi = float(g.max()) + spec.s_prime_1_plus + 1.0
    step = 1.0
    for _ in range(max_growth):
        if excess(lo) <= 0:
            break
        lo -= step
        step *= 2
    else:
        raise MassConstantError(f"no lower bracket; mass at C={lo!r} is {excess(lo) + 1!r}")
    step = 1.0
    for _ in range(max_growth):
        if excess(hi) >= 0:
            break
        hi += step
        step *= 2
    else:
        raise MassConstantError(f"no upper bracket; mass at C={hi!r} is {excess(hi) + 1!r}")
    if abs(excess(lo)) <= tol_mass:
        return lo
    if abs(excess(hi)) <= tol_mass:
        return hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        e = excess(mid)
        if abs(e) <= tol_mass:
            return mid
        if e < 0:
            lo = mid
        else:
            hi = mid
    # bracket exhausted at machine precision: return the closer endpoint
    return lo if abs(excess(lo)) <= abs(excess(hi)) else hi


def optimality_residual(spec, rho_values, v) -> float:
    return float(np.max(en.subgradient_distance(spec, rho_values, v)))


def _finish(spec, phi, rho_prev, tau, f, iterations, method, opts) -> JkoStepResult:
    """Density, pressure and certificates from a converged f = C - phi / tau - Phi.

    A uniform shift of f restores unit mass to tol_mass without touching the
    potential increments; the residual is then recomputed from scratch.
    """
    x = rho_prev.centers
    shift = mass_constant(spec, -f, rho_prev.h, opts.tol_mass, guess=0.0)
    v = f + shift
    values = en.generalized_inverse(spec, v)
    pressure = np.clip(v, spec.s_prime_1_minus, spec.s_prime_1_plus)
    mass_res = abs(rho_prev.h * values.sum() - 1.0)
    rho_new = dn.GridDensity(rho_prev.l, values)
    td = dn.kantorovich(rho_new, rho_prev)
    g = td.potential_values / tau + phi(x)
    C = float(v[0] + g[0])
    C += _best_shift(spec, values, C - g)
    opt_res = optimality_residual(spec, values, C - g)
    velocity = (x - td.map_values) / tau
    return JkoStepResult(rho_new, pressure, td.potential_values, C, velocity, td.w2,
                         iterations, opt_res, mass_res, method, warm=v)


def _best_shift(spec, rho, v) -> float:
    """Constant c minimizing the max distance of v + c to the subdifferential at rho."""
    lo = np.where(rho == 1, spec.s_prime_1_minus, np.where(rho > 0, spec.ds(np.where(rho > 0, rho, 1.0)), -np.inf))
    hi = np.where(rho == 1, spec.s_prime_1_plus, np.where(rho > 0, lo, spec.s_prime_0))
    with np.errstate(invalid="ignore"):
        need_up = np.max(np.where(np.isfinite(lo), lo - v, -np.inf))
        need_down = np.max(np.where(np.isfinite(hi), v - hi, -np.inf))
    if not np.isfinite(need_up) or not np.isfinite(need_down):
        return 0.0
    return 0.5 * (need_up - need_down)


# -- Newton solver -------------------------------------------------------------
def _initial_f(spec, rho_prev: dn.GridDensity) -> np.ndarray:
    v = rho_prev.values
    f = np.empty_like(v)
    one = v == 1
    zero = v <= 0
    mid = ~(one | zero)
    f[mid] = spec.ds(v[mid])
    f[one] = 0.5 * (spec.s_prime_1_minus + spec.s_prime_1_plus)
    f[zero] = spec.ds(1e-12) if spec.s_prime_0 == en.NEG_INF else spec.s_prime_0 - 1e-3
    return f


class _NewtonSystem:
    """Residual and banded Jacobian of the discrete optimality system.

    Unknowns are interleaved as z = [f_0, q_0, f_1, q_1, ...] where q_j is the
    mass left of center j for j < split and the mass right of it otherwise.
    Rows 2j hold the mass increments, rows 2j + 1 the potential increments,
    and the last row closes the mass at the right end.
    """

    def __init__(self, spec, phi, rho_prev, tau, split):
        self.spec = spec
        self.tau = tau
        self.h = rho_prev.h
        self.n = rho_prev.n
        self.x = rho_prev.centers
        self.dPhi = np.diff(phi(self.x))
        self.qf = dn.QuantileFunction(rho_prev)
        self.split = int(np.clip(split, 1, self.n - 1))
        self.head = np.arange(self.n) < self.split

    def levels(self, rho):
        v = rho * self.h
        left = np.cumsum(v) - 0.5 * v
        right = np.cumsum(v[::-1])[::-1] - 0.5 * v
        return np.where(self.head, left, right)

    def transport(self, q):
        xh, sh = self.qf.head(q)
        xt, st = self.qf.tail(q)
        return np.where(self.head, xh, xt), np.where(self.head, sh, -st)

    def residual(self, f, q, with_jac=False):
        spec, h, tau, n, k = self.spec, self.h, self.tau, self.n, self.split
        with np.errstate(over="ignore", invalid="ignore"):
            rho = en.generalized_inverse(spec, f)
        T, dT = self.transport(q)
        d = self.x - T
        hr = 0.5 * h * (rho[:-1] + rho[1:])
        r = np.empty(2 * n)
        r[0] = q[0] - 0.5 * h * rho[0]
        r[2:2 * k:2] = q[1:k] - q[:k - 1] - hr[:k - 1]
        r[2 * k] = q[k] + q[k - 1] + hr[k - 1] - 1.0
        r[2 * k + 2:2 * n:2] = q[k:-1] - q[k + 1:] - hr[k:]
        r[1:2 * n - 1:2] = f[1:] - f[:-1] + self.dPhi + 0.5 * h * (d[:-1] + d[1:]) / tau
        r[2 * n - 1] = q[-1] - 0.5 * h * rho[-1]
        if not with_jac:
            return r, rho
        drho = np.maximum(en.generalized_inverse_slope(spec, f), 1e-12)
        a = -0.5 * h * drho
        b = -0.5 * h * dT / tau
        J = np.zeros((5, 2 * n))  # J[2 + i - j, j] holds entry (i, j)

        def put(i, j, v):
            J[2 + i - j, j] = v

        F = 2 * np.arange(n)
        Q = F + 1
        # mass increments, head part
        put(0, Q[0], 1.0)
        put(0, F[0], a[0])
        j = np.arange(1, k)
        put(2 * j, Q[j], 1.0)
        put(2 * j, F[j], a[j])
        put(2 * j, Q[j - 1], -1.0)
        put(2 * j, F[j - 1], a[j - 1])
        # junction where the variable switches to right mass
        put(2 * k, Q[k], 1.0)
        put(2 * k, Q[k - 1], 1.0)
        put(2 * k, F[k], -a[k])
        put(2 * k, F[k - 1], -a[k - 1])
        # mass increments, tail part
        j = np.arange(k + 1, n)
        put(2 * j, Q[j - 1], 1.0)
        put(2 * j, Q[j], -1.0)
        put(2 * j, F[j - 1], a[j - 1])
        put(2 * j, F[j], a[j])
        # potential increments
        j = np.arange(n - 1)
        put(2 * j + 1, F[j + 1], 1.0)
        put(2 * j + 1, F[j], -1.0)
        put(2 * j + 1, Q[j], b[j])
        put(2 * j + 1, Q[j + 1], b[j + 1])
        # mass to the right of the last center
        put(2 * n - 1, Q[n - 1], 1.0)
        put(2 * n - 1, F[n - 1], a[n - 1])
        # row weights: potential rows inherit the rounding of q amplified by
        # Q', which would otherwise mask the mass rows;
        # with S'(0+) = -inf the density has thin positive tails, so mass rows
        # are weighted by the level they close to get relative precision there;
        # compactly supported families keep absolute weights
        wt = np.empty(2 * n)
        wt[1:2 * n - 1:2] = 1.0 / (1.0 + 0.5 * h * (np.abs(dT[:-1]) + np.abs(dT[1:])) / tau)
        floor = 1e-12 if spec.s_prime_0 == en.NEG_INF else 1.0
        wt[0:2 * n:2] = 1.0 / np.maximum(np.abs(q), floor)
        wt[2 * n - 1] = 1.0 / max(abs(q[-1]), floor)
        return r, rho, J, wt


def _solve_scaled(ab, r, wt):
    """Solve J dz = -r after scaling row i of J by wt[i]."""
    n2 = r.size
    rows = np.arange(n2)[None, :] + np.arange(-2, 3)[:, None]  # row index of ab[k, j]
    scaled = ab * wt[np.clip(rows, 0, n2 - 1)]
    return solve_banded((2, 2), scaled, -wt * r, check_finite=False)


def _newton(spec, phi, rho_prev, tau, opts, f0=None):
    f = _initial_f(spec, rho_prev) if f0 is None else f0.copy()
    rho = en.generalized_inverse(spec, f)
    split = int(np.searchsorted(np.cumsum(rho) / rho.sum(), 0.5))
    sys_ = _NewtonSystem(spec, phi, rho_prev, tau, split)
    q = sys_.levels(rho)
    r, rho, ab, wt = sys_.residual(f, q, with_jac=True)
    norm = np.linalg.norm(wt * r)
    it = 0
    for it in range(1, opts.newton_iters + 1):
        if np.max(np.abs(wt * r)) <= 1e-15:
            break
        try:
            dz = _solve_scaled(ab, r, wt)
        except (np.linalg.LinAlgError, ValueError):
            return None
        if not np.all(np.isfinite(dz)):
            return None
        df, dq = dz[0::2], dz[1::2]
        alpha = 1.0
        while alpha > 1e-10:
            fn, qn = f + alpha * df, q + alpha * dq
            rn, _ = sys_.residual(fn, qn)
            nn = np.linalg.norm(wt * rn)
            if np.isfinite(nn) and nn <= (1 - 1e-4 * alpha) * norm:
                break
            alpha *= 0.5
        else:
            # no further decrease: accept if already at rounding level
            if np.max(np.abs(wt * r)) <= 1e-12:
                break
            return None
        f, q = fn, qn
        r, rho, ab, wt = sys_.residual(f, q, with_jac=True)
        prev, norm = norm, np.linalg.norm(wt * r)
        # slow progress at this level means rounding, not a kink
        if np.max(np.abs(wt * r)) <= 1e-12 and norm > 0.5 * prev:
            break
    else:
        if np.max(np.abs(wt * r)) > 1e-12:
            return None
    return f, it


def _picard(spec, phi, rho_prev, tau, opts, start=None):
    x = rho_prev.centers
    h = rho_prev.h
    rho = rho_prev if start is None else start
    obj = jko_objective(spec, phi, rho, rho_prev, tau)
    best, best_obj, best_res = rho, obj, math.inf
    omega = opts.damping
    for it in range(1, opts.max_iters + 1):
        td = dn.kantorovich(rho, rho_prev)
        g = td.potential_values / tau + phi(x)
        C = mass_constant(spec, g, h, opts.tol_mass)
        hat = en.generalized_inverse(spec, C - g)
        res = optimality_residual(spec, rho.values, C - g)
        if res < best_res:
            best_res = res
        w = omega
        while True:
            cand = dn.normalized((1 - w) * rho.values + w * hat, rho_prev.l)
            cobj = jko_objective(spec, phi, cand, rho_prev, tau)
            if cobj <= obj + 1e-15 * max(1.0, abs(obj)) or w <= 1 / 64:
                break
            w *= 0.5
        change = h * np.sum(np.abs(cand.values - rho.values))
        rho, obj = cand, cobj
        if obj <= best_obj:
            best, best_obj = rho, obj
        if res <= opts.tol_fix and change <= opts.tol_fix:
            td = dn.kantorovich(rho, rho_prev)
            g = td.potential_values / tau + phi(x)
            return mass_constant(spec, g, h, opts.tol_mass) - g, it
    raise JkoStepError(f"Picard iteration did not converge in {opts.max_iters} iterations",
                       best=best, residuals={"optimality_residual": best_res})


def jko_step(spec: en.EntropySpec, phi: Potential, rho_prev: dn.GridDensity, tau: float,
             opts: SolverOptions | None = None, warm_start=None) -> JkoStepResult:
    """One minimizing-movement step; warm_start is an f-vector from a previous step."""
    opts = opts or SolverOptions()
    if not tau > 0:
        raise ValueError("tau must be positive")
    if opts.method not in ("newton", "picard"):
        raise ValueError(f"unknown step method {opts.method!r}")
    if opts.method == "newton":
        out = _newton(spec, phi, rho_prev, tau, opts, warm_start)
        if out is None and warm_start is not None:
            out = _newton(spec, phi, rho_prev, tau, opts)
        if out is not None:
            f, it = out
            res = _finish(spec, phi, rho_prev, tau, f, it, "newton", opts)
            if res.optimality_residual <= opts.tol_fix:
                return res
        if not opts.fallback:
            raise JkoStepError("Newton step solver failed")
    f, it = _picard(spec, phi, rho_prev, tau, opts)
    res = _finish(spec, phi, rho_prev, tau, f, it, "picard", opts)
    if res.optimality_residual > opts.tol_fix:
        raise JkoStepError("step converged with optimality residual above tolerance",
                           best=res.rho_new,
                           residuals={"optimality_residual": res.optimality_residual})
    return res


# -- trajectories --------------------------------------------------------------
@dataclass(eq=False)
class Frame:
    t: float
    rho: dn.GridDensity
    pressure: np.ndarray
    ls: np.ndarray | None = None


@dataclass
class LedgerEntry:
    k: int
    t: float
    energy: float
    w2_step: float
    dissipation_slack: float
    iterations: int
    optimality_residual: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(eq=False)
class Trajectory:
    tau: float
    frames: list[Frame]
    ledger: list[LedgerEntry]
    fingerprint: str = ""
    failure: dict | None = None
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([fr.t for fr in self.frames])

    @property
    def final(self) -> Frame:
        return self.frames[-1]

    def frame_at(self, t: float) -> Frame:
        i = int(np.argmin(np.abs(self.times - t)))
        return self.frames[i]


def num_steps(tau: float, horizon: float) -> int:
    ratio = horizon / tau
    k = round(ratio)
    if abs(ratio - k) > 1e-9 * max(1.0, abs(ratio)):
        raise ValueError(f"horizon {horizon!r} is not an integer multiple of tau {tau!r}")
    return int(k)


def run_trajectory(spec: en.EntropySpec, phi: Potential, rho0: dn.GridDensity, tau: float,
                   horizon: float, opts: SolverOptions | None = None, frames_every: int = 1,
                   fingerprint: str = "") -> Trajectory:
    """Iterate jko_step; on a failed step the trajectory is truncated and the failure recorded."""
    opts = opts or SolverOptions()
    steps = num_steps(tau, horizon)
    p0 = en.pinned_pressure(spec, rho0.values, opts.tol_phase)
    e0 = energy(spec, phi, rho0)
    traj = Trajectory(tau, [Frame(0.0, rho0, p0)],
                      [LedgerEntry(0, 0.0, e0, 0.0, 0.0, 0, 0.0)], fingerprint)
    rho, e_prev, warm = rho0, e0, None
    for k in range(1, steps + 1):
        try:
            res = jko_step(spec, phi, rho, tau, opts, warm_start=warm)
        except (JkoStepError, MassConstantError) as exc:
            traj.failure = {"k": k, "t": k * tau, "error": str(exc),
                            "residuals": getattr(exc, "residuals", {})}
            break
        warm = res.warm
        e = energy(spec, phi, res.rho_new)
        slack = e + res.w2_step**2 / (2 * tau) - e_prev
        traj.ledger.append(LedgerEntry(k, k * tau, e, res.w2_step, slack, res.iterations,
                                       res.optimality_residual))
        rho, e_prev = res.rho_new, e
        if k % frames_every == 0 or k == steps:
            traj.frames.append(Frame(k * tau, rho, res.pressure))
    return traj


# the particle oracle lives in its own module; re-exported for discoverability
from .quantile_oracle import OracleFailure, step_oracle_quantile  # noqa: E402,F401
