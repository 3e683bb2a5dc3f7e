"""Explicit finite-volume reference solver for the regularized PDE.

    d_t rho = d_x( d_x phi_eps(rho) + Phi' rho ),   zero total flux at 0 and l.

phi_eps is the flux potential rho S' - S + S(1) with its jump at rho = 1
replaced by a cubic Hermite ramp on [1 - eps, 1 + eps].  Diffusion uses the
centered difference of phi_eps, drift is upwinded, and both end faces carry
zero flux, so the update is conservative and monotone under the CFL bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import density as dn
from . import entropy as en
from .jko import Frame, LedgerEntry, Trajectory, energy
from .potential import Potential

CFL_SAFETY = 0.45


class CFLError(RuntimeError):
    pass


def _power_branches(spec: en.EntropySpec):
    """(a, k, b) per side with rho S' - S + S(1) = a rho^k + b, or None for tables."""
    f, p = spec.family, spec.params
    if f == en.LOGLOG:
        return (1.0, 1.0, 0.0), (2.0, 1.0, 0.0)
    if f == en.LOGPOW:
        k = p[0]
        return (1.0, 1.0, 0.0), (1.0, k, 1 / (k - 1))
    if f == en.POWPOW_EQUAL:
        k = p[0]
        return (1.0, k, 1 / (k - 1)), (2.0, k, 2 / (k - 1))
    if f == en.POWPOW:
        m, r = p
        return (1.0, m, 1 / (m - 1)), (1.0, r, 1 / (r - 1))
    return None


@dataclass(frozen=True)
class RegularizedFlux:
    """Monotone C^1 regularization of the multivalued flux potential."""

    spec: en.EntropySpec
    epsilon: float

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        y0, y1, d0, d1 = self.hermite_data
        secant = (y1 - y0) / (2 * self.epsilon)
        # Fritsch-Carlson: the cubic stays monotone when both end slopes are <= 3 * secant
        if secant <= 0 or d0 > 3 * secant or d1 > 3 * secant:
            raise ValueError(f"epsilon={self.epsilon!r} too wide for a monotone ramp")

    @property
    def hermite_data(self) -> tuple[float, float, float, float]:
        a, b = 1 - self.epsilon, 1 + self.epsilon
        y0, y1 = float(self.spec.ls_branch(a)), float(self.spec.ls_branch(b))
        d0, d1 = a * float(self.spec.d2s(a)), b * float(self.spec.d2s(b))
        return y0, y1, d0, d1

    @property
    def power_coefficients(self):
        return _power_branches(self.spec)

    def _ramp(self, rho, deriv=False):
        y0, y1, d0, d1 = self.hermite_data
        w = 2 * self.epsilon
        t = (rho - (1 - self.epsilon)) / w
        if deriv:
            return ((6 * t * t - 6 * t) * (y0 - y1) / w + (3 * t * t - 4 * t + 1) * d0
                    + (3 * t * t - 2 * t) * d1)
        return ((2 * t**3 - 3 * t * t + 1) * y0 + (t**3 - 2 * t * t + t) * w * d0
                + (3 * t * t - 2 * t**3) * y1 + (t**3 - t * t) * w * d1)

    def value(self, rho):
        rho = np.asarray(rho, dtype=float)
        inside = np.abs(rho - 1) < self.epsilon
        out = np.array(self.spec.ls_branch(np.where(inside, 0.5, rho)), dtype=float)
        out[inside] = self._ramp(rho[inside])
        return out

    def slope(self, rho):
        rho = np.asarray(rho, dtype=float)
        inside = np.abs(rho - 1) < self.epsilon
        safe = np.where(inside | (rho <= 0), 0.5, rho)
        out = safe * np.asarray(self.spec.d2s(safe), dtype=float)
        out = np.where(rho <= 0, 0.0, out)
        out[inside] = self._ramp(rho[inside], deriv=True)
        return out

    def max_slope(self, rho_max: float) -> float:
        """Largest phi_eps' on [0, rho_max]; the ramp peak is sampled densely."""
        grid = np.concatenate((np.linspace(1e-9, rho_max, 4001),
                               np.linspace(1 - self.epsilon, 1 + self.epsilon, 2001)))
        return float(np.max(self.slope(grid[grid <= max(rho_max, 1 + self.epsilon)])))


def cfl_dt(flux: RegularizedFlux, phi: Potential, h: float, l: float, rho_max: float) -> float:
    """Largest step allowed by 0.45 h^2 / max phi_eps' and 0.45 h / max |Phi'|."""
    slope = flux.max_slope(rho_max)
    dt = CFL_SAFETY * h * h / slope
    drift = float(np.max(np.abs(phi.slope(np.linspace(0.0, l, 1025)))))
    if drift > 0:
        # the combined bound keeps every update coefficient nonnegative
        dt = min(dt, CFL_SAFETY * h / drift, 0.9 / (2 * slope / (h * h) + drift / h))
    return dt


@numba.njit(cache=True, fastmath=True)
def _advance(M, steps, dt, h, drift, coeffs, ramp, eps):
    """Run `steps` explicit updates on the face masses M; returns a failed step index or -1.

    M_j is the mass left of face j, so rho_i = (M_{i+1} - M_i) / h and the
    update M_j -= dt F_j conserves M_n - M_0 = 1 exactly.  A step fails when a
    secant slope s of phi_eps breaks the monotonicity bound
    dt (2 s / h^2 + max |Phi'| / h) <= 1.
    """
    n = M.size - 1
    al, kl, bl, ar, kr, br = coeffs[0], coeffs[1], coeffs[2], coeffs[3], coeffs[4], coeffs[5]
    y0, y1, d0, d1 = ramp[0], ramp[1], ramp[2], ramp[3]
    lo, hi, w = 1 - eps, 1 + eps, 2 * eps
    # Hermite ramp in Horner form on t = (rho - lo) / w
    c0, c1 = y0, w * d0
    c2 = -3 * y0 - 2 * w * d0 + 3 * y1 - w * d1
    c3 = 2 * y0 + w * d0 - 2 * y1 + w * d1
    lin_l, lin_r = kl == 1.0, kr == 1.0
    bmax = 0.0
    for j in range(n + 1):
        bmax = max(bmax, abs(drift[j]))
    smax = (1.0 - dt * bmax / h) * h * h / (2 * dt) * (1 + 1e-12)
    inv_h, inv_w = 1.0 / h, 1.0 / w
    rho = np.empty(n)
    pot = np.empty(n)
    for s in range(steps):
        for i in range(n):
            r = (M[i + 1] - M[i]) * inv_h
            rho[i] = r
            if r <= lo:
                v = al * r + bl if lin_l else al * r**kl + bl
            elif r >= hi:
                v = ar * r + br if lin_r else ar * r**kr + br
            else:
                t = (r - lo) * inv_w
                v = c0 + t * (c1 + t * (c2 + t * c3))
            pot[i] = v
        excess = 0.0
        for j in range(1, n):
            dp = pot[j] - pot[j - 1]
            excess = max(excess, abs(dp) - smax * abs(rho[j] - rho[j - 1]))
            b = drift[j]
            # velocity is -Phi'; upwind takes the cell it comes from
            adv = -b * rho[j - 1] if b < 0 else -b * rho[j]
            M[j] -= dt * (adv - dp * inv_h)
        if excess > 0:
            return s
    return -1


def _advance_numpy(M, steps, dt, h, drift, flux_obj):
    b = drift[1:-1]
    smax = (1.0 - dt * np.max(np.abs(drift)) / h) * h * h / (2 * dt) * (1 + 1e-12)
    for s in range(steps):
        rho = np.diff(M) / h
        dp = np.diff(flux_obj.value(rho))
        if np.any(np.abs(dp) > smax * np.abs(np.diff(rho))):
            return s
        adv = np.where(b < 0, -b * rho[:-1], -b * rho[1:])
        M[1:-1] -= dt * (adv - dp / h)
    return -1


def fd_run(spec: en.EntropySpec, phi: Potential, rho0: dn.GridDensity, horizon: float,
           epsilon: float = 1e-2, dt: float | None = None, frame_dt: float | None = None,
           rho_max: float | None = None, fingerprint: str = "") -> Trajectory:
    """Explicit run to `horizon`, recording frames every `frame_dt` (default: start and end).

    dt defaults to the CFL bound over densities up to `rho_max` (default
    2 max(rho0, 1 + eps)) and is shrunk so that frame_dt is a whole number of steps.
    """
    flux = RegularizedFlux(spec, epsilon)
    h, l = rho0.h, rho0.l
    if rho_max is None:
        rho_max = 2 * max(float(rho0.values.max()), 1 + epsilon)
    limit = cfl_dt(flux, phi, h, l, rho_max)
    if dt is None:
        dt = limit
    elif dt > limit * (1 + 1e-12):
        raise CFLError(f"dt={dt!r} exceeds the CFL bound {limit!r}")
    frame_dt = horizon if frame_dt is None else frame_dt
    n_frames = round(horizon / frame_dt)
    if n_frames < 1 or abs(n_frames * frame_dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("horizon must be a whole number of frame intervals")
    sub = math.ceil(frame_dt / dt - 1e-12)
    dt = frame_dt / sub
    drift = phi.slope(rho0.edges)
    drift[0] = drift[-1] = 0.0
    coeffs = flux.power_coefficients
    M = rho0.cdf_edges().copy()
    frames = [Frame(0.0, rho0, np.full(rho0.n, np.nan), flux.value(rho0.values))]
    e_prev = energy(spec, phi, rho0)
    ledger = [LedgerEntry(0, 0.0, e_prev, 0.0, 0.0, 0, 0.0)]
    failure = None
    for k in range(1, n_frames + 1):
        if coeffs is not None:
            packed = np.array(coeffs[0] + coeffs[1], dtype=float)
            bad = _advance(M, sub, dt, h, drift, packed, np.array(flux.hermite_data), epsilon)
        else:
            bad = _advance_numpy(M, sub, dt, h, drift, flux)
        t = k * frame_dt
        rho = np.diff(M) / h
        if bad >= 0 or np.any(rho < 0):
            failure = {"k": k, "t": t, "error": "CFL monotonicity bound violated at runtime",
                       "substep": int(bad)}
            break
        cur = dn.GridDensity(l, rho)
        e = energy(spec, phi, cur)
        w2 = dn.wasserstein2(cur, frames[-1].rho)
        ledger.append(LedgerEntry(k, t, e, w2, e + w2 * w2 / (2 * frame_dt) - e_prev, sub, 0.0))
        frames.append(Frame(t, cur, np.full(rho0.n, np.nan), flux.value(rho)))
        e_prev = e
    traj = Trajectory(frame_dt, frames, ledger, fingerprint, failure,
                      meta={"solver": "fd", "epsilon": epsilon, "dt": dt, "substeps": sub})
    return traj
