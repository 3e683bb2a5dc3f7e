"""Closed-form stationary states for the log-log entropy with Phi(x) = 2x on [0, l].

With S = rho log rho below 1 and 2 rho log rho above, stationarity forces
S'(rho) = C - 2x off the plateau and p = C - 2x on it.  Depending on l the
profile has one, two or three phases:

* Pure (l <= ln 2): rho = e^{-x} / (1 - e^{-l}) >= 1 everywhere;
* TwoPhase (ln 2 < l <= ln(3/2) + 1/2): rho = e^{A-x} on [0, A), 1 on [A, l],
  with e^A - A = 2 - l and A in [l - 1/2, l);
* ThreePhase (l > ln(3/2) + 1/2): e^{A-x} on [0, A), 1 on [A, A + 1/2],
  e^{2A+1-2x} beyond, with e^A - e^{2A+1-2l}/2 - 1 = 0 and A in (0, l - 1/2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from . import entropy as en
from .density import GridDensity
from .potential import Potential

PURE = "Pure"
TWO_PHASE = "TwoPhase"
THREE_PHASE = "ThreePhase"

LN2 = math.log(2.0)
THREE_PHASE_THRESHOLD = math.log(1.5) + 0.5
ROOT_TOL = 1e-15


def classify(l: float) -> str:
    if not l > 0:
        raise ValueError("domain length must be positive")
    if l <= LN2:
        return PURE
    if l <= THREE_PHASE_THRESHOLD:
        return TWO_PHASE
    return THREE_PHASE


def three_phase_equation(a: float, l: float) -> float:
    return math.exp(a) - 0.5 * math.exp(2 * a + 1 - 2 * l) - 1.0


def two_phase_equation(a: float, l: float) -> float:
    return math.exp(a) - a - (2.0 - l)


@dataclass(frozen=True)
class StationaryProfile:
    l: float
    regime: str
    A: float
    C: float

    @property
    def plateau(self) -> tuple[float, float] | None:
        if self.regime == THREE_PHASE:
            return (self.A, self.A + 0.5)
        if self.regime == TWO_PHASE:
            return (self.A, self.l)
        return None

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.regime == PURE:
            return np.exp(-x) / (1 - math.exp(-self.l))
        a = self.A
        out = np.where(x < a, np.exp(a - x), 1.0)
        if self.regime == THREE_PHASE:
            out = np.where(x > a + 0.5, np.exp(2 * a + 1 - 2 * x), out)
        return out

    def pressure(self, x):
        """Expected pressure clamp(C - 2x, 1, 2)."""
        return np.clip(self.C - 2 * np.asarray(x, dtype=float), 1.0, 2.0)

    def cumulative(self, x):
        """Mass of [0, x], in closed form."""
        x = np.asarray(x, dtype=float)
        if self.regime == PURE:
            return (1 - np.exp(-x)) / (1 - math.exp(-self.l))
        a = self.A
        ea = math.exp(a)
        left = ea - np.exp(a - x)
        mid = ea - 1 + (x - a)
        out = np.where(x <= a, left, mid)
        if self.regime == THREE_PHASE:
            right = ea - 0.5 * np.exp(2 * a + 1 - 2 * x)
            out = np.where(x > a + 0.5, right, out)
        return out

    def mass(self) -> float:
        return float(self.cumulative(self.l))

    def grid(self, n: int) -> tuple[GridDensity, np.ndarray]:
        """Exact cell averages and a phase-consistent pressure on n cells.

        Cells lying inside the plateau are set to exactly 1; cells cut by an
        interface keep their average and the pinned pressure of its side.
        """
        h = self.l / n
        edges = np.arange(n + 1) * h
        M = self.cumulative(edges)
        values = np.diff(M) / h
        pl = self.plateau
        inside = np.zeros(n, dtype=bool)
        if pl is not None:
            inside = (edges[:-1] >= pl[0]) & (edges[1:] <= pl[1] + 1e-15)
            values[inside] = 1.0
        x = edges[:-1] + 0.5 * h
        p = np.where(values > 1, 2.0, 1.0)
        p[inside] = self.pressure(x[inside])
        values = values / (h * values.sum())
        values[inside] = 1.0
        return GridDensity(self.l, values), p

    def sample(self, n: int) -> tuple[GridDensity, np.ndarray]:
        """Point values at cell centers, with the off-plateau cells rescaled to unit mass.

        This is the form a converged minimizing-movement iterate takes, and
        the one on which discrete face fluxes vanish to O(h^2).
        """
        h = self.l / n
        x = (np.arange(n) + 0.5) * h
        values = self.density(x)
        pl = self.plateau
        inside = np.zeros(n, dtype=bool) if pl is None else (x >= pl[0]) & (x <= pl[1])
        values[inside] = 1.0
        off = ~inside
        values[off] *= (1 / h - inside.sum()) / values[off].sum()
        p = np.where(values > 1, 2.0, 1.0)
        p[inside] = self.pressure(x[inside])
        return GridDensity(self.l, values), p

    def metadata(self) -> dict:
        pl = self.plateau
        return {"l": self.l, "regime": self.regime, "A": self.A, "C": self.C,
                "plateau": list(pl) if pl else None}


def stationary_log_linear(l: float) -> StationaryProfile:
    regime = classify(l)
    if regime == PURE:
        return StationaryProfile(l, PURE, math.nan, 2 + 2 * math.log(1 / (1 - math.exp(-l))))
    if regime == TWO_PHASE:
        lo, hi = l - 0.5, l
        if two_phase_equation(lo, l) > 0 or two_phase_equation(hi, l) < 0:
            raise ArithmeticError(f"two-phase root not bracketed for l={l!r}")
        a = lo if two_phase_equation(lo, l) == 0 else bisect(two_phase_equation, lo, hi, args=(l,),
                                                             xtol=ROOT_TOL)
    else:
        lo, hi = 0.0, l - 0.5
        if three_phase_equation(lo, l) >= 0 or three_phase_equation(hi, l) <= 0:
            raise ArithmeticError(f"three-phase root not bracketed for l={l!r}")
        a = bisect(three_phase_equation, lo, hi, args=(l,), xtol=ROOT_TOL)
    return StationaryProfile(l, regime, float(a), 2 + 2 * float(a))


def face_fluxes(spec: en.EntropySpec, phi: Potential, rho: GridDensity, p,
                tol_phase: float = 0.0) -> np.ndarray:
    """Total flux d/dx L_S(rho, p) + Phi' rho at the n - 1 interior faces."""
    L = en.l_s(spec, rho.values, p, tol_phase)
    faces = rho.edges[1:-1]
    v = rho.values
    return (np.diff(L) / rho.h) + phi.slope(faces) * 0.5 * (v[:-1] + v[1:])


def stationary_residual(spec: en.EntropySpec, phi: Potential, rho: GridDensity, p,
                        tol_phase: float = 0.0) -> float:
    """Largest total flux through an interior face.

    With zero flux at both ends, the discrete divergence vanishes in every
    cell exactly when every face flux does, so this is the stationarity defect.
    """
    return float(np.max(np.abs(face_fluxes(spec, phi, rho, p, tol_phase))))
