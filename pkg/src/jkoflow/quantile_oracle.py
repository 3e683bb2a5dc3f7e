"""Independent step oracle: direct convex minimization in Lagrangian coordinates.

N particles of mass 1/N sit at X_1 < ... < X_{N-1} between the fixed ends
X_0 = 0 and X_N = l, so the cell (X_i, X_{i+1}) carries density
1 / (N (X_{i+1} - X_i)).  The step objective

    sum_i dX_i S_eps(1 / (N dX_i)) + sum_j Phi(X_j) / N + sum_j (X_j - Y_j)^2 / (2 tau N)

with Y the quantiles of rho_prev is smooth and strictly convex, and is
minimized by Newton's method on its tridiagonal Hessian.  S_eps replaces the
kink of S at 1 by a C^2 patch on [1 - eps, 1 + eps] and agrees with S
exactly outside it.  Nothing here shares code with the step solver beyond the
entropy evaluators and the quantile function of rho_prev.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from . import density as dn
from . import entropy as en
from .potential import Potential


class OracleFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class SmoothedEntropy:
    """S with its derivative jump at 1 spread over [1 - eps, 1 + eps].

    On the patch S' is a cubic Hermite interpolant of the two one-sided
    values and slopes, plus a multiple of t^2 (1 - t)^2 chosen so that the
    patch integrates to S(1 + eps) - S(1 - eps).  Hence S_eps is C^2 and
    equals S off the patch.
    """

    spec: en.EntropySpec
    eps: float

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("smoothing width must lie in (0, 1)")

    @property
    def _patch(self):
        a, b = 1 - self.eps, 1 + self.eps
        w = b - a
        y0, y1 = float(self.spec.ds(a)), float(self.spec.ds(b))
        d0, d1 = float(self.spec.d2s(a)), float(self.spec.d2s(b))
        sa, sb = float(self.spec.s(a)), float(self.spec.s(b))
        c = 30 * ((sb - sa) / w - 0.5 * (y0 + y1) - w * (d0 - d1) / 12)
        return a, w, y0, y1, d0, d1, sa, c

    def _split(self, rho):
        rho = np.asarray(rho, dtype=float)
        inside = np.abs(rho - 1) < self.eps
        return rho, inside

    def s(self, rho):
        rho, inside = self._split(rho)
        out = self.spec.s(np.where(inside, 0.5, rho))
        a, w, y0, y1, d0, d1, sa, c = self._patch
        t = (rho[inside] - a) / w
        t2, t3, t4 = t * t, t**3, t**4
        integral = (y0 * (t4 / 2 - t3 + t) + w * d0 * (t4 / 4 - 2 * t3 / 3 + t2 / 2)
                    + y1 * (t3 - t4 / 2) + w * d1 * (t4 / 4 - t3 / 3)
                    + c * (t3 / 3 - t4 / 2 + t**5 / 5))
        out = np.array(out, dtype=float)
        out[inside] = sa + w * integral
        return out

    def ds(self, rho):
        rho, inside = self._split(rho)
        out = np.array(self.spec.ds(np.where(inside, 0.5, rho)), dtype=float)
        a, w, y0, y1, d0, d1, _, c = self._patch
        t = (rho[inside] - a) / w
        t2, t3 = t * t, t**3
        out[inside] = ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * w * d0
                       + (3 * t2 - 2 * t3) * y1 + (t3 - t2) * w * d1 + c * t2 * (1 - t) ** 2)
        return out

    def d2s(self, rho):
        rho, inside = self._split(rho)
        out = np.array(self.spec.d2s(np.where(inside, 0.5, rho)), dtype=float)
        a, w, y0, y1, d0, d1, _, c = self._patch
        t = (rho[inside] - a) / w
        t2 = t * t
        out[inside] = ((6 * t2 - 6 * t) * y0 / w + (3 * t2 - 4 * t + 1) * d0
                       + (6 * t - 6 * t2) * y1 / w + (3 * t2 - 2 * t) * d1
                       + c * 2 * t * (1 - t) * (1 - 2 * t) / w)
        return out

    def flux(self, rho):
        """rho S_eps'(rho) - S_eps(rho), the smoothed L_S branch."""
        rho = np.asarray(rho, dtype=float)
        return rho * self.ds(rho) - self.s(rho)


@dataclass(eq=False)
class OracleResult:
    rho: dn.GridDensity
    positions: np.ndarray
    iterations: int
    gradient_norm: float
    objective: float


def _objective(ent, phi, X, Y, N, tau):
    dx = np.diff(X)
    inner = X[1:-1]
    return (N * float(np.sum(dx * ent.s(1 / (N * dx)))) + float(np.sum(phi(inner)))
            + float(np.sum((inner - Y[1:-1]) ** 2)) / (2 * tau))


def _gradient(ent, phi, X, Y, N, tau):
    """N times the gradient in the interior positions, with the Hessian bands."""
    dx = np.diff(X)
    rho = 1 / (N * dx)
    L = ent.flux(rho)
    inner = X[1:-1]
    G = N * (L[1:] - L[:-1]) + phi.slope(inner) + (inner - Y[1:-1]) / tau
    k = N**2 * rho**3 * ent.d2s(rho)
    diag = k[:-1] + k[1:] + phi.curvature(inner) + 1 / tau
    off = -k[1:-1]
    return G, diag, off


def bin_particles(X, rho_grid: dn.GridDensity) -> dn.GridDensity:
    """Cell averages on the grid of the piecewise-uniform particle density."""
    N = X.size - 1
    M = np.interp(rho_grid.edges, X, np.arange(N + 1) / N)
    M[0], M[-1] = 0.0, 1.0
    return dn.normalized(np.diff(M) / rho_grid.h, rho_grid.l)


def step_oracle_quantile(spec: en.EntropySpec, phi: Potential, rho_prev: dn.GridDensity,
                         tau: float, epsilon: float = 1e-3, n_particles: int = 512,
                         tol: float = 1e-9, max_iters: int = 500) -> OracleResult:
    if n_particles < 32:
        raise ValueError("the oracle needs at least 32 particles")
    if not tau > 0:
        raise ValueError("tau must be positive")
    ent = SmoothedEntropy(spec, epsilon)
    N = n_particles
    levels = np.arange(N + 1) / N
    Y = np.asarray(dn.quantile(rho_prev, levels), dtype=float)
    Y[0], Y[-1] = 0.0, rho_prev.l
    X = Y.copy()
    F = _objective(ent, phi, X, Y, N, tau)
    gnorm = np.inf
    for it in range(1, max_iters + 1):
        G, diag, off = _gradient(ent, phi, X, Y, N, tau)
        gnorm = float(np.max(np.abs(G))) / N
        if gnorm <= tol:
            break
        ab = np.zeros((3, N - 1))
        ab[0, 1:] = off
        ab[1] = diag
        ab[2, :-1] = off
        d = -solve_banded((1, 1), ab, G)
        # largest step keeping the particles ordered
        dd = np.diff(np.concatenate(([0.0], d, [0.0])))
        shrinking = dd < 0
        t = 1.0
        if np.any(shrinking):
            t = min(1.0, 0.95 * float(np.min(-np.diff(X)[shrinking] / dd[shrinking])))
        slope = float(G @ d)
        for _ in range(60):
            Xt = X.copy()
            Xt[1:-1] += t * d
            if np.all(np.diff(Xt) > 0):
                Ft = _objective(ent, phi, Xt, Y, N, tau)
                if Ft <= F + 1e-4 * t * slope:
                    break
                Gt = _gradient(ent, phi, Xt, Y, N, tau)[0]
                if t == 1.0 and np.max(np.abs(Gt)) / N < gnorm:
                    break
            t *= 0.5
        else:
            raise OracleFailure(f"line search failed at iteration {it} (gradient {gnorm:.3e})")
        X = Xt
        F = _objective(ent, phi, X, Y, N, tau)
    else:
        raise OracleFailure(f"no convergence in {max_iters} iterations (gradient {gnorm:.3e})")
    if not np.all(np.diff(X) > 0):
        raise OracleFailure("particles crossed")
    return OracleResult(bin_particles(X, rho_prev), X, it, gnorm, F)
