"""Cell-averaged densities on [0, l] and exact one-dimensional transport.

A density is piecewise constant on n uniform cells, so its CDF is piecewise
linear and its quantile function is piecewise linear in the mass variable.
Every transport integral below is therefore evaluated in closed form.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MASS_TOL = 1e-10


class DomainMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridDensity:
    l: float
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("density needs a 1D array of at least two cells")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("density values must be finite and nonnegative")
        if not self.l > 0:
            raise ValueError("domain length must be positive")
        mass = self.l / v.size * v.sum()
        if abs(mass - 1) > MASS_TOL:
            raise ValueError(f"density has mass {mass!r}, expected 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return self.l / self.values.size

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.h

    @property
    def mass(self) -> float:
        return float(self.h * self.values.sum())

    def cdf_edges(self) -> np.ndarray:
        """CDF at the n + 1 cell edges, scaled so the last entry is exactly 1.

        Dividing by the total keeps flat stretches exactly flat.
        """
        c = np.cumsum(self.values)
        return np.concatenate([[0.0], c / c[-1]])

    def ccdf_edges(self) -> np.ndarray:
        """Mass to the right of each edge, accumulated from the right end.

        Near the right end this keeps relative precision that 1 - F loses.
        """
        c = np.cumsum(self.values[::-1])[::-1]
        return np.concatenate([c / c[0], [0.0]])

    def slopes(self) -> np.ndarray:
        """Cell values rescaled to the exact slopes of cdf_edges."""
        return self.values / (self.h * np.sum(self.values))

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, self.l)
        F = self.cdf_edges()
        j = np.minimum((x / self.h).astype(int), self.n - 1)
        return np.minimum(F[j] + self.slopes()[j] * (x - j * self.h), F[j + 1])

    def support(self) -> tuple[float, float]:
        nz = np.flatnonzero(self.values > 0)
        return float(nz[0] * self.h), float((nz[-1] + 1) * self.h)

    def same_grid(self, other: "GridDensity") -> bool:
        return self.n == other.n and abs(self.l - other.l) <= 1e-12 * self.l


def normalized(values, l: float) -> GridDensity:
    v = np.clip(np.asarray(values, dtype=float), 0.0, None)
    total = v.sum() * l / v.size
    if not total > 0:
        raise ValueError("cannot normalize a density with zero mass")
    return GridDensity(l, v / total)


def uniform(l: float, n: int) -> GridDensity:
    return GridDensity(l, np.full(n, 1.0 / l))


def from_function(f, l: float, n: int, order: int = 8) -> GridDensity:
    """Cell averages of f by Gauss-Legendre quadrature, renormalized to unit mass."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    h = l / n
    left = np.arange(n) * h
    x = left[:, None] + 0.5 * h * (nodes[None, :] + 1)
    avg = 0.5 * (f(x) * weights[None, :]).sum(axis=1)
    return normalized(avg, l)


def exp_normalized(l: float, n: int) -> GridDensity:
    """Exact cell averages of e^{-x} / (1 - e^{-l})."""
    e = np.exp(-np.arange(n + 1) * (l / n))
    return normalized(e[:-1] - e[1:], l)


def spike(l: float, n: int, position: float, width: float, height: float) -> GridDensity:
    """A block of the given height around position plus a uniform background holding the rest."""
    x = (np.arange(n) + 0.5) * (l / n)
    block = np.abs(x - position) <= width / 2
    if not block.any():
        block[np.argmin(np.abs(x - position))] = True
    h = l / n
    block_mass = height * h * block.sum()
    if block_mass > 1 + 1e-12:
        raise ValueError("spike block carries more than unit mass")
    rest = (~block).sum()
    bg = (1 - block_mass) / (h * rest) if rest else 0.0
    return normalized(np.where(block, height, bg), l)


def random_smooth(rng: np.random.Generator, l: float, n: int, modes: int = 4,
                  floor: float = 0.05) -> GridDensity:
    """A strictly positive density built from a few random cosine modes."""
    x = (np.arange(n) + 0.5) * (l / n)
    k = np.arange(1, modes + 1)
    amp = rng.normal(size=modes) / k
    shape = (amp[None, :] * np.cos(np.pi * k[None, :] * x[:, None] / l)).sum(axis=1)
    shape = shape - shape.min()
    shape = shape / max(shape.max(), 1e-12) + floor
    return normalized(shape, l)


def load_csv(path: str | Path) -> tuple[GridDensity, float]:
    """Read an `x,rho` table at cell centers; return the density and the applied mass factor."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["x", "rho"]:
            raise ValueError(f"{path}: header must be 'x,rho'")
        rows = [(float(r["x"]), float(r["rho"])) for r in reader]
    x = np.array([r[0] for r in rows])
    rho = np.array([r[1] for r in rows])
    if x.size < 2:
        raise ValueError(f"{path}: need at least two cells")
    h = x[1] - x[0]
    if not np.allclose(np.diff(x), h, rtol=1e-9, atol=1e-12) or abs(x[0] - h / 2) > 1e-9 * h:
        raise ValueError(f"{path}: x must be the centers of a uniform grid starting at 0")
    if np.any(rho < 0):
        raise ValueError(f"{path}: negative density values")
    l = h * x.size
    mass = rho.sum() * h
    factor = 1.0 / mass
    return GridDensity(l, rho * factor), float(factor)


# -- quantiles and transport ---------------------------------------------------
def _quantile_from(edges, F, values, s):
    s = np.asarray(s, dtype=float)
    n = values.size
    # left-continuous: the cell j whose CDF segment (F_j, F_{j+1}] contains s
    j = np.clip(np.searchsorted(F, s, side="left") - 1, 0, n - 1)
    first = int(np.flatnonzero(values > 0)[0])
    j = np.where(s <= 0, first, j)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = edges[j] + np.where(values[j] > 0, (s - F[j]) / values[j], 0.0)
    return np.clip(x, edges[j], edges[j + 1])


def quantile(rho: GridDensity, s):
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(s_arr > 1):
        raise ValueError("quantile level outside [0, 1]")
    out = _quantile_from(rho.edges, rho.cdf_edges(), rho.slopes(), s_arr)
    return out if out.ndim else float(out)


def _segments(rho: GridDensity, nu: GridDensity):
    """Merged mass breakpoints and the affine quantile pieces of both densities on each."""
    Fr, Fn = rho.cdf_edges(), nu.cdf_edges()
    s = np.union1d(Fr, Fn)
    a, b = s[:-1], s[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    mid = 0.5 * (a + b)
    out = []
    for d, F in ((rho, Fr), (nu, Fn)):
        j = np.clip(np.searchsorted(F, mid, side="left") - 1, 0, d.n - 1)
        w = d.slopes()[j]
        x0 = d.edges[j] + (a - F[j]) / w
        x1 = d.edges[j] + (b - F[j]) / w
        out.append((x0, x1))
    return a, b, out


def wasserstein2_squared(rho: GridDensity, nu: GridDensity) -> float:
    if abs(rho.l - nu.l) > 1e-12 * max(rho.l, nu.l):
        raise DomainMismatch("densities live on different domains")
    a, b, ((r0, r1), (n0, n1)) = _segments(rho, nu)
    d0, d1 = r0 - n0, r1 - n1
    return float(np.sum((b - a) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0))


def wasserstein2(rho: GridDensity, nu: GridDensity) -> float:
    return float(np.sqrt(max(wasserstein2_squared(rho, nu), 0.0)))


def atomic_wasserstein2_squared(x, a, y, b) -> float:
    """W2^2 between sum a_i delta_{x_i} and sum b_j delta_{y_j} by the quantile formula.

    Both quantile functions are step functions; the integral of their squared
    difference is summed over the merged mass levels.
    """
    x, a, y, b = (np.asarray(v, dtype=float) for v in (x, a, y, b))
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("atom masses must be nonnegative")
    if abs(a.sum() - b.sum()) > 1e-12 * max(a.sum(), 1.0):
        raise ValueError("atomic measures carry different masses")
    ix, iy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    x, a, y, b = x[ix], a[ix], y[iy], b[iy]
    A = np.concatenate(([0.0], np.cumsum(a)))
    B = np.concatenate(([0.0], np.cumsum(b)))
    B *= A[-1] / B[-1]
    levels = np.union1d(A, B)
    lo, hi = levels[:-1], levels[1:]
    mid = 0.5 * (lo + hi)
    qx = x[np.clip(np.searchsorted(A, mid) - 1, 0, x.size - 1)]
    qy = y[np.clip(np.searchsorted(B, mid) - 1, 0, y.size - 1)]
    return float(np.sum((hi - lo) * (qx - qy) ** 2))


@dataclass(frozen=True, eq=False)
class TransportData:
    map_values: np.ndarray
    potential_values: np.ndarray
    w2: float


class QuantileFunction:
    """Quantile of a grid density from either end, with slopes.

    ``head(s)`` inverts the CDF and ``tail(u)`` inverts the mass to the right,
    so levels near 1 keep full precision when given as u = 1 - s.  Both are
    extended linearly beyond [0, 1] with the slopes of the end cells.
    """

    def __init__(self, rho: GridDensity):
        self.edges = rho.edges
        self.F = rho.cdf_edges()
        self.G = rho.ccdf_edges()
        self.Grev = self.G[::-1]
        self.w = rho.slopes()
        pos = np.flatnonzero(self.w > 0)
        self.first, self.last = int(pos[0]), int(pos[-1])
        self.x_lo, self.x_hi = self.edges[self.first], self.edges[self.last + 1]

    def head(self, s):
        s = np.asarray(s, dtype=float)
        w, n = self.w, self.w.size
        j = np.clip(np.searchsorted(self.F, s, side="left") - 1, 0, n - 1)
        inside = (s > 0) & (s < 1)
        j = np.where(inside, j, np.where(s <= 0, self.first, self.last))
        wj = np.where(w[j] > 0, w[j], 1.0)
        x = np.where(inside, self.edges[j] + (s - self.F[j]) / wj,
                     np.where(s <= 0, self.x_lo + s / w[self.first],
                              self.x_hi + (s - 1) / w[self.last]))
        return x, 1.0 / wj

    def tail(self, u):
        u = np.asarray(u, dtype=float)
        w, n = self.w, self.w.size
        above = n + 1 - np.searchsorted(self.Grev, u, side="right")
        j = np.clip(above - 1, 0, n - 1)
        inside = (u > 0) & (u < 1)
        j = np.where(inside, j, np.where(u <= 0, self.last, self.first))
        wj = np.where(w[j] > 0, w[j], 1.0)
        x = np.where(inside, self.edges[j + 1] - (u - self.G[j + 1]) / wj,
                     np.where(u <= 0, self.x_hi - u / w[self.last],
                              self.x_lo + (1 - u) / w[self.first]))
        return x, 1.0 / wj


def center_levels(rho: GridDensity):
    """Mass to the left and to the right of each cell center, each from its own end."""
    v = rho.values / rho.values.sum()
    left = np.cumsum(v) - 0.5 * v
    right = np.cumsum(v[::-1])[::-1] - 0.5 * v
    return left, right


def transport_map(rho: GridDensity, nu: GridDensity) -> np.ndarray:
    """Monotone rearrangement T = Q_nu(F_rho(x)) at the cell centers of rho.

    Centers past the median use the mass to their right.  On cells where rho
    vanishes F_rho is flat, so T is continued by the value at the adjacent
    mass level rather than left undefined.
    """
    left, right = center_levels(rho)
    q = QuantileFunction(nu)
    head = left <= 0.5
    xh, _ = q.head(np.clip(left, 0.0, 1.0))
    xt, _ = q.tail(np.clip(right, 0.0, 1.0))
    return np.clip(np.where(head, xh, xt), 0.0, nu.l)


def potential_from_map(x, T) -> np.ndarray:
    dphi = x - T
    phi = np.concatenate([[0.0], np.cumsum(0.5 * (dphi[1:] + dphi[:-1]) * np.diff(x))])
    return phi


def kantorovich(rho: GridDensity, nu: GridDensity) -> TransportData:
    if abs(rho.l - nu.l) > 1e-12 * max(rho.l, nu.l):
        raise DomainMismatch("densities live on different domains")
    T = transport_map(rho, nu)
    phi = potential_from_map(rho.centers, T)
    return TransportData(T, phi, wasserstein2(rho, nu))


def lp_distance(rho: GridDensity, nu: GridDensity, p: float = 1.0) -> float:
    if not rho.same_grid(nu):
        raise DomainMismatch("densities live on different grids")
    diff = np.abs(rho.values - nu.values)
    if np.isinf(p):
        return float(diff.max())
    if p < 1:
        raise ValueError("p must be at least 1")
    return float((rho.h * np.sum(diff**p)) ** (1.0 / p))
