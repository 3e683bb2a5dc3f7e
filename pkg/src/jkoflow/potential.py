"""External potentials on [0, l]: zero, linear, quadratic, or tabulated."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Potential:
    """Phi(x) = c0 + c1 x + c2 x^2, or piecewise-linear through a table."""

    kind: str
    coeffs: tuple[float, float, float] = (0.0, 0.0, 0.0)
    table_x: tuple[float, ...] = ()
    table_v: tuple[float, ...] = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "table":
            return np.interp(x, self.table_x, self.table_v)
        c0, c1, c2 = self.coeffs
        return c0 + c1 * x + c2 * x * x

    def slope(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "table":
            tx, tv = np.asarray(self.table_x), np.asarray(self.table_v)
            k = np.clip(np.searchsorted(tx, x, side="right") - 1, 0, tx.size - 2)
            return (tv[k + 1] - tv[k]) / (tx[k + 1] - tx[k])
        _, c1, c2 = self.coeffs
        return c1 + 2 * c2 * x

    def curvature(self, x):
        """Phi''; zero almost everywhere for tables."""
        x = np.asarray(x, dtype=float)
        if self.kind == "table":
            return np.zeros_like(x)
        return np.full_like(x, 2 * self.coeffs[2])

    @property
    def is_constant(self) -> bool:
        if self.kind == "table":
            return len(set(self.table_v)) == 1
        return self.coeffs[1] == 0 and self.coeffs[2] == 0

    def lipschitz(self, l: float) -> float:
        if self.kind == "table":
            return float(np.max(np.abs(np.diff(self.table_v) / np.diff(self.table_x))))
        return float(max(abs(self.slope(0.0)), abs(self.slope(l))))

    def inward_boundary(self, l: float) -> bool:
        """True when the drift points into the domain at both ends (Phi'(0) < 0 < Phi'(l))."""
        return bool(self.slope(0.0) < 0 < self.slope(l))

    def linf_bound_armed(self, l: float) -> bool:
        return self.is_constant or self.inward_boundary(l)


def zero() -> Potential:
    return Potential("zero")


def linear(slope: float) -> Potential:
    return Potential("linear", (0.0, float(slope), 0.0))


def quadratic(c0: float, c1: float, c2: float) -> Potential:
    return Potential("quadratic", (float(c0), float(c1), float(c2)))


def from_table(x, v, max_slope: float = 1e8) -> Potential:
    x = tuple(float(t) for t in x)
    v = tuple(float(t) for t in v)
    if len(x) != len(v) or len(x) < 2:
        raise ValueError("potential table needs at least two matching rows")
    if np.any(np.diff(x) <= 0):
        raise ValueError("potential table abscissae must be strictly increasing")
    pot = Potential("table", table_x=x, table_v=v)
    if not np.all(np.isfinite(v)) or pot.lipschitz(0.0) > max_slope:
        raise ValueError("potential table slopes are not Lipschitz-bounded")
    return pot


def load_table(path: str | Path) -> Potential:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["x", "phi"]:
            raise ValueError(f"{path}: header must be 'x,phi'")
        rows = [(float(r["x"]), float(r["phi"])) for r in reader]
    return from_table([r[0] for r in rows], [r[1] for r in rows])
