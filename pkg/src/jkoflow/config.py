"""Flat JSON run configuration.

Every key is top level, unknown keys are rejected, and errors name the
field together with the line it appears on.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import density as dn
from . import entropy as en
from . import potential as pot
from .jko import SolverOptions, num_steps

ENTROPIES = ("loglog", "logpow", "powpow_equal", "powpow", "custom")
POTENTIALS = ("zero", "linear", "quadratic", "table")
INITIALS = ("uniform", "exp_normalized", "spike", "table", "random_smooth")


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    entropy: str
    l: float
    n: int
    tau: float
    horizon: float
    entropy_m: float | None = None
    entropy_r: float | None = None
    entropy_table: str | None = None
    potential: str = "zero"
    potential_slope: float = 0.0
    potential_coeffs: tuple[float, float, float] = (0.0, 0.0, 0.0)
    potential_table: str | None = None
    initial: str = "uniform"
    spike_position: float = 0.5
    spike_width: float = 0.05
    spike_height: float = 50.0
    initial_table: str | None = None
    method: str = "newton"
    damping: float = 0.5
    max_iters: int = 5000
    tol_fix: float = 1e-8
    tol_mass: float = 1e-12
    tol_phase: float = 1e-6
    fd_epsilon: float = 1e-2
    seed: int = 0
    base_dir: str = ""

    # -- derived objects ------------------------------------------------------
    def _path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q

    def entropy_spec(self) -> en.EntropySpec:
        if self.entropy == "custom":
            table = en.load_table(self._path(self.entropy_table))
            return en.custom(table, self.entropy_m or 2.0, self.entropy_r or 2.0)
        return en.from_name(self.entropy, self.entropy_m, self.entropy_r)

    def potential_fn(self) -> pot.Potential:
        if self.potential == "zero":
            return pot.zero()
        if self.potential == "linear":
            return pot.linear(self.potential_slope)
        if self.potential == "quadratic":
            return pot.quadratic(*self.potential_coeffs)
        return pot.load_table(self._path(self.potential_table))

    def initial_density(self) -> dn.GridDensity:
        if self.initial == "uniform":
            return dn.uniform(self.l, self.n)
        if self.initial == "exp_normalized":
            return dn.exp_normalized(self.l, self.n)
        if self.initial == "spike":
            return dn.spike(self.l, self.n, self.spike_position, self.spike_width,
                            self.spike_height)
        if self.initial == "random_smooth":
            return dn.random_smooth(np.random.default_rng(self.seed), self.l, self.n)
        rho, _ = dn.load_csv(self._path(self.initial_table))
        if rho.n != self.n or abs(rho.l - self.l) > 1e-12:
            raise ConfigError(f"table grid (l={rho.l}, n={rho.n}) does not match l and n",
                              "initial_table")
        return rho

    def solver_options(self) -> SolverOptions:
        return SolverOptions(method=self.method, damping=self.damping, max_iters=self.max_iters,
                             tol_fix=self.tol_fix, tol_mass=self.tol_mass,
                             tol_phase=self.tol_phase)

    @property
    def is_log_linear(self) -> bool:
        """LogLog with Phi = 2x: the case with closed-form stationary states."""
        return (self.entropy == "loglog" and self.potential == "linear"
                and self.potential_slope == 2.0)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        d["potential_coeffs"] = list(self.potential_coeffs)
        return d

    def fingerprint(self) -> str:
        """sha256 of the canonical JSON of the resolved configuration."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        return validate(dataclasses.replace(self, **changes))


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "base_dir"}
_REQUIRED = ("entropy", "l", "n", "tau", "horizon")
_INTS = ("n", "max_iters", "seed")
_STRINGS = ("entropy", "entropy_table", "potential", "potential_table", "initial",
            "initial_table", "method")


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _coerce(key, value, text):
    line = _line_of(text, key)
    if key in _STRINGS:
        if not isinstance(value, str):
            raise ConfigError("expected a string", key, line)
        return value
    if key == "potential_coeffs":
        if (not isinstance(value, list) or len(value) != 3
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
            raise ConfigError("expected a list of three numbers", key, line)
        return tuple(float(v) for v in value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number", key, line)
    if key in _INTS:
        if int(value) != value:
            raise ConfigError("expected an integer", key, line)
        return int(value)
    return float(value)


def validate(cfg: RunConfig, text: str = "") -> RunConfig:
    def fail(msg, key):
        raise ConfigError(msg, key, _line_of(text, key) if text else None)

    if cfg.entropy not in ENTROPIES:
        fail(f"unknown entropy {cfg.entropy!r}; choose from {', '.join(ENTROPIES)}", "entropy")
    if cfg.entropy == "custom" and not cfg.entropy_table:
        fail("custom entropy needs entropy_table", "entropy_table")
    if cfg.potential not in POTENTIALS:
        fail(f"unknown potential {cfg.potential!r}", "potential")
    if cfg.potential == "table" and not cfg.potential_table:
        fail("table potential needs potential_table", "potential_table")
    if cfg.initial not in INITIALS:
        fail(f"unknown initial {cfg.initial!r}", "initial")
    if cfg.initial == "table" and not cfg.initial_table:
        fail("table initial needs initial_table", "initial_table")
    if cfg.method not in ("newton", "picard"):
        fail("method must be 'newton' or 'picard'", "method")
    if not cfg.l > 0:
        fail("domain length must be positive", "l")
    if cfg.n < 16:
        fail("n must be at least 16", "n")
    if not cfg.tau > 0:
        fail("tau must be positive", "tau")
    if not cfg.horizon >= 0:
        fail("horizon must be nonnegative", "horizon")
    try:
        num_steps(cfg.tau, cfg.horizon)
    except ValueError as exc:
        fail(str(exc), "horizon")
    for key in ("tol_fix", "tol_mass", "fd_epsilon"):
        if not getattr(cfg, key) > 0:
            fail("must be positive", key)
    if not 0 < cfg.damping <= 1:
        fail("damping must lie in (0, 1]", "damping")
    if cfg.tol_phase < 0:
        fail("must be nonnegative", "tol_phase")
    if cfg.seed < 0:
        fail("seed must be nonnegative", "seed")
    try:
        cfg.entropy_spec()
    except (ValueError, OSError) as exc:
        fail(str(exc), "entropy_table" if cfg.entropy == "custom" else "entropy")
    if cfg.potential == "table":
        try:
            cfg.potential_fn()
        except (ValueError, OSError) as exc:
            fail(str(exc), "potential_table")
    return cfg


def parse_config(text: str, base_dir: str | Path = "") -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, None, exc.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", None, 1)
    for key in raw:
        if key not in _FIELDS:
            raise ConfigError("unknown key", key, _line_of(text, key))
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError("required key missing", key)
    values = {k: _coerce(k, v, text) for k, v in raw.items()}
    cfg = RunConfig(base_dir=str(base_dir), **values)
    return validate(cfg, text)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), path.parent)
