"""Artifact writers: frame CSVs and JSON documents at 17 significant digits."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import entropy as en
from .jko import Trajectory

FMT = "%.17g"


def fmt(v) -> str:
    return FMT % float(v)


def _clean(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _float_repr(v: float) -> str:
    return fmt(v) if math.isfinite(v) else json.dumps(str(v))


def dumps(obj) -> str:
    """Deterministic JSON with every float printed at 17 significant digits."""
    obj = _clean(obj)

    def enc(o, indent):
        pad = "  " * (indent + 1)
        end = "  " * indent
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(v, indent + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(isinstance(v, (int, float, str)) and not isinstance(v, bool) for v in o):
                return "[" + ", ".join(enc(v, indent + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, indent + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, float):
            return _float_repr(o)
        return json.dumps(o)

    return enc(obj, 0) + "\n"


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(dumps(obj))


def frame_ls(spec: en.EntropySpec, frame, tol_phase: float) -> np.ndarray:
    if frame.ls is not None:
        return np.asarray(frame.ls, dtype=float)
    return en.l_s(spec, frame.rho.values, frame.pressure, tol_phase, check=False)


def write_frames_csv(path: str | Path, traj: Trajectory, spec: en.EntropySpec,
                     tol_phase: float, fingerprint: str) -> None:
    """Rows `t,x,rho,p,ls`, one block per frame, after a `# config_sha256=` line."""
    lines = [f"# config_sha256={fingerprint}", "t,x,rho,p,ls"]
    for fr in traj.frames:
        x = fr.rho.centers
        ls = frame_ls(spec, fr, tol_phase)
        t = fmt(fr.t)
        for xi, r, p, q in zip(x, fr.rho.values, fr.pressure, ls):
            lines.append(f"{t},{fmt(xi)},{fmt(r)},{fmt(p)},{fmt(q)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_ledger_json(path: str | Path, traj: Trajectory, fingerprint: str) -> None:
    """JSON array of ledger entries, each stamped with the config fingerprint."""
    write_json(path, [dict(e.to_dict(), config_sha256=fingerprint) for e in traj.ledger])


def write_table_csv(path: str | Path, header: list[str], columns, fingerprint: str,
                    comments: dict | None = None) -> None:
    lines = [f"# config_sha256={fingerprint}"]
    for k, v in (comments or {}).items():
        lines.append(f"# {k}={v}")
    lines.append(",".join(header))
    for row in zip(*columns):
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_frames_csv(path: str | Path) -> tuple[str, dict[float, dict[str, np.ndarray]]]:
    """Parse a frames CSV back into {t: {x, rho, p, ls}}; returns the fingerprint too."""
    text = Path(path).read_text().splitlines()
    fingerprint = text[0].split("=", 1)[1]
    data = np.array([[float(v) for v in ln.split(",")] for ln in text[2:] if ln])
    out = {}
    for t in np.unique(data[:, 0]):
        block = data[data[:, 0] == t]
        out[float(t)] = {"x": block[:, 1], "rho": block[:, 2], "p": block[:, 3], "ls": block[:, 4]}
    return fingerprint, out
