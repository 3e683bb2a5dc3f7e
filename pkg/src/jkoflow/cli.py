"""Command line front end: ``jkoflow <command> ...``.

Exit codes: 0 success, 1 solver or check failure (artifacts kept), 2 bad
configuration or usage.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import density as dn
from . import diagnostics as dg
from . import entropy as en
from . import io
from . import jko
from . import pde_fd
from . import stationary as st
from .config import ConfigError, RunConfig, load_config
from .quantile_oracle import OracleFailure, step_oracle_quantile

log = logging.getLogger("jkoflow")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(path: str, seed: int | None) -> RunConfig:
    cfg = load_config(path)
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    return cfg


def _stationary_grid(cfg: RunConfig) -> dn.GridDensity | None:
    if not cfg.is_log_linear:
        return None
    return st.stationary_log_linear(cfg.l).grid(cfg.n)[0]


def _run_jko(cfg: RunConfig, frames_every: int = 1, n=None, tau=None) -> jko.Trajectory:
    n = n or cfg.n
    tau = tau or cfg.tau
    c = cfg if n == cfg.n else cfg.replace(n=n)
    return jko.run_trajectory(c.entropy_spec(), c.potential_fn(), c.initial_density(), tau,
                              cfg.horizon, c.solver_options(), frames_every, c.fingerprint())


# -- commands ------------------------------------------------------------------
def cmd_run(args) -> int:
    cfg = _load(args.config, args.seed)
    out = _out_dir(args, "out")
    fp = cfg.fingerprint()
    spec, phi = cfg.entropy_spec(), cfg.potential_fn()
    traj = _run_jko(cfg, args.frames_every)
    io.write_frames_csv(out / "frames.csv", traj, spec, cfg.tol_phase, fp)
    io.write_ledger_json(out / "ledger.json", traj, fp)
    reports = dg.trajectory_reports(traj, spec, phi, cfg.tol_phase)
    profile = _stationary_grid(cfg)
    if profile is not None and traj.failure is None:
        reports.append(dg.stationary_distance_report(traj, profile))
    doc = {"config_sha256": fp, "config": cfg.to_dict(), "failure": traj.failure,
           "reports": [r.to_dict() for r in reports],
           "summability": dg.summability(traj, spec).to_dict()}
    io.write_json(out / "diagnostics.json", doc)
    if traj.failure is not None:
        log.error("step %d failed: %s", traj.failure["k"], traj.failure["error"])
        return EXIT_FAIL
    return EXIT_OK


def cmd_stationary(args) -> int:
    out = _out_dir(args, "out")
    prof = st.stationary_log_linear(args.l)
    fp = hashlib.sha256(json.dumps({"l": args.l, "n": args.n}, sort_keys=True).encode()).hexdigest()
    x = (np.arange(args.n) + 0.5) * (args.l / args.n)
    io.write_table_csv(out / "profile.csv", ["x", "rho", "p_expected"],
                       [x, prof.density(x), prof.pressure(x)], fp)
    io.write_json(out / "stationary.json", dict(prof.metadata(), config_sha256=fp,
                                                mass=prof.mass()))
    print(f"regime={prof.regime} A={io.fmt(prof.A)} C={io.fmt(prof.C)}")
    return EXIT_OK


def _compare_level(cfg: RunConfig, n: int, tau: float, eps: float, frames_every: int):
    spec, phi = cfg.entropy_spec(), cfg.potential_fn()
    c = cfg.replace(n=n, tau=tau, fd_epsilon=eps)
    jt = jko.run_trajectory(spec, phi, c.initial_density(), tau, cfg.horizon,
                            c.solver_options(), frames_every, c.fingerprint())
    ft = pde_fd.fd_run(spec, phi, c.initial_density(), cfg.horizon, eps,
                       frame_dt=tau * frames_every, fingerprint=c.fingerprint())
    prof = _stationary_grid(c)
    rows = []
    for fj in jt.frames:
        ff = min(ft.frames, key=lambda f: abs(f.t - fj.t))
        if abs(ff.t - fj.t) > 1e-9 * max(1.0, fj.t):
            continue
        row = {"t": fj.t, "jko_fd": dn.lp_distance(fj.rho, ff.rho)}
        if prof is not None:
            row["jko_stationary"] = dn.lp_distance(fj.rho, prof)
            row["fd_stationary"] = dn.lp_distance(ff.rho, prof)
        rows.append(row)
    return c, jt, ft, rows


def cmd_compare(args) -> int:
    cfg = _load(args.config, args.seed)
    out = _out_dir(args, "out")
    fp = cfg.fingerprint()
    spec = cfg.entropy_spec()
    steps = jko.num_steps(cfg.tau, cfg.horizon)
    every = args.frames_every if steps % args.frames_every == 0 else steps
    c, jt, ft, rows = _compare_level(cfg, cfg.n, cfg.tau, cfg.fd_epsilon, every)
    io.write_frames_csv(out / "jko_frames.csv", jt, spec, cfg.tol_phase, fp)
    io.write_frames_csv(out / "fd_frames.csv", ft, spec, cfg.tol_phase, fp)
    doc = {"config_sha256": fp, "fd": ft.meta, "distances": rows,
           "failures": {"jko": jt.failure, "fd": ft.failure}}
    if args.refine:
        levels = []
        for j in range(3):
            s = 2**j
            _, jt_j, ft_j, rows_j = _compare_level(cfg, cfg.n * s, cfg.tau / s,
                                                   cfg.fd_epsilon / s, steps * s)
            levels.append({"n": cfg.n * s, "tau": cfg.tau / s, "epsilon": cfg.fd_epsilon / s,
                           "jko_fd_final": rows_j[-1]["jko_fd"]})
        d = [lv["jko_fd_final"] for lv in levels]
        doc["refinement"] = {"levels": levels, "monotone": bool(d[0] > d[1] > d[2])}
    io.write_json(out / "compare.json", doc)
    failed = jt.failure is not None or ft.failure is not None
    return EXIT_FAIL if failed else EXIT_OK


def _incompatible(a: RunConfig, b: RunConfig) -> list[str]:
    da, db = a.to_dict(), b.to_dict()
    initial_keys = {"initial", "spike_position", "spike_width", "spike_height", "initial_table",
                    "seed"}
    return sorted(k for k in da if k not in initial_keys and da[k] != db[k])


def cmd_contraction(args) -> int:
    c1 = _load(args.config1, args.seed)
    out = _out_dir(args, "out")
    h = c1.l / c1.n
    slack = 1e-3 + 4 * h
    spec, phi, opts = c1.entropy_spec(), c1.potential_fn(), c1.solver_options()
    pairs = []
    if args.random_pairs:
        rng = np.random.default_rng(c1.seed)
        for i in range(args.random_pairs):
            r1 = dn.random_smooth(rng, c1.l, c1.n)
            r2 = dn.random_smooth(rng, c1.l, c1.n)
            t1 = jko.run_trajectory(spec, phi, r1, c1.tau, c1.horizon, opts)
            t2 = jko.run_trajectory(spec, phi, r2, c1.tau, c1.horizon, opts)
            pairs.append({"pair": i, "violation": dg.contraction_check(t1, t2),
                          "failed": t1.failure is not None or t2.failure is not None})
        fp = c1.fingerprint()
    else:
        if args.config2 is None:
            raise ConfigError("contraction needs a second config or --random-pairs")
        c2 = _load(args.config2, args.seed)
        bad = _incompatible(c1, c2)
        if bad:
            raise ConfigError(f"configs differ outside the initial data: {', '.join(bad)}")
        t1, t2 = _run_jko(c1), _run_jko(c2)
        pairs.append({"pair": 0, "violation": dg.contraction_check(t1, t2),
                      "failed": t1.failure is not None or t2.failure is not None})
        fp = hashlib.sha256((c1.fingerprint() + c2.fingerprint()).encode()).hexdigest()
    worst = max(p["violation"] for p in pairs)
    ok = worst <= slack and not any(p["failed"] for p in pairs)
    report = dg.CheckReport("l1_contraction", dg.PASS if ok else dg.FAIL, worst,
                            {"pair": max(pairs, key=lambda p: p["violation"])["pair"]},
                            {"slack": slack})
    io.write_json(out / "contraction.json", {"config_sha256": fp, "pairs": pairs,
                                             "report": report.to_dict()})
    print(f"worst violation {io.fmt(worst)} (slack {io.fmt(slack)}): {report.status}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_validate_entropy(args) -> int:
    cfg = _load(args.config, args.seed)
    out = _out_dir(args, "out")
    rep = en.validate_assumptions(cfg.entropy_spec(), args.samples)
    io.write_json(out / "entropy_validation.json",
                  dict(rep.to_dict(), config_sha256=cfg.fingerprint()))
    for c in rep.failures():
        log.error("assumption %s fails: margin %s at %s", c.name, c.worst_margin, c.location)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_step(args) -> int:
    cfg = _load(args.config, args.seed)
    out = _out_dir(args, "out")
    fp = cfg.fingerprint()
    spec, phi = cfg.entropy_spec(), cfg.potential_fn()
    rho0 = cfg.initial_density()
    try:
        res = jko.jko_step(spec, phi, rho0, cfg.tau, cfg.solver_options())
    except (jko.JkoStepError, jko.MassConstantError) as exc:
        io.write_json(out / "step.json", {"config_sha256": fp, "error": str(exc),
                                          "residuals": getattr(exc, "residuals", {})})
        log.error("step failed: %s", exc)
        return EXIT_FAIL
    ls = en.l_s(spec, res.rho_new.values, res.pressure, cfg.tol_phase, check=False)
    io.write_table_csv(out / "step.csv",
                       ["x", "rho_prev", "rho", "p", "ls", "potential", "velocity"],
                       [rho0.centers, rho0.values, res.rho_new.values, res.pressure, ls,
                        res.potential, res.velocity], fp)
    pp = dg.phase_partition(res.rho_new, cfg.tol_phase)
    doc = {"config_sha256": fp, "mass_constant": res.mass_constant, "w2_step": res.w2_step,
           "iterations": res.iterations, "method": res.method,
           "optimality_residual": res.optimality_residual, "mass_residual": res.mass_residual,
           "phases": {"below": pp.below, "plateau": pp.plateau, "above": pp.above},
           "objective": jko.jko_objective(spec, phi, res.rho_new, rho0, cfg.tau)}
    if args.oracle:
        try:
            orc = step_oracle_quantile(spec, phi, rho0, cfg.tau, args.oracle_epsilon, cfg.n)
            doc["oracle"] = {"l1": dn.lp_distance(orc.rho, res.rho_new),
                             "iterations": orc.iterations, "gradient": orc.gradient_norm}
        except OracleFailure as exc:
            doc["oracle"] = {"error": str(exc)}
    io.write_json(out / "step.json", doc)
    return EXIT_OK


def _sweep_one(job):
    path, out, seed, frames_every = job
    ns = argparse.Namespace(config=path, out=str(out), seed=seed, frames_every=frames_every)
    try:
        return path, cmd_run(ns)
    except ConfigError as exc:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "error.txt").write_text(str(exc) + "\n")
        return path, EXIT_CONFIG


def cmd_sweep(args) -> int:
    root = _out_dir(args, "sweep")
    stems = [Path(p).stem for p in args.configs]
    if len(set(stems)) != len(stems):
        raise ConfigError("sweep configs must have distinct file names")
    jobs = [(p, root / s, args.seed, args.frames_every) for p, s in zip(args.configs, stems)]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as ex:
            results = list(ex.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    io.write_json(root / "sweep.json", {"runs": [{"config": p, "exit": c} for p, c in results]})
    return max(c for _, c in results)


# -- parser ---------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jkoflow",
                                 description="Minimizing-movement solver for nonsmooth entropies")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, frames=False):
        p.add_argument("--out", help="output directory (default ./out)")
        p.add_argument("--seed", type=int, help="override the config seed")
        if frames:
            p.add_argument("--frames-every", type=int, default=1,
                           help="keep every k-th frame (the last is always kept)")

    p = sub.add_parser("run", help="run a trajectory and write frames, ledger, diagnostics")
    p.add_argument("config")
    common(p, frames=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("stationary", help="closed-form stationary profile for LogLog, Phi=2x")
    p.add_argument("--l", type=float, required=True)
    p.add_argument("--n", type=int, default=512, help="number of sample points")
    common(p)
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser("compare", help="JKO vs finite volumes vs stationary oracle")
    p.add_argument("config")
    p.add_argument("--refine", action="store_true",
                   help="also run three levels refining n, tau and epsilon together")
    common(p, frames=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("contraction", help="L1 contraction between two runs")
    p.add_argument("config1")
    p.add_argument("config2", nargs="?")
    p.add_argument("--random-pairs", type=int, default=0,
                   help="seeded random initial pairs built on config1 instead of config2")
    common(p)
    p.set_defaults(func=cmd_contraction)

    p = sub.add_parser("validate-entropy", help="check the structural assumptions on S")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=400)
    common(p)
    p.set_defaults(func=cmd_validate_entropy)

    p = sub.add_parser("step", help="single step dump")
    p.add_argument("config")
    p.add_argument("--oracle", action="store_true", help="also run the particle oracle")
    p.add_argument("--oracle-epsilon", type=float, default=1e-3)
    common(p)
    p.set_defaults(func=cmd_step)

    p = sub.add_parser("sweep", help="independent runs, one output directory each")
    p.add_argument("configs", nargs="+")
    p.add_argument("--workers", type=int, default=1)
    common(p, frames=True)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "frames_every", 1) < 1:
        print("error: --frames-every must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
