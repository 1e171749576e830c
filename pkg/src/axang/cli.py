"""Command-line entry point: ``episode``, ``sweep``, ``certify`` and ``figdata``."""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from pathlib import Path

import numpy as np

from .bench import SweepConfig, build_grid, read_aggregate_csv, run_sweep, write_sweep_outputs
from .config import ConfigError, RunConfig, load_config
from .controllers import (
    CONTROLLER_NAMES,
    SigmoidGamma,
    adaptive_simpson,
    canonical_name,
    check_gains_axis_angle,
)
from .sim import read_trajectory_csv, run_episode
from .so3 import from_axis_angle, sample_unit_sphere

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_FAULT = 3

FIG2C_THETA0_DEG = 136.0
FIG2C_OMEGA_MAG = 30.0


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text: str) -> list[str]:
    try:
        return [canonical_name(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML configuration file")
    common.add_argument("--seed", type=int, help="seed for axis sampling (overrides config)")
    common.add_argument("--workers", type=int, help="worker processes for sweeps")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--controllers", type=_names,
                        help=f"comma-separated subset of {','.join(CONTROLLER_NAMES)}")
    common.add_argument("--theta0", type=_floats, help="initial rotation(s), degrees")
    common.add_argument("--omega", type=_floats,
                        help="initial rate magnitude(s) along u0, rad/s")

    p = argparse.ArgumentParser(prog="axang", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    ep = sub.add_parser("episode", parents=[common],
                        help="run one initial condition and write trajectory CSVs")
    ep.add_argument("--axis", type=_floats, help="rotation axis u0 (default: drawn from seed)")
    ep.add_argument("--sigma", type=int, choices=(-1, 1),
                    help="fix the direction instead of selecting it")
    sub.add_parser("sweep", parents=[common], help="run the benchmark grid")
    sub.add_parser("certify", parents=[common],
                   help="check the axis-angle gains and the shaping function")
    sub.add_parser("figdata", parents=[common],
                   help="write plottable series from stored sweep and episode results")
    return p


def _resolve(args) -> RunConfig:
    # certify reports on the gains itself instead of refusing to load them
    rc = load_config(args.config, validate=args.command != "certify")
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("seed must lie in [0, 2**64)")
        rc.seed = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("workers must be >= 1")
        rc.workers = args.workers
    if args.out is not None:
        rc.out = str(args.out)
    return rc


def _episode_axis(rc: RunConfig, axis=None) -> np.ndarray:
    if axis is None:
        axis = rc.episode.get("axis")
    if axis is None:
        return sample_unit_sphere(np.random.default_rng(rc.seed))
    u = np.asarray(axis, dtype=np.float64)
    if u.shape != (3,) or not np.linalg.norm(u) > 0:
        raise ConfigError("axis must be a nonzero 3-vector")
    return u / np.linalg.norm(u)


def _single(values, name, default) -> float:
    if values is None:
        return float(default)
    if len(values) != 1:
        raise ConfigError(f"episode takes a single {name} value")
    return float(values[0])


def run_fig2c_episodes(rc: RunConfig, controllers, theta0_deg: float, omega_mag: float,
                       axis, out_dir: Path, sigma=None, log=print) -> tuple[int, dict]:
    """Run one initial condition per controller and write ``episode_<name>.csv``."""
    u0 = _episode_axis(rc, axis)
    q0 = from_axis_angle(u0, math.radians(theta0_deg))
    out_dir.mkdir(parents=True, exist_ok=True)
    code = EXIT_OK
    results = {}
    for name in controllers:
        spec = rc.controllers[name]
        t0 = time.perf_counter()
        r = run_episode(q0, omega_mag * u0, spec, rc.sim, rc.mps if spec.mps else None,
                        rc.inertia, sigma=sigma)
        elapsed = time.perf_counter() - t0
        results[name] = r
        if r.trajectory is None:
            # direction selection diverged before any state was integrated
            log(f"{name}: integration fault: {r.message}")
            code = EXIT_FAULT
            continue
        path = out_dir / f"episode_{name}.csv"
        r.trajectory.to_csv(path)
        ts = "none" if r.t_s is None else f"{r.t_s:.4f} s"
        sg = "n/a" if r.sigma is None else f"{r.sigma:+d}"
        log(f"{name:9s} sigma={sg:>3s} theta_e(0)={math.degrees(r.trajectory.theta_e[0]):7.2f} deg"
            f"  t_s={ts}  Lambda={r.Lambda:.4e}  ({elapsed:.2f} s)  -> {path}")
        if r.failed:
            log(f"{name}: integration fault: {r.message}")
            code = EXIT_FAULT
    return code, results


def cmd_episode(args, rc: RunConfig) -> int:
    ep = rc.episode
    if args.controllers:
        names = args.controllers
    elif "controller" in ep:
        names = [canonical_name(ep["controller"])]
    else:
        names = list(CONTROLLER_NAMES)
    theta0 = _single(args.theta0, "theta0",
                     math.degrees(ep["theta0"]) if "theta0" in ep else FIG2C_THETA0_DEG)
    omega = _single(args.omega, "omega", ep.get("omega_mag", FIG2C_OMEGA_MAG))
    code, _ = run_fig2c_episodes(rc, names, theta0, omega, args.axis, Path(rc.out),
                                 sigma=args.sigma)
    return code


def cmd_sweep(args, rc: RunConfig) -> int:
    if args.controllers is not None:
        rc.sweep_controllers = tuple(args.controllers)
    if args.theta0 is not None:
        rc.theta0_grid = tuple(args.theta0)
    if args.omega is not None:
        rc.omega_grid = tuple(args.omega)
    cfg = SweepConfig.from_run_config(rc)
    try:
        episodes = build_grid(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    n = len(episodes)
    print(f"sweep: {n} episodes ({len(cfg.theta0_grid)} theta0 x {len(cfg.omega_grid)} omega"
          f" x {len(cfg.controllers)} controllers), {cfg.workers} worker(s)", file=sys.stderr)
    t0 = time.perf_counter()
    step = max(1, n // 20)

    def progress(done, total):
        if done % step == 0 or done == total:
            print(f"  {done}/{total}  {time.perf_counter() - t0:.0f} s", file=sys.stderr)

    records = run_sweep(cfg, episodes, progress=progress)
    paths = write_sweep_outputs(cfg, records, Path(rc.out), rc.config_hash())
    n_failed = sum(r.failed for r in records)
    print(f"done in {time.perf_counter() - t0:.1f} s; {n_failed} failed episode(s)",
          file=sys.stderr)
    for key, path in paths.items():
        print(f"{key}: {path}")
    return EXIT_OK


def certify_report(rc: RunConfig) -> tuple[bool, list[str]]:
    """Gain certificate for the axis-angle law and shape checks of its gamma."""
    spec = rc.controllers["tau_gamma"]
    g, gamma = spec.gains, spec.gamma
    lines = []
    try:
        cert = check_gains_axis_angle(g)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    W = cert.W
    lines.append(f"gains: k_alpha={g.k_alpha:g} k_delta={g.k_delta:g} k_omega={g.k_omega:g}")
    lines.append("W =")
    lines.extend(f"  [{W[i, 0]: .6g}, {W[i, 1]: .6g}]" for i in range(2))
    lines.append(f"leading minors: {cert.minors[0]:.6g}, {cert.minors[1]:.6g}")
    lines.append(f"det W = {cert.det:.6g}")
    cond = g.k_alpha > g.k_delta * g.k_omega / 4
    lines.append(f"k_alpha > k_delta k_omega / 4: {g.k_alpha:g} > {g.k_delta * g.k_omega / 4:g}"
                 f" -> {cond}")
    checks = {"W positive definite": cert.pd and cond}

    th = np.linspace(-2 * np.pi, 2 * np.pi, 4001)
    y = np.asarray(gamma(th), dtype=np.float64)
    checks["gamma(0) = 0"] = float(gamma(0.0)) == 0.0
    checks["gamma strictly increasing"] = bool(np.all(np.diff(y) > 0))
    nz = th != 0
    checks["gamma in first/third quadrants"] = bool(np.all(np.sign(y[nz]) == np.sign(th[nz])))
    h = 1e-5
    fd = (np.asarray(gamma(th + h)) - np.asarray(gamma(th - h))) / (2 * h)
    d = np.asarray(gamma.deriv(th))
    checks["derivative matches finite differences"] = bool(
        np.all(np.abs(d - fd) <= 1e-6 * np.maximum(np.abs(d), 1e-300)))
    worst = 0.0
    for t in np.linspace(0.0, 2 * np.pi, 17)[1:]:
        ref = adaptive_simpson(lambda x: float(gamma(x)), 0.0, float(t))
        worst = max(worst, abs(gamma.integral(float(t)) - ref))
    checks["integral matches quadrature"] = worst <= 1e-9
    if isinstance(gamma, SigmoidGamma):
        lines.append(f"gamma: sigmoid theta_max={gamma.theta_max:g} xi={gamma.xi:g}")
    else:
        lines.append(f"gamma: {gamma!r}")
    for name, ok in checks.items():
        lines.append(f"  {'ok  ' if ok else 'FAIL'} {name}")
    verdict = all(checks.values())
    lines.append(f"verdict: {'PASS' if verdict else 'FAIL'}")
    return verdict, lines


def cmd_certify(args, rc: RunConfig) -> int:
    ok, lines = certify_report(rc)
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_FAIL


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def write_figdata(rc: RunConfig, out_dir: Path, log=print) -> dict[str, Path]:
    """Emit series shaped like the four benchmark panels.

    ``fig2a.csv``/``fig2b.csv`` come from the stored ``aggregate.csv``.
    ``fig2c.csv`` (error angle over time) and ``fig2d.csv`` (SEA magnitudes,
    ``||n_e||`` for ``tau_b`` and ``||alpha_e||`` for ``tau_gamma``) come from
    the stored ``episode_<name>.csv`` trajectories; missing ones are produced
    first with the 136 deg / 30 rad/s initial condition.
    """
    agg_path = out_dir / "aggregate.csv"
    if not agg_path.exists():
        raise ConfigError(f"no sweep results at {agg_path}; run `sweep --out {out_dir}` first")
    rows = read_aggregate_csv(agg_path)
    paths = {}
    for fig, (m, s) in (("fig2a", ("mean_ts", "sd_ts")), ("fig2b", ("mean_lambda", "sd_lambda"))):
        p = out_dir / f"{fig}.csv"
        _write_rows(p, ("controller", "theta0_deg", m, s),
                    [(r.controller, r.theta0, getattr(r, m), getattr(r, s)) for r in rows])
        paths[fig] = p

    missing = [n for n in CONTROLLER_NAMES if not (out_dir / f"episode_{n}.csv").exists()]
    if missing:
        log(f"running missing episodes: {', '.join(missing)}")
        code, _ = run_fig2c_episodes(rc, missing, FIG2C_THETA0_DEG, FIG2C_OMEGA_MAG, None,
                                     out_dir, log=log)
        if code != EXIT_OK:
            raise RuntimeError("integration fault while producing episode trajectories")
    trajs = {n: read_trajectory_csv(out_dir / f"episode_{n}.csv") for n in CONTROLLER_NAMES}
    p = out_dir / "fig2c.csv"
    _write_rows(p, ("controller", "t", "theta_e_deg"),
                [(n, t, math.degrees(th)) for n, tr in trajs.items()
                 for t, th in zip(tr.t, tr.theta_e)])
    paths["fig2c"] = p
    p = out_dir / "fig2d.csv"
    sea = (("tau_b", "n_e_norm"), ("tau_gamma", "alpha_e_norm"))
    _write_rows(p, ("controller", "quantity", "t", "theta_e_deg", "norm"),
                [(n, q, t, math.degrees(th), v) for n, q in sea
                 for t, th, v in zip(trajs[n].t, trajs[n].theta_e, getattr(trajs[n], q))])
    paths["fig2d"] = p
    return paths


def cmd_figdata(args, rc: RunConfig) -> int:
    for key, path in write_figdata(rc, Path(rc.out)).items():
        print(f"{key}: {path}")
    return EXIT_OK


_COMMANDS = {"episode": cmd_episode, "sweep": cmd_sweep, "certify": cmd_certify,
             "figdata": cmd_figdata}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        rc = _resolve(args)
        return _COMMANDS[args.command](args, rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
