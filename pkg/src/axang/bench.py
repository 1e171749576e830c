"""Monte-Carlo tumble-recovery benchmark: grid, parallel sweep, aggregation, output."""

from __future__ import annotations

import csv
import json
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import (
    DEFAULT_OMEGA_GRID,
    DEFAULT_SEED,
    DEFAULT_THETA0_GRID,
    RunConfig,
)
from .controllers import CONTROLLER_NAMES, ControllerSpec, benchmark_controllers, canonical_name
from .dynamics import InertiaParams
from .mps import MpsConfig
from .sim import SimConfig, run_episode
from .so3 import from_axis_angle, sample_unit_sphere

SD_CONVENTION = "sample standard deviation (ddof=1)"

EPISODE_COLUMNS = ("index", "controller", "theta0_deg", "omega_mag", "u0_x", "u0_y", "u0_z",
                   "sigma", "t_s", "Lambda", "failed", "message")
AGGREGATE_COLUMNS = ("controller", "theta0_deg", "n", "mean_ts", "sd_ts", "mean_lambda",
                     "sd_lambda", "n_failed", "n_unstabilized", "all_failed")


@dataclass(eq=False)
class SweepConfig:
    """Initial-condition grid and run settings of a sweep.

    ``theta0_grid`` is in degrees and ``omega_grid`` holds signed rate
    magnitudes in rad/s; each episode starts at ``omega0 = c * u0``.
    """

    theta0_grid: tuple[float, ...] = DEFAULT_THETA0_GRID
    omega_grid: tuple[float, ...] = DEFAULT_OMEGA_GRID
    controllers: tuple[str, ...] = CONTROLLER_NAMES
    seed: int = DEFAULT_SEED
    specs: dict[str, ControllerSpec] = field(default_factory=dict)
    sim: SimConfig = field(default_factory=SimConfig)
    mps: MpsConfig = field(default_factory=MpsConfig)
    inertia: InertiaParams = field(default_factory=InertiaParams.crazyflie)
    workers: int = 1
    out_dir: str = "results"

    def __post_init__(self):
        self.theta0_grid = tuple(float(x) for x in self.theta0_grid)
        self.omega_grid = tuple(float(x) for x in self.omega_grid)
        self.controllers = tuple(canonical_name(c) for c in self.controllers)
        if not self.specs:
            self.specs = benchmark_controllers(self.inertia)
        missing = set(self.controllers) - set(self.specs)
        if missing:
            raise ValueError(f"no controller spec for {', '.join(sorted(missing))}")

    @classmethod
    def from_run_config(cls, rc: RunConfig) -> "SweepConfig":
        return cls(theta0_grid=rc.theta0_grid, omega_grid=rc.omega_grid,
                   controllers=rc.sweep_controllers, seed=rc.seed, specs=rc.controllers,
                   sim=rc.sim, mps=rc.mps, inertia=rc.inertia, workers=rc.workers,
                   out_dir=rc.out)


@dataclass(frozen=True)
class Episode:
    index: int
    controller: str
    theta0_deg: float
    omega_mag: float
    u0: tuple[float, float, float]

    @property
    def q0(self) -> np.ndarray:
        return from_axis_angle(self.u0, math.radians(self.theta0_deg))

    @property
    def omega0(self) -> np.ndarray:
        return self.omega_mag * np.asarray(self.u0)


@dataclass(frozen=True)
class EpisodeRecord:
    episode: Episode
    t_s: float | None
    Lambda: float
    sigma: int | None
    failed: bool
    message: str = ""


@dataclass(frozen=True)
class AggregateRow:
    controller: str
    theta0: float
    n: int
    mean_ts: float
    sd_ts: float
    mean_lambda: float
    sd_lambda: float
    n_failed: int
    n_unstabilized: int

    @property
    def all_failed(self) -> bool:
        return self.n_failed == self.n


def build_grid(cfg: SweepConfig) -> list[Episode]:
    """Enumerate the sweep, ordered by (theta0, controller, omega).

    One axis ``u0`` is drawn per ``theta0`` value, in grid order, from a
    generator seeded with ``cfg.seed``; it is shared by every rate and
    controller in that cell so the controllers are compared on paired
    initial conditions.
    """
    if not cfg.theta0_grid or not cfg.omega_grid or not cfg.controllers:
        raise ValueError("sweep grid is empty")
    rng = np.random.default_rng(cfg.seed)
    out = []
    for th in cfg.theta0_grid:
        u0 = tuple(float(x) for x in sample_unit_sphere(rng))
        for name in cfg.controllers:
            for c in cfg.omega_grid:
                out.append(Episode(len(out), name, th, c, u0))
    return out


# worker state, set once per process
_WORKER: dict = {}


def _init_worker(specs, sim, mps, inertia):
    _WORKER.update(specs=specs, sim=sim, mps=mps, inertia=inertia)


def _run_one(ep: Episode) -> EpisodeRecord:
    w = _WORKER
    spec = w["specs"][ep.controller]
    r = run_episode(ep.q0, ep.omega0, spec, w["sim"], w["mps"] if spec.mps else None,
                    w["inertia"], keep_trajectory=False)
    return EpisodeRecord(ep, r.t_s, r.Lambda, r.sigma, r.failed, r.message)


def run_sweep(cfg: SweepConfig, episodes: list[Episode] | None = None,
              workers: int | None = None, progress=None) -> list[EpisodeRecord]:
    """Run every episode of the grid and return records in grid order.

    Runs stop once the error has crossed the threshold and the effort window
    has elapsed; with first-crossing ``t_s`` this does not change any metric.
    ``progress(done, total)`` is called after each completed episode.
    """
    episodes = build_grid(cfg) if episodes is None else episodes
    workers = cfg.workers if workers is None else workers
    sim = replace(cfg.sim, early_stop=cfg.sim.ts_mode == "first")
    init = (cfg.specs, sim, cfg.mps, cfg.inertia)
    total = len(episodes)
    records = []
    if workers <= 1:
        _init_worker(*init)
        for ep in episodes:
            records.append(_run_one(ep))
            if progress:
                progress(len(records), total)
        return records
    chunk = max(1, min(64, total // (8 * workers)))
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=init) as pool:
        for rec in pool.map(_run_one, episodes, chunksize=chunk):
            records.append(rec)
            if progress:
                progress(len(records), total)
    return records


def _moments(x: list[float]) -> tuple[float, float]:
    if not x:
        return math.nan, math.nan
    a = np.asarray(sorted(x), dtype=np.float64)
    mean = float(math.fsum(a) / a.size)
    if a.size < 2:
        return mean, math.nan
    return mean, float(math.sqrt(math.fsum((a - mean) ** 2) / (a.size - 1)))


def aggregate(records) -> list[AggregateRow]:
    """Mean and sample SD of ``t_s`` and ``Lambda`` per (controller, theta0).

    Failed episodes are counted and excluded from both moments; episodes that
    never stabilized are excluded from the ``t_s`` moments only.  The result
    does not depend on record order: rows are sorted by controller (in
    ``CONTROLLER_NAMES`` order) and then by ``theta0``, and sums run over
    sorted values.
    """
    cells: dict[tuple[str, float], list[EpisodeRecord]] = {}
    for r in records:
        cells.setdefault((r.episode.controller, r.episode.theta0_deg), []).append(r)
    order = {n: i for i, n in enumerate(CONTROLLER_NAMES)}
    rows = []
    for (name, th) in sorted(cells, key=lambda k: (order.get(k[0], len(order)), k[0], k[1])):
        cell = cells[(name, th)]
        ok = [r for r in cell if not r.failed]
        ts = [r.t_s for r in ok if r.t_s is not None]
        mt, st = _moments(ts)
        ml, sl = _moments([r.Lambda for r in ok])
        rows.append(AggregateRow(name, th, len(cell), mt, st, ml, sl, len(cell) - len(ok),
                                 len(ok) - len(ts)))
    return rows


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_episodes_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EPISODE_COLUMNS)
        for r in records:
            e = r.episode
            w.writerow([_fmt(v) for v in (e.index, e.controller, e.theta0_deg, e.omega_mag,
                                          *e.u0, r.sigma, r.t_s, r.Lambda, r.failed,
                                          r.message)])


def read_episodes_csv(path) -> list[EpisodeRecord]:
    def num(s):
        return None if s == "" else float(s)

    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ep = Episode(int(row["index"]), row["controller"], float(row["theta0_deg"]),
                         float(row["omega_mag"]),
                         (float(row["u0_x"]), float(row["u0_y"]), float(row["u0_z"])))
            sigma = None if row["sigma"] == "" else int(row["sigma"])
            out.append(EpisodeRecord(ep, num(row["t_s"]), float(row["Lambda"]), sigma,
                                     row["failed"] == "1", row["message"]))
    return out


def write_aggregate_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) for v in (r.controller, r.theta0, r.n, r.mean_ts, r.sd_ts,
                                          r.mean_lambda, r.sd_lambda, r.n_failed,
                                          r.n_unstabilized, r.all_failed)])


def read_aggregate_csv(path) -> list[AggregateRow]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(AggregateRow(row["controller"], float(row["theta0_deg"]), int(row["n"]),
                                    float(row["mean_ts"]), float(row["sd_ts"]),
                                    float(row["mean_lambda"]), float(row["sd_lambda"]),
                                    int(row["n_failed"]), int(row["n_unstabilized"])))
    return out


def run_metadata(cfg: SweepConfig, config_hash: str, n_episodes: int) -> dict:
    import numba

    from . import __version__

    return {
        "seed": cfg.seed,
        "config_hash": config_hash,
        "n_episodes": n_episodes,
        "sd": SD_CONVENTION,
        "theta0_grid_deg": list(cfg.theta0_grid),
        "omega_grid": list(cfg.omega_grid),
        "controllers": list(cfg.controllers),
        "versions": {"artifact": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "numba": numba.__version__,
                     "platform": sys.platform},
    }


def write_sweep_outputs(cfg: SweepConfig, records, out_dir, config_hash: str) -> dict[str, Path]:
    """Write ``episodes.csv``, ``aggregate.csv`` and the ``sweep.json`` sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"episodes": out / "episodes.csv", "aggregate": out / "aggregate.csv",
             "metadata": out / "sweep.json"}
    write_episodes_csv(records, paths["episodes"])
    write_aggregate_csv(aggregate(records), paths["aggregate"])
    meta = run_metadata(cfg, config_hash, len(records))
    paths["metadata"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return paths
