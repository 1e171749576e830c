"""TOML run configuration.

All quantities are SI.  Any key ending in ``_deg`` is read in degrees and
stored in radians under the key without the suffix, e.g.
``stab_threshold_deg = 15`` becomes ``stab_threshold = 0.2618``.  The sweep
grid keeps its own degree keys (``theta0_grid``) because results are reported
per degree value.

Recognized tables::

    seed = 7
    [sim]       step, horizon, stab_threshold(_deg), effort_window, log_decimation,
                ts_mode, early_stop
    [mps]       horizon, R, Q, prediction_step
    [inertia]   J (3x3) or J_diag (3)
    [gamma]     kind = "sigmoid" | "linear", theta_max(_deg), xi, slope
    [gains.tau_b]      k_q, k_omega
    [gains.tau_gamma]  k_alpha, k_delta, k_omega
    [gains.tau_g]      k_R, k_Omega (scalar, diagonal 3-list or 3x3) or
                       match = "tau_gamma" | "tau_b"
    [sweep]     theta0_grid, omega_grid or omega_min/omega_max/omega_step,
                controllers, workers, out
    [episode]   controller, theta0(_deg), omega_mag, axis
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import tomli

from .controllers import (
    CONTROLLER_NAMES,
    ControllerSpec,
    GainsAxisAngle,
    GainsGeometric,
    GainsQuaternion,
    GammaFunction,
    LinearGamma,
    SigmoidGamma,
    canonical_name,
)
from .dynamics import CRAZYFLIE_J_DIAG, InertiaParams
from .mps import MpsConfig
from .sim import SimConfig

DEFAULT_SEED = 20250101
DEFAULT_THETA0_GRID = tuple(float(d) for d in range(1, 180, 5))
DEFAULT_OMEGA_GRID = tuple(float(c) for c in np.round(np.linspace(-30.0, 30.0, 101), 10))

_TOP_KEYS = {"seed", "sim", "mps", "inertia", "gamma", "gains", "sweep", "episode"}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _convert_degrees(node):
    if isinstance(node, dict):
        out = {}
        for key, value in node.items():
            value = _convert_degrees(value)
            if key.endswith("_deg") and key != "theta0_grid_deg":
                base = key[: -len("_deg")]
                if base in node:
                    raise ConfigError(f"both {base!r} and {key!r} given")
                out[base] = np.radians(value).tolist()
            else:
                out[key] = value
        return out
    return node


def _take(table: dict, name: str, keys: set[str]) -> dict:
    extra = set(table) - keys
    if extra:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(extra))}")
    return table


def _matrix(value, name: str) -> np.ndarray:
    a = np.asarray(value, dtype=np.float64)
    if a.ndim == 0:
        return float(a) * np.eye(3)
    if a.shape == (3,):
        return np.diag(a)
    if a.shape == (3, 3):
        return a
    raise ConfigError(f"{name} must be a scalar, a 3-list or a 3x3 list")


@dataclass(eq=False)
class RunConfig:
    """Everything a CLI run needs, resolved from defaults and an optional file."""

    seed: int = DEFAULT_SEED
    sim: SimConfig = field(default_factory=SimConfig)
    mps: MpsConfig = field(default_factory=MpsConfig)
    inertia: InertiaParams = field(default_factory=InertiaParams.crazyflie)
    controllers: dict[str, ControllerSpec] = field(default_factory=dict)
    theta0_grid: tuple[float, ...] = DEFAULT_THETA0_GRID
    omega_grid: tuple[float, ...] = DEFAULT_OMEGA_GRID
    sweep_controllers: tuple[str, ...] = CONTROLLER_NAMES
    workers: int = 1
    out: str = "results"
    episode: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, Any] = field(default_factory=dict)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form of the resolved configuration."""
        text = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def describe(self) -> dict:
        def spec(c: ControllerSpec):
            d = {"kind": c.kind, "mps": c.mps}
            g = c.gains
            if isinstance(g, GainsGeometric):
                d["k_R"] = g.k_R.tolist()
                d["k_Omega"] = g.k_Omega.tolist()
            else:
                d.update({k: float(v) for k, v in vars(g).items()})
            if c.gamma is not None:
                d["gamma"] = {"type": type(c.gamma).__name__, **{
                    k: float(v) for k, v in vars(c.gamma).items()}}
            return d

        return {
            "seed": self.seed,
            "sim": {k: getattr(self.sim, k) for k in (
                "step", "horizon", "stab_threshold", "effort_window", "log_decimation",
                "ts_mode", "early_stop")},
            "mps": {"horizon": self.mps.horizon, "R": self.mps.R.tolist(),
                    "Q": self.mps.Q.tolist(), "prediction_step": self.mps.prediction_step},
            "J": self.inertia.J.tolist(),
            "controllers": {k: spec(v) for k, v in sorted(self.controllers.items())},
            "theta0_grid": list(self.theta0_grid),
            "omega_grid": list(self.omega_grid),
            "sweep_controllers": list(self.sweep_controllers),
        }


def _build_gamma(table: dict) -> GammaFunction:
    table = _take(dict(table), "gamma", {"kind", "theta_max", "xi", "slope"})
    kind = table.pop("kind", "sigmoid")
    try:
        if kind == "sigmoid":
            table.pop("slope", None)
            return SigmoidGamma(**{k: float(v) for k, v in table.items()})
        if kind == "linear":
            return LinearGamma(float(table.get("slope", 1.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[gamma]: {exc}") from None
    raise ConfigError(f"unknown gamma kind {kind!r}")


def _build_controllers(gains: dict, gamma: GammaFunction, inertia: InertiaParams,
                       validate: bool = True) -> dict[str, ControllerSpec]:
    extra = set(gains) - set(CONTROLLER_NAMES)
    if extra:
        raise ConfigError(f"unknown controller table(s) in [gains]: {', '.join(sorted(extra))}")
    try:
        tb = _take(dict(gains.get("tau_b", {})), "gains.tau_b", {"k_q", "k_omega", "mps"})
        mps_b = bool(tb.pop("mps", True))
        quat = GainsQuaternion(**{k: float(v) for k, v in tb.items()})
        tg = _take(dict(gains.get("tau_gamma", {})), "gains.tau_gamma",
                   {"k_alpha", "k_delta", "k_omega", "mps"})
        mps_g = bool(tg.pop("mps", True))
        axang = GainsAxisAngle(**{k: float(v) for k, v in tg.items()})
        tr = _take(dict(gains.get("tau_g", {})), "gains.tau_g", {"k_R", "k_Omega", "match"})
        if "k_R" in tr or "k_Omega" in tr:
            if not ("k_R" in tr and "k_Omega" in tr) or "match" in tr:
                raise ConfigError("[gains.tau_g] needs both k_R and k_Omega, without match")
            geo = GainsGeometric(_matrix(tr["k_R"], "k_R"), _matrix(tr["k_Omega"], "k_Omega"))
        else:
            match = canonical_name(tr.get("match", "tau_gamma"))
            if match == "tau_gamma":
                geo = GainsGeometric.matched_axis_angle(axang, gamma, inertia)
            elif match == "tau_b":
                geo = GainsGeometric.matched(quat, inertia)
            else:
                raise ConfigError("[gains.tau_g] match must be tau_gamma or tau_b")
        specs = {
            "tau_b": ControllerSpec("tau_b", quat, mps=mps_b),
            "tau_g": ControllerSpec("tau_g", geo, mps=False),
            "tau_gamma": ControllerSpec("tau_gamma", axang, gamma, mps=mps_g),
        }
        for name, s in specs.items():
            if validate or name != "tau_gamma":
                s.validate()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return specs


def _omega_grid(sweep: dict) -> tuple[float, ...]:
    if "omega_grid" in sweep:
        if any(k in sweep for k in ("omega_min", "omega_max", "omega_step")):
            raise ConfigError("give either omega_grid or omega_min/omega_max/omega_step")
        return tuple(float(c) for c in sweep["omega_grid"])
    lo = float(sweep.get("omega_min", -30.0))
    hi = float(sweep.get("omega_max", 30.0))
    step = float(sweep.get("omega_step", 0.6))
    if not step > 0 or hi < lo:
        raise ConfigError("need omega_step > 0 and omega_max >= omega_min")
    n = int(round((hi - lo) / step)) + 1
    if not math.isclose(lo + (n - 1) * step, hi, rel_tol=0, abs_tol=1e-9 * max(1.0, abs(hi))):
        raise ConfigError("omega range is not a whole number of steps")
    return tuple(float(c) for c in np.round(np.linspace(lo, hi, n), 10))


def build_config(data: dict | None = None, validate: bool = True) -> RunConfig:
    """Resolve a parsed TOML mapping against the defaults.

    With ``validate=False`` the axis-angle gains are not checked against
    their stability condition, so a certificate can report on them.
    """
    raw = dict(data or {})
    extra = set(raw) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(extra))}")
    data = _convert_degrees(raw)
    try:
        sim = SimConfig(**_take(data.get("sim", {}), "sim", {
            "step", "horizon", "stab_threshold", "effort_window", "log_decimation",
            "ts_mode", "early_stop"}))
        mps = MpsConfig(**_take(data.get("mps", {}), "mps",
                                {"horizon", "R", "Q", "prediction_step"}))
        inert = _take(data.get("inertia", {}), "inertia", {"J", "J_diag"})
        if "J" in inert and "J_diag" in inert:
            raise ConfigError("[inertia] takes J or J_diag, not both")
        if "J" in inert:
            inertia = InertiaParams(np.asarray(inert["J"], dtype=np.float64))
        else:
            inertia = InertiaParams.diag(*inert.get("J_diag", CRAZYFLIE_J_DIAG))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None

    gamma = _build_gamma(data.get("gamma", {}))
    controllers = _build_controllers(data.get("gains", {}), gamma, inertia, validate)

    sweep = _take(data.get("sweep", {}), "sweep", {
        "theta0_grid", "theta0_grid_deg", "omega_grid", "omega_min", "omega_max",
        "omega_step", "controllers", "workers", "out"})
    if "theta0_grid" in sweep and "theta0_grid_deg" in sweep:
        raise ConfigError("give theta0_grid or theta0_grid_deg, not both")
    theta0 = tuple(float(d) for d in sweep.get("theta0_grid", sweep.get(
        "theta0_grid_deg", DEFAULT_THETA0_GRID)))
    omega = _omega_grid(sweep)
    try:
        names = tuple(canonical_name(c) for c in sweep.get("controllers", CONTROLLER_NAMES))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    workers = int(sweep.get("workers", 1))
    if workers < 1:
        raise ConfigError("workers must be >= 1")

    episode = _take(dict(data.get("episode", {})), "episode",
                    {"controller", "theta0", "omega_mag", "axis"})
    seed = data.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an integer in [0, 2**64)")
    return RunConfig(seed=seed, sim=sim, mps=mps, inertia=inertia, controllers=controllers,
                     theta0_grid=theta0, omega_grid=omega, sweep_controllers=names,
                     workers=workers, out=str(sweep.get("out", "results")), episode=episode,
                     raw=raw)


def load_config(path=None, validate: bool = True) -> RunConfig:
    """Read and resolve a TOML file; ``None`` gives the defaults."""
    if path is None:
        return build_config({}, validate)
    try:
        with Path(path).open("rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    return build_config(data, validate)
