"""Closed-loop episodes, performance metrics and Lyapunov monitoring."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .controllers import (
    LAW_AXIS_ANGLE,
    ControllerSpec,
    GainsAxisAngle,
    GammaFunction,
    _gamma,
    _gamma_int,
    _sigma_axis_angle,
    _torque,
)
from .dynamics import BodyState, ConstantReference, InertiaParams, Reference
from .integrator import _error_angle, simulate
from .mps import DivergentPrediction, MpsConfig, select_sigma
from .so3 import _as_quat, _as_vec3, _dot3, _mv, _qconj, _qmul, _rotmat, _sub3

TS_MODES = ("first", "settle")

TRAJECTORY_COLUMNS = (
    "t", "theta_e_deg", "n_e_norm", "alpha_e_norm",
    "omega_1", "omega_2", "omega_3", "tau_1", "tau_2", "tau_3", "V", "Vdot",
)


@dataclass(frozen=True)
class SimConfig:
    """Integration and metric settings.

    ``t_s`` is measured on the physical rotation error ``2 atan2(|n_e|, |m_e|)``
    in ``[0, pi]``.  ``ts_mode="first"`` reports the first time it drops below
    ``stab_threshold``; ``"settle"`` reports the last downward crossing and
    requires the angle to stay below the threshold until the horizon.
    ``early_stop`` ends a run once both the crossing and ``effort_window`` are
    behind it, which leaves ``t_s`` and ``Lambda`` unchanged in ``"first"``
    mode.
    """

    step: float = 1e-4
    horizon: float = 3.0
    stab_threshold: float = math.radians(15.0)
    effort_window: float = 1.0
    log_decimation: int = 10
    ts_mode: str = "first"
    early_stop: bool = False

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.horizon >= self.effort_window > 0:
            raise ValueError("need horizon >= effort_window > 0")
        if not 0 < self.stab_threshold < math.pi:
            raise ValueError("stabilization threshold must lie in (0, pi)")
        if int(self.log_decimation) < 1:
            raise ValueError("log_decimation must be >= 1")
        if self.ts_mode not in TS_MODES:
            raise ValueError(f"ts_mode must be one of {TS_MODES}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.step))


@dataclass
class Trajectory:
    """Decimated episode log.

    ``theta_e`` is the error angle the law regulates: ``Phi_e`` in
    ``[0, 2 pi)`` for the quaternion and axis-angle laws (so a long-path start
    shows above 180 deg) and the sign-free angle for the geometric law.
    """

    t: np.ndarray
    theta_e: np.ndarray
    n_e_norm: np.ndarray
    alpha_e_norm: np.ndarray
    omega: np.ndarray
    tau: np.ndarray
    V: np.ndarray
    Vdot: np.ndarray

    def rows(self):
        for k in range(self.t.size):
            yield (self.t[k], math.degrees(self.theta_e[k]), self.n_e_norm[k],
                   self.alpha_e_norm[k], *self.omega[k], *self.tau[k], self.V[k],
                   self.Vdot[k])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_COLUMNS)
            for row in self.rows():
                w.writerow([repr(float(v)) for v in row])


def read_trajectory_csv(path) -> Trajectory:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return Trajectory(
        t=data["t"],
        theta_e=np.radians(data["theta_e_deg"]),
        n_e_norm=data["n_e_norm"],
        alpha_e_norm=data["alpha_e_norm"],
        omega=np.column_stack([data[f"omega_{i}"] for i in (1, 2, 3)]),
        tau=np.column_stack([data[f"tau_{i}"] for i in (1, 2, 3)]),
        V=data["V"],
        Vdot=data["Vdot"],
    )


@dataclass
class EpisodeResult:
    controller: str
    t_s: float | None
    Lambda: float
    sigma: int | None
    failed: bool = False
    message: str = ""
    mps_costs: tuple[float, float] | None = None
    trajectory: Trajectory | None = field(default=None, repr=False)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


def stabilization_time(t, theta, threshold: float, mode: str = "first") -> float | None:
    """Time at which ``theta`` drops below ``threshold``.

    Crossings are located by linear interpolation between the bracketing
    samples.  Returns ``None`` if the criterion is never met.
    """
    t = np.asarray(t, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    below = theta < threshold
    if mode == "first":
        if not below.any():
            return None
        k = int(np.argmax(below))
    elif mode == "settle":
        if not below[-1]:
            return None
        above = np.flatnonzero(~below)
        if above.size == 0:
            return 0.0
        k = int(above[-1]) + 1
    else:
        raise ValueError(f"unknown ts mode {mode!r}")
    if k == 0:
        return 0.0
    a, b = theta[k - 1], theta[k]
    frac = (a - threshold) / (a - b)
    return float(t[k - 1] + frac * (t[k] - t[k - 1]))


def control_effort(tau, step: float, window: float) -> float:
    """Trapezoidal ``∫_0^window ||tau(t)||_2 dt`` from samples spaced ``step`` apart."""
    n = int(round(window / step))
    tau = np.asarray(tau, dtype=np.float64)
    if tau.shape[0] < n + 1:
        return math.nan
    return float(np.trapezoid(np.linalg.norm(tau[: n + 1], axis=1), dx=step))


# --------------------------------------------------------------------------
# Lyapunov function
# --------------------------------------------------------------------------


def _lyap_terms(q_e, omega_e, gamma: GammaFunction, sigma: int):
    u, phi = _sigma_axis_angle(_as_quat(q_e), float(sigma))
    g = float(gamma(phi))
    return g, float(np.dot(np.array(u), _as_vec3(omega_e))), phi


def lyapunov_V(q_e, omega_e, gains: GainsAxisAngle, gamma: GammaFunction,
               sigma: int = 1) -> float:
    """Lyapunov function of the axis-angle closed loop.

    ``V = k_d^2/(2 k_a) g^2 + k_d/k_a g (u.w_e) + 1/(2 k_a) |w_e|^2 + ∫_0^phi gamma``
    with ``g = gamma(phi)`` on the ``sigma``-selected axis-angle pair.
    """
    g, uw, phi = _lyap_terms(q_e, omega_e, gamma, sigma)
    ka, kd = gains.k_alpha, gains.k_delta
    ww = float(np.dot(omega_e, omega_e))
    return (kd * kd / (2 * ka) * g * g + kd / ka * g * uw + ww / (2 * ka)
            + gamma.integral(phi))


def lyapunov_Vdot(q_e, omega_e, gains: GainsAxisAngle, gamma: GammaFunction,
                  sigma: int = 1) -> float:
    """``-[g u; w_e]^T W [g u; w_e]`` with ``W`` from :func:`check_gains_axis_angle`."""
    g, uw, _ = _lyap_terms(q_e, omega_e, gamma, sigma)
    ka, kd, kw = gains.k_alpha, gains.k_delta, gains.k_omega
    ww = float(np.dot(omega_e, omega_e))
    return -(kd * g * g + kd * kw / ka * g * uw + kw / ka * ww)


@njit(cache=True)
def _diagnostics(law, p, sigma, x_log, ref_rows, J):
    n = x_log.shape[0]
    out = np.full((n, 9), np.nan)
    for k in range(n):
        r = ref_rows[0] if ref_rows.shape[0] == 1 else ref_rows[k]
        q = x_log[k, 0:4]
        w = x_log[k, 4:7]
        if not math.isfinite(q[0]):
            continue
        phi, q_e = _error_angle(law, sigma, q, r)
        out[k, 0] = phi
        out[k, 1] = math.sqrt(q_e[1] ** 2 + q_e[2] ** 2 + q_e[3] ** 2)
        tau = _torque(law, p, sigma, q, w, r, J)
        for i in range(3):
            out[k, 2 + i] = w[i]
            out[k, 5 + i] = tau[i]
        if law == LAW_AXIS_ANGLE:
            out[k, 8] = abs(_gamma(int(p[3]), p[4], p[5], phi))
    return out


@njit(cache=True)
def _lyap_series(p, sigma, x_log, ref_rows):
    n = x_log.shape[0]
    out = np.full((n, 2), np.nan)
    kind, a, b = int(p[3]), p[4], p[5]
    ka, kd, kw = p[0], p[1], p[2]
    for k in range(n):
        r = ref_rows[0] if ref_rows.shape[0] == 1 else ref_rows[k]
        q = x_log[k, 0:4]
        if not math.isfinite(q[0]):
            continue
        w = x_log[k, 4:7]
        q_e = _qmul(_qconj(q), (r[0], r[1], r[2], r[3]))
        w_e = _sub3(_mv(_rotmat(q_e), (r[4], r[5], r[6])), w)
        u, ph = _sigma_axis_angle(q_e, sigma)
        g = _gamma(kind, a, b, ph)
        uw = _dot3(u, w_e)
        ww = _dot3(w_e, w_e)
        out[k, 0] = (kd * kd / (2 * ka) * g * g + kd / ka * g * uw + ww / (2 * ka)
                     + _gamma_int(kind, a, b, ph))
        out[k, 1] = -(kd * g * g + kd * kw / ka * g * uw + kw / ka * ww)
    return out


def lyapunov_series(controller: ControllerSpec, sigma: int, x_log, ref_rows) -> np.ndarray:
    """``(V, Vdot)`` for each logged state of an axis-angle closed loop."""
    return _lyap_series(controller.packed(), float(sigma), np.asarray(x_log),
                        np.asarray(ref_rows))


# --------------------------------------------------------------------------
# episodes
# --------------------------------------------------------------------------


def _log_reference_rows(reference: Reference, t_log: np.ndarray) -> np.ndarray:
    if reference.is_constant:
        return reference.packed(0.0).reshape(1, 10)
    return reference.tabulate(t_log)


def build_trajectory(controller: ControllerSpec, sigma: int, run, reference: Reference,
                     inertia: InertiaParams) -> Trajectory:
    t_log = run.t_log
    rows = _log_reference_rows(reference, t_log)
    p = controller.packed()
    d = _diagnostics(controller.law, p, float(sigma), run.x_log, rows, inertia.J_flat)
    if controller.law == LAW_AXIS_ANGLE:
        lv = _lyap_series(p, float(sigma), run.x_log, rows)
    else:
        lv = np.full((t_log.size, 2), np.nan)
    return Trajectory(t=t_log, theta_e=d[:, 0], n_e_norm=d[:, 1], alpha_e_norm=d[:, 8],
                      omega=d[:, 2:5], tau=d[:, 5:8], V=lv[:, 0], Vdot=lv[:, 1])


def run_episode(q0, omega0, controller: ControllerSpec, sim_cfg: SimConfig | None = None,
                mps_cfg: MpsConfig | None = None, inertia: InertiaParams | None = None,
                reference: Reference | None = None, sigma: int | None = None,
                keep_trajectory: bool = True) -> EpisodeResult:
    """Simulate one closed-loop episode from ``(q0, omega0)``.

    ``sigma`` is chosen by model-predictive selection when the controller
    enables it and ``mps_cfg`` is given, unless passed explicitly.  A
    non-finite state marks the episode as failed instead of raising.

    Raises
    ------
    ValueError
        If the controller gains fail their stability condition.
    """
    sim_cfg = sim_cfg or SimConfig()
    inertia = inertia or InertiaParams.crazyflie()
    reference = reference or ConstantReference()
    controller.validate()
    s0 = BodyState(q0, omega0)
    s0.q = s0.q / np.linalg.norm(s0.q)

    costs = None
    if controller.kind == "tau_g":
        sigma_used = 1
    elif sigma is not None:
        sigma_used = int(sigma)
    elif controller.mps and mps_cfg is not None:
        try:
            sigma_used, costs = select_sigma(s0, reference, controller, inertia, mps_cfg,
                                             return_costs=True)
        except DivergentPrediction as exc:
            return EpisodeResult(controller.label, None, math.nan, None, True, str(exc))
    else:
        sigma_used = 1
    if sigma_used not in (-1, 1):
        raise ValueError("sigma must be +1 or -1")

    early = sim_cfg.early_stop and sim_cfg.ts_mode == "first"
    run = simulate(controller.law, controller.packed(), sigma_used, s0.as_array(), reference,
                   inertia, sim_cfg.step, sim_cfg.n_steps, sim_cfg.log_decimation,
                   stop_theta=sim_cfg.stab_threshold,
                   stop_time=sim_cfg.effort_window if early else math.inf)
    sigma_out = None if controller.kind == "tau_g" else sigma_used
    traj = build_trajectory(controller, sigma_used, run, reference, inertia) \
        if keep_trajectory else None
    if not run.ok:
        return EpisodeResult(controller.label, None, math.nan, sigma_out, True,
                             f"non-finite state at t={run.n_done * run.step:.6g}",
                             costs, traj)
    t_s = stabilization_time(run.t, run.theta, sim_cfg.stab_threshold, sim_cfg.ts_mode)
    lam = control_effort(run.tau, sim_cfg.step, sim_cfg.effort_window)
    return EpisodeResult(controller.label, t_s, lam, sigma_out, False, "", costs, traj)
