"""Fixed-step Dormand-Prince 5(4) integration of the rotational dynamics.

Two entry points share one Butcher tableau:

* :func:`dp_step` advances a :class:`BodyState` by one step with an arbitrary
  Python torque provider.
* :func:`simulate` runs a whole closed loop inside a compiled kernel; the
  reference is passed as a table of samples at every stage time (or a single
  row when it is constant).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .controllers import LAW_GEOMETRIC, _torque
from .dynamics import BodyState, InertiaParams, Reference, _rigid_body_rhs
from .so3 import TWO_PI, _axis_angle, _qconj, _qmul, _qnormalize

# Dormand & Prince (1980), 7 stages, FSAL.
DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0, 0.0],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0],
])
DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                  -92097 / 339200, 187 / 2100, 1 / 40])

STATUS_OK = 0
STATUS_NONFINITE = 1


class IntegrationFault(RuntimeError):
    """The state became non-finite during integration."""


# --------------------------------------------------------------------------
# Python stepper
# --------------------------------------------------------------------------


def _dp_stages(x, f, t, dt):
    k = np.zeros((7, x.size))
    for i in range(7):
        xi = x + dt * (DP_A[i, :i] @ k[:i])
        k[i] = f(t + DP_C[i] * dt, xi)
    return k


def dp_step_pair(s: BodyState, torque_provider, inertia: InertiaParams, dt: float,
                 t: float = 0.0) -> tuple[BodyState, BodyState]:
    """One step returning the 5th- and embedded 4th-order solutions."""
    if not dt > 0:
        raise ValueError("dt must be positive")

    def f(ti, xi):
        q, w = xi[:4], xi[4:]
        tau = np.asarray(torque_provider(ti, q, w), dtype=np.float64)
        q_dot, w_dot = _rigid_body_rhs(q, w, tau, inertia.J_flat, inertia.J_inv_flat)
        return np.array(q_dot + w_dot)

    x = s.as_array()
    k = _dp_stages(x, f, t, dt)
    out = []
    for b in (DP_B5, DP_B4):
        xn = x + dt * (b @ k)
        if not np.all(np.isfinite(xn)):
            raise IntegrationFault(f"non-finite state after step at t={t:.6g}")
        xn[:4] /= np.linalg.norm(xn[:4])
        out.append(BodyState.from_array(xn))
    return out[0], out[1]


def dp_step(s: BodyState, torque_provider, inertia: InertiaParams, dt: float,
            t: float = 0.0) -> BodyState:
    """Advance ``s`` by ``dt`` with the 5th-order Dormand-Prince solution.

    ``torque_provider(t, q, omega)`` is evaluated at every stage.  The
    quaternion is renormalized after the step.

    Raises
    ------
    IntegrationFault
        If the new state is not finite.
    """
    return dp_step_pair(s, torque_provider, inertia, dt, t)[0]


# --------------------------------------------------------------------------
# compiled closed loop
# --------------------------------------------------------------------------


@njit(cache=True)
def _rhs_into(law, p, sigma, x, ref, J, J_inv, k, row):
    """Write the closed-loop state derivative into ``k[row]``; return the torque."""
    q = (x[0], x[1], x[2], x[3])
    w = (x[4], x[5], x[6])
    tau = _torque(law, p, sigma, q, w, ref, J)
    q_dot, w_dot = _rigid_body_rhs(q, w, tau, J, J_inv)
    for i in range(4):
        k[row, i] = q_dot[i]
    for i in range(3):
        k[row, 4 + i] = w_dot[i]
    return tau


@njit(cache=True)
def _rotation_angle(q_e):
    """Physical rotation error in ``[0, pi]``, independent of the quaternion sign."""
    s = math.sqrt(q_e[1] * q_e[1] + q_e[2] * q_e[2] + q_e[3] * q_e[3])
    return 2.0 * math.atan2(s, abs(q_e[0]))


@njit(cache=True)
def _error_angle(law, sigma, q, q_d):
    """Error angle tracked by the law: sigma-effective for the quaternion-based
    laws, the sign-free rotation angle for the geometric law."""
    q_e = _qmul(_qconj(_qnormalize(q)), (q_d[0], q_d[1], q_d[2], q_d[3]))
    if law == LAW_GEOMETRIC:
        return _rotation_angle(q_e), q_e
    _, theta = _axis_angle(q_e)
    if sigma < 0:
        return TWO_PI - theta, q_e
    return theta, q_e


@njit(cache=True)
def _simulate(law, p, sigma, x0, ref_tab, h, n_steps, J, J_inv, decim,
              stop_theta, stop_time):
    const = ref_tab.shape[0] == 1
    theta = np.full(n_steps + 1, np.nan)
    tau_hist = np.full((n_steps + 1, 3), np.nan)
    ne_hist = np.full((n_steps + 1, 3), np.nan)
    n_log = n_steps // decim + 1
    x_log = np.full((n_log, 7), np.nan)

    x = x0.copy()
    qn = _qnormalize(x)
    for i in range(4):
        x[i] = qn[i]
    xi = np.empty(7)
    k = np.zeros((7, 7))
    crossed = False
    status = STATUS_OK
    n_done = 0
    for n in range(n_steps + 1):
        r0 = ref_tab[0, 0] if const else ref_tab[min(n, ref_tab.shape[0] - 1), 0]
        tau = _rhs_into(law, p, sigma, x, r0, J, J_inv, k, 0)
        q_e = _qmul(_qconj(_qnormalize(x)), (r0[0], r0[1], r0[2], r0[3]))
        ph = _rotation_angle(q_e)
        theta[n] = ph
        for i in range(3):
            tau_hist[n, i] = tau[i]
            ne_hist[n, i] = q_e[1 + i]
        if n % decim == 0:
            x_log[n // decim] = x
        n_done = n
        if ph < stop_theta:
            crossed = True
        if n == n_steps or (crossed and n * h >= stop_time):
            break
        for i in range(1, 7):
            for m in range(7):
                acc = x[m]
                for j in range(i):
                    acc += h * DP_A[i, j] * k[j, m]
                xi[m] = acc
            ri = ref_tab[0, 0] if const else ref_tab[n, i]
            _rhs_into(law, p, sigma, xi, ri, J, J_inv, k, i)
        finite = True
        for m in range(7):
            acc = x[m]
            for i in range(7):
                acc += h * DP_B5[i] * k[i, m]
            xi[m] = acc
            if not math.isfinite(acc):
                finite = False
        if not finite:
            status = STATUS_NONFINITE
            break
        qn = _qnormalize(xi)
        for i in range(4):
            x[i] = qn[i]
        for i in range(4, 7):
            x[i] = xi[i]
    return status, n_done, theta, tau_hist, ne_hist, x_log


@dataclass
class RawRun:
    """Output of :func:`simulate`; arrays cover nodes ``0..n_done``.

    ``theta`` is the sign-free rotation error, ``n_e`` the vector part of the
    unsigned error quaternion and ``tau`` the applied torque at each node.
    """

    status: int
    step: float
    n_done: int
    theta: np.ndarray
    tau: np.ndarray
    n_e: np.ndarray
    x_log: np.ndarray
    decimation: int

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n_done + 1) * self.step

    @property
    def t_log(self) -> np.ndarray:
        return np.arange(self.x_log.shape[0]) * self.step * self.decimation


def reference_table(reference: Reference, n_steps: int, h: float, t0: float = 0.0) -> np.ndarray:
    if reference.is_constant:
        return reference.packed(t0).reshape(1, 1, 10)
    times = t0 + (np.arange(n_steps + 1)[:, None] + DP_C[None, :]) * h
    return reference.tabulate(times)


def simulate(law: int, params: np.ndarray, sigma: int, x0: np.ndarray, reference: Reference,
             inertia: InertiaParams, h: float, n_steps: int, decimation: int = 1,
             stop_theta: float = -1.0, stop_time: float = math.inf, t0: float = 0.0) -> RawRun:
    """Integrate the closed loop for ``n_steps`` fixed steps of size ``h``.

    When ``stop_time`` is finite, the run ends at the first node at or after
    ``stop_time`` once the rotation error has dropped below ``stop_theta``.
    """
    ref_tab = reference_table(reference, n_steps, h, t0)
    status, n_done, theta, tau, n_e, x_log = _simulate(
        law, params, float(sigma), np.asarray(x0, dtype=np.float64), ref_tab, float(h),
        int(n_steps), inertia.J_flat, inertia.J_inv_flat, int(decimation), float(stop_theta),
        float(stop_time))
    n_log = n_done // decimation + 1
    return RawRun(int(status), float(h), int(n_done), theta[: n_done + 1], tau[: n_done + 1],
                  n_e[: n_done + 1], x_log[:n_log], int(decimation))
