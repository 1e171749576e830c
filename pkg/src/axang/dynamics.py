"""Rigid-body rotational dynamics and reference kinematics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .so3 import (
    _as_quat,
    _as_vec3,
    _cross,
    _mv,
    _qconj,
    _qmul,
    _qnormalize,
    _rotmat,
    _sub3,
    from_axis_angle,
    identity,
    quat_inv,
    quat_to_rotmat,
)

#: Crazyflie 2.1 principal inertias, kg m^2.
CRAZYFLIE_J_DIAG = (16.6e-6, 16.7e-6, 29.3e-6)


@dataclass(frozen=True)
class InertiaParams:
    """Symmetric positive-definite inertia matrix in body coordinates."""

    J: np.ndarray
    J_inv: np.ndarray = field(init=False, repr=False, compare=False)
    #: Row-major flattened copies consumed by the compiled kernels.
    J_flat: np.ndarray = field(init=False, repr=False, compare=False)
    J_inv_flat: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        J = np.array(self.J, dtype=np.float64)
        if J.shape != (3, 3):
            raise ValueError(f"inertia must be 3x3, got {J.shape}")
        if not np.allclose(J, J.T, rtol=0.0, atol=1e-12):
            raise ValueError("inertia matrix is not symmetric")
        if np.linalg.eigvalsh(J).min() <= 0.0:
            raise ValueError("inertia matrix is not positive definite")
        J.setflags(write=False)
        J_inv = np.linalg.inv(J)
        J_inv.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "J_inv", J_inv)
        object.__setattr__(self, "J_flat", np.ascontiguousarray(J.ravel()))
        object.__setattr__(self, "J_inv_flat", np.ascontiguousarray(J_inv.ravel()))

    @classmethod
    def diag(cls, j1: float, j2: float, j3: float) -> "InertiaParams":
        return cls(np.diag([j1, j2, j3]))

    @classmethod
    def crazyflie(cls) -> "InertiaParams":
        return cls.diag(*CRAZYFLIE_J_DIAG)


@dataclass
class BodyState:
    """Attitude ``q`` of the body relative to inertial, and body rate ``omega``."""

    q: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.q = _as_quat(self.q).copy()
        self.omega = _as_vec3(self.omega).copy()

    def as_array(self) -> np.ndarray:
        return np.concatenate((self.q, self.omega))

    @classmethod
    def from_array(cls, x) -> "BodyState":
        x = np.asarray(x, dtype=np.float64)
        return cls(x[:4], x[4:7])


class Reference:
    """Time-indexed attitude reference.

    Subclasses implement :meth:`sample`, returning the desired attitude
    ``q_d``, the desired rate ``omega_hat_d`` written in desired-frame
    coordinates, and its time derivative.  Derivatives must be supplied
    analytically.
    """

    #: True when ``sample`` does not depend on ``t``.
    is_constant = False

    def sample(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def packed(self, t: float) -> np.ndarray:
        q_d, w_hat, w_hat_dot = self.sample(t)
        return np.concatenate((q_d, w_hat, w_hat_dot))

    def tabulate(self, times) -> np.ndarray:
        """Packed samples ``[q_d, omega_hat_d, omega_hat_d_dot]`` at ``times``."""
        times = np.asarray(times, dtype=np.float64)
        out = np.empty(times.shape + (10,))
        for idx in np.ndindex(times.shape):
            out[idx] = self.packed(float(times[idx]))
        return out


class ConstantReference(Reference):
    """Fixed set-point with zero desired rate."""

    is_constant = True

    def __init__(self, q_d=None):
        self.q_d = identity() if q_d is None else np.array(_qnormalize(_as_quat(q_d)))

    def sample(self, t):
        return self.q_d.copy(), np.zeros(3), np.zeros(3)


class SpinReference(Reference):
    """Constant-rate rotation about a fixed axis: ``q_d(t) = q0 ⊗ aa(u, rate*t)``.

    The desired rate in desired-frame coordinates is ``rate * u`` and constant.
    """

    def __init__(self, axis, rate: float, q0=None):
        axis = _as_vec3(axis)
        self.axis = axis / np.linalg.norm(axis)
        self.rate = float(rate)
        self.q0 = identity() if q0 is None else np.array(_qnormalize(_as_quat(q0)))

    def sample(self, t):
        q_d = np.array(_qnormalize(_qmul(self.q0, from_axis_angle(self.axis, self.rate * t))))
        return q_d, self.rate * self.axis, np.zeros(3)

    def q_d_dot(self, t) -> np.ndarray:
        q_d = self.sample(t)[0]
        return 0.5 * np.array(_qmul(q_d, np.concatenate(([0.0], self.rate * self.axis))))


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


@njit(cache=True)
def _rigid_body_rhs(q, w, tau, J, J_inv):
    """``J``, ``J_inv`` are row-major flattened."""
    m, x, y, z = q[0], q[1], q[2], q[3]
    q_dot = (0.5 * (-x * w[0] - y * w[1] - z * w[2]),
             0.5 * (m * w[0] + y * w[2] - z * w[1]),
             0.5 * (m * w[1] - x * w[2] + z * w[0]),
             0.5 * (m * w[2] + x * w[1] - y * w[0]))
    w_dot = _mv(J_inv, _sub3(tau, _cross(w, _mv(J, w))))
    return q_dot, w_dot


@njit(cache=True)
def _body_reference(q, w, q_d, w_hat_d, w_hat_d_dot):
    """Desired rate and its derivative in body coordinates.

    ``omega_d = S^T S_d w_hat_d``; differentiating with the error kinematics
    gives ``omega_d_dot = S^T S_d w_hat_d_dot - omega x omega_d``.
    """
    R_e = _rotmat(_qmul(_qconj(q), q_d))
    w_d = _mv(R_e, w_hat_d)
    w_d_dot = _sub3(_mv(R_e, w_hat_d_dot), _cross(w, w_d))
    return w_d, w_d_dot


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def state_derivative(s: BodyState, tau, inertia: InertiaParams):
    """Open-loop rates ``(q_dot, omega_dot)``.

    ``q_dot = 0.5 q ⊗ [0, omega]`` and ``omega_dot = J^-1 (tau - omega x J omega)``.
    """
    q_dot, w_dot = _rigid_body_rhs(s.q, s.omega, _as_vec3(tau), inertia.J_flat,
                                   inertia.J_inv_flat)
    return np.array(q_dot), np.array(w_dot)


def desired_omega_from_qd(q_d, q_d_dot, tol: float = 1e-6) -> np.ndarray:
    """Desired rate in desired-frame coordinates from ``2 q_d^-1 ⊗ q_d_dot``.

    Raises
    ------
    ValueError
        If the scalar part of the product exceeds ``tol``, which means
        ``q_d_dot`` is not tangent to the unit sphere at ``q_d``.
    """
    p = 2.0 * np.array(_qmul(quat_inv(q_d), _as_quat(q_d_dot)))
    if abs(p[0]) > tol:
        raise ValueError(f"q_d_dot inconsistent with unit q_d (scalar part {p[0]:.3e})")
    return p[1:].copy()


def transform_desired_omega(omega_hat_d, q, q_d) -> np.ndarray:
    """Express the desired rate in body coordinates: ``S(q)^T S(q_d) omega_hat_d``."""
    return quat_to_rotmat(q).T @ quat_to_rotmat(q_d) @ _as_vec3(omega_hat_d)


def body_reference(s: BodyState, reference: Reference, t: float = 0.0):
    """Return ``(omega_d, omega_d_dot)`` in body coordinates at time ``t``."""
    q_d, w_hat, w_hat_dot = reference.sample(t)
    w_d, w_d_dot = _body_reference(s.q, s.omega, q_d, w_hat, w_hat_dot)
    return np.array(w_d), np.array(w_d_dot)


def kinetic_energy(omega, inertia: InertiaParams) -> float:
    omega = _as_vec3(omega)
    return 0.5 * float(omega @ inertia.J @ omega)


def inertial_momentum(s: BodyState, inertia: InertiaParams) -> np.ndarray:
    """Angular momentum ``S J omega`` in inertial coordinates."""
    return quat_to_rotmat(s.q) @ inertia.J @ s.omega
