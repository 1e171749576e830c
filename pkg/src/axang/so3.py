"""Quaternion and rotation algebra.

Quaternions are float64 arrays ``[m, n1, n2, n3]`` (scalar first, Hamilton
product, right-handed).  A quaternion ``q`` describes the attitude of a frame
``B`` relative to ``I``; ``quat_to_rotmat(q)`` maps ``B`` coordinates to ``I``
coordinates.

The underscore-prefixed functions are numba kernels shared with the
closed-loop simulator.  The public wrappers coerce their inputs and return
fresh arrays.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
#: ``||n||`` below this is treated as a trivial rotation.
EPS_AXIS = 1e-9
#: Axis reported for a trivial rotation.
CONVENTION_AXIS = (0.0, 0.0, 1.0)
#: Largest representable angle strictly below 2*pi.
THETA_MAX_REPR = math.nextafter(TWO_PI, 0.0)


class AxisAngle(NamedTuple):
    """Unit axis ``u`` and angle ``theta`` in ``[0, 2*pi)``."""

    u: np.ndarray
    theta: float


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


@njit(cache=True)
def _qmul(a, b):
    return (a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0])


@njit(cache=True)
def _qconj(q):
    return (q[0], -q[1], -q[2], -q[3])


@njit(cache=True)
def _qnormalize(q):
    s = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return (q[0] / s, q[1] / s, q[2] / s, q[3] / s)


@njit(cache=True)
def _vec(q):
    return (q[1], q[2], q[3])


@njit(cache=True)
def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0])


@njit(cache=True)
def _dot3(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def _add3(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


@njit(cache=True)
def _sub3(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


@njit(cache=True)
def _scale3(c, a):
    return (c * a[0], c * a[1], c * a[2])


@njit(cache=True)
def _mv(M, v):
    """``M v`` for a row-major flattened 3x3 ``M``."""
    return (M[0] * v[0] + M[1] * v[1] + M[2] * v[2],
            M[3] * v[0] + M[4] * v[1] + M[5] * v[2],
            M[6] * v[0] + M[7] * v[1] + M[8] * v[2])


@njit(cache=True)
def _mtv(M, v):
    """``M^T v`` for a row-major flattened 3x3 ``M``."""
    return (M[0] * v[0] + M[3] * v[1] + M[6] * v[2],
            M[1] * v[0] + M[4] * v[1] + M[7] * v[2],
            M[2] * v[0] + M[5] * v[1] + M[8] * v[2])


@njit(cache=True)
def _rotmat(q):
    """Row-major flattened rotation matrix of a unit quaternion."""
    m, x, y, z = q[0], q[1], q[2], q[3]
    return (1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - m * z), 2.0 * (x * z + m * y),
            2.0 * (x * y + m * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - m * x),
            2.0 * (x * z - m * y), 2.0 * (y * z + m * x), 1.0 - 2.0 * (x * x + y * y))


@njit(cache=True)
def _axis_angle(q):
    """Return ``(u, theta)`` with ``theta = 2 atan2(|n|, m)`` in ``[0, 2pi)``."""
    s = math.sqrt(q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    theta = 2.0 * math.atan2(s, q[0])
    if theta >= TWO_PI:
        theta = THETA_MAX_REPR
    if s > EPS_AXIS:
        return (q[1] / s, q[2] / s, q[3] / s), theta
    return CONVENTION_AXIS, theta


@njit(cache=True)
def _from_axis_angle(u, theta):
    s = math.sin(0.5 * theta)
    return (math.cos(0.5 * theta), u[0] * s, u[1] * s, u[2] * s)


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def _as_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have shape (4,), got {q.shape}")
    return q


def _as_vec3(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"vector must have shape (3,), got {v.shape}")
    return v


def identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q) -> np.ndarray:
    return np.array(_qnormalize(_as_quat(q)))


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product ``a ⊗ b``, renormalized to unit length."""
    return np.array(_qnormalize(_qmul(_as_quat(a), _as_quat(b))))


def quat_mul_raw(a, b) -> np.ndarray:
    """Hamilton product without renormalization (for non-unit operands)."""
    return np.array(_qmul(_as_quat(a), _as_quat(b)))


def quat_inv(q) -> np.ndarray:
    """Inverse of a unit quaternion, i.e. its conjugate ``(m, -n)``."""
    return np.array(_qconj(_as_quat(q)))


def error_quaternion(q, q_d) -> np.ndarray:
    """Attitude-error quaternion ``q^-1 ⊗ q_d``.

    The result rotates the current body frame onto the desired one, so that
    ``quat_mul(q, error_quaternion(q, q_d))`` recovers ``q_d``.  No sign
    canonicalization is applied.
    """
    return quat_mul(quat_inv(q), q_d)


def to_axis_angle(q) -> AxisAngle:
    """Extract the Euler axis and angle of a unit quaternion.

    ``theta = 2 atan2(||n||, m)`` lies in ``[0, 2*pi)``; ``q = [-1, 0, 0, 0]``
    maps to the largest float below ``2*pi``.  When ``||n|| <= EPS_AXIS`` the
    axis is ``CONVENTION_AXIS``.
    """
    u, theta = _axis_angle(_as_quat(q))
    return AxisAngle(np.array(u), float(theta))


def from_axis_angle(u, theta: float) -> np.ndarray:
    """Unit quaternion ``[cos(theta/2), u sin(theta/2)]``."""
    u = _as_vec3(u)
    return np.array(_qnormalize(_from_axis_angle(u / np.linalg.norm(u), float(theta))))


def quat_to_rotmat(q) -> np.ndarray:
    """Rotation matrix ``S`` with ``S v == q ⊗ [0, v] ⊗ q^-1``."""
    return np.array(_rotmat(_as_quat(q))).reshape(3, 3)


def rotate(q, v) -> np.ndarray:
    """Rotate ``v`` by conjugation with ``q``."""
    q = _as_quat(q)
    p = np.concatenate(([0.0], _as_vec3(v)))
    return np.array(_qmul(_qmul(q, p), _qconj(q))[1:])


def skew(v) -> np.ndarray:
    x, y, z = _as_vec3(v)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(M) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


def sample_unit_sphere(rng: np.random.Generator) -> np.ndarray:
    """Draw a direction uniformly from the unit sphere.

    Normalizes three independent standard normals, so the draw consumes
    exactly three normals from ``rng`` (barring a measure-zero redraw).
    """
    while True:
        v = rng.standard_normal(3)
        s = np.linalg.norm(v)
        if s > 1e-12:
            return v / s
