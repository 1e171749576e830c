"""Attitude torque laws and their supporting pieces.

Three laws are provided:

``tau_b``
    Quaternion proportional-derivative law with feedback linearization,
    ``J (k_q sigma n_e + k_omega omega_e + omega_d_dot) + omega x J omega``.
``tau_gamma``
    Axis-angle law built on a shaping function ``gamma`` applied to the error
    angle, with the scaled axis ``alpha_e = gamma(Phi_e) u_e`` and its rate.
``tau_g``
    Geometric SO(3) tracking law.

``sigma`` selects the quaternion representative of the attitude error:
``+1`` keeps ``q_e`` (the short path when ``m_e > 0``), ``-1`` uses ``-q_e``.
For the axis-angle law this turns ``(u_e, Theta_e)`` into
``(-u_e, 2 pi - Theta_e)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dynamics import BodyState, InertiaParams, Reference
from .so3 import (
    TWO_PI,
    _as_quat,
    _as_vec3,
    _axis_angle,
    _cross,
    _dot3,
    _add3,
    _mv,
    _qconj,
    _qmul,
    _qnormalize,
    _rotmat,
    _scale3,
    _sub3,
    _vec,
)

LAW_QUATERNION = 0
LAW_GEOMETRIC = 1
LAW_AXIS_ANGLE = 2

GAMMA_SIGMOID = 0
GAMMA_LINEAR = 1

#: Half-width of the band around Theta_e in {0, 2 pi} where the axis rate is
#: not evaluated from its closed form.
EPS_THETA = 1e-6

#: Length of the packed parameter vector handed to the kernels.
N_PARAMS = 18

CONTROLLER_NAMES = ("tau_b", "tau_g", "tau_gamma")
_ALIASES = {
    "tau_b": "tau_b",
    "quaternion": "tau_b",
    "tau_g": "tau_g",
    "geometric": "tau_g",
    "tau_gamma": "tau_gamma",
    "axis_angle": "tau_gamma",
}


# --------------------------------------------------------------------------
# shaping functions
# --------------------------------------------------------------------------


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-13, panels: int = 64,
                     max_depth: int = 40) -> float:
    """Integrate ``f`` over ``[a, b]`` with adaptive Simpson refinement.

    The interval is first split into ``panels`` equal pieces; each piece is
    bisected until the Richardson error estimate is below its share of
    ``tol``.
    """
    if a == b:
        return 0.0

    def simpson(fa, fm, fb, h):
        return h / 6.0 * (fa + 4.0 * fm + fb)

    def refine(lo, hi, flo, fmid, fhi, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = simpson(flo, flm, fmid, mid - lo)
        right = simpson(fmid, frm, fhi, hi - mid)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * eps:
            return left + right + delta / 15.0
        return (refine(lo, mid, flo, flm, fmid, left, 0.5 * eps, depth - 1)
                + refine(mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth - 1))

    edges = np.linspace(a, b, panels + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        lo, hi = float(lo), float(hi)
        mid = 0.5 * (lo + hi)
        flo, fmid, fhi = f(lo), f(mid), f(hi)
        whole = simpson(flo, fmid, fhi, hi - lo)
        total += refine(lo, hi, flo, fmid, fhi, whole, tol / panels, max_depth)
    return total


class GammaFunction:
    """Extended class-K-infinity shaping function of the error angle.

    Subclasses supply ``__call__`` and ``deriv``.  The antiderivative
    defaults to adaptive Simpson quadrature; subclasses may override it with
    a closed form.  Only subclasses with a ``kernel_id`` can drive the
    compiled simulator.
    """

    kernel_id: int | None = None

    def __call__(self, theta):
        raise NotImplementedError

    def deriv(self, theta):
        raise NotImplementedError

    def integral(self, theta: float) -> float:
        """``∫_0^theta gamma(phi) dphi``."""
        return adaptive_simpson(lambda x: float(self(x)), 0.0, float(theta))

    def kernel_params(self) -> tuple[int, float, float]:
        raise TypeError(f"{type(self).__name__} has no compiled kernel")


@dataclass(frozen=True)
class SigmoidGamma(GammaFunction):
    """``theta_max (1 - e^{-xi theta/theta_max}) / (1 + e^{-xi theta/theta_max})``.

    Saturates at ``±theta_max`` with slope ``xi/2`` at the origin.  Evaluated
    through the identity ``(1 - e^-x)/(1 + e^-x) = tanh(x/2)``.
    """

    theta_max: float = 1.0
    xi: float = 1.5
    kernel_id = GAMMA_SIGMOID

    def __post_init__(self):
        if not (self.theta_max > 0 and self.xi > 0):
            raise ValueError("theta_max and xi must be positive")

    def __call__(self, theta):
        return self.theta_max * np.tanh(0.5 * self.xi * np.asarray(theta) / self.theta_max)

    def deriv(self, theta):
        x = 0.5 * self.xi * np.asarray(theta) / self.theta_max
        return 0.5 * self.xi / np.cosh(x) ** 2

    def integral(self, theta: float) -> float:
        return float(_gamma_int(GAMMA_SIGMOID, self.theta_max, self.xi, float(theta)))

    def kernel_params(self):
        return GAMMA_SIGMOID, float(self.theta_max), float(self.xi)


@dataclass(frozen=True)
class LinearGamma(GammaFunction):
    """``gamma(theta) = slope * theta``."""

    slope: float = 1.0
    kernel_id = GAMMA_LINEAR

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError("slope must be positive")

    def __call__(self, theta):
        return self.slope * np.asarray(theta, dtype=np.float64)

    def deriv(self, theta):
        return np.full_like(np.asarray(theta, dtype=np.float64), self.slope)

    def integral(self, theta: float) -> float:
        return 0.5 * self.slope * float(theta) ** 2

    def kernel_params(self):
        return GAMMA_LINEAR, float(self.slope), 0.0


def sigmoid_gamma(theta, theta_max: float, xi: float):
    return SigmoidGamma(theta_max, xi)(theta)


def sigmoid_gamma_deriv(theta, theta_max: float, xi: float):
    return SigmoidGamma(theta_max, xi).deriv(theta)


def gamma_integral(theta: float, gamma: GammaFunction) -> float:
    return gamma.integral(theta)


# --------------------------------------------------------------------------
# gains
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GainsQuaternion:
    k_q: float = 1e3
    k_omega: float = 1e2

    def validate(self):
        if not (self.k_q > 0 and self.k_omega > 0):
            raise ValueError("quaternion gains must be positive")


@dataclass(frozen=True)
class GainsAxisAngle:
    k_alpha: float = 1e3
    k_delta: float = 10.0
    k_omega: float = 1e2


@dataclass(frozen=True, eq=False)
class GainsGeometric:
    k_R: np.ndarray
    k_Omega: np.ndarray

    def __post_init__(self):
        for name in ("k_R", "k_Omega"):
            K = np.array(getattr(self, name), dtype=np.float64)
            if K.ndim == 0:
                K = K * np.eye(3)
            object.__setattr__(self, name, K)

    @classmethod
    def matched(cls, quat: GainsQuaternion, inertia: InertiaParams) -> "GainsGeometric":
        """Gains whose linearization at equilibrium equals that of ``tau_b``."""
        return cls(0.5 * quat.k_q * inertia.J, quat.k_omega * inertia.J)

    @classmethod
    def matched_axis_angle(cls, gains: GainsAxisAngle, gamma: GammaFunction,
                           inertia: InertiaParams) -> "GainsGeometric":
        """Gains whose linearization at equilibrium equals that of ``tau_gamma``.

        Near ``Theta_e = 0`` the axis-angle law reduces to
        ``J (k_alpha gamma'(0) theta + (k_omega + k_delta gamma'(0)) omega_e)``
        with ``e_R`` approximately ``-theta``.
        """
        g0 = float(gamma.deriv(0.0))
        return cls(gains.k_alpha * g0 * inertia.J,
                   (gains.k_omega + gains.k_delta * g0) * inertia.J)

    def validate(self):
        for name in ("k_R", "k_Omega"):
            K = getattr(self, name)
            if K.shape != (3, 3) or not np.allclose(K, K.T, rtol=0.0, atol=1e-15):
                raise ValueError(f"{name} must be a symmetric 3x3 matrix")
            if np.linalg.eigvalsh(K).min() <= 0:
                raise ValueError(f"{name} must be positive definite")


@dataclass(frozen=True)
class GainCertificate:
    W: np.ndarray
    minors: tuple[float, float]
    pd: bool

    @property
    def det(self) -> float:
        return self.minors[1]


def check_gains_axis_angle(g: GainsAxisAngle) -> GainCertificate:
    """Build the decay matrix ``W`` of the Lyapunov derivative and test it.

    ``W = [[k_d, k_d k_w / (2 k_a)], [k_d k_w / (2 k_a), k_w / k_a]]`` is
    positive definite exactly when ``k_a > k_d k_w / 4``.

    Raises
    ------
    ValueError
        If ``k_delta`` or ``k_omega`` is not positive, or ``k_alpha`` is zero.
    """
    if not (g.k_delta > 0 and g.k_omega > 0):
        raise ValueError("k_delta and k_omega must be positive")
    if g.k_alpha == 0:
        raise ValueError("k_alpha must be nonzero")
    off = g.k_delta * g.k_omega / (2.0 * g.k_alpha)
    W = np.array([[g.k_delta, off], [off, g.k_omega / g.k_alpha]])
    m1 = float(W[0, 0])
    m2 = float(W[0, 0] * W[1, 1] - W[0, 1] * W[1, 0])
    return GainCertificate(W, (m1, m2), bool(m1 > 0 and m2 > 0))


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


@njit(cache=True)
def _gamma(kind, a, b, th):
    if kind == GAMMA_SIGMOID:
        return a * math.tanh(0.5 * b * th / a)
    return a * th


@njit(cache=True)
def _gamma_d(kind, a, b, th):
    if kind == GAMMA_SIGMOID:
        c = math.cosh(0.5 * b * th / a)
        return 0.5 * b / (c * c)
    return a


@njit(cache=True)
def _log_cosh(x):
    x = abs(x)
    return x + math.log1p(math.exp(-2.0 * x)) - math.log(2.0)


@njit(cache=True)
def _gamma_int(kind, a, b, th):
    if kind == GAMMA_SIGMOID:
        return 2.0 * a * a / b * _log_cosh(0.5 * b * th / a)
    return 0.5 * a * th * th


@njit(cache=True)
def _axis_rate(u, theta, w_e):
    """``u_dot = ½ [cot(theta/2) (I - u u^T) w_e + w_e x u]``; zero near 0 and 2 pi."""
    if theta < EPS_THETA or theta > TWO_PI - EPS_THETA:
        return (0.0, 0.0, 0.0)
    ct = math.cos(0.5 * theta) / math.sin(0.5 * theta)
    uw = _dot3(u, w_e)
    c = _cross(w_e, u)
    return (0.5 * (ct * (w_e[0] - u[0] * uw) + c[0]),
            0.5 * (ct * (w_e[1] - u[1] * uw) + c[1]),
            0.5 * (ct * (w_e[2] - u[2] * uw) + c[2]))


@njit(cache=True)
def _sigma_axis_angle(q_e, sigma):
    """Axis and angle of the ``sigma``-selected representative of ``q_e``."""
    u, theta = _axis_angle(q_e)
    if sigma < 0:
        return (-u[0], -u[1], -u[2]), TWO_PI - theta
    return u, theta


@njit(cache=True)
def _sea(q_e, w_e, sigma, kind, a, b):
    """Return ``(phi, u, alpha, alpha_dot)`` for the scaled Euler axis.

    Near ``phi = 0`` the product ``gamma(phi) u_dot`` tends to
    ``gamma'(0) (I - u u^T) w_e``, so ``alpha_dot`` is replaced by its limit
    ``gamma'(0) w_e``.
    """
    u, phi = _sigma_axis_angle(q_e, sigma)
    g = _gamma(kind, a, b, phi)
    gd = _gamma_d(kind, a, b, phi)
    alpha = _scale3(g, u)
    if phi < EPS_THETA:
        alpha_dot = _scale3(gd, w_e)
    else:
        alpha_dot = _add3(_scale3(gd * _dot3(u, w_e), u), _scale3(g, _axis_rate(u, phi, w_e)))
    return phi, u, alpha, alpha_dot


@njit(cache=True)
def _mv_packed(p, off, v):
    return (p[off] * v[0] + p[off + 1] * v[1] + p[off + 2] * v[2],
            p[off + 3] * v[0] + p[off + 4] * v[1] + p[off + 5] * v[2],
            p[off + 6] * v[0] + p[off + 7] * v[1] + p[off + 8] * v[2])


@njit(cache=True)
def _torque(law, p, sigma, q, w, ref, J):
    """Control torque for packed law parameters ``p`` and reference sample ``ref``.

    ``J`` is the row-major flattened inertia.
    """
    q = _qnormalize(q)
    w = (w[0], w[1], w[2])
    q_d = (ref[0], ref[1], ref[2], ref[3])
    w_hat = (ref[4], ref[5], ref[6])
    w_hat_dot = (ref[7], ref[8], ref[9])
    q_e = _qmul(_qconj(q), q_d)
    R_e = _rotmat(q_e)
    w_d = _mv(R_e, w_hat)
    w_d_dot = _sub3(_mv(R_e, w_hat_dot), _cross(w, w_d))
    gyro = _cross(w, _mv(J, w))
    w_e = _sub3(w_d, w)
    if law == LAW_QUATERNION:
        acc = _add3(_add3(_scale3(p[0] * sigma, _vec(q_e)), _scale3(p[1], w_e)), w_d_dot)
        return _add3(_mv(J, acc), gyro)
    if law == LAW_AXIS_ANGLE:
        _, _, alpha, alpha_dot = _sea(q_e, w_e, sigma, int(p[3]), p[4], p[5])
        acc = _add3(_add3(_scale3(p[0], alpha), _scale3(p[1], alpha_dot)),
                    _add3(_scale3(p[2], w_e), w_d_dot))
        return _add3(_mv(J, acc), gyro)
    # R_d^T R = R_e^T, so e_R = ½ vee(R_e^T - R_e).
    e_R = (0.5 * (R_e[5] - R_e[7]), 0.5 * (R_e[6] - R_e[2]), 0.5 * (R_e[1] - R_e[3]))
    ff = _sub3(_cross(w, w_d), _mv(R_e, w_hat_dot))
    fb = _add3(_mv_packed(p, 0, e_R), _mv_packed(p, 9, _scale3(-1.0, w_e)))
    return _sub3(_sub3(gyro, fb), _mv(J, ff))


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def canonical_name(name: str) -> str:
    try:
        return _ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(
            f"unknown controller {name!r}; expected one of {', '.join(CONTROLLER_NAMES)}"
        ) from None


@dataclass(frozen=True)
class ControllerSpec:
    """Which law to run, its gains and shaping function, and whether MPS picks sigma."""

    kind: str
    gains: GainsQuaternion | GainsAxisAngle | GainsGeometric
    gamma: GammaFunction | None = None
    mps: bool = True
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_name(self.kind))
        if not self.label:
            object.__setattr__(self, "label", self.kind)
        if self.kind == "tau_g" and self.mps:
            object.__setattr__(self, "mps", False)

    @property
    def law(self) -> int:
        return {"tau_b": LAW_QUATERNION, "tau_g": LAW_GEOMETRIC,
                "tau_gamma": LAW_AXIS_ANGLE}[self.kind]

    def validate(self):
        """Raise ``ValueError`` unless the gains satisfy the law's stability condition."""
        if self.kind == "tau_gamma":
            if not isinstance(self.gains, GainsAxisAngle):
                raise ValueError("tau_gamma needs GainsAxisAngle")
            if self.gamma is None:
                raise ValueError("tau_gamma needs a gamma function")
            if not check_gains_axis_angle(self.gains).pd:
                raise ValueError(
                    "axis-angle gains violate k_alpha > k_delta k_omega / 4")
        elif self.kind == "tau_b":
            if not isinstance(self.gains, GainsQuaternion):
                raise ValueError("tau_b needs GainsQuaternion")
            self.gains.validate()
        else:
            if not isinstance(self.gains, GainsGeometric):
                raise ValueError("tau_g needs GainsGeometric")
            self.gains.validate()

    def packed(self) -> np.ndarray:
        p = np.zeros(N_PARAMS)
        g = self.gains
        if self.kind == "tau_b":
            p[0], p[1] = g.k_q, g.k_omega
        elif self.kind == "tau_gamma":
            kind, a, b = self.gamma.kernel_params()
            p[:6] = g.k_alpha, g.k_delta, g.k_omega, kind, a, b
        else:
            p[0:9] = np.asarray(g.k_R).ravel()
            p[9:18] = np.asarray(g.k_Omega).ravel()
        return p

    def torque(self, s: BodyState, reference: Reference, inertia: InertiaParams,
               sigma: int = 1, t: float = 0.0) -> np.ndarray:
        return np.array(_torque(self.law, self.packed(), float(sigma), s.q, s.omega,
                                reference.packed(t), inertia.J_flat))


def benchmark_controllers(inertia: InertiaParams | None = None) -> dict[str, ControllerSpec]:
    """The three benchmark controllers with the Crazyflie gain set."""
    inertia = inertia or InertiaParams.crazyflie()
    quat = GainsQuaternion(1e3, 1e2)
    axang = GainsAxisAngle(1e3, 10.0, 1e2)
    gamma = SigmoidGamma(1.0, 1.5)
    geo = GainsGeometric.matched_axis_angle(axang, gamma, inertia)
    return {
        "tau_b": ControllerSpec("tau_b", quat, mps=True),
        "tau_g": ControllerSpec("tau_g", geo, mps=False),
        "tau_gamma": ControllerSpec("tau_gamma", axang, gamma, mps=True),
    }


def tau_quaternion(s: BodyState, reference: Reference, gains: GainsQuaternion,
                   inertia: InertiaParams, sigma: int = 1, t: float = 0.0) -> np.ndarray:
    return ControllerSpec("tau_b", gains).torque(s, reference, inertia, sigma, t)


def tau_axis_angle(s: BodyState, reference: Reference, gains: GainsAxisAngle,
                   gamma: GammaFunction, inertia: InertiaParams, sigma: int = 1,
                   t: float = 0.0) -> np.ndarray:
    """Axis-angle torque with ``alpha_e(sigma) = sigma gamma(Phi_e) u_e``.

    ``Phi_e = (1 - sigma) pi + sigma Theta_e``; the rate term expands
    ``alpha_e_dot`` through ``Theta_e_dot = u_e . omega_e`` and the axis rate.
    """
    return ControllerSpec("tau_gamma", gains, gamma).torque(s, reference, inertia, sigma, t)


def tau_geometric(s: BodyState, reference: Reference, gains: GainsGeometric,
                  inertia: InertiaParams, t: float = 0.0) -> np.ndarray:
    return ControllerSpec("tau_g", gains, mps=False).torque(s, reference, inertia, 1, t)


def axis_rate(q_e, omega_e) -> np.ndarray:
    """Time derivative of the error axis under ``q_e_dot = ½ [0, omega_e] ⊗ q_e``.

    Returns zeros when ``Theta_e`` is within ``EPS_THETA`` of 0 or 2 pi.
    """
    u, theta = _axis_angle(_as_quat(q_e))
    return np.array(_axis_rate(u, theta, _as_vec3(omega_e)))


def scaled_axis(q_e, gamma: GammaFunction, sigma: int = 1) -> np.ndarray:
    """``alpha_e(sigma)`` for an error quaternion."""
    u, phi = _sigma_axis_angle(_as_quat(q_e), float(sigma))
    return float(gamma(phi)) * np.array(u)


def effective_angle(theta: float, sigma: int) -> float:
    """``Phi_e = (1 - sigma) pi + sigma Theta_e``."""
    return (1 - sigma) * math.pi + sigma * theta
