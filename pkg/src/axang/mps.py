"""Model-predictive selection of the rotation direction ``sigma``.

Both candidates are simulated over a short horizon with ``sigma`` held fixed
and scored by the integrated cost ``tau^T R tau + n_e^T Q n_e``; the cheaper
one wins and ties go to ``sigma = +1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controllers import ControllerSpec
from .dynamics import BodyState, InertiaParams, Reference
from .integrator import simulate


class DivergentPrediction(RuntimeError):
    """Neither candidate direction produced a finite prediction."""


def _weight(x) -> np.ndarray:
    W = np.asarray(x, dtype=np.float64)
    if W.ndim == 0:
        W = float(W) * np.eye(3)
    return W


@dataclass(frozen=True, eq=False)
class MpsConfig:
    horizon: float = 0.2
    R: np.ndarray = 1.0
    Q: np.ndarray = 1e-6
    prediction_step: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "R", _weight(self.R))
        object.__setattr__(self, "Q", _weight(self.Q))
        if not self.horizon > 0:
            raise ValueError("MPS horizon must be positive")
        if not 0 < self.prediction_step <= self.horizon:
            raise ValueError("prediction step must lie in (0, horizon]")
        for name in ("R", "Q"):
            W = getattr(self, name)
            if W.shape != (3, 3) or not np.allclose(W, W.T):
                raise ValueError(f"{name} must be a symmetric 3x3 matrix")
            if np.linalg.eigvalsh(W).min() < -1e-15:
                raise ValueError(f"{name} must be positive semidefinite")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.horizon / self.prediction_step)))


def predict_cost(sigma: int, s0: BodyState, reference: Reference, controller: ControllerSpec,
                 inertia: InertiaParams, cfg: MpsConfig, t0: float = 0.0) -> float:
    """Predicted cost of holding ``sigma`` over ``[t0, t0 + horizon]``.

    The integrand is accumulated with the trapezoidal rule on the prediction
    nodes.  ``n_e`` is the vector part of the ``sigma``-selected error
    quaternion.  Returns ``inf`` if the prediction leaves the finite range.
    """
    if controller.kind == "tau_g":
        raise ValueError("direction selection applies to tau_b and tau_gamma only")
    h = cfg.prediction_step
    run = simulate(controller.law, controller.packed(), sigma, s0.as_array(), reference,
                   inertia, h, cfg.n_steps, decimation=cfg.n_steps, t0=t0)
    if not run.ok:
        return math.inf
    tau = run.tau
    n_e = sigma * run.n_e
    integrand = (np.einsum("ni,ij,nj->n", tau, cfg.R, tau)
                 + np.einsum("ni,ij,nj->n", n_e, cfg.Q, n_e))
    cost = float(np.trapezoid(integrand, dx=h))
    return cost if math.isfinite(cost) else math.inf


def select_sigma(s0: BodyState, reference: Reference, controller: ControllerSpec,
                 inertia: InertiaParams, cfg: MpsConfig, t0: float = 0.0,
                 return_costs: bool = False):
    """Pick ``sigma`` in ``{+1, -1}`` minimizing :func:`predict_cost`.

    Raises
    ------
    DivergentPrediction
        If both predicted costs are infinite.
    """
    plus = predict_cost(+1, s0, reference, controller, inertia, cfg, t0)
    minus = predict_cost(-1, s0, reference, controller, inertia, cfg, t0)
    if math.isinf(plus) and math.isinf(minus):
        raise DivergentPrediction("both sigma candidates diverged")
    sigma = 1 if plus <= minus else -1
    if return_costs:
        return sigma, (plus, minus)
    return sigma
