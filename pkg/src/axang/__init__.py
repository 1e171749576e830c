"""Axis-angle attitude control: dynamics, torque laws, direction selection and benchmarks."""

__version__ = "0.1.0"

from .controllers import (
    CONTROLLER_NAMES,
    ControllerSpec,
    GainCertificate,
    GainsAxisAngle,
    GainsGeometric,
    GainsQuaternion,
    GammaFunction,
    LinearGamma,
    SigmoidGamma,
    axis_rate,
    benchmark_controllers,
    check_gains_axis_angle,
    gamma_integral,
    sigmoid_gamma,
    sigmoid_gamma_deriv,
    tau_axis_angle,
    tau_geometric,
    tau_quaternion,
)
from .dynamics import (
    BodyState,
    ConstantReference,
    InertiaParams,
    Reference,
    SpinReference,
    desired_omega_from_qd,
    state_derivative,
    transform_desired_omega,
)
from .integrator import IntegrationFault, dp_step
from .mps import DivergentPrediction, MpsConfig, predict_cost, select_sigma
from .sim import (
    EpisodeResult,
    SimConfig,
    lyapunov_V,
    lyapunov_Vdot,
    run_episode,
)
from .so3 import (
    AxisAngle,
    error_quaternion,
    from_axis_angle,
    quat_inv,
    quat_mul,
    quat_to_rotmat,
    sample_unit_sphere,
    to_axis_angle,
)

__all__ = [
    "AxisAngle", "BodyState", "CONTROLLER_NAMES", "ConstantReference", "ControllerSpec",
    "DivergentPrediction", "EpisodeResult", "GainCertificate", "GainsAxisAngle",
    "GainsGeometric", "GainsQuaternion", "GammaFunction", "InertiaParams",
    "IntegrationFault", "LinearGamma", "MpsConfig", "Reference", "SigmoidGamma",
    "SimConfig", "SpinReference", "axis_rate", "check_gains_axis_angle",
    "desired_omega_from_qd", "dp_step", "error_quaternion", "from_axis_angle",
    "gamma_integral", "lyapunov_V", "lyapunov_Vdot", "benchmark_controllers", "predict_cost",
    "quat_inv", "quat_mul", "quat_to_rotmat", "run_episode", "sample_unit_sphere",
    "select_sigma", "sigmoid_gamma", "sigmoid_gamma_deriv", "state_derivative",
    "tau_axis_angle", "tau_geometric", "tau_quaternion", "to_axis_angle",
    "transform_desired_omega",
]
