"""Distribution-feeder state estimation with pseudo-measurements and solar scenarios."""

from .estimator import EstimationResult, EstimatorOptions, estimate
from .feeder import NetworkModel, build_admittance, load_feeder
from .powerflow import VoltageState, solve_power_flow

__all__ = [
    "EstimationResult",
    "EstimatorOptions",
    "NetworkModel",
    "VoltageState",
    "build_admittance",
    "estimate",
    "load_feeder",
    "solve_power_flow",
]

__version__ = "0.1.0"
