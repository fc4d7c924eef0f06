"""Simulation and analysis of EPR states from a temporally multiplexed squeezed-light source."""

from .gaussian_core import (
    V0,
    ContractError,
    CovarianceMatrix4,
    PartialCovariance,
    QuadratureVariancePair,
    bound_scan,
    duan_criterion,
    is_physical,
    reid_criterion,
)
from .network_model import ChannelParams, MeasurementAngles, PathState, build_two_mode_cov
from .opo_model import CavityGeometry, OpoParams, SeedNoiseModel, decay_rate, output_spectrum, pump_rate

__version__ = "0.1.0"

__all__ = [
    "V0",
    "ContractError",
    "CovarianceMatrix4",
    "PartialCovariance",
    "QuadratureVariancePair",
    "bound_scan",
    "duan_criterion",
    "is_physical",
    "reid_criterion",
    "ChannelParams",
    "MeasurementAngles",
    "PathState",
    "build_two_mode_cov",
    "CavityGeometry",
    "OpoParams",
    "SeedNoiseModel",
    "decay_rate",
    "output_spectrum",
    "pump_rate",
]
