"""Ergodic capacity, low-SNR metrics and phase optimisation for holographic MIMO
links equipped with stacked intelligent metasurfaces (SIMs)."""

from .config import SystemConfig, load_config
from .metrics import (
    CapacityReport,
    RankDeficientError,
    capacity_lower_bound,
    dispersion,
    ergodic_capacity_mc,
    instantaneous_capacity,
    low_snr_capacity,
    min_energy_per_bit,
    wideband_slope,
    wishart_logdet_mean,
)
from .optimizer import Objective, OptimizerOptions, OptimizerState, projected_gradient_ascent
from .scene import SceneMatrices, build_scene, identity_scene
from .simstack import CompositeResponse, PhaseProfile, composite

__all__ = [
    "CapacityReport",
    "CompositeResponse",
    "Objective",
    "OptimizerOptions",
    "OptimizerState",
    "PhaseProfile",
    "RankDeficientError",
    "SceneMatrices",
    "SystemConfig",
    "build_scene",
    "capacity_lower_bound",
    "composite",
    "dispersion",
    "ergodic_capacity_mc",
    "identity_scene",
    "instantaneous_capacity",
    "load_config",
    "low_snr_capacity",
    "min_energy_per_bit",
    "projected_gradient_ascent",
    "wideband_slope",
    "wishart_logdet_mean",
]
