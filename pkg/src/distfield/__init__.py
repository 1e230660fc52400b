"""Distributed estimation of a parametric field from quantized, noisy sensor data."""

__version__ = "0.1.0"

from .estimator import (
    EmConfig,
    EmResult,
    EmTrace,
    QuantizedFieldEstimator,
    incomplete_loglik,
    run_em,
)
from .exceptions import ConfigError, NewtonFailure, QuadratureError
from .field import FieldParams, GaussianBellField, Region, integrate_over_region
from .harness import ExperimentConfig, run_sweep, run_trial
from .metrics import box_stats, ise, location_se, outlier_curve
from .netsim import NoiseConfig, SensorGrid, calibrate_noise, derive_rng, place_sensors, simulate
from .quantizer import QuantizerSpec, UniformQuantizer, make_uniform, quantize

__all__ = [
    "ConfigError", "EmConfig", "EmResult", "EmTrace", "ExperimentConfig", "FieldParams",
    "GaussianBellField", "NewtonFailure", "NoiseConfig", "QuadratureError",
    "QuantizedFieldEstimator", "QuantizerSpec", "Region", "SensorGrid", "UniformQuantizer",
    "box_stats", "calibrate_noise", "derive_rng", "incomplete_loglik", "integrate_over_region", "ise",
    "location_se", "make_uniform", "outlier_curve", "place_sensors", "quantize", "run_em",
    "run_sweep", "run_trial", "simulate",
]
