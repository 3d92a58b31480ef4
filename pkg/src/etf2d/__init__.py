"""Event-triggered resilient filtering for 2-D shift-varying systems with delayed,
quantized and bit-flipped measurements."""

from .eds import CodecConfig
from .errors import (ConfigurationError, DataError, Etf2dError, InvariantViolation,
                     OutOfScopeError, SingularityError)
from .etm import EtmConfig, run_etm
from .filtering import FilterConfig, Perturbation, run_bounds, run_filter
from .pipeline import run_pipeline
from .scenario import ScenarioConfig, load_scenario
from .system2d import GridIndex, SystemModel, simulate_trajectory

__version__ = "0.1.0"

__all__ = [
    "CodecConfig", "ConfigurationError", "DataError", "Etf2dError", "EtmConfig", "FilterConfig",
    "GridIndex", "InvariantViolation", "OutOfScopeError", "Perturbation", "ScenarioConfig",
    "SingularityError", "SystemModel", "load_scenario", "run_bounds", "run_etm", "run_filter",
    "run_pipeline", "simulate_trajectory",
]
