"""Simulation and mean-field limits of excitatory/inhibitory nonlinear Hawkes processes."""

__version__ = "0.1.0"

from .model import (ConfigError, Kernel, PopulationConfig, Transfer, draw_signs,  # noqa: E402
                    sign_statistic)
from .rng import SimStreams, stream  # noqa: E402
from .sim import (EventData, GridPath, compensator_path, compute_IN, compute_JN,  # noqa: E402
                  simulate)

__all__ = [
    "ConfigError", "Kernel", "PopulationConfig", "Transfer", "draw_signs", "sign_statistic",
    "SimStreams", "stream", "EventData", "GridPath", "compensator_path", "compute_IN",
    "compute_JN", "simulate", "__version__",
]
