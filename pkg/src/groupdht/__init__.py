"""Discrete-event simulator of a group-based DHT with soft group-size limits
and preemptive peer relocation."""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import InvalidConfig, SimulationError
from .model import DataObject, Group, Mode, Overlay, SizeConfig, TimerConfig
from .harness import ExperimentCell, RunSettings, SweepResult, run_single, run_sweep
from .workload import ChurnConfig, DataConfig, Scenario

__all__ = [
    "ChurnConfig",
    "DataConfig",
    "DataObject",
    "ExperimentCell",
    "Group",
    "InvalidConfig",
    "Mode",
    "Overlay",
    "RunSettings",
    "Scenario",
    "SimulationError",
    "SizeConfig",
    "SweepResult",
    "TimerConfig",
    "run_single",
    "run_sweep",
]
