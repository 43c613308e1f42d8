"""Discrete-event simulation of serverless event scheduling."""

from .config import RunConfig, load_config
from .engine import Cpu, Engine, Memory, Simulation
from .platform import ClassSpec, PlatformDelays
from .runner import run_scenario, sweep
from .workload import Event, ScenarioConfig, sawtooth_workload

__all__ = ["ClassSpec", "Cpu", "Engine", "Event", "Memory", "PlatformDelays", "RunConfig",
           "ScenarioConfig", "Simulation", "load_config", "run_scenario", "sawtooth_workload",
           "sweep"]
__version__ = "0.1.0"
