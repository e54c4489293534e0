"""Attacker-defender wargame between a modular and a conventional fleet.

A deterministic, seedable discrete-event simulation in which each fleet's
decisions come from a three-agent stack: an LSTM inference agent forecasting
the adversary's dispatch strategy, a dispatch agent optimizing order
attributes over learned feasibility/success surrogates, and a base agent
scheduling operations by receding-horizon mixed-integer planning.
"""

__version__ = "0.1.0"

from .config import ScenarioConfig, load_scenario
from .harness import SimulationResult, run_simulation

__all__ = ["ScenarioConfig", "SimulationResult", "load_scenario",
           "run_simulation", "__version__"]
