"""Stochastic hybrid simulation of flattened models."""
from .integrator import Dopri5, IntegratorError, locate_root
from .rng import derive_rng
from .simulate import (
    EventRecord, SimConfig, SimState, SimulationError, Trajectory, ZenoError, apply_event,
    initial_state, simulate,
)

__all__ = ["Dopri5", "IntegratorError", "locate_root", "derive_rng", "EventRecord", "SimConfig",
           "SimState", "SimulationError", "Trajectory", "ZenoError", "apply_event",
           "initial_state", "simulate"]
