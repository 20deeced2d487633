"""Stochastic HYPE: parse, flatten and simulate stochastic hybrid process-algebra models."""
from importlib import resources

from .experiments import EnsembleSummary, Observable, SweepSpec, export, run_batch, sweep
from .expr import EvalError
from .flatten import FlatSystem, enabled_events, flatten, vector_field
from .lang import HypeSyntaxError, load_model, load_model_file, parse, render
from .model import Model, ModelError, validate
from .sim import SimConfig, Trajectory, apply_event, derive_rng, simulate

__version__ = "0.1.0"

__all__ = ["EnsembleSummary", "Observable", "SweepSpec", "export", "run_batch", "sweep",
           "EvalError", "FlatSystem", "enabled_events", "flatten", "vector_field",
           "HypeSyntaxError", "load_model", "load_model_file", "parse", "render", "Model",
           "ModelError", "validate", "SimConfig", "Trajectory", "apply_event", "derive_rng",
           "simulate", "data_path"]


def data_path(name: str) -> str:
    """Path of a bundled data file (``network_node.hype``, ``ferry_scenario.txt``)."""
    return str(resources.files(__package__).joinpath("data", name))
