"""Quantum-jump simulation and photon waiting-time statistics of a driven
two-level emitter coupled to a classically fluctuating configurational
reservoir."""

from .model import Kind, ModelSpec, Scheme, build_generators, load_spec, validate_spec
from .supermath import VectorState
from .trajectory import EventLog, ensemble_average, simulate_trajectory

__version__ = "0.1.0"

__all__ = [
    "EventLog",
    "Kind",
    "ModelSpec",
    "Scheme",
    "VectorState",
    "build_generators",
    "ensemble_average",
    "load_spec",
    "simulate_trajectory",
    "validate_spec",
]
