"""QUBO benchmarking toolkit: encoders, a digital-annealing emulator, and a
genetic-algorithm baseline for knapsack, assignment, and tour problems."""

from .qubo import QuboMatrix, aggregate, apply_flip, delta_energy, energy, init_fields

__all__ = [
    "QuboMatrix",
    "energy",
    "init_fields",
    "delta_energy",
    "apply_flip",
    "aggregate",
]

__version__ = "0.1.0"
