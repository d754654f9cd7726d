"""Simulation and inference for the planted Sherrington-Kirkpatrick model."""

__version__ = "0.1.0"

from .model import CouplingDist, Disorder, FieldDist, ModelParams, hamiltonian, sample_disorder  # noqa: E402
from .sampler import ChainConfig, SampleBatch, draw_batch  # noqa: E402

__all__ = [
    "__version__",
    "ChainConfig",
    "CouplingDist",
    "Disorder",
    "FieldDist",
    "ModelParams",
    "SampleBatch",
    "draw_batch",
    "hamiltonian",
    "sample_disorder",
]
