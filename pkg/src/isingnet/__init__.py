"""Inverse Ising inference toolkit.

Modules:
    core        Ising models and exact enumeration (energy, log Z, entropy).
    sampler     Metropolis single-spin-flip chains and ensemble generation.
    gnn         Message-passing graph network mapping samples to parameters.
    baselines   Inverse-covariance estimator and shuffle null model.
    evaluation  Moments, parameter errors, partition functions, scatter data.
    dataio      File formats, binarization, run configuration.
    cli         Command-line pipeline.
"""

from .core import (
    IsingModel,
    SampleBatch,
    energy,
    log_boltzmann_prob,
    log_partition_exact,
    log_partition_sampled,
    random_model,
    shannon_entropy_exact,
)

__all__ = [
    "IsingModel",
    "SampleBatch",
    "energy",
    "log_boltzmann_prob",
    "log_partition_exact",
    "log_partition_sampled",
    "random_model",
    "shannon_entropy_exact",
]

__version__ = "0.1.0"
