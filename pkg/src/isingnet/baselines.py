"""Closed-form reference estimators: covariance inversion and a shuffle null.

The inverse-covariance estimator identifies the (ridge-regularized)
inverse sample covariance with the effective coupling matrix; it is a
high-temperature approximation and its field estimate is the naive
mean-field inversion.  The shuffle null permutes a reference model's
parameters across positions, keeping their multiset intact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import IsingModel, SampleBatch


class SingularCovarianceError(np.linalg.LinAlgError):
    """Covariance inversion failed; `sites` lists the near-constant columns."""

    def __init__(self, sites):
        self.sites = list(sites)
        super().__init__(
            f"covariance matrix is singular at ridge = 0; near-constant "
            f"sites: {self.sites}"
        )


@dataclass
class CovarianceMatrix:
    c: np.ndarray
    mean: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        self.mean = np.asarray(self.mean, dtype=np.float64)
        if not np.allclose(self.c, self.c.T):
            raise ValueError("covariance matrix must be symmetric")
        if np.any(np.diag(self.c) < 0):
            raise ValueError("covariance diagonal must be non-negative")


def sample_covariance(batch: SampleBatch) -> CovarianceMatrix:
    """Unbiased (N-1 divisor) sample covariance and sample mean."""
    if batch.num_samples < 2:
        raise ValueError("need at least 2 samples for a covariance")
    xs = batch.samples.astype(np.float64)
    mean = xs.mean(axis=0)
    centered = xs - mean
    c = centered.T @ centered / (batch.num_samples - 1)
    return CovarianceMatrix(c=c, mean=mean)


def default_ridge(c: np.ndarray) -> float:
    return 1e-4 * float(np.trace(c)) / c.shape[0]


def model_from_covariance(cov: CovarianceMatrix, ridge: float = 0.0) -> IsingModel:
    """Invert a covariance into an Ising model (effective params, beta = 1).

    u_hat = inv(C + ridge*I) with zeroed diagonal; h_hat from the naive
    mean-field relation h_i = -logit(m_i) - sum_j u_ij m_j with means
    clipped away from {0, 1}.
    """
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    n = cov.c.shape[0]
    regularized = cov.c + ridge * np.eye(n)
    if ridge == 0.0:
        # refuse up front with the offending sites rather than let the
        # inverse blow up silently on near-constant columns
        variances = np.diag(cov.c)
        bad = np.nonzero(variances < 1e-12)[0]
        if len(bad) > 0 or np.linalg.matrix_rank(regularized) < n:
            raise SingularCovarianceError(bad)
    u = np.linalg.inv(regularized)
    np.fill_diagonal(u, 0.0)
    u = 0.5 * (u + u.T)
    m = np.clip(cov.mean, 1e-6, 1.0 - 1e-6)
    h = -np.log(m / (1.0 - m)) - u @ m
    return IsingModel(n=n, h=h, u=u, beta=1.0, meta={"estimator": "inverse_covariance"})


def inverse_covariance_model(batch: SampleBatch, ridge: float | None = None) -> IsingModel:
    """Inverse-covariance estimate from samples; ridge defaults to
    1e-4 * trace(C)/n (pass ridge=0.0 for the plain inverse)."""
    cov = sample_covariance(batch)
    if ridge is None:
        ridge = default_ridge(cov.c)
    model = model_from_covariance(cov, ridge)
    model.meta["source_batch_id"] = batch.batch_id
    return model


def random_coupling_model(reference: IsingModel, seed: int) -> IsingModel:
    """Null model: reference couplings and fields shuffled across positions.

    The multiset of off-diagonal couplings (and of fields) is preserved
    exactly; only their placement is randomized.
    """
    rng = np.random.default_rng(seed)
    n = reference.n
    iu = np.triu_indices(n, k=1)
    vals = reference.u[iu].copy()
    rng.shuffle(vals)
    u = np.zeros((n, n))
    u[iu] = vals
    u += u.T
    h = reference.h.copy()
    rng.shuffle(h)
    return IsingModel(n=n, h=h, u=u, beta=reference.beta,
                      meta={"estimator": "random_coupling", "seed": int(seed)})


def import_external_matrix(path: str) -> np.ndarray:
    """Read a whitespace-delimited square matrix written by a third-party solver."""
    mat = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    return mat
