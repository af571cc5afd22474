"""Ising models over {0,1} spins and exact computations on them.

Energy convention: E(x) = sum_i h_i x_i + sum_{i<j} u_ij x_i x_j, and the
model distribution is p(x) = exp(-beta * E(x)) / Z.  At beta = 1 the
exponent is the familiar -sum h x - sum u x x form.  Exact quantities
(partition function, entropy, moments) are computed by enumerating all
2^n states and are refused above ENUMERATION_LIMIT spins.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

ENUMERATION_LIMIT = 25
_CHUNK_BITS = 16  # enumerate at most 2^16 states per vectorized chunk

LN2 = float(np.log(2.0))


class SizeLimitError(ValueError):
    """Raised when an exact enumeration is requested above the size bound."""


class DimensionError(ValueError):
    """Raised when a spin string does not match the model size."""


@dataclass
class IsingModel:
    """Fields h, symmetric zero-diagonal couplings u, inverse temperature beta."""

    n: int
    h: np.ndarray
    u: np.ndarray
    beta: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        if self.n <= 0:
            raise ValueError(f"n must be positive, got {self.n}")
        if self.h.shape != (self.n,):
            raise DimensionError(f"h has shape {self.h.shape}, expected ({self.n},)")
        if self.u.shape != (self.n, self.n):
            raise DimensionError(f"u has shape {self.u.shape}, expected ({self.n}, {self.n})")
        if not np.all(np.isfinite(self.h)) or not np.all(np.isfinite(self.u)):
            raise ValueError("model parameters must be finite")
        if not np.allclose(self.u, self.u.T, atol=0.0):
            raise ValueError("coupling matrix must be symmetric")
        if np.any(np.diag(self.u) != 0.0):
            raise ValueError("coupling matrix must have zero diagonal")
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise ValueError(f"beta must be a positive finite real, got {self.beta}")

    def effective_params(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (beta*h, beta*u): the parameters that define p(x) at beta = 1."""
        return self.beta * self.h, self.beta * self.u

    def param_vector(self) -> np.ndarray:
        """Effective fields followed by effective upper-triangle couplings."""
        eh, eu = self.effective_params()
        iu = np.triu_indices(self.n, k=1)
        return np.concatenate([eh, eu[iu]])

    def digest(self) -> str:
        """Short content hash of the effective parameters, for provenance tags."""
        blob = np.ascontiguousarray(self.param_vector()).tobytes()
        return hashlib.sha1(blob).hexdigest()[:12]


@dataclass
class SampleBatch:
    """Binary spin configurations, one row per sample, with provenance tags."""

    samples: np.ndarray
    model_id: str | None = None
    batch_id: str | None = None
    converged: bool | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.uint8)
        if self.samples.ndim != 2 or self.samples.shape[0] == 0:
            raise ValueError("samples must be a non-empty 2-D array")
        if not np.all((self.samples == 0) | (self.samples == 1)):
            raise ValueError("samples must be strictly binary")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]


def _check_spin(model: IsingModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n,):
        raise DimensionError(f"spin string has shape {x.shape}, expected ({model.n},)")
    return x


def energy(model: IsingModel, x) -> float:
    """E(x) = h.x + sum_{i<j} u_ij x_i x_j for a single configuration."""
    x = _check_spin(model, x)
    return float(model.h @ x + 0.5 * x @ model.u @ x)


def energies(model: IsingModel, xs: np.ndarray) -> np.ndarray:
    """Vectorized energy for an array of configurations, shape (N, n)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != model.n:
        raise DimensionError(f"configurations have shape {xs.shape}, expected (N, {model.n})")
    return xs @ model.h + 0.5 * np.einsum("si,ij,sj->s", xs, model.u, xs)


def log_boltzmann_prob(model: IsingModel, x, log_z: float) -> float:
    """log p(x) = -beta*E(x) - log Z."""
    return -model.beta * energy(model, x) - log_z


def log_boltzmann_probs(model: IsingModel, xs: np.ndarray, log_z: float) -> np.ndarray:
    return -model.beta * energies(model, xs) - log_z


def enumerate_states(n: int, start: int, count: int) -> np.ndarray:
    """States start .. start+count-1 as a (count, n) bit array (bit i -> column i)."""
    codes = np.arange(start, start + count, dtype=np.uint64)
    bits = (codes[:, None] >> np.arange(n, dtype=np.uint64)[None, :]) & np.uint64(1)
    return bits.astype(np.float64)


def _check_enumerable(model: IsingModel, op: str):
    if model.n > ENUMERATION_LIMIT:
        raise SizeLimitError(
            f"{op} enumerates 2^n states and refuses n = {model.n} > "
            f"{ENUMERATION_LIMIT}; use log_partition_sampled instead"
        )


def log_partition_exact(model: IsingModel) -> float:
    """log Z by full state enumeration with a streaming log-sum-exp.

    Chunks are reduced in a fixed order so the result is bitwise
    deterministic.  Safe for |beta*E| up to ~700.
    """
    _check_enumerable(model, "log_partition_exact")
    total = 1 << model.n
    chunk = 1 << min(model.n, _CHUNK_BITS)
    acc = -np.inf
    for start in range(0, total, chunk):
        xs = enumerate_states(model.n, start, min(chunk, total - start))
        acc = np.logaddexp(acc, logsumexp(-model.beta * energies(model, xs)))
    return float(acc)


def exact_distribution(model: IsingModel) -> np.ndarray:
    """Probability of every state in enumeration order (index = bit code)."""
    _check_enumerable(model, "exact_distribution")
    log_z = log_partition_exact(model)
    xs = enumerate_states(model.n, 0, 1 << model.n)
    return np.exp(-model.beta * energies(model, xs) - log_z)


def exact_moments(model: IsingModel) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean vector and covariance matrix of the spins by enumeration."""
    _check_enumerable(model, "exact_moments")
    p = exact_distribution(model)
    xs = enumerate_states(model.n, 0, 1 << model.n)
    mean = p @ xs
    second = xs.T @ (xs * p[:, None])
    return mean, second - np.outer(mean, mean)


def shannon_entropy_exact(model: IsingModel) -> float:
    """Entropy in nats: S = log Z + beta * <E>, via enumeration."""
    _check_enumerable(model, "shannon_entropy_exact")
    log_z = log_partition_exact(model)
    total = 1 << model.n
    chunk = 1 << min(model.n, _CHUNK_BITS)
    mean_e = 0.0
    for start in range(0, total, chunk):
        xs = enumerate_states(model.n, start, min(chunk, total - start))
        e = energies(model, xs)
        mean_e += float(np.exp(-model.beta * e - log_z) @ e)
    return log_z + model.beta * mean_e


def log_partition_sampled(
    model: IsingModel,
    num_draws: int,
    seed: int,
    with_stderr: bool = False,
):
    """Estimate log Z by uniform sampling of bitstrings.

    log Z ~= n*ln2 + log-mean-exp of -beta*E(x) over uniform random x.
    Unbiased in Z, hence slightly biased (downward) in log Z; the optional
    standard-error diagnostic is for the log-domain estimate (delta method).
    """
    if num_draws < 1:
        raise ValueError(f"num_draws must be >= 1, got {num_draws}")
    rng = np.random.default_rng(seed)
    chunk = 1 << _CHUNK_BITS
    log_terms = []
    weights = []
    for start in range(0, num_draws, chunk):
        count = min(chunk, num_draws - start)
        xs = rng.integers(0, 2, size=(count, model.n)).astype(np.float64)
        w = -model.beta * energies(model, xs)
        log_terms.append(logsumexp(w))
        weights.append(w)
    est = model.n * LN2 + float(logsumexp(log_terms)) - float(np.log(num_draws))
    if not with_stderr:
        return est
    w = np.concatenate(weights)
    r = np.exp(w - (logsumexp(w) - np.log(num_draws)))  # weights / mean weight
    stderr = float(np.std(r) / np.sqrt(num_draws))
    return est, stderr


def random_model(
    n: int,
    sparsity: float,
    coupling_scale: float,
    field_scale: float,
    beta: float,
    seed: int,
) -> IsingModel:
    """Random model: each off-diagonal coupling is zero with probability
    `sparsity`, otherwise N(0, coupling_scale^2); fields are N(0, field_scale^2).
    """
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError(f"sparsity must be in [0, 1], got {sparsity}")
    rng = np.random.default_rng(seed)
    h = rng.normal(0.0, field_scale, size=n)
    iu = np.triu_indices(n, k=1)
    vals = rng.normal(0.0, coupling_scale, size=len(iu[0]))
    vals[rng.random(len(vals)) < sparsity] = 0.0
    u = np.zeros((n, n))
    u[iu] = vals
    u += u.T
    meta = {
        "seed": int(seed),
        "sparsity": float(sparsity),
        "coupling_scale": float(coupling_scale),
        "field_scale": float(field_scale),
    }
    return IsingModel(n=n, h=h, u=u, beta=beta, meta=meta)
