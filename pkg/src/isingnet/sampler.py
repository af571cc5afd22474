"""Metropolis single-spin-flip sampling of Ising models.

One sweep performs n single-spin updates, each at a uniformly random
site (random-scan Metropolis).  A flip with energy change dE is accepted
when dE <= 0 or exp(-beta*dE) > r for a uniform draw r.  Burn-in stops
early once the windowed mean energy stops moving; chains that never
settle (high temperature) run to the burn-in cap and are flagged
converged=False instead of erroring.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .core import IsingModel, SampleBatch, DimensionError, energy, random_model

ENERGY_RECHECK_SWEEPS = 1000  # full energy recompute cadence, bounds cache drift


@dataclass
class MCConfig:
    burn_in_sweeps: int = 500
    thin_sweeps: int = 1
    convergence_window: int = 50
    convergence_tolerance: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.burn_in_sweeps < 0:
            raise ValueError("burn_in_sweeps must be non-negative")
        if self.thin_sweeps < 1:
            raise ValueError("thin_sweeps must be positive")
        if self.convergence_window < 1:
            raise ValueError("convergence_window must be positive")
        if self.convergence_tolerance <= 0:
            raise ValueError("convergence_tolerance must be positive")


@dataclass
class ChainState:
    x: np.ndarray  # float64 0/1 vector, mutated in place by sweeps
    energy: float
    sweep_count: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)


def init_chain(model: IsingModel, seed: int) -> ChainState:
    """Fresh chain at a uniform random configuration."""
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, size=model.n).astype(np.float64)
    return ChainState(x=x, energy=energy(model, x), rng=rng)


def delta_energy(model: IsingModel, x, i: int) -> float:
    """Energy change from flipping bit i: (1 - 2*x_i) * (h_i + sum_j u_ij x_j)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n,):
        raise DimensionError(f"spin string has shape {x.shape}, expected ({model.n},)")
    if not 0 <= i < model.n:
        raise IndexError(f"site {i} out of range for n = {model.n}")
    return float((1.0 - 2.0 * x[i]) * (model.h[i] + model.u[i] @ x))


def metropolis_accept(delta_e: float, beta: float, uniform_draw: float) -> bool:
    """Accept iff dE <= 0 or exp(-beta*dE) > uniform_draw."""
    if not 0.0 <= uniform_draw < 1.0:
        raise ValueError(f"uniform_draw must be in [0, 1), got {uniform_draw}")
    return delta_e <= 0.0 or math.exp(-beta * delta_e) > uniform_draw


@njit(cache=True)
def _run_sweeps_kernel(h, u, beta, x, sites, draws, e0, energy_trace):
    """Run len(energy_trace) sweeps in place; returns the final cached energy."""
    n = x.shape[0]
    e = e0
    idx = 0
    for s in range(energy_trace.shape[0]):
        for _ in range(n):
            i = sites[idx]
            local = h[i]
            for j in range(n):
                local += u[i, j] * x[j]
            de = (1.0 - 2.0 * x[i]) * local
            if de <= 0.0 or np.exp(-beta * de) > draws[idx]:
                x[i] = 1.0 - x[i]
                e += de
            idx += 1
        energy_trace[s] = e
    return e


def run_sweeps(model: IsingModel, state: ChainState, num_sweeps: int) -> np.ndarray:
    """Advance the chain by num_sweeps sweeps; returns the per-sweep energy trace."""
    trace = np.empty(num_sweeps)
    done = 0
    while done < num_sweeps:
        block = min(num_sweeps - done, ENERGY_RECHECK_SWEEPS)
        sites = state.rng.integers(0, model.n, size=block * model.n)
        draws = state.rng.random(block * model.n)
        state.energy = _run_sweeps_kernel(
            model.h, model.u, model.beta, state.x, sites, draws,
            state.energy, trace[done:done + block],
        )
        done += block
        state.sweep_count += block
        if state.sweep_count % ENERGY_RECHECK_SWEEPS == 0:
            state.energy = energy(model, state.x)
    return trace


def sweep(model: IsingModel, state: ChainState) -> ChainState:
    """One sweep = n random-site Metropolis updates; mutates and returns state."""
    run_sweeps(model, state, 1)
    return state


def _burn_in(model: IsingModel, state: ChainState, config: MCConfig) -> bool:
    """Burn in with a windowed mean-energy stall test; True if converged."""
    window = config.convergence_window
    prev_mean = None
    done = 0
    while done < config.burn_in_sweeps:
        block = min(window, config.burn_in_sweeps - done)
        trace = run_sweeps(model, state, block)
        done += block
        if block < window:
            break
        mean = float(np.mean(trace))
        if prev_mean is not None:
            if abs(mean - prev_mean) < config.convergence_tolerance * (abs(prev_mean) + 1.0):
                return True
        prev_mean = mean
    return False


def sample_chain(model: IsingModel, config: MCConfig, num_samples: int) -> SampleBatch:
    """Draw num_samples configurations after burn-in, thin_sweeps apart."""
    if num_samples < 1:
        raise ValueError("num_samples must be positive")
    state = init_chain(model, config.seed)
    converged = _burn_in(model, state, config)
    out = np.empty((num_samples, model.n), dtype=np.uint8)
    for k in range(num_samples):
        run_sweeps(model, state, config.thin_sweeps)
        out[k] = state.x
    batch_id = f"mc:{model.digest()}:seed={config.seed}"
    return SampleBatch(
        samples=out,
        model_id=model.digest(),
        batch_id=batch_id,
        converged=converged,
    )


@dataclass
class EnsembleSpec:
    """Cartesian grid of model parameters for training-data generation."""

    sizes: list
    betas: list
    sparsities: list
    models_per_cell: int = 1
    samples_per_model: int = 1000
    coupling_scale: float = 1.0
    field_scale: float = 1.0
    mc: MCConfig = field(default_factory=MCConfig)


def generate_training_ensemble(spec: EnsembleSpec, seed: int) -> list[tuple[IsingModel, SampleBatch]]:
    """Instantiate every grid cell via random_model + sample_chain.

    All randomness is derived from `seed` through a spawned seed sequence,
    so disjoint seeds give disjoint model sets and repeat calls are
    deterministic.
    """
    cells = list(itertools.product(spec.sizes, spec.betas, spec.sparsities,
                                   range(spec.models_per_cell)))
    children = np.random.SeedSequence(seed).spawn(2 * len(cells))
    pairs = []
    for k, (n, beta, sparsity, _) in enumerate(cells):
        model_seed = int(children[2 * k].generate_state(1)[0])
        chain_seed = int(children[2 * k + 1].generate_state(1)[0])
        model = random_model(
            n=n, sparsity=sparsity,
            coupling_scale=spec.coupling_scale, field_scale=spec.field_scale,
            beta=beta, seed=model_seed,
        )
        batch = sample_chain(model, replace(spec.mc, seed=chain_seed),
                             spec.samples_per_model)
        pairs.append((model, batch))
    return pairs
