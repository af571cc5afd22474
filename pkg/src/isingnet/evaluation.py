"""Goodness-of-fit machinery: parameter errors, moments up to third order,
partition-function comparison, and Boltzmann scatter/histogram series.

Moment labels follow the (1)/(0) convention: (1) means moments of the
raw bits, (0) means moments of the complemented bits (x -> 1-x).
Connected second moments are identical under complementation; third
moments flip sign.

Evaluation must never reuse the samples a model was inferred from:
operations that take fresh batches assert the batch tag differs from the
model's recorded source batch.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    ENUMERATION_LIMIT,
    IsingModel,
    SampleBatch,
    log_boltzmann_probs,
    log_partition_exact,
    log_partition_sampled,
)
from .sampler import MCConfig, sample_chain

MAX_TRIPLES = 5000
MOMENT_LABELS = ("m1(1)", "m2(1)", "m2(0)", "m3(1)", "m3(0)")


class EvaluationLeakError(RuntimeError):
    """An evaluation batch coincides with the batch used for inference."""


def pearson_r(a: np.ndarray, b: np.ndarray) -> float | None:
    """Pearson correlation; None (unavailable) when either side has zero variance."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("inputs must have equal length")
    da = a - a.mean()
    db = b - b.mean()
    # a numerically constant series (variance at rounding-noise level) has
    # no defined correlation; use a relative threshold, not an exact zero
    def degenerate(d, x):
        return np.sqrt(d @ d / len(d)) <= 1e-12 * (np.abs(x).max() + 1.0)
    if degenerate(da, a) or degenerate(db, b):
        return None
    denom = np.sqrt((da @ da) * (db @ db))
    return float(np.clip((da @ db) / denom, -1.0, 1.0))


def param_mse_and_r(pred: IsingModel, truth: IsingModel) -> tuple[float, float | None]:
    """MSE and Pearson r over concatenated effective fields and unique couplings."""
    if pred.n != truth.n:
        raise ValueError(f"size mismatch: {pred.n} vs {truth.n}")
    pv, tv = pred.param_vector(), truth.param_vector()
    mse = float(np.mean((pv - tv) ** 2))
    return mse, pearson_r(pv, tv)


def connected_moments(batch_or_samples, weights: np.ndarray | None = None):
    """First moments and connected second moments (full symmetric matrix).

    With `weights` (a probability vector over the rows) the moments are
    computed under that distribution instead of the empirical one, which
    turns an enumerated state table into exact model moments.
    """
    samples = batch_or_samples.samples if isinstance(batch_or_samples, SampleBatch) \
        else np.asarray(batch_or_samples)
    xs = samples.astype(np.float64)
    if xs.shape[0] == 0:
        raise ValueError("empty batch")
    if weights is None:
        if xs.shape[0] < 2:
            raise ValueError("need at least 2 samples")
        weights = np.full(xs.shape[0], 1.0 / xs.shape[0])
    else:
        weights = np.asarray(weights, dtype=np.float64)
    m1 = weights @ xs
    second = xs.T @ (xs * weights[:, None])
    return m1, second - np.outer(m1, m1)


def default_triples(n: int, seed: int, limit: int = MAX_TRIPLES) -> list[tuple[int, int, int]]:
    """Seeded sample of site triples, all of them when C(n,3) <= limit."""
    all_triples = list(itertools.combinations(range(n), 3))
    if len(all_triples) <= limit:
        return all_triples
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(all_triples), size=limit, replace=False)
    return [all_triples[i] for i in sorted(idx)]


def coskewness(batch_or_samples, triples, weights: np.ndarray | None = None):
    """Normalized third central cross-moment per triple.

    Returns (values, reasons): values has NaN where a triple is
    unavailable, and reasons maps the triple to an explanation (a site
    with zero standard deviation).
    """
    samples = batch_or_samples.samples if isinstance(batch_or_samples, SampleBatch) \
        else np.asarray(batch_or_samples)
    xs = samples.astype(np.float64)
    if weights is None:
        weights = np.full(xs.shape[0], 1.0 / xs.shape[0])
    else:
        weights = np.asarray(weights, dtype=np.float64)
    mean = weights @ xs
    centered = xs - mean
    sigma = np.sqrt(weights @ centered ** 2)
    values = np.full(len(triples), np.nan)
    reasons = {}
    for t, (i, j, k) in enumerate(triples):
        if sigma[i] == 0.0 or sigma[j] == 0.0 or sigma[k] == 0.0:
            zero = [s for s in (i, j, k) if sigma[s] == 0.0]
            reasons[(i, j, k)] = f"zero standard deviation at site(s) {zero}"
            continue
        num = weights @ (centered[:, i] * centered[:, j] * centered[:, k])
        values[t] = num / (sigma[i] * sigma[j] * sigma[k])
    return values, reasons


def _labeled_moments(samples: np.ndarray, labels, triples):
    """Flat value vector per label, on raw or complemented bits as the label asks."""
    out = {}
    raw = samples.astype(np.float64)
    comp = 1.0 - raw
    iu = np.triu_indices(raw.shape[1], k=1)
    for label in labels:
        if label not in MOMENT_LABELS:
            raise ValueError(f"unknown moment label {label!r}")
        xs = raw if label.endswith("(1)") else comp
        if label.startswith("m1"):
            out[label] = xs.mean(axis=0)
        elif label.startswith("m2"):
            _, c2 = connected_moments(xs)
            out[label] = c2[iu]
        else:
            vals, _ = coskewness(xs, triples)
            out[label] = vals
    return out


def _check_fresh(model: IsingModel, batch: SampleBatch, what: str):
    source = model.meta.get("source_batch_id")
    if source is not None and batch.batch_id == source:
        raise EvaluationLeakError(
            f"{what} would reuse inference batch {source!r}; draw a fresh batch"
        )


def moment_mse(
    model: IsingModel,
    reference,
    labels=MOMENT_LABELS,
    num_samples: int = 5000,
    seed: int = 0,
    mc: MCConfig | None = None,
) -> dict:
    """Per-label MSE between moments of `model` and of `reference`.

    The model side always comes from a freshly drawn Metropolis batch
    (never the inference inputs).  `reference` is either held-out data
    (a SampleBatch) or a ground-truth IsingModel, which is likewise
    sampled fresh with an independent seed.
    """
    mc = mc or MCConfig()
    model_batch = sample_chain(model, replace(mc, seed=seed), num_samples)
    _check_fresh(model, model_batch, "moment_mse")
    if isinstance(reference, SampleBatch):
        _check_fresh(model, reference, "moment_mse")
        ref_samples = reference.samples
    else:
        ref_batch = sample_chain(reference, replace(mc, seed=seed + 1), num_samples)
        ref_samples = ref_batch.samples
    triples = default_triples(model.n, seed=seed)
    a = _labeled_moments(model_batch.samples, labels, triples)
    b = _labeled_moments(ref_samples, labels, triples)
    result = {}
    for label in labels:
        va, vb = a[label], b[label]
        ok = ~(np.isnan(va) | np.isnan(vb))
        result[label] = float(np.mean((va[ok] - vb[ok]) ** 2)) if ok.any() else float("nan")
    return result


def _log_z(model: IsingModel, seed: int, num_draws: int = 100_000):
    """Exact log Z when enumerable, else the uniform-sampling estimate."""
    if model.n <= ENUMERATION_LIMIT:
        return log_partition_exact(model), True
    return log_partition_sampled(model, num_draws, seed), False


def boltzmann_scatter(
    pred: IsingModel,
    truth,
    num_strings: int,
    seed: int,
):
    """Paired log-probabilities of fresh random bitstrings under two models.

    With an IsingModel truth the strings are uniform random; with a
    SampleBatch truth the strings are resampled observed rows and the
    truth-side value is their empirical log-frequency.  Returns
    (pairs (num_strings, 2), pearson_r), r being None when one axis is
    degenerate.
    """
    rng = np.random.default_rng(seed)
    if isinstance(truth, SampleBatch):
        _check_fresh(pred, truth, "boltzmann_scatter")
        if truth.n != pred.n:
            raise ValueError("size mismatch between pred and truth")
        rows = rng.integers(0, truth.num_samples, size=num_strings)
        xs = truth.samples[rows].astype(np.float64)
        powers = np.uint64(1) << np.arange(truth.n, dtype=np.uint64)
        codes = truth.samples.astype(np.uint64) @ powers
        uniq, counts = np.unique(codes, return_counts=True)
        freq = dict(zip(uniq.tolist(), (counts / truth.num_samples).tolist()))
        truth_lp = np.array([np.log(freq[int(c)]) for c in codes[rows]])
    else:
        if truth.n != pred.n:
            raise ValueError("size mismatch between pred and truth")
        xs = rng.integers(0, 2, size=(num_strings, pred.n)).astype(np.float64)
        lz_truth, _ = _log_z(truth, seed=seed + 1)
        truth_lp = log_boltzmann_probs(truth, xs, lz_truth)
    lz_pred, _ = _log_z(pred, seed=seed + 2)
    pred_lp = log_boltzmann_probs(pred, xs, lz_pred)
    pairs = np.stack([truth_lp, pred_lp], axis=1)
    return pairs, pearson_r(truth_lp, pred_lp)


def log_boltzmann_histogram(
    model: IsingModel,
    observed: SampleBatch,
    num_model_draws: int,
    seed: int = 0,
    mc: MCConfig | None = None,
):
    """-log p(x) under `model` for observed rows and for model-drawn strings.

    Returns {"observed": series, "model": series, "bin_edges": edges}
    with Freedman-Diaconis edges over the pooled series, ready for
    external histogram plotting.
    """
    if num_model_draws < 1:
        raise ValueError("num_model_draws must be positive")
    log_z, _ = _log_z(model, seed=seed)
    obs_series = -log_boltzmann_probs(model, observed.samples.astype(np.float64), log_z)
    draws = sample_chain(model, replace(mc or MCConfig(), seed=seed), num_model_draws)
    model_series = -log_boltzmann_probs(model, draws.samples.astype(np.float64), log_z)
    pooled = np.concatenate([obs_series, model_series])
    edges = np.histogram_bin_edges(pooled, bins="fd")
    return {"observed": obs_series, "model": model_series, "bin_edges": edges}


@dataclass
class EvalReport:
    param_mse: float | None = None
    param_pearson_r: float | None = None
    log_z_pred: float | None = None
    log_z_truth: float | None = None
    boltzmann_pearson_r: float | None = None
    moment_mse: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "param_mse": self.param_mse,
            "param_pearson_r": self.param_pearson_r,
            "log_z_pred": self.log_z_pred,
            "log_z_truth": self.log_z_truth,
            "boltzmann_pearson_r": self.boltzmann_pearson_r,
            "moment_mse": self.moment_mse,
            "metadata": self.metadata,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def save(self, path: str):
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")


def evaluate(
    pred: IsingModel,
    truth,
    num_strings: int = 2000,
    num_moment_samples: int = 5000,
    seed: int = 0,
    mc: MCConfig | None = None,
) -> EvalReport:
    """Full comparison of a predicted model against ground truth or data."""
    report = EvalReport(metadata={
        "seed": seed,
        "num_strings": num_strings,
        "num_moment_samples": num_moment_samples,
    })
    if isinstance(truth, IsingModel):
        report.param_mse, report.param_pearson_r = param_mse_and_r(pred, truth)
        report.log_z_truth = _log_z(truth, seed=seed + 1)[0]
    report.log_z_pred = _log_z(pred, seed=seed + 2)[0]
    _, report.boltzmann_pearson_r = boltzmann_scatter(pred, truth, num_strings, seed)
    report.moment_mse = moment_mse(
        pred, truth, num_samples=num_moment_samples, seed=seed + 3, mc=mc)
    return report


def write_series_csv(path: str, series: dict):
    """Labeled series as CSV rows (series, value), deterministic order."""
    with open(path, "w") as fh:
        fh.write("series,value\n")
        for name in sorted(series):
            for v in np.asarray(series[name]).ravel():
                fh.write(f"{name},{float(v)!r}\n")


def write_scatter_csv(path: str, pairs: np.ndarray):
    with open(path, "w") as fh:
        fh.write("x,y\n")
        for x, y in pairs:
            fh.write(f"{float(x)!r},{float(y)!r}\n")
