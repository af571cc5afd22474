"""File formats, dataset binarization, and run configuration.

Model files are JSON ({n, beta, h, u_upper, meta}) with the couplings
stored once per unordered pair in row-major upper-triangular order.
Sample files are plain text, one '0'/'1' string per line.  Run
configuration is a JSON document validated against a fixed key schema
(unknown keys are rejected).
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import IsingModel, SampleBatch
from .gnn import TrainConfig
from .sampler import EnsembleSpec, MCConfig

MODEL_FORMAT_VERSION = 1


class ParseError(ValueError):
    """A data file is malformed; the message carries line/field context."""


@dataclass
class ExpressionMatrix:
    """Continuous observations (rows) by variables (columns), e.g. gene expression."""

    values: np.ndarray
    columns: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be 2-D")
        if len(self.columns) != self.values.shape[1]:
            raise ValueError("column count does not match values")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("column names must be distinct")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")


def binarize(matrix: ExpressionMatrix, q: float = 0.25) -> SampleBatch:
    """Threshold each column at its q-quantile: below -> 0, at or above -> 1.

    Quantiles use linear interpolation between order statistics.  A
    constant column binarizes to all ones (nothing is below its own
    quantile) and triggers a warning.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    if matrix.values.shape[0] < 2:
        raise ValueError("need at least 2 rows to binarize")
    thresholds = np.quantile(matrix.values, q, axis=0, method="linear")
    constant = np.ptp(matrix.values, axis=0) == 0.0
    if constant.any():
        names = [matrix.columns[i] for i in np.nonzero(constant)[0]]
        warnings.warn(f"constant column(s) binarize to all ones: {names}")
    bits = (matrix.values >= thresholds).astype(np.uint8)
    digest = hashlib.sha1(bits.tobytes()).hexdigest()[:12]
    return SampleBatch(samples=bits, batch_id=f"binarized:{digest}")


def read_expression_csv(path: str) -> ExpressionMatrix:
    """CSV with a header row; a non-numeric first column is treated as row IDs."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if len(lines) < 2:
        raise ParseError(f"{path}: expected a header and at least one data row")
    header = lines[0].split(",")
    first_fields = lines[1].split(",")
    try:
        float(first_fields[0])
        skip = 0
    except ValueError:
        skip = 1
    columns = [c.strip() for c in header[skip:]]
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")[skip:]
        if len(fields) != len(columns):
            raise ParseError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return ExpressionMatrix(values=np.array(rows), columns=columns)


def save_model(model: IsingModel, path: str):
    iu = np.triu_indices(model.n, k=1)
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "n": model.n,
        "beta": model.beta,
        "h": model.h.tolist(),
        "u_upper": model.u[iu].tolist(),
        "meta": model.meta,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> IsingModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    version = doc.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ParseError(f"{path}: model format version {version} unsupported "
                         f"(expected {MODEL_FORMAT_VERSION})")
    for key in ("n", "beta", "h", "u_upper"):
        if key not in doc:
            raise ParseError(f"{path}: missing field {key!r}")
    n = doc["n"]
    u_upper = np.asarray(doc["u_upper"], dtype=np.float64)
    if u_upper.shape != (n * (n - 1) // 2,):
        raise ParseError(f"{path}: u_upper has {u_upper.size} entries, "
                         f"expected {n * (n - 1) // 2}")
    u = np.zeros((n, n))
    u[np.triu_indices(n, k=1)] = u_upper
    u += u.T
    return IsingModel(n=n, h=np.asarray(doc["h"]), u=u, beta=doc["beta"],
                      meta=doc.get("meta", {}))


def save_batch(batch: SampleBatch, path: str):
    with open(path, "w") as fh:
        for row in batch.samples:
            fh.write("".join("1" if b else "0" for b in row))
            fh.write("\n")


def load_batch(path: str) -> SampleBatch:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if set(line) - {"0", "1"}:
                raise ParseError(f"{path}:{lineno}: non-binary character in sample line")
            if width is None:
                width = len(line)
            elif len(line) != width:
                raise ParseError(f"{path}:{lineno}: length {len(line)} != {width}")
            rows.append([int(c) for c in line])
    if not rows:
        raise ParseError(f"{path}: no samples found")
    samples = np.array(rows, dtype=np.uint8)
    digest = hashlib.sha1(samples.tobytes()).hexdigest()[:12]
    return SampleBatch(samples=samples, batch_id=f"file:{digest}")


# --- run configuration ---

_SCHEMA = {
    "seed": None,
    "ensemble": {"sizes", "betas", "sparsities", "models_per_cell",
                 "samples_per_model", "coupling_scale", "field_scale"},
    "mc": {"burn_in_sweeps", "thin_sweeps", "convergence_window",
           "convergence_tolerance"},
    "train": {"learning_rate", "max_epochs", "patience", "batch_size",
              "validation_fraction"},
    "eval": {"num_strings", "num_moment_samples"},
}


@dataclass
class RunConfig:
    seed: int = 0
    ensemble: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)

    def mc_config(self, seed: int | None = None) -> MCConfig:
        return MCConfig(seed=self.seed if seed is None else seed, **self.mc)

    def ensemble_spec(self) -> EnsembleSpec:
        if not self.ensemble:
            raise ValueError("config has no 'ensemble' section")
        return EnsembleSpec(mc=self.mc_config(), **self.ensemble)

    def train_config(self, **overrides) -> TrainConfig:
        return TrainConfig(seed=self.seed, **{**self.train, **overrides})


def load_run_config(path: str) -> RunConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    unknown = set(doc) - set(_SCHEMA)
    if unknown:
        raise ParseError(f"{path}: unknown config keys {sorted(unknown)}")
    for section, allowed in _SCHEMA.items():
        if allowed is None or section not in doc:
            continue
        extra = set(doc[section]) - allowed
        if extra:
            raise ParseError(f"{path}: unknown keys in {section!r}: {sorted(extra)}")
    return RunConfig(**doc)
