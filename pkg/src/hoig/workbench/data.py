"""Tabular datasets: synthetic generation and strict CSV ingestion."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DataError
from ..models.polynomial import synthetic_polynomial


@dataclass(frozen=True, eq=False)
class Dataset:
    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    target_name: str = "y"
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        names = tuple(self.feature_names)
        if len(X) < 1:
            raise DataError("dataset has no rows")
        if X.shape[0] != y.size:
            raise DataError(f"{X.shape[0]} input rows but {y.size} targets")
        if X.shape[1] != len(names):
            raise DataError(f"{X.shape[1]} columns but {len(names)} feature names")
        if len(set(names)) != len(names) or self.target_name in names:
            raise DataError(f"column names must be unique: {names + (self.target_name,)}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains NaN or infinite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def with_stats(self) -> "Dataset":
        std = self.X.std(axis=0)
        return Dataset(self.feature_names, self.X, self.y, self.target_name,
                       self.X.mean(axis=0), np.where(std > 0, std, 1.0), dict(self.report))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(self.feature_names) + [self.target_name])
        for row, target in zip(self.X, self.y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])
        return buf.getvalue()


@dataclass(frozen=True)
class SyntheticConfig:
    n_samples: int = 500
    noise_scale: float = 0.1
    seed: int = 0
    dim: int = 8

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be an unsigned integer")
        if self.dim != 8:
            raise ValueError("the synthetic generator is defined for exactly 8 features")


def generate_synthetic(cfg: SyntheticConfig = SyntheticConfig(), X=None) -> Dataset:
    """Uniform inputs on [0, 1]^8, targets from the interaction polynomial plus Gaussian noise.

    ``X`` overrides the sampled inputs; the noise draw is unchanged.
    """
    rng = np.random.default_rng(cfg.seed)
    sampled = rng.uniform(0.0, 1.0, size=(cfg.n_samples, cfg.dim))
    noise = rng.standard_normal(cfg.n_samples)
    if X is not None:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape != sampled.shape:
            raise DataError(f"forced inputs must have shape {sampled.shape}, got {X.shape}")
        sampled = X
    truth = synthetic_polynomial()
    y = truth.value_batch(sampled) + cfg.noise_scale * noise
    return Dataset(truth.feature_names, sampled, y, "y",
                   report={"source": "synthetic", "seed": cfg.seed, "noise_scale": cfg.noise_scale})


def _parse(cell: str) -> float:
    v = float(cell)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {cell!r}")
    return v


def load_csv(path, target_column: str = "y", strict: bool = True, drop_columns: Sequence[str] = ()) -> Dataset:
    """Read a header-first CSV of numbers.

    Strict mode rejects the file at the first unparsable row; otherwise bad
    rows are skipped and listed in ``report['skipped_lines']``.  Ragged rows
    are always an error.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    numbered = [(n, r) for n, r in enumerate(rows, start=1) if any(c.strip() for c in r)]
    if not numbered:
        raise DataError(f"{path} is empty")
    _, header = numbered[0]
    header = [h.strip() for h in header]
    if target_column not in header:
        raise DataError(f"target column {target_column!r} not found in header {header}")
    missing = [c for c in drop_columns if c not in header]
    if missing:
        raise DataError(f"columns to drop not found: {missing}")
    keep = [k for k, h in enumerate(header) if h != target_column and h not in drop_columns]
    t_idx = header.index(target_column)
    X, y, skipped = [], [], []
    for line, row in numbered[1:]:
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, found {len(row)}")
        try:
            values = [_parse(c) for c in row]
        except ValueError as exc:
            if strict:
                raise DataError(f"line {line}: {exc}") from exc
            skipped.append(line)
            continue
        X.append([values[k] for k in keep])
        y.append(values[t_idx])
    if not X:
        raise DataError(f"{path} has a header but no usable rows")
    report = {
        "source": str(path),
        "rows": len(X),
        "columns": [header[k] for k in keep],
        "target": target_column,
        "skipped_lines": skipped,
    }
    return Dataset(tuple(header[k] for k in keep), np.array(X), np.array(y), target_column, report=report)
