"""Datasets: CSV loading, min-max scaling, jitter, a synthetic generator, folds.

The experiment protocol scales every feature to [0, 1] (recording the
transform so probes and predictions stay in original units), optionally
jitters discrete columns to break exact duplicates, and evaluates fits by
k-fold cross-validated RMSE.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    ConstantFeature,
    DimensionMismatch,
    IOError_,
    KTooLarge,
    MissingValue,
    ParseError,
    ValidationError,
)


@dataclass(frozen=True)
class FeatureScaling:
    """Per-feature affine map x -> (x - mins) / ranges onto [0, 1]."""

    mins: np.ndarray  # (D,)
    ranges: np.ndarray  # (D,)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.mins) / self.ranges

    def invert(self, U: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(U, dtype=float)) * self.ranges + self.mins


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus target, with the scaling transform if one was applied."""

    X: np.ndarray  # (N, D)
    y: np.ndarray  # (N,)
    feature_names: tuple[str, ...]
    target_name: str = "y"
    scaling: FeatureScaling | None = None

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise DimensionMismatch(
                f"X has shape {self.X.shape}, y has shape {self.y.shape}"
            )
        if len(self.feature_names) != self.X.shape[1]:
            raise DimensionMismatch(
                f"{len(self.feature_names)} feature names for {self.X.shape[1]} columns"
            )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def _read_rows(path: str) -> tuple[list[str], list[list[str]]]:
    """Header and non-blank data rows of a CSV file."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IOError_(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r and not (len(r) == 1 and not r[0].strip())]
    if len(rows) < 2:
        raise ValidationError(f"{path}: need a header row and at least one data row")
    return [h.strip() for h in rows[0]], rows[1:]


def _parse_cell(path: str, cell: str, row: int, col: str) -> float:
    cell = cell.strip()
    if not cell:
        raise MissingValue(f"{path}: empty cell at data row {row}, column {col!r}")
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(
            f"{path}: cannot parse {cell!r} at data row {row}, column {col!r}"
        ) from None
    if not math.isfinite(v):
        raise ParseError(f"{path}: non-finite value at data row {row}, column {col!r}")
    return v


def load_csv(path: str, target: str) -> Dataset:
    """Read a headered numeric CSV; all non-target columns become features."""
    header, data_rows = _read_rows(path)
    if target not in header:
        raise ValidationError(
            f"{path}: target column {target!r} not found; available columns: {', '.join(header)}"
        )
    t_idx = header.index(target)
    feature_names = tuple(h for i, h in enumerate(header) if i != t_idx)
    if not feature_names:
        raise ValidationError(f"{path}: no feature columns besides the target")

    X = np.empty((len(data_rows), len(feature_names)))
    y = np.empty(len(data_rows))
    for r, row in enumerate(data_rows, start=1):
        if len(row) != len(header):
            raise ParseError(f"{path}: data row {r} has {len(row)} cells, header has {len(header)}")
        j = 0
        for i, cell in enumerate(row):
            if i == t_idx:
                y[r - 1] = _parse_cell(path, cell, r, target)
            else:
                X[r - 1, j] = _parse_cell(path, cell, r, header[i])
                j += 1
    return Dataset(X=X, y=y, feature_names=feature_names, target_name=target)


def load_probe_csv(path: str, feature_names) -> np.ndarray:
    """Read probe locations, selecting the named columns in training order.

    Extra columns (a target, say, when probing a labeled test file) are
    ignored; missing ones are an error.
    """
    feature_names = list(feature_names)
    header, data_rows = _read_rows(path)
    missing = [n for n in feature_names if n not in header]
    if missing:
        raise ValidationError(
            f"{path}: probe file is missing feature column(s): {', '.join(missing)}"
        )
    idx = [header.index(n) for n in feature_names]
    P = np.empty((len(data_rows), len(idx)))
    for r, row in enumerate(data_rows, start=1):
        if len(row) != len(header):
            raise ParseError(f"{path}: data row {r} has {len(row)} cells, header has {len(header)}")
        for j, i in enumerate(idx):
            P[r - 1, j] = _parse_cell(path, row[i], r, header[i])
    return P


def minmax_scale(dataset: Dataset) -> Dataset:
    """Scale every feature to span exactly [0, 1], recording the transform."""
    mins = dataset.X.min(axis=0)
    ranges = dataset.X.max(axis=0) - mins
    for j, r in enumerate(ranges):
        if r <= 0.0:
            raise ConstantFeature(
                f"feature {dataset.feature_names[j]!r} is constant and cannot be scaled"
            )
    scaling = FeatureScaling(mins=mins, ranges=ranges)
    return replace(dataset, X=scaling.apply(dataset.X), scaling=scaling)


def add_jitter(dataset: Dataset, columns, magnitude: float = 1e-6, seed: int = 0) -> Dataset:
    """Add uniform +-magnitude * (feature range) noise to the named columns.

    Used to break exact ties in discrete features before fitting; the draw is
    deterministic per seed.
    """
    idx = []
    for c in columns:
        if isinstance(c, str):
            if c not in dataset.feature_names:
                raise ValidationError(f"unknown feature {c!r}; have {dataset.feature_names}")
            idx.append(dataset.feature_names.index(c))
        else:
            if not 0 <= int(c) < dataset.dim:
                raise ValidationError(f"feature index {c} out of range for {dataset.dim} columns")
            idx.append(int(c))
    rng = np.random.default_rng(seed)
    X = dataset.X.copy()
    for j in idx:
        span = float(X[:, j].max() - X[:, j].min())
        X[:, j] += rng.uniform(-magnitude * span, magnitude * span, size=dataset.n)
    return replace(dataset, X=X)


# --- synthetic benchmark ---------------------------------------------------


def higdon_truth(x) -> np.ndarray:
    """Two-frequency sinusoid sin(2 pi x / 10) + 0.2 sin(2 pi x / 2.5)."""
    x = np.asarray(x, dtype=float)
    return np.sin(2.0 * np.pi * x / 10.0) + 0.2 * np.sin(2.0 * np.pi * x / 2.5)


def higdon(n: int, sigma_y: float, seed: int = 0, x_range: tuple[float, float] = (0.0, 10.0)) -> Dataset:
    """n equispaced points on x_range with Gaussian noise of sd sigma_y."""
    if n < 2:
        raise ValidationError(f"need at least 2 points, got {n}")
    if sigma_y < 0:
        raise ValidationError(f"sigma_y must be >= 0, got {sigma_y}")
    x = np.linspace(x_range[0], x_range[1], n)
    rng = np.random.default_rng(seed)
    y = higdon_truth(x) + sigma_y * rng.standard_normal(n)
    return Dataset(X=x[:, None], y=y, feature_names=("x",), target_name="y")


# --- evaluation -------------------------------------------------------------


def kfold(n: int, k: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffle 0..n-1 and deal round-robin into k folds; returns (train, test) pairs."""
    if k < 2:
        raise ValidationError(f"need at least 2 folds, got {k}")
    if k > n:
        raise KTooLarge(f"{k} folds for {n} datapoints")
    order = np.random.default_rng(seed).permutation(n)
    folds = [np.sort(order[j::k]) for j in range(k)]
    out = []
    for j in range(k):
        test = folds[j]
        train = np.sort(np.concatenate([folds[i] for i in range(k) if i != j]))
        out.append((train, test))
    return out


def rmse(predicted, actual) -> float:
    """Root mean squared error between two equal-length vectors."""
    p = np.asarray(predicted, dtype=float).reshape(-1)
    a = np.asarray(actual, dtype=float).reshape(-1)
    if p.shape != a.shape:
        raise DimensionMismatch(f"length mismatch: {p.shape[0]} vs {a.shape[0]}")
    if p.size == 0:
        raise ValidationError("rmse of empty vectors")
    return float(np.sqrt(np.mean((p - a) ** 2)))
