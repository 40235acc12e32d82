"""Standard scaling, stratified holdout splits and stratified k-fold plans."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .flow_data import FlowTable

STD_FLOOR = 1e-12


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Scaler:
    feature_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, feature_names: Sequence[str] | None = None) -> "Scaler":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 2:
            raise PreprocessError("scaler needs at least 2 training rows")
        mean = X.mean(axis=0)
        # population (1/N) deviation
        std = X.std(axis=0)
        std = np.where(std < STD_FLOOR, 1.0, std)
        names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(X.shape[1]))
        return cls(names, mean, std)

    def transform_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != len(self.mean):
            raise PreprocessError(f"expected {len(self.mean)} features, got {X.shape[1]}")
        return (X - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"feature_names": list(self.feature_names), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(tuple(d["feature_names"]), np.asarray(d["mean"], float), np.asarray(d["std"], float))


def fit_scaler(table: FlowTable, rows=None, features: Sequence[str] | None = None) -> Scaler:
    """Fit per-feature mean/std on ``rows`` of ``table`` only."""
    features = table.feature_names if features is None else list(features)
    X = table.matrix(features)
    if rows is not None:
        X = X[np.asarray(rows)]
    return Scaler.fit(X, features)


def transform(scaler: Scaler, table: FlowTable) -> FlowTable:
    missing = [f for f in scaler.feature_names if f not in table.numeric]
    if missing:
        raise PreprocessError(f"feature-set mismatch, table lacks {missing}")
    Z = scaler.transform_matrix(table.matrix(scaler.feature_names))
    numeric = dict(table.numeric)
    for j, f in enumerate(scaler.feature_names):
        numeric[f] = Z[:, j]
    return table.with_numeric(numeric)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    stratify_on: str = "CategoryLabel"
    seed: int = 0


def stratified_holdout(y: np.ndarray, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled split; each class contributes round(fraction * count) training rows."""
    if not 0.0 < train_fraction < 1.0:
        raise PreprocessError("train_fraction must lie strictly between 0 and 1")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train, val = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < 2:
            raise PreprocessError(f"class {cls!r} has fewer than 2 rows")
        idx = rng.permutation(idx)
        n_train = int(np.clip(np.floor(train_fraction * len(idx) + 0.5), 1, len(idx) - 1))
        train.append(idx[:n_train])
        val.append(idx[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def holdout_split(table: FlowTable, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    return stratified_holdout(table.label(spec.stratify_on), spec.train_fraction, spec.seed)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignment: np.ndarray
    stratified: bool
    seed: int

    def fold(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.flatnonzero(self.assignment == i)
        train = np.flatnonzero(self.assignment != i)
        return train, test

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for i in range(self.k):
            yield self.fold(i)


def stratified_folds(y: np.ndarray, k: int, seed: int) -> FoldPlan:
    """Round-robin fold assignment over class-grouped shuffled rows.

    Within each class fold sizes differ by at most one, and so do the
    overall fold sizes.
    """
    if k < 2:
        raise PreprocessError("k must be at least 2")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    order = []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            raise PreprocessError(f"class {cls!r} has {len(idx)} rows, fewer than k={k}")
        order.append(rng.permutation(idx))
    order = np.concatenate(order)
    assignment = np.empty(len(y), dtype=np.int64)
    assignment[order] = np.arange(len(order)) % k
    return FoldPlan(k, assignment, True, seed)


def kfold(table: FlowTable, k: int = 5, stratify_on: str = "CategoryLabel", seed: int = 0) -> FoldPlan:
    return stratified_folds(table.label(stratify_on), k, seed)
