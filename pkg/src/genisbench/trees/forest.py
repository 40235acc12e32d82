"""Gini random forest."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .base import TreeBuilder, TreeEnsembleModel, TreeError
from .binning import Binner


@dataclass(frozen=True)
class ForestConfig:
    n_estimators: int = 100
    criterion: str = "gini"
    max_features: str | int | float | None = "sqrt"
    max_depth: int = 16
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    bootstrap: bool = True
    max_bins: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.criterion != "gini":
            raise TreeError("only the gini criterion is supported")
        if min(self.n_estimators, self.max_depth, self.min_samples_leaf) < 1:
            raise TreeError("counts must be positive")

    def n_split_features(self, d: int) -> int:
        mf = self.max_features
        if mf is None:
            k = d
        elif mf == "sqrt":
            k = int(math.sqrt(d))
        elif isinstance(mf, float):
            k = int(mf * d)
        else:
            k = int(mf)
        return int(min(max(k, 1), d))


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def best_gini_split(codes: np.ndarray, y: np.ndarray, n_classes: int, n_bins: np.ndarray, min_samples_leaf: int = 1):
    """Best bin-boundary split of ``codes`` (rows x candidate features).

    Returns ``(column, split_bin, impurity_decrease)`` or None when no
    boundary leaves ``min_samples_leaf`` rows on each side. The decrease is
    the weighted one, ``n*G(parent) - nl*G(left) - nr*G(right)``.
    """
    n, m = codes.shape
    B = int(n_bins.max())
    K = n_classes
    flat = (codes.astype(np.int64) + np.arange(m) * B) * K + y[:, None]
    hist = np.bincount(flat.ravel(), minlength=m * B * K).reshape(m, B, K).astype(np.float64)
    cl = np.cumsum(hist, axis=1)[:, :-1, :]
    total = np.bincount(y, minlength=K).astype(np.float64)
    cr = total - cl
    nl = cl.sum(axis=2)
    nr = n - nl
    valid = (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
    valid &= np.arange(B - 1)[None, :] < (n_bins[:, None] - 1)
    # one candidate per distinct partition: the left side must end on an occupied bin
    valid &= hist[:, :-1, :].sum(axis=2) > 0
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        score = (cl * cl).sum(axis=2) / nl + (cr * cr).sum(axis=2) / nr
    score = np.where(valid, score, -np.inf)
    j, b = np.unravel_index(np.argmax(score), score.shape)
    decrease = score[j, b] - float((total * total).sum()) / n
    return int(j), int(b), float(decrease)


def _grow_tree(codes, y, rows, n_classes, n_bins, binner, cfg: ForestConfig, rng):
    d = codes.shape[1]
    mtry = cfg.n_split_features(d)
    builder = TreeBuilder(n_classes)

    def leaf(r, depth):
        counts = np.bincount(y[r], minlength=n_classes)
        return builder.add_leaf(counts / len(r), len(r), depth), counts

    root, counts = leaf(rows, 0)
    stack = [(root, rows, 0, counts)]
    while stack:
        node, r, depth, counts = stack.pop()
        n = len(r)
        if depth >= cfg.max_depth or n < cfg.min_samples_split or n < 2 * cfg.min_samples_leaf or counts.max() == n:
            continue
        order = rng.permutation(d)
        yr = y[r]
        found = None
        # keep drawing feature batches until one yields a valid partition
        for start in range(0, d, mtry):
            F = order[start : start + mtry]
            res = best_gini_split(codes[np.ix_(r, F)], yr, n_classes, n_bins[F], cfg.min_samples_leaf)
            if res is not None:
                found = (int(F[res[0]]), res[1], res[2])
                break
        if found is None:
            continue
        f, b, decrease = found
        go_left = codes[r, f] <= b
        rl, rr = r[go_left], r[~go_left]
        left, cl = leaf(rl, depth + 1)
        right, cr = leaf(rr, depth + 1)
        builder.make_split(node, f, b, binner.threshold(f, b), decrease, left, right)
        stack.append((right, rr, depth + 1, cr))
        stack.append((left, rl, depth + 1, cl))
    return builder.build()


def fit_random_forest(X, y, config: ForestConfig = ForestConfig(), feature_names=None, n_classes: int | None = None) -> TreeEnsembleModel:
    """Bagged Gini trees; predictions average per-tree leaf class distributions.

    ``y`` holds integer class indices ``0..n_classes-1``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise TreeError("empty input")
    if len(y) != len(X):
        raise TreeError("X and y lengths differ")
    if not np.all(np.isfinite(X)):
        raise TreeError("X must be finite")
    n_classes = int(n_classes or y.max() + 1)
    if len(np.unique(y)) < 2:
        raise TreeError("need at least two classes")
    binner = Binner(config.max_bins).fit(X)
    codes = binner.transform(X)
    n_bins = binner.n_bins
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_estimators)
    trees = []
    n = len(X)
    for ss in seeds:
        rng = np.random.default_rng(ss)
        rows = rng.integers(0, n, n) if config.bootstrap else np.arange(n)
        trees.append(_grow_tree(codes, y, rows, n_classes, n_bins, binner, config, rng))
    return TreeEnsembleModel(
        kind="forest",
        trees=trees,
        n_classes=n_classes,
        n_features=X.shape[1],
        tree_output=np.full(len(trees), -1, dtype=np.int64),
        base_score=np.zeros(n_classes),
        config={"model": "rf", **asdict(config)},
        feature_names=tuple(feature_names) if feature_names is not None else (),
    )
