"""Per-feature quantile binning used by both tree learners."""

from __future__ import annotations

import numpy as np


class Binner:
    """Maps each feature onto at most ``max_bins`` ordered integer codes.

    Bin edges sit at midpoints between adjacent distinct training values, so
    with ``max_bins`` at least the number of distinct values the binned split
    search is identical to exact search over midpoint thresholds. A value
    ``x`` gets code ``#edges < x``; ``code <= b`` is therefore the same
    predicate as ``x <= edges[b]``.
    """

    def __init__(self, max_bins: int = 256):
        if not 2 <= max_bins <= 256:
            raise ValueError("max_bins must lie in [2, 256]")
        self.max_bins = max_bins
        self.edges: list[np.ndarray] = []

    def fit(self, X: np.ndarray) -> "Binner":
        X = np.asarray(X, dtype=np.float64)
        self.edges = [self._edges(X[:, j]) for j in range(X.shape[1])]
        return self

    def _edges(self, x: np.ndarray) -> np.ndarray:
        u, counts = np.unique(x, return_counts=True)
        if len(u) < 2:
            return np.empty(0)
        mids = u[:-1] + (u[1:] - u[:-1]) / 2.0
        if len(u) <= self.max_bins:
            return mids
        cum = np.cumsum(counts)
        targets = np.arange(1, self.max_bins) * (len(x) / self.max_bins)
        pick = np.clip(np.searchsorted(cum, targets, side="left"), 0, len(mids) - 1)
        return np.unique(mids[pick])

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([len(e) + 1 for e in self.edges], dtype=np.int64)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != len(self.edges):
            raise ValueError(f"expected {len(self.edges)} features, got {X.shape[1]}")
        codes = np.empty(X.shape, dtype=np.uint8)
        for j, e in enumerate(self.edges):
            codes[:, j] = np.searchsorted(e, X[:, j], side="left")
        return codes

    def threshold(self, feature: int, split_bin: int) -> float:
        return float(self.edges[feature][split_bin])
