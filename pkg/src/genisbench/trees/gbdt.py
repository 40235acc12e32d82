"""Second-order gradient boosting with histogram split finding and optional GOSS."""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from .base import TreeBuilder, TreeEnsembleModel, TreeError, _sigmoid, _softmax
from .binning import Binner

_NO_LIMIT = 1 << 30


@dataclass(frozen=True)
class GbdtConfig:
    """Boosting hyperparameters.

    ``learning_rate``, ``max_depth`` and ``min_samples_leaf`` default per
    mode: histogram mode grows depth-wise (lr 0.2, depth 8, leaf 1), goss
    mode grows leaf-wise up to ``max_leaves`` (lr 0.05, leaf 2).
    """

    mode: str = "histogram"
    n_estimators: int = 100
    learning_rate: float | None = None
    min_loss_reduction: float = 0.01
    max_depth: int | None = None
    max_leaves: int = 15
    min_samples_leaf: int | None = None
    feature_subsample: float = 0.8
    n_histogram_bins: int = 256
    l2_regularization: float = 1.0
    min_child_hessian: float = 1e-3
    goss_a: float = 0.2
    goss_b: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("histogram", "goss"):
            raise TreeError(f"unknown boosting mode {self.mode!r}")
        hist = self.mode == "histogram"
        if self.learning_rate is None:
            object.__setattr__(self, "learning_rate", 0.2 if hist else 0.05)
        if self.max_depth is None:
            object.__setattr__(self, "max_depth", 8 if hist else _NO_LIMIT)
        if self.min_samples_leaf is None:
            object.__setattr__(self, "min_samples_leaf", 1 if hist else 2)
        if self.learning_rate <= 0:
            raise TreeError("learning_rate must be positive")
        if not (0 < self.goss_a and 0 < self.goss_b and self.goss_a + self.goss_b <= 1):
            raise TreeError("need goss_a, goss_b > 0 and goss_a + goss_b <= 1")
        if self.n_histogram_bins < 2:
            raise TreeError("n_histogram_bins must be at least 2")
        if not 0 < self.feature_subsample <= 1:
            raise TreeError("feature_subsample must lie in (0, 1]")

    @property
    def leaf_wise(self) -> bool:
        return self.mode == "goss"

    @classmethod
    def histogram(cls, **kw) -> "GbdtConfig":
        return cls(mode="histogram", **kw)

    @classmethod
    def goss(cls, **kw) -> "GbdtConfig":
        return cls(mode="goss", **kw)


def goss_amplification(a: float, b: float) -> float:
    return (1.0 - a) / b


def goss_sample(grad_magnitude: np.ndarray, a: float, b: float, rng: np.random.Generator):
    """Keep the top ``a`` fraction by gradient magnitude, sample ``b`` of the rest.

    Returns ``(rows, weights)``; sampled small-gradient rows carry weight
    ``(1 - a) / b``, retained large-gradient rows weight 1.
    """
    n = len(grad_magnitude)
    n_top = int(round(a * n))
    n_rand = min(int(round(b * n)), n - n_top)
    order = np.argsort(-grad_magnitude, kind="stable")
    top, rest = order[:n_top], order[n_top:]
    sampled = rng.choice(rest, size=n_rand, replace=False) if n_rand > 0 else rest[:0]
    rows = np.concatenate([top, sampled])
    weights = np.concatenate([np.ones(n_top), np.full(len(sampled), goss_amplification(a, b))])
    perm = np.argsort(rows, kind="stable")
    return rows[perm], weights[perm]


def split_gain(GL, HL, GR, HR, lam: float):
    """Loss-reduction score GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)."""
    return GL * GL / (HL + lam) + GR * GR / (HR + lam) - (GL + GR) ** 2 / (HL + HR + lam)


@njit(cache=True)
def _histogram_kernel(codes, g, h, B):
    n, m = codes.shape
    G = np.zeros((m, B))
    H = np.zeros((m, B))
    C = np.zeros((m, B))
    for i in range(n):
        gi, hi = g[i], h[i]
        for j in range(m):
            b = codes[i, j]
            G[j, b] += gi
            H[j, b] += hi
            C[j, b] += 1.0
    return G, H, C


def _histograms(codes: np.ndarray, g: np.ndarray, h: np.ndarray, B: int):
    """Per-feature, per-bin gradient, hessian and row-count sums."""
    return _histogram_kernel(np.ascontiguousarray(codes), np.ascontiguousarray(g, dtype=np.float64), np.ascontiguousarray(h, dtype=np.float64), B)


@njit(cache=True)
def _split_kernel(G, H, C, n_bins, lam, min_samples_leaf, min_child_hessian):
    m, B = G.shape
    Gt, Ht, Ct = G[0].sum(), H[0].sum(), C[0].sum()
    parent = Gt * Gt / (Ht + lam)
    best, best_j, best_b = -np.inf, -1, -1
    for j in range(m):
        gl = hl = cl = 0.0
        for b in range(min(n_bins[j], B) - 1):
            gl += G[j, b]
            hl += H[j, b]
            cl += C[j, b]
            # one candidate per distinct partition: the left side must end on an occupied bin
            if C[j, b] <= 0:
                continue
            cr, hr = Ct - cl, Ht - hl
            if cl < min_samples_leaf or cr < min_samples_leaf or hl < min_child_hessian or hr < min_child_hessian:
                continue
            gr = Gt - gl
            gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
            if gain > best:
                best, best_j, best_b = gain, j, b
    return best_j, best_b, best


def best_gain_split(G, H, C, n_bins, lam: float, min_samples_leaf: int = 1, min_child_hessian: float = 0.0):
    """Pick the bin boundary maximizing :func:`split_gain` from per-bin sums.

    ``G, H, C`` are (features x bins) gradient, hessian and row-count
    histograms. Returns ``(column, split_bin, gain)`` or None. Ties go to
    the lowest column, then the lowest bin.
    """
    if G.shape[1] < 2:
        return None
    n_bins = np.asarray(n_bins, dtype=np.int64)
    j, b, gain = _split_kernel(G, H, C, n_bins, float(lam), float(min_samples_leaf), float(min_child_hessian))
    if j < 0:
        return None
    return int(j), int(b), float(gain)


class _Node:
    __slots__ = ("id", "rows", "depth", "hist", "split")

    def __init__(self, id, rows, depth, hist, split):
        self.id, self.rows, self.depth, self.hist, self.split = id, rows, depth, hist, split


def _grow_tree(codes, g, h, w, features, n_bins, binner, cfg: GbdtConfig):
    """Grow one regression tree on row-aligned gradients.

    ``codes`` holds only the subsampled feature columns; ``features`` maps
    them back to model feature indices. ``w`` is the per-row cover weight.
    """
    B = int(n_bins.max())
    lam = cfg.l2_regularization
    builder = TreeBuilder(1)

    def make(rows, depth, hist):
        Gt, Ht = hist[0][0].sum(), hist[1][0].sum()
        node_id = builder.add_leaf(-Gt / (Ht + lam), w[rows].sum(), depth)
        split = None
        if depth < cfg.max_depth and len(rows) >= 2 * cfg.min_samples_leaf:
            split = best_gain_split(*hist, n_bins, lam, cfg.min_samples_leaf, cfg.min_child_hessian)
            if split is not None and split[2] < cfg.min_loss_reduction:
                split = None
        return _Node(node_id, rows, depth, hist, split)

    def expand(node: _Node):
        j, b, gain = node.split
        go_left = codes[node.rows, j] <= b
        rl, rr = node.rows[go_left], node.rows[~go_left]
        small, large = (rl, rr) if len(rl) <= len(rr) else (rr, rl)
        hs = _histograms(codes[small], g[small], h[small], B)
        hl = tuple(p - s for p, s in zip(node.hist, hs))
        node.hist = None
        hist_l, hist_r = (hs, hl) if small is rl else (hl, hs)
        left = make(rl, node.depth + 1, hist_l)
        right = make(rr, node.depth + 1, hist_r)
        f = int(features[j])
        builder.make_split(node.id, f, b, binner.threshold(f, b), gain, left.id, right.id)
        return left, right

    all_rows = np.arange(len(g))
    root = make(all_rows, 0, _histograms(codes, g, h, B))
    if cfg.leaf_wise:
        heap = [(-root.split[2], root.id, root)] if root.split else []
        n_leaves = 1
        while heap and n_leaves < cfg.max_leaves:
            _, _, node = heapq.heappop(heap)
            for child in expand(node):
                if child.split:
                    heapq.heappush(heap, (-child.split[2], child.id, child))
            n_leaves += 1
    else:
        queue = deque([root])
        while queue:
            node = queue.popleft()
            if node.split:
                queue.extend(expand(node))
    return builder.build()


def _log_loss(F: np.ndarray, y: np.ndarray, n_out: int) -> float:
    if n_out == 1:
        z = F[:, 0]
        # log(1 + e^z) - y z, computed stably
        return float(np.mean(np.logaddexp(0.0, z) - y * z))
    zmax = F.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(F - zmax).sum(axis=1))
    return float(np.mean(lse - F[np.arange(len(y)), y]))


def base_scores(y: np.ndarray, n_classes: int) -> np.ndarray:
    """Constant-model optimum: prior log-odds (binary) or log priors (softmax)."""
    prior = np.bincount(y, minlength=n_classes) / len(y)
    prior = np.clip(prior, 1e-15, 1.0)
    if n_classes == 2:
        return np.array([np.log(prior[1] / prior[0])])
    return np.log(prior)


def fit_gbdt(X, y, config: GbdtConfig = GbdtConfig(), feature_names=None, n_classes: int | None = None) -> TreeEnsembleModel:
    """Boost trees on logistic (binary) or softmax cross-entropy loss.

    Each round fits one tree per output on gradients ``p - y`` and hessians
    ``p (1 - p)``; leaves take the Newton weight ``-G / (H + lambda)``.
    Per-round training loss is kept in ``model.history["train_loss"]``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise TreeError("empty input")
    if len(y) != len(X):
        raise TreeError("X and y lengths differ")
    if not np.all(np.isfinite(X)):
        raise TreeError("X must be finite")
    if len(np.unique(y)) < 2:
        raise TreeError("need at least two classes")
    n, d = X.shape
    K = int(n_classes or y.max() + 1)
    n_out = 1 if K == 2 else K
    binner = Binner(config.n_histogram_bins).fit(X)
    codes = binner.transform(X)
    n_bins = binner.n_bins
    rng = np.random.default_rng(config.seed)
    n_sub = max(1, int(round(config.feature_subsample * d)))

    Y = y[:, None].astype(np.float64) if n_out == 1 else np.eye(K)[y]
    base = base_scores(y, K)
    F = np.tile(base, (n, 1))
    losses = [_log_loss(F, y, n_out)]
    trees, outputs = [], []
    for _ in range(config.n_estimators):
        P = _sigmoid(F) if n_out == 1 else _softmax(F)
        grad = P - Y
        hess = np.maximum(P * (1.0 - P), 1e-16)
        if config.mode == "goss":
            rows, weights = goss_sample(np.abs(grad).sum(axis=1), config.goss_a, config.goss_b, rng)
        else:
            rows, weights = None, np.ones(n)
        base_codes = codes if rows is None else codes[rows]
        rows = np.arange(n) if rows is None else rows
        for k in range(n_out):
            feats = np.sort(rng.choice(d, n_sub, replace=False)) if n_sub < d else np.arange(d)
            sub = np.ascontiguousarray(base_codes[:, feats])
            tree = _grow_tree(sub, grad[rows, k] * weights, hess[rows, k] * weights, weights, feats, n_bins[feats], binner, config)
            F[:, k] += config.learning_rate * tree.value[tree.apply_binned(codes), 0]
            trees.append(tree)
            outputs.append(k)
        losses.append(_log_loss(F, y, n_out))

    return TreeEnsembleModel(
        kind="gbdt",
        trees=trees,
        n_classes=K,
        n_features=d,
        tree_output=np.array(outputs, dtype=np.int64),
        base_score=base,
        learning_rate=config.learning_rate,
        config={"model": "gbdt_goss" if config.mode == "goss" else "gbdt_hist", **asdict(config)},
        feature_names=tuple(feature_names) if feature_names is not None else (),
        history={"train_loss": losses},
    )
