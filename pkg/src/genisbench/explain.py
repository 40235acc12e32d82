"""Shapley attributions: exact path-dependent TreeSHAP and a permutation estimator."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .trees.base import Tree, TreeEnsembleModel

GROUPS = ("quantity_based", "time_based", "hybrid")


class ExplainError(ValueError):
    pass


@dataclass(eq=False)
class Attribution:
    """Per-sample, per-feature Shapley values for one explained output.

    ``target`` is the explained class per row. ``base_value`` is the
    expected model output; local accuracy reads
    ``base_value + values.sum(axis=1) == output``.
    """

    values: np.ndarray
    base_value: np.ndarray
    target: np.ndarray
    feature_names: tuple[str, ...] = ()
    output: str = "probability"
    std_error: np.ndarray | None = None

    def mean_abs(self) -> dict[str, float]:
        names = self.feature_names or tuple(f"f{i}" for i in range(self.values.shape[1]))
        return dict(zip(names, np.abs(self.values).mean(axis=0).tolist()))

    def write_csv(self, path: str | Path) -> None:
        names = self.feature_names or tuple(f"f{i}" for i in range(self.values.shape[1]))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["target", "base_value", *names])
            for t, b, row in zip(self.target, self.base_value, self.values):
                w.writerow([int(t), repr(float(b)), *(repr(float(v)) for v in row)])


# path bookkeeping for TreeSHAP, vectorized over samples:
# feature ids and zero fractions are shared, one fractions and weights are per sample


def _extend(feat, zf, of, pw, pz, po, pi, n):
    depth = len(feat)
    feat.append(pi)
    zf.append(pz)
    of.append(po)
    pw.append(np.ones(n) if depth == 0 else np.zeros(n))
    for i in range(depth - 1, -1, -1):
        pw[i + 1] = pw[i + 1] + po * pw[i] * ((i + 1) / (depth + 1))
        pw[i] = pz * pw[i] * ((depth - i) / (depth + 1))


def _unwind(feat, zf, of, pw, idx):
    depth = len(feat) - 1
    o, z = of[idx], zf[idx]
    hot = o != 0
    o_safe = np.where(hot, o, 1.0)
    nxt = pw[depth]
    for i in range(depth - 1, -1, -1):
        w_hot = nxt * (depth + 1) / ((i + 1) * o_safe)
        w_cold = pw[i] * (depth + 1) / (z * (depth - i))
        nxt = pw[i] - w_hot * z * (depth - i) / (depth + 1)
        pw[i] = np.where(hot, w_hot, w_cold)
    pw.pop()
    del feat[idx], zf[idx], of[idx]


def _unwound_sum(zf, of, pw, idx):
    depth = len(pw) - 1
    o, z = of[idx], zf[idx]
    hot = o != 0
    o_safe = np.where(hot, o, 1.0)
    nxt = pw[depth]
    total_hot = np.zeros_like(nxt)
    total_cold = np.zeros_like(nxt)
    for i in range(depth - 1, -1, -1):
        tmp = nxt / ((i + 1) * o_safe)
        total_hot = total_hot + tmp
        nxt = pw[i] - tmp * z * (depth - i)
        total_cold = total_cold + pw[i] / (z * (depth - i))
    return np.where(hot, total_hot, total_cold) * (depth + 1)


def tree_expected_value(tree: Tree, leaf_values: np.ndarray) -> float:
    leaves = tree.feature < 0
    return float(np.sum(tree.cover[leaves] * leaf_values[leaves]) / tree.cover[0])


def tree_shap_single(tree: Tree, X: np.ndarray, leaf_values: np.ndarray | None = None) -> np.ndarray:
    """Exact path-dependent TreeSHAP for one tree and a scalar node output.

    Runs the polynomial-time path algorithm once per tree with all samples
    carried along as vectors.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    v = tree.value[:, 0] if leaf_values is None else np.asarray(leaf_values, dtype=np.float64)
    phi = np.zeros((n, d))
    if np.any(tree.cover <= 0):
        raise ExplainError("tree lacks positive cover counts")

    def recurse(node, feat, zf, of, pw, pz, po, pi):
        feat, zf, of, pw = list(feat), list(zf), list(of), list(pw)
        _extend(feat, zf, of, pw, pz, po, pi, n)
        f = tree.feature[node]
        if f < 0:
            for i in range(1, len(feat)):
                w = _unwound_sum(zf, of, pw, i)
                phi[:, feat[i]] += w * (of[i] - zf[i]) * v[node]
            return
        go_left = X[:, f] <= tree.threshold[node]
        left, right = tree.left[node], tree.right[node]
        cover = tree.cover[node]
        inc_z, inc_o = 1.0, np.ones(n)
        if f in feat:
            k = feat.index(f)
            inc_z, inc_o = zf[k], of[k]
            _unwind(feat, zf, of, pw, k)
        recurse(left, feat, zf, of, pw, tree.cover[left] / cover * inc_z, inc_o * go_left, f)
        recurse(right, feat, zf, of, pw, tree.cover[right] / cover * inc_z, inc_o * ~go_left, f)

    recurse(0, [], [], [], [], 1.0, np.ones(n), -1)
    return phi


def _tree_model_shap(model: TreeEnsembleModel, X: np.ndarray, cls: int):
    """Attributions and base value for class ``cls`` of a tree ensemble.

    Forests explain the averaged class probability; boosted models explain
    the raw margin (log-odds) of the class, which is what is additive over
    trees.
    """
    n, d = X.shape
    phi = np.zeros((n, d))
    if model.kind == "forest":
        base = 0.0
        for t in model.trees:
            vals = t.value[:, cls]
            phi += tree_shap_single(t, X, vals)
            base += tree_expected_value(t, vals)
        return phi / len(model.trees), base / len(model.trees)
    sign, out = 1.0, cls
    if model.n_outputs == 1:
        # binary margin m explains class 1; class 0 has margin -m
        sign, out = (1.0, 0) if cls == 1 else (-1.0, 0)
    base = float(model.base_score[out])
    for t, k in zip(model.trees, model.tree_output):
        if k != out:
            continue
        vals = t.value[:, 0]
        phi += model.learning_rate * tree_shap_single(t, X, vals)
        base += model.learning_rate * tree_expected_value(t, vals)
    return sign * phi, sign * base


def tree_model_output(model: TreeEnsembleModel, X: np.ndarray, target: np.ndarray) -> np.ndarray:
    """The quantity :func:`tree_shap` explains, per row."""
    rows = np.arange(len(X))
    if model.kind == "forest":
        return model.predict_proba(X)[rows, target]
    F = model.raw_predict(X)
    if model.n_outputs == 1:
        return np.where(target == 1, F[:, 0], -F[:, 0])
    return F[rows, target]


def _resolve_target(target, n: int, predict: Callable[[], np.ndarray]) -> np.ndarray:
    if target is None or (isinstance(target, str) and target == "predicted"):
        return np.asarray(predict(), dtype=np.int64)
    t = np.asarray(target, dtype=np.int64)
    return np.full(n, int(t)) if t.ndim == 0 else t


def tree_shap(model: TreeEnsembleModel, X, target=None, feature_names: Sequence[str] | None = None) -> Attribution:
    """TreeSHAP for an ensemble; ``target`` is a class index, per-row array,
    or None for each row's predicted class."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ExplainError("feature count mismatch")
    tgt = _resolve_target(target, len(X), lambda: model.predict(X))
    values = np.zeros(X.shape)
    base = np.zeros(len(X))
    for cls in np.unique(tgt):
        rows = tgt == cls
        phi, b = _tree_model_shap(model, X[rows], int(cls))
        values[rows] = phi
        base[rows] = b
    names = tuple(feature_names or model.feature_names)
    output = "probability" if model.kind == "forest" else "margin"
    return Attribution(values, base, tgt, names, output)


def balanced_background_draws(n_background: int, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """Background row per permutation, each row used floor or ceil(n_draws / n_background) times."""
    reps = -(-n_draws // n_background)
    draws = np.concatenate([rng.permutation(n_background) for _ in range(reps)])
    return draws[:n_draws]


def sampled_shapley(
    predict_proba: Callable[[np.ndarray], np.ndarray] | object,
    X,
    background,
    n_permutations: int = 100,
    seed: int = 0,
    target=None,
    feature_names: Sequence[str] = (),
    batch_rows: int = 200_000,
) -> Attribution:
    """Monte-Carlo permutation Shapley values.

    For each permutation one background row is drawn (balanced over the
    background set, shared by all samples); features are switched from the
    background value to the sample value in permutation order and each
    switch's output change is credited to that feature. ``base_value`` is
    the mean output over the drawn background rows, so local accuracy holds
    exactly for every permutation count.
    """
    f = getattr(predict_proba, "predict_proba", predict_proba)
    X = np.asarray(X, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    if len(background) == 0:
        raise ExplainError("empty background set")
    if n_permutations < 1:
        raise ExplainError("n_permutations must be >= 1")
    n, d = X.shape
    rng = np.random.default_rng(seed)
    tgt = _resolve_target(target, n, lambda: np.argmax(f(X), axis=1))
    draws = balanced_background_draws(len(background), n_permutations, rng)
    perms = np.array([rng.permutation(d) for _ in range(n * n_permutations)]).reshape(n, n_permutations, d)

    values = np.zeros((n, d))
    var = np.zeros((n, d))
    base_rows = f(background[draws])
    per_chunk = max(1, batch_rows // (n_permutations * (d + 1)))
    for s0 in range(0, n, per_chunk):
        idx = np.arange(s0, min(n, s0 + per_chunk))
        m = len(idx)
        # z[s, p, j] = background row with the first j permuted features taken from the sample
        Z = np.broadcast_to(background[draws][None, :, None, :], (m, n_permutations, d + 1, d)).copy()
        order_pos = np.empty((m, n_permutations, d), dtype=np.int64)
        np.put_along_axis(order_pos, perms[idx], np.arange(d)[None, None, :].repeat(m, 0).repeat(n_permutations, 1), axis=2)
        switched = order_pos[:, :, None, :] < np.arange(d + 1)[None, None, :, None]
        Z = np.where(switched, X[idx][:, None, None, :], Z)
        out = f(Z.reshape(-1, d))
        out = out[np.arange(len(out)), np.repeat(tgt[idx], n_permutations * (d + 1))].reshape(m, n_permutations, d + 1)
        delta = np.diff(out, axis=2)  # (m, P, d): gain of the j-th switched feature
        contrib = np.zeros((m, n_permutations, d))
        np.put_along_axis(contrib, perms[idx], delta, axis=2)
        values[idx] = contrib.mean(axis=1)
        var[idx] = ((contrib - values[idx][:, None, :]) ** 2).mean(axis=1)
    stderr = np.sqrt(var / max(n_permutations - 1, 1))
    base = base_rows[np.arange(len(draws))[None, :], tgt[:, None]].mean(axis=1)
    return Attribution(values, base, tgt, tuple(feature_names), "probability", stderr)


def stratified_background(X: np.ndarray, y: np.ndarray, size: int = 100, seed: int = 0) -> np.ndarray:
    """Up to ``size`` rows drawn per class in proportion to class frequency (at least one each)."""
    rng = np.random.default_rng(seed)
    X, y = np.asarray(X), np.asarray(y)
    if len(X) <= size:
        return X.copy()
    classes, counts = np.unique(y, return_counts=True)
    quota = np.maximum(1, np.floor(size * counts / counts.sum()).astype(int))
    while quota.sum() > size:
        quota[np.argmax(quota)] -= 1
    while quota.sum() < size:
        quota[np.argmax(counts - quota)] += 1
    rows = [rng.choice(np.flatnonzero(y == c), size=min(q, cnt), replace=False) for c, q, cnt in zip(classes, quota, counts)]
    return X[np.sort(np.concatenate(rows))]


@dataclass
class GroupImportance:
    totals: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, float]:
        return dict(self.totals)


def group_importance(attr: Attribution, taxonomy: Mapping, groups: Sequence[str] = GROUPS) -> GroupImportance:
    """Per category, the sum over member features of mean |phi| across samples.

    ``taxonomy`` maps feature name to a category string or to an object with
    a ``category`` attribute. The listed ``groups`` are always reported;
    other categories appear only if some attributed feature belongs to them.
    """
    totals = {g: 0.0 for g in groups}
    for name, value in attr.mean_abs().items():
        if name not in taxonomy:
            raise ExplainError(f"feature {name!r} missing from taxonomy")
        meta = taxonomy[name]
        cat = getattr(meta, "category", meta)
        totals[cat] = totals.get(cat, 0.0) + value
    return GroupImportance(totals)
