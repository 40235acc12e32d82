"""Array-backed decision trees and the ensemble model wrapper."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class TreeError(ValueError):
    pass


class TreeBuilder:
    """Growable node arrays. Node 0 is the root."""

    def __init__(self, n_outputs: int):
        self.n_outputs = n_outputs
        self.feature: list[int] = []
        self.split_bin: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []
        self.cover: list[float] = []
        self.gain: list[float] = []
        self.depth: list[int] = []

    def add_leaf(self, value, cover: float, depth: int) -> int:
        self.feature.append(-1)
        self.split_bin.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(np.atleast_1d(np.asarray(value, dtype=np.float64)))
        self.cover.append(float(cover))
        self.gain.append(0.0)
        self.depth.append(depth)
        return len(self.feature) - 1

    def make_split(self, node: int, feature: int, split_bin: int, threshold: float, gain: float, left: int, right: int):
        self.feature[node] = feature
        self.split_bin[node] = split_bin
        self.threshold[node] = threshold
        self.gain[node] = gain
        self.left[node] = left
        self.right[node] = right

    def build(self) -> "Tree":
        return Tree(
            feature=np.array(self.feature, dtype=np.int64),
            split_bin=np.array(self.split_bin, dtype=np.int64),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            value=np.vstack(self.value).reshape(len(self.value), self.n_outputs),
            cover=np.array(self.cover, dtype=np.float64),
            gain=np.array(self.gain, dtype=np.float64),
            depth=np.array(self.depth, dtype=np.int64),
        )


@dataclass(eq=False)
class Tree:
    """A binary tree as parallel node arrays.

    ``feature[i] == -1`` marks a leaf. Internal nodes send ``x`` left iff
    ``x[feature] <= threshold``. ``cover`` is the (weighted) number of
    training rows that reached each node, ``gain`` the split's impurity
    decrease or loss reduction.
    """

    feature: np.ndarray
    split_bin: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    gain: np.ndarray
    depth: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            r, n = rows[active], node[active]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def apply_binned(self, codes: np.ndarray) -> np.ndarray:
        node = np.zeros(len(codes), dtype=np.int64)
        rows = np.arange(len(codes))
        active = self.feature[node] >= 0
        while active.any():
            r, n = rows[active], node[active]
            go_left = codes[r, self.feature[n]] <= self.split_bin[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        ints = {"feature", "split_bin", "left", "right", "depth"}
        return cls(**{k: np.asarray(v, dtype=np.int64 if k in ints else np.float64) for k, v in d.items()})


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(eq=False)
class TreeEnsembleModel:
    """Fitted forest or boosted ensemble.

    Forest trees carry a class distribution per leaf and are averaged.
    Boosted trees carry a scalar leaf weight for output ``tree_output[t]``;
    raw scores are ``base_score + learning_rate * sum(tree outputs)`` and go
    through a sigmoid (one output, binary) or a softmax.
    """

    kind: str
    trees: list[Tree]
    n_classes: int
    n_features: int
    tree_output: np.ndarray
    base_score: np.ndarray
    learning_rate: float = 1.0
    config: dict = field(default_factory=dict)
    feature_names: tuple[str, ...] = ()
    history: dict = field(default_factory=dict)

    @property
    def n_outputs(self) -> int:
        return len(self.base_score)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise TreeError(f"expected {self.n_features} features, got shape {X.shape}")
        return X

    def raw_predict(self, X) -> np.ndarray:
        """Margins for boosted models (n, n_outputs)."""
        X = self._check(X)
        if self.kind != "gbdt":
            raise TreeError("raw_predict applies to boosted models")
        F = np.tile(self.base_score, (len(X), 1))
        for t, k in zip(self.trees, self.tree_output):
            F[:, k] += self.learning_rate * t.predict(X)[:, 0]
        return F

    def predict_proba(self, X) -> np.ndarray:
        X = self._check(X)
        if self.kind == "forest":
            if not self.trees:
                raise TreeError("forest has no trees")
            P = np.zeros((len(X), self.n_classes))
            for t in self.trees:
                P += t.predict(X)
            return P / len(self.trees)
        F = self.raw_predict(X)
        if self.n_outputs == 1:
            p = _sigmoid(F[:, 0])
            return np.column_stack([1.0 - p, p])
        return _softmax(F)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "tree_output": self.tree_output.tolist(),
            "base_score": self.base_score.tolist(),
            "learning_rate": self.learning_rate,
            "config": self.config,
            "feature_names": list(self.feature_names),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsembleModel":
        return cls(
            kind=d["kind"],
            trees=[Tree.from_dict(t) for t in d["trees"]],
            n_classes=d["n_classes"],
            n_features=d["n_features"],
            tree_output=np.asarray(d["tree_output"], dtype=np.int64),
            base_score=np.asarray(d["base_score"], dtype=np.float64),
            learning_rate=d["learning_rate"],
            config=d["config"],
            feature_names=tuple(d["feature_names"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "TreeEnsembleModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict_proba(model: TreeEnsembleModel, X) -> np.ndarray:
    return model.predict_proba(X)


def impurity_importance(model: TreeEnsembleModel, feature_names: Sequence[str] | None = None) -> dict[str, float]:
    """Total split gain per feature over all trees, normalized to sum to 1.

    A model without any split returns all zeros.
    """
    if model is None or not model.trees and model.kind == "forest":
        raise TreeError("model is not fitted")
    names = list(feature_names or model.feature_names or [f"f{i}" for i in range(model.n_features)])
    total = np.zeros(model.n_features)
    for t in model.trees:
        internal = t.feature >= 0
        np.add.at(total, t.feature[internal], t.gain[internal])
    s = total.sum()
    if s > 0:
        total = total / s
    return dict(zip(names, total.tolist()))
