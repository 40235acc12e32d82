"""Numpy MLP and one-step LSTM classifiers trained with Adam and early stopping.

Both networks have two hidden layers. The MLP stacks two ReLU dense layers;
the LSTM variant applies one standard LSTM cell step (zero initial hidden and
cell state) followed by a ReLU dense layer. Dropout follows each hidden
layer. Binary tasks use one sigmoid unit, multiclass tasks a softmax.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int
    activation: str

    def __post_init__(self):
        if self.units <= 0:
            raise NetworkError("units must be positive")
        if self.kind not in ("dense", "lstm_cell"):
            raise NetworkError(f"unknown layer kind {self.kind!r}")


@dataclass(frozen=True)
class NetConfig:
    arch: str = "mlp"
    hidden: tuple[int, int] = (128, 64)
    dropout: float = 0.2
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 3
    head: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ("mlp", "lstm"):
            raise NetworkError(f"unknown architecture {self.arch!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise NetworkError("dropout must lie in [0, 1)")
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise NetworkError("patience, batch_size and max_epochs must be >= 1")
        if self.head not in ("auto", "linear"):
            raise NetworkError(f"unknown head {self.head!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def layers(self, n_classes: int) -> list[LayerSpec]:
        first = LayerSpec("lstm_cell", self.hidden[0], "tanh") if self.arch == "lstm" else LayerSpec("dense", self.hidden[0], "relu")
        if self.head == "linear":
            out = LayerSpec("dense", 1, "linear")
        elif n_classes == 2:
            out = LayerSpec("dense", 1, "sigmoid")
        else:
            out = LayerSpec("dense", n_classes, "softmax")
        return [first, LayerSpec("dense", self.hidden[1], "relu"), out]


@dataclass(eq=False)
class NetworkModel:
    config: NetConfig
    params: dict[str, np.ndarray]
    n_features: int
    n_classes: int
    feature_names: tuple[str, ...] = ()
    classes: tuple[str, ...] = ()

    @property
    def n_outputs(self) -> int:
        return self.params["Wo"].shape[1]

    def predict_proba(self, X) -> np.ndarray:
        P = forward(self, X, training=False)
        if self.n_outputs == 1 and self.config.head != "linear":
            return np.column_stack([1.0 - P[:, 0], P[:, 0]])
        return P

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def copy(self) -> "NetworkModel":
        return NetworkModel(self.config, {k: v.copy() for k, v in self.params.items()}, self.n_features, self.n_classes, self.feature_names, self.classes)

    def save(self, path: str | Path) -> None:
        meta = {
            "config": asdict(self.config),
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "feature_names": list(self.feature_names),
            "classes": list(self.classes),
        }
        np.savez(path, __meta__=np.array(json.dumps(meta)), **self.params)

    @classmethod
    def load(cls, path: str | Path) -> "NetworkModel":
        with np.load(path) as data:
            meta = json.loads(str(data["__meta__"]))
            params = {k: data[k].copy() for k in data.files if k != "__meta__"}
        cfg = NetConfig(**{**meta["config"], "hidden": tuple(meta["config"]["hidden"])})
        return cls(cfg, params, meta["n_features"], meta["n_classes"], tuple(meta["feature_names"]), tuple(meta["classes"]))


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_network(config: NetConfig, input_dim: int, n_classes: int, seed: int | None = None, feature_names=(), classes=()) -> NetworkModel:
    """Glorot-uniform weights, zero biases (LSTM forget-gate bias 1)."""
    if input_dim <= 0:
        raise NetworkError("input dimension must be positive")
    if n_classes < 2 and config.head != "linear":
        raise NetworkError("need at least two classes")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    h1, h2 = config.hidden
    n_out = config.layers(n_classes)[-1].units
    p = {}
    if config.arch == "mlp":
        p["W1"] = _glorot(rng, input_dim, h1)
        p["b1"] = np.zeros(h1)
    else:
        # gate order: input, forget, cell candidate, output
        p["Wx"] = _glorot(rng, input_dim, 4 * h1)
        p["U"] = _glorot(rng, h1, 4 * h1)
        p["b"] = np.zeros(4 * h1)
        p["b"][h1 : 2 * h1] = 1.0
    p["W2"] = _glorot(rng, h1, h2)
    p["b2"] = np.zeros(h2)
    p["Wo"] = _glorot(rng, h2, n_out)
    p["bo"] = np.zeros(n_out)
    return NetworkModel(config, p, input_dim, n_classes, tuple(feature_names), tuple(classes))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _dropout_mask(rng, shape, rate):
    if rate <= 0.0 or rng is None:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _forward(model: NetworkModel, X: np.ndarray, training: bool, rng):
    p = model.params
    cfg = model.config
    cache = {"X": X}
    if cfg.arch == "mlp":
        z1 = X @ p["W1"] + p["b1"]
        a1 = np.maximum(z1, 0.0)
        cache["z1"] = z1
    else:
        h1 = cfg.hidden[0]
        # one step from zero state: the recurrent term h0 @ U vanishes
        h0 = np.zeros((len(X), h1))
        c0 = np.zeros((len(X), h1))
        z = X @ p["Wx"] + p["b"]
        i = _sigmoid(z[:, :h1])
        f = _sigmoid(z[:, h1 : 2 * h1])
        g = np.tanh(z[:, 2 * h1 : 3 * h1])
        o = _sigmoid(z[:, 3 * h1 :])
        c = f * c0 + i * g
        tc = np.tanh(c)
        a1 = o * tc
        cache.update(h0=h0, c0=c0, i=i, f=f, g=g, o=o, tc=tc)
    m1 = _dropout_mask(rng, a1.shape, cfg.dropout) if training else None
    a1d = a1 * m1 if m1 is not None else a1
    z2 = a1d @ p["W2"] + p["b2"]
    a2 = np.maximum(z2, 0.0)
    m2 = _dropout_mask(rng, a2.shape, cfg.dropout) if training else None
    a2d = a2 * m2 if m2 is not None else a2
    zo = a2d @ p["Wo"] + p["bo"]
    cache.update(m1=m1, a1d=a1d, z2=z2, m2=m2, a2d=a2d, zo=zo)
    return zo, cache


def _output(model: NetworkModel, zo: np.ndarray) -> np.ndarray:
    if model.config.head == "linear":
        return zo
    return _sigmoid(zo) if zo.shape[1] == 1 else _softmax(zo)


def forward(model: NetworkModel, X, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
    """Output-layer activations; dropout (inverted) only when ``training``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise NetworkError(f"expected {model.n_features} features, got shape {X.shape}")
    if training and rng is None:
        rng = np.random.default_rng(model.config.seed)
    zo, _ = _forward(model, X, training, rng)
    return _output(model, zo)


def _targets(model: NetworkModel, y: np.ndarray) -> np.ndarray:
    if model.config.head == "linear":
        return np.asarray(y, dtype=np.float64).reshape(len(y), -1)
    y = np.asarray(y, dtype=np.int64)
    if model.n_outputs == 1:
        return y[:, None].astype(np.float64)
    return np.eye(model.n_outputs)[y]


def _loss_from_logits(model: NetworkModel, zo: np.ndarray, T: np.ndarray) -> float:
    if model.config.head == "linear":
        return float(0.5 * np.mean(np.sum((zo - T) ** 2, axis=1)))
    if zo.shape[1] == 1:
        z = zo[:, 0]
        return float(np.mean(np.logaddexp(0.0, z) - T[:, 0] * z))
    zmax = zo.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(zo - zmax).sum(axis=1))
    return float(np.mean(lse - (zo * T).sum(axis=1)))


def loss(model: NetworkModel, X, y, training: bool = False, rng=None) -> float:
    """Mean cross-entropy (or half squared error for the linear head)."""
    zo, _ = _forward(model, np.asarray(X, dtype=np.float64), training, rng)
    return _loss_from_logits(model, zo, _targets(model, y))


def loss_and_gradients(model: NetworkModel, X, y, training: bool = False, rng=None):
    X = np.asarray(X, dtype=np.float64)
    p = model.params
    cfg = model.config
    zo, c = _forward(model, X, training, rng)
    T = _targets(model, y)
    value = _loss_from_logits(model, zo, T)
    n = len(X)
    # every head pairs with its canonical loss, so dL/dzo = (output - target) / n
    dzo = (_output(model, zo) - T) / n
    grads = {"Wo": c["a2d"].T @ dzo, "bo": dzo.sum(axis=0)}
    da2 = dzo @ p["Wo"].T
    if c["m2"] is not None:
        da2 = da2 * c["m2"]
    dz2 = da2 * (c["z2"] > 0)
    grads["W2"] = c["a1d"].T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    da1 = dz2 @ p["W2"].T
    if c["m1"] is not None:
        da1 = da1 * c["m1"]
    if cfg.arch == "mlp":
        dz1 = da1 * (c["z1"] > 0)
        grads["W1"] = X.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
    else:
        i, f, g, o, tc = c["i"], c["f"], c["g"], c["o"], c["tc"]
        do = da1 * tc
        dc = da1 * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * c["c0"] * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        grads["Wx"] = X.T @ dz
        # dL/dU = h0.T @ dz is identically zero for a single step from zero state
        grads["b"] = dz.sum(axis=0)
    return value, grads


def numeric_gradient_check(model: NetworkModel, X, y, epsilon: float = 1e-5, training: bool = True, seed: int = 0, floor: float = 1e-7) -> float:
    """Max relative error between backprop and central differences over all weights.

    With ``training`` the same dropout masks are replayed for every
    evaluation. Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    X = np.asarray(X, dtype=np.float64)

    def rng():
        return np.random.default_rng(seed) if training else None

    _, analytic = loss_and_gradients(model, X, y, training, rng())
    worst = 0.0
    for name, W in model.params.items():
        flat = W.reshape(-1)
        a = analytic.get(name, np.zeros_like(W)).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            up = loss(model, X, y, training, rng())
            flat[j] = orig - epsilon
            down = loss(model, X, y, training, rng())
            flat[j] = orig
            num = (up - down) / (2.0 * epsilon)
            err = abs(a[j] - num) / max(abs(a[j]), abs(num), floor)
            worst = max(worst, err)
    return worst


@dataclass
class TrainLog:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def epochs_run(self) -> int:
        return len(self.val_loss)

    @property
    def mean_epoch_seconds(self) -> float:
        return float(np.mean(self.epoch_seconds)) if self.epoch_seconds else 0.0

    def to_dict(self) -> dict:
        return asdict(self)


class EarlyStopping:
    """Best-weights early stopping on a minimized quantity.

    ``update`` returns True once ``patience`` consecutive epochs failed to
    improve on the best value seen.
    """

    def __init__(self, patience: int = 3):
        if patience < 1:
            raise NetworkError("patience must be >= 1")
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1
        self.best_state = None
        self.wait = 0

    def update(self, epoch: int, value: float, state=None) -> bool:
        if value < self.best:
            self.best, self.best_epoch, self.wait = value, epoch, 0
            self.best_state = copy.deepcopy(state)
            return False
        self.wait += 1
        return self.wait >= self.patience


def _adam(params, grads, m, v, t, cfg: NetConfig):
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for k, g in grads.items():
        m[k] *= b1
        m[k] += (1.0 - b1) * g
        v[k] *= b2
        v[k] += (1.0 - b2) * (g * g)
        params[k] -= (cfg.learning_rate / c1) * m[k] / (np.sqrt(v[k] / c2) + cfg.epsilon)


def train(model: NetworkModel, X_train, y_train, X_val, y_val, config: NetConfig | None = None):
    """Mini-batch Adam with validation-loss early stopping.

    Returns a new model holding the weights of the epoch with the lowest
    validation loss, plus the per-epoch log.
    """
    cfg = config or model.config
    X_train = np.asarray(X_train, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    y_train, y_val = np.asarray(y_train), np.asarray(y_val)
    if len(X_val) == 0:
        raise NetworkError("empty validation set")
    if len(X_train) == 0:
        raise NetworkError("empty training set")
    net = model.copy()
    net.config = cfg
    rng = np.random.default_rng(cfg.seed)
    m = {k: np.zeros_like(w) for k, w in net.params.items()}
    v = {k: np.zeros_like(w) for k, w in net.params.items()}
    log = TrainLog()
    stopper = EarlyStopping(cfg.patience)
    step = 0
    n = len(X_train)
    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            value, grads = loss_and_gradients(net, X_train[idx], y_train[idx], True, rng)
            step += 1
            _adam(net.params, grads, m, v, step, cfg)
            total += value * len(idx)
        val = loss(net, X_val, y_val)
        log.epoch_seconds.append(time.perf_counter() - t0)
        log.train_loss.append(total / n)
        log.val_loss.append(val)
        if cfg.head != "linear":
            log.val_accuracy.append(float(np.mean(net.predict(X_val) == y_val)))
        if stopper.update(epoch, val, net.params):
            break
    log.best_epoch = stopper.best_epoch
    best = net.copy()
    best.params = {k: w.copy() for k, w in stopper.best_state.items()}
    return best, log


def fit_network(X_train, y_train, X_val, y_val, config: NetConfig, n_classes: int, feature_names: Sequence[str] = (), classes: Sequence[str] = ()):
    model = init_network(config, X_train.shape[1], n_classes, feature_names=feature_names, classes=classes)
    return train(model, X_train, y_train, X_val, y_val, config)
