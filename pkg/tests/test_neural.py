import numpy as np
import pytest

from genisbench.neural import (
    EarlyStopping,
    NetConfig,
    NetworkError,
    NetworkModel,
    fit_network,
    forward,
    init_network,
    loss,
    loss_and_gradients,
    numeric_gradient_check,
    train,
)


def blobs(seed=0, n=600, k=3, d=6, scale=3.0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % k
    X = rng.normal(size=(n, d)) + scale * np.eye(k, d)[y]
    return X, y


@pytest.mark.parametrize("arch", ["mlp", "lstm"])
@pytest.mark.parametrize("k", [2, 3])
@pytest.mark.parametrize("seed", range(5))
def test_gradient_check(arch, k, seed):
    cfg = NetConfig(arch=arch, hidden=(6, 4), dropout=0.2, seed=seed)
    model = init_network(cfg, 5, k)
    rng = np.random.default_rng(seed)
    # move off the zero-bias init so no ReLU input sits exactly on its kink
    for w in model.params.values():
        w += 0.1 * rng.normal(size=w.shape)
    X = rng.normal(size=(8, 5))
    y = rng.integers(0, k, 8)
    assert numeric_gradient_check(model, X, y, epsilon=1e-5) < 1e-4


def test_lstm_recurrent_matrix_gets_no_gradient():
    model = init_network(NetConfig(arch="lstm", hidden=(4, 3)), 3, 2)
    _, grads = loss_and_gradients(model, np.ones((2, 3)), np.array([0, 1]))
    assert "U" not in grads
    assert set(grads) == set(model.params) - {"U"}


def test_same_seed_same_weights():
    a = init_network(NetConfig(seed=7), 10, 3)
    b = init_network(NetConfig(seed=7), 10, 3)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    c = init_network(NetConfig(seed=8), 10, 3)
    assert not np.array_equal(a.params["W1"], c.params["W1"])


def test_zero_weights_give_uniform_outputs():
    for k in (2, 4):
        model = init_network(NetConfig(hidden=(5, 3)), 4, k)
        for w in model.params.values():
            w[...] = 0.0
        P = model.predict_proba(np.random.default_rng(0).normal(size=(6, 4)))
        assert np.allclose(P, 1.0 / k)


def test_softmax_rows_sum_to_one():
    model = init_network(NetConfig(hidden=(5, 3)), 4, 4)
    P = forward(model, np.random.default_rng(1).normal(size=(20, 4)) * 50)
    assert np.allclose(P.sum(axis=1), 1.0) and np.all(P >= 0)


def test_lstm_zero_input_gate_gives_zero_hidden():
    model = init_network(NetConfig(arch="lstm", hidden=(4, 3)), 3, 2)
    model.params["Wx"][...] = 0.0
    model.params["b"][:4] = -1e3  # input gate closed
    model.params["W2"][...] = 0.0
    model.params["bo"][...] = 0.0
    P = model.predict_proba(np.random.default_rng(2).normal(size=(5, 3)))
    assert np.allclose(P, 0.5)


def test_dropout_zero_matches_inference():
    model = init_network(NetConfig(dropout=0.0, hidden=(5, 3)), 4, 3)
    X = np.random.default_rng(3).normal(size=(10, 4))
    assert np.array_equal(forward(model, X, training=True), forward(model, X))
    noisy = init_network(NetConfig(dropout=0.5, hidden=(5, 3)), 4, 3)
    assert not np.allclose(forward(noisy, X, training=True), forward(noisy, X))


def test_linear_probe_zero_gradient_at_optimum():
    model = init_network(NetConfig(head="linear", hidden=(5, 3), dropout=0.0), 4, 1)
    X = np.random.default_rng(4).normal(size=(10, 4))
    target = forward(model, X)[:, 0]
    value, grads = loss_and_gradients(model, X, target)
    assert value == 0.0
    assert all(np.abs(g).max() == 0.0 for g in grads.values())


def test_early_stopping_patience_scenario():
    stop = EarlyStopping(patience=3)
    values = [1.0, 0.8, 0.85, 0.79, 0.9, 0.95, 0.97, 0.5]
    decisions = [stop.update(e, v, {"w": v}) for e, v in enumerate(values[:7])]
    assert decisions == [False] * 6 + [True]
    assert stop.best_epoch == 3 and stop.best_state == {"w": 0.79}
    with pytest.raises(NetworkError):
        EarlyStopping(patience=0)


def test_patience_one_stops_on_first_worse_epoch():
    stop = EarlyStopping(patience=1)
    assert not stop.update(0, 0.5, "first")
    assert stop.update(1, 0.6, "second")
    assert stop.best_state == "first"


def test_ties_do_not_count_as_improvement():
    stop = EarlyStopping(patience=2)
    assert not stop.update(0, 1.0)
    assert not stop.update(1, 1.0)
    assert stop.update(2, 1.0)
    assert stop.best_epoch == 0


def test_restored_weights_achieve_min_val_loss():
    X, y = blobs(scale=1.0)
    Xtr, ytr, Xv, yv = X[:400], y[:400], X[400:], y[400:]
    cfg = NetConfig(hidden=(16, 8), learning_rate=0.01, patience=3)
    model, log = fit_network(Xtr, ytr, Xv, yv, cfg, 3)
    assert log.epochs_run <= 30
    assert log.best_epoch == int(np.argmin(log.val_loss))
    assert loss(model, Xv, yv) == pytest.approx(min(log.val_loss), abs=1e-9)


def test_never_exceeds_max_epochs():
    X, y = blobs(scale=0.0)  # pure noise, validation loss wanders
    cfg = NetConfig(hidden=(8, 4), patience=100)
    _, log = fit_network(X[:300], y[:300], X[300:], y[300:], cfg, 3)
    assert log.epochs_run == 30
    assert len(log.epoch_seconds) == 30 and log.mean_epoch_seconds > 0


@pytest.mark.parametrize("arch", ["mlp", "lstm"])
def test_learns_separable_blobs(arch):
    X, y = blobs(seed=1, n=900, scale=8.0)
    cfg = NetConfig(arch=arch, hidden=(32, 16), learning_rate=0.005, max_epochs=20)
    model, _ = fit_network(X[:600], y[:600], X[600:750], y[600:750], cfg, 3)
    assert (model.predict(X[750:]) == y[750:]).mean() >= 0.99


def test_training_is_deterministic():
    X, y = blobs()
    cfg = NetConfig(hidden=(8, 4), max_epochs=3)
    a, la = fit_network(X[:400], y[:400], X[400:], y[400:], cfg, 3)
    b, lb = fit_network(X[:400], y[:400], X[400:], y[400:], cfg, 3)
    assert la.val_loss == lb.val_loss
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_save_load_round_trip(tmp_path):
    model = init_network(NetConfig(arch="lstm", hidden=(5, 3)), 4, 3, feature_names=list("abcd"), classes=("x", "y", "z"))
    model.save(tmp_path / "net.npz")
    again = NetworkModel.load(tmp_path / "net.npz")
    X = np.random.default_rng(5).normal(size=(7, 4))
    assert np.array_equal(again.predict_proba(X), model.predict_proba(X))
    assert again.feature_names == model.feature_names and again.classes == model.classes


def test_validation_errors():
    with pytest.raises(NetworkError):
        NetConfig(arch="gru")
    with pytest.raises(NetworkError):
        NetConfig(dropout=1.0)
    model = init_network(NetConfig(hidden=(4, 2)), 3, 2)
    with pytest.raises(NetworkError):
        forward(model, np.ones((2, 5)))
    with pytest.raises(NetworkError):
        train(model, np.ones((4, 3)), np.zeros(4), np.empty((0, 3)), np.empty(0))
