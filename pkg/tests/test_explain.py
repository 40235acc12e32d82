import numpy as np
import pytest

from genisbench.explain import (
    Attribution,
    ExplainError,
    balanced_background_draws,
    group_importance,
    sampled_shapley,
    stratified_background,
    tree_model_output,
    tree_shap,
    tree_shap_single,
)
from genisbench.flow_data import FeatureMeta
from genisbench.trees import ForestConfig, GbdtConfig, fit_gbdt, fit_random_forest

import oracles


def table(seed, n=200, d=8, k=2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    score = X[:, 0] + X[:, 1] * X[:, 2] - 0.5 * X[:, 3]
    y = np.digitize(score, np.quantile(score, np.linspace(0, 1, k + 1)[1:-1]))
    return X, y


def test_single_leaf_tree_gives_zero():
    X = np.zeros((6, 3))
    y = np.array([0, 1] * 3)
    tree = fit_random_forest(X, y, ForestConfig(n_estimators=1, bootstrap=False)).trees[0]
    assert tree.n_nodes == 1
    assert np.array_equal(tree_shap_single(tree, X), np.zeros((6, 3)))


@pytest.mark.parametrize("seed", range(6))
def test_tree_shap_matches_bruteforce(seed):
    X, y = table(seed)
    cfg = ForestConfig(n_estimators=2, max_depth=3, max_features=None, seed=seed)
    for tree in fit_random_forest(X, y, cfg).trees:
        for x in X[:4]:
            phi = tree_shap_single(tree, x[None, :], tree.value[:, 1])[0]
            exact = oracles.shapley_bruteforce(lambda S: oracles.tree_conditional_value(tree, x, S, out=1), 8)
            assert np.allclose(phi, exact, atol=1e-6)


@pytest.mark.parametrize(
    "fit,k",
    [
        (lambda X, y: fit_random_forest(X, y, ForestConfig(n_estimators=10, max_depth=6)), 3),
        (lambda X, y: fit_gbdt(X, y, GbdtConfig.histogram(n_estimators=15)), 2),
        (lambda X, y: fit_gbdt(X, y, GbdtConfig.histogram(n_estimators=15)), 3),
        (lambda X, y: fit_gbdt(X, y, GbdtConfig.goss(n_estimators=15)), 2),
    ],
)
def test_local_additivity(fit, k):
    X, y = table(11, n=300, k=k)
    model = fit(X, y)
    for target in (None, 0):
        attr = tree_shap(model, X[:100], target=target)
        out = tree_model_output(model, X[:100], attr.target)
        assert np.allclose(attr.base_value + attr.values.sum(axis=1), out, atol=1e-6)


def test_binary_margin_sign():
    X, y = table(3)
    model = fit_gbdt(X, y, GbdtConfig(n_estimators=5))
    a1 = tree_shap(model, X[:10], target=1)
    a0 = tree_shap(model, X[:10], target=0)
    assert np.allclose(a0.values, -a1.values)
    assert a1.output == "margin"


def test_null_player_gets_zero():
    X, y = table(4)
    X[:, 7] = np.random.default_rng(0).normal(size=len(X))
    model = fit_random_forest(X[:, :7], y, ForestConfig(n_estimators=5))
    # a tree never splitting on column 6 of an 8-wide view: pad and explain
    attr = tree_shap(model, X[:20, :7], target=1)
    used = {int(f) for t in model.trees for f in t.feature if f >= 0}
    for j in set(range(7)) - used:
        assert np.all(attr.values[:, j] == 0.0)
    probe = lambda Z: np.column_stack([1 - Z[:, 0] * 0.1, Z[:, 0] * 0.1])
    s = sampled_shapley(probe, X[:5], X[50:60], n_permutations=20, target=1)
    assert np.all(s.values[:, 1:] == 0.0)


def test_symmetry():
    probe = lambda Z: np.column_stack([-(Z[:, 0] * Z[:, 1]), Z[:, 0] * Z[:, 1]])
    x = np.array([[2.0, 2.0]])
    s = sampled_shapley(probe, x, np.zeros((1, 2)), n_permutations=200, target=1)
    assert s.values[0, 0] == pytest.approx(s.values[0, 1], abs=0.5)
    assert s.values.sum() == pytest.approx(4.0)
    exact = oracles.shapley_bruteforce(lambda S: 4.0 if S == {0, 1} else 0.0, 2)
    assert np.allclose(exact, [2.0, 2.0])


def test_additive_probe_recovers_exact_values():
    rng = np.random.default_rng(5)
    w = rng.normal(size=6)
    probe = lambda Z: np.column_stack([-(Z @ w), Z @ w])
    X = rng.normal(size=(10, 6))
    bg = rng.normal(size=(4, 6))
    # 8 permutations over 4 background rows: each row drawn exactly twice
    s = sampled_shapley(probe, X, bg, n_permutations=8, target=1)
    assert np.allclose(s.values, w * (X - bg.mean(axis=0)), atol=1e-12)
    single = sampled_shapley(probe, X, bg[:1], n_permutations=3, target=1)
    assert np.allclose(single.values, w * (X - bg[0]), atol=1e-12)
    assert np.allclose(single.std_error, 0.0, atol=1e-12)


def test_sampled_local_accuracy():
    X, y = table(6, n=300, k=3)
    model = fit_random_forest(X, y, ForestConfig(n_estimators=5))
    bg = stratified_background(X, y, 20)
    for P in (1, 7):
        s = sampled_shapley(model, X[:15], bg, n_permutations=P)
        out = model.predict_proba(X[:15])[np.arange(15), s.target]
        assert np.allclose(s.base_value + s.values.sum(axis=1), out, atol=1e-9)


def test_std_error_shrinks_with_permutations():
    rng = np.random.default_rng(7)
    probe = lambda Z: np.column_stack([np.zeros(len(Z)), Z[:, 0] * Z[:, 1] + Z[:, 2] * Z[:, 3]])
    X = rng.normal(size=(30, 4))
    bg = rng.normal(size=(50, 4))
    lo = sampled_shapley(probe, X, bg, n_permutations=400, seed=1, target=1).std_error.mean()
    hi = sampled_shapley(probe, X, bg, n_permutations=800, seed=2, target=1).std_error.mean()
    assert hi / lo == pytest.approx(1 / np.sqrt(2), abs=0.05)


def test_balanced_draws():
    d = balanced_background_draws(4, 10, np.random.default_rng(0))
    counts = np.bincount(d, minlength=4)
    assert counts.max() - counts.min() <= 1 and counts.sum() == 10


def test_stratified_background_keeps_every_class():
    y = np.array([0] * 990 + [1] * 10)
    X = np.arange(1000.0)[:, None]
    bg = stratified_background(X, y, 50)
    assert len(bg) == 50 and (bg[:, 0] >= 990).sum() >= 1


def test_group_importance_sums():
    attr = Attribution(np.array([[1.0, -2.0, 3.0], [-1.0, 2.0, 1.0]]), np.zeros(2), np.zeros(2, int), ("Dur", "TotBytes", "Rate"))
    tax = {"Dur": FeatureMeta("Dur", "time_based"), "TotBytes": "quantity_based", "Rate": "hybrid"}
    g = group_importance(attr, tax).to_dict()
    assert g == {"quantity_based": 2.0, "time_based": 1.0, "hybrid": 2.0}
    with pytest.raises(ExplainError, match="Rate"):
        group_importance(attr, {"Dur": "time_based", "TotBytes": "quantity_based"})


def test_groups_always_reported():
    attr = Attribution(np.ones((1, 1)), np.zeros(1), np.zeros(1, int), ("Dur",))
    assert group_importance(attr, {"Dur": "time_based"}).to_dict() == {"quantity_based": 0.0, "time_based": 1.0, "hybrid": 0.0}


def test_errors_and_csv(tmp_path):
    X, y = table(8)
    model = fit_random_forest(X, y, ForestConfig(n_estimators=2))
    with pytest.raises(ExplainError):
        tree_shap(model, X[:, :3])
    with pytest.raises(ExplainError):
        sampled_shapley(model, X[:2], X[:0])
    attr = tree_shap(model, X[:3], feature_names=[f"c{i}" for i in range(8)])
    attr.write_csv(tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0].startswith("target,base_value,c0") and len(lines) == 4
