"""Brute-force reference computations shared by unit and acceptance tests.

Each oracle is written from the textbook definition with plain loops so it
shares no code path with the package under test.
"""

import itertools
import math
from collections import Counter

import numpy as np


def quantile_bins(x, n_bins):
    cuts = sorted(set(np.quantile(x, [i / n_bins for i in range(1, n_bins)]).tolist()))
    return [sum(1 for c in cuts if c <= v) for v in x]


def ig_and_chi2(bins, y):
    n = len(y)
    joint = Counter(zip(bins, y))
    nb, ny = Counter(bins), Counter(y)
    h_y = -sum(c / n * math.log2(c / n) for c in ny.values())
    h_cond = 0.0
    for b, cb in nb.items():
        for cls in ny:
            c = joint.get((b, cls), 0)
            if c:
                h_cond -= cb / n * (c / cb) * math.log2(c / cb)
    chi = 0.0
    for b, cb in nb.items():
        for cls, cy in ny.items():
            e = cb * cy / n
            chi += (joint.get((b, cls), 0) - e) ** 2 / e
    return h_y - h_cond, chi


def mad(x):
    m = sum(x) / len(x)
    return sum(abs(v - m) for v in x) / len(x)


def am_gm(x):
    lo = min(x)
    s = [v - lo + 1 for v in x]
    am = sum(s) / len(s)
    gm = math.exp(sum(math.log(v) for v in s) / len(s))
    return am / gm


def _gini(labels, k):
    n = len(labels)
    if n == 0:
        return 0.0
    c = Counter(labels)
    return 1.0 - sum((c[i] / n) ** 2 for i in range(k))


def _thresholds(col):
    u = sorted(set(col))
    return [(a + b) / 2 for a, b in zip(u, u[1:])]


def best_gini_threshold(X, y, k, min_leaf=1):
    """Max weighted impurity decrease n*G - nl*Gl - nr*Gr over all midpoints."""
    n = len(y)
    parent = n * _gini(list(y), k)
    best = None
    for j in range(X.shape[1]):
        for t in _thresholds(X[:, j].tolist()):
            left = [y[i] for i in range(n) if X[i, j] <= t]
            right = [y[i] for i in range(n) if X[i, j] > t]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            dec = parent - len(left) * _gini(left, k) - len(right) * _gini(right, k)
            if best is None or dec > best[0]:
                best = (dec, j, t)
    return best


def best_gain_threshold(X, g, h, lam):
    """Max GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam) over all midpoints."""
    n = len(g)
    G, H = sum(g), sum(h)
    best = None
    for j in range(X.shape[1]):
        for t in _thresholds(X[:, j].tolist()):
            gl = sum(g[i] for i in range(n) if X[i, j] <= t)
            hl = sum(h[i] for i in range(n) if X[i, j] <= t)
            gain = gl**2 / (hl + lam) + (G - gl) ** 2 / (H - hl + lam) - G**2 / (H + lam)
            if best is None or gain > best[0]:
                best = (gain, j, t)
    return best


def tree_conditional_value(tree, x, subset, out=0):
    """Expected tree output with features outside ``subset`` integrated by cover."""

    def rec(node):
        f = tree.feature[node]
        if f < 0:
            return tree.value[node, out]
        l, r = tree.left[node], tree.right[node]
        if f in subset:
            return rec(l if x[f] <= tree.threshold[node] else r)
        return (tree.cover[l] * rec(l) + tree.cover[r] * rec(r)) / tree.cover[node]

    return rec(0)


def shapley_bruteforce(value_fn, d):
    """Exact Shapley values of a set function over ``d`` players."""
    phi = np.zeros(d)
    for i in range(d):
        others = [j for j in range(d) if j != i]
        for size in range(d):
            w = math.factorial(size) * math.factorial(d - size - 1) / math.factorial(d)
            for S in itertools.combinations(others, size):
                S = set(S)
                phi[i] += w * (value_fn(S | {i}) - value_fn(S))
    return phi


def count_binary(y_true, y_pred, positive):
    tp = fp = fn = tn = 0
    for t, p in zip(y_true, y_pred):
        if p == positive and t == positive:
            tp += 1
        elif p == positive:
            fp += 1
        elif t == positive:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn
