"""Random forest and gradient-boosted tree regressors built on binned CART."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import grow_tree, predict_tree_add

MAX_BINS = 64


def bin_columns(x: np.ndarray, max_bins: int = MAX_BINS):
    """Quantile-bin each column; returns (codes, edges, n_bins).

    ``codes[i, j]`` counts the edges of column ``j`` that are <= ``x[i, j]``,
    so identical ``searchsorted`` calls bin unseen data consistently.
    """
    n, p = x.shape
    codes = np.empty((n, p), dtype=np.uint8)
    edges: list[np.ndarray] = []
    n_bins = np.empty(p, dtype=np.int64)
    grid = np.linspace(0.0, 1.0, max_bins + 1)[1:-1]
    for j in range(p):
        col = x[:, j]
        if n == 0 or col.min() == col.max():
            e = np.empty(0)
        else:
            e = np.unique(np.quantile(col, grid))
        codes[:, j] = np.searchsorted(e, col, side="right")
        edges.append(e)
        n_bins[j] = e.size + 1
    return codes, edges, n_bins


def bin_with_edges(x: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    codes = np.empty(x.shape, dtype=np.uint8)
    for j, e in enumerate(edges):
        codes[:, j] = np.minimum(np.searchsorted(e, x[:, j], side="right"), 255)
    return codes


@dataclass
class _Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


def _fit_one_tree(codes, n_bins, y, w, rows, mtry, max_depth, min_leaf, seed) -> _Tree:
    cap = 2 * rows.shape[0] + 1
    feature = np.empty(cap, dtype=np.int64)
    threshold = np.empty(cap, dtype=np.int64)
    left = np.empty(cap, dtype=np.int64)
    right = np.empty(cap, dtype=np.int64)
    value = np.empty(cap)
    used = grow_tree(
        codes, n_bins, y, w, rows, mtry, max_depth, min_leaf, seed,
        feature, threshold, left, right, value,
    )
    return _Tree(feature[:used].copy(), threshold[:used].copy(),
                 left[:used].copy(), right[:used].copy(), value[:used].copy())


@dataclass
class ForestState:
    edges: list[np.ndarray]
    trees: list[_Tree]


def fit_forest(x, y, sample_weight=None, *, n_trees=200, mtry=None, max_depth=None,
               min_leaf=5, bootstrap=True, seed=0) -> ForestState:
    """Bagged regression trees.

    Sample weights enter via weighted bootstrap draws, or via the weighted
    split criterion when ``bootstrap=False``.  ``max_depth=None`` grows
    until the leaf-size floor; 0 means a root-only tree.  ``mtry`` defaults
    to ceil(p / 3).
    """
    n, p = x.shape
    codes, edges, n_bins = bin_columns(x)
    mtry = int(np.ceil(p / 3)) if mtry is None else int(mtry)
    depth_limit = -1 if max_depth is None else int(max_depth)
    rng = np.random.default_rng(seed)
    prob = None
    if sample_weight is not None:
        prob = np.asarray(sample_weight, dtype=float)
        prob = prob / prob.sum()
    w = np.ones(n) if bootstrap or sample_weight is None else np.asarray(sample_weight, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    all_rows = np.arange(n, dtype=np.int64)
    trees = []
    for _ in range(n_trees):
        rows = rng.choice(n, size=n, replace=True, p=prob).astype(np.int64) if bootstrap else all_rows
        tree_seed = int(rng.integers(0, 2**31 - 1))
        trees.append(_fit_one_tree(codes, n_bins, y, w, rows, mtry, depth_limit,
                                   min_leaf, tree_seed))
    return ForestState(edges=edges, trees=trees)


def predict_forest(state: ForestState, x) -> np.ndarray:
    codes = bin_with_edges(np.asarray(x, dtype=float), state.edges)
    out = np.zeros(x.shape[0])
    for tree in state.trees:
        predict_tree_add(codes, tree.feature, tree.threshold, tree.left,
                         tree.right, tree.value, out)
    return out / max(len(state.trees), 1)


@dataclass
class BoostState:
    edges: list[np.ndarray]
    trees: list[_Tree]  # leaf values pre-scaled by the learning rate
    base: float
    train_loss_path: list[float]


def fit_boost(x, y, sample_weight=None, *, n_rounds=200, max_depth=3,
              learning_rate=0.1, min_leaf=5, early_stopping=True,
              holdout_fraction=0.2, patience=10, seed=0) -> BoostState:
    """Squared-loss gradient boosting with optional holdout early stopping.

    The base prediction is the weighted mean of all rows; when early
    stopping is active the boosting rounds fit only the non-holdout part,
    so a zero learning rate always predicts the full-sample mean.
    """
    n, p = x.shape
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    base = float(np.average(y, weights=w))
    codes, edges, n_bins = bin_columns(x)

    rng = np.random.default_rng(seed)
    use_holdout = early_stopping and n >= 20
    if use_holdout:
        perm = rng.permutation(n)
        n_hold = max(1, int(round(holdout_fraction * n)))
        hold_rows = np.sort(perm[:n_hold]).astype(np.int64)
        fit_rows = np.sort(perm[n_hold:]).astype(np.int64)
    else:
        hold_rows = np.empty(0, dtype=np.int64)
        fit_rows = np.arange(n, dtype=np.int64)

    f_fit = np.full(fit_rows.shape[0], base)
    f_hold = np.full(hold_rows.shape[0], base)
    w_fit = w[fit_rows]
    codes_fit = np.ascontiguousarray(codes[fit_rows])
    codes_hold = np.ascontiguousarray(codes[hold_rows])

    trees: list[_Tree] = []
    loss_path: list[float] = []
    best_loss = np.inf
    best_iter = 0
    stale = 0
    all_fit = np.arange(fit_rows.shape[0], dtype=np.int64)
    for round_idx in range(n_rounds):
        resid = y[fit_rows] - f_fit
        tree_seed = int(rng.integers(0, 2**31 - 1))
        tree = _fit_one_tree(codes_fit, n_bins, resid, w_fit, all_fit, p,
                             max_depth, min_leaf, tree_seed)
        tree.value *= learning_rate
        step = np.zeros(fit_rows.shape[0])
        predict_tree_add(codes_fit, tree.feature, tree.threshold, tree.left,
                         tree.right, tree.value, step)
        f_fit += step
        trees.append(tree)
        loss_path.append(float(np.average((y[fit_rows] - f_fit) ** 2, weights=w_fit)))
        if use_holdout:
            step_h = np.zeros(hold_rows.shape[0])
            predict_tree_add(codes_hold, tree.feature, tree.threshold, tree.left,
                             tree.right, tree.value, step_h)
            f_hold += step_h
            hold_loss = float(np.average((y[hold_rows] - f_hold) ** 2, weights=w[hold_rows]))
            if hold_loss < best_loss - 1e-12:
                best_loss = hold_loss
                best_iter = round_idx + 1
                stale = 0
            else:
                stale += 1
                if stale >= patience:
                    break
        else:
            best_iter = round_idx + 1
    return BoostState(edges=edges, trees=trees[:best_iter], base=base,
                      train_loss_path=loss_path)


def predict_boost(state: BoostState, x) -> np.ndarray:
    codes = bin_with_edges(np.asarray(x, dtype=float), state.edges)
    out = np.full(x.shape[0], state.base)
    for tree in state.trees:
        predict_tree_add(codes, tree.feature, tree.threshold, tree.left,
                         tree.right, tree.value, out)
    return out
