"""Numba kernels for tree growing/prediction and the lasso path.

Trees operate on pre-binned feature codes (uint8) so split search reduces
to per-node histograms; thresholds are bin indices resolved against the
training quantile edges at prediction time.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def grow_tree(codes, n_bins, y, w, rows, mtry, max_depth, min_leaf, seed,
              feature, threshold, left, right, value):
    """Grow one CART regression tree in place; returns the node count.

    ``rows`` may contain repeated indices (bootstrap draws).  Split quality
    is the weighted sum-of-squares reduction; a node becomes a leaf when it
    is too small, too deep (``max_depth < 0`` disables the depth limit) or
    no split improves.
    """
    np.random.seed(seed)
    n_feats = codes.shape[1]
    idx = rows.copy()
    n = idx.shape[0]

    max_bins = 0
    for j in range(n_feats):
        if n_bins[j] > max_bins:
            max_bins = n_bins[j]
    hist_w = np.zeros(max_bins)
    hist_wy = np.zeros(max_bins)
    hist_n = np.zeros(max_bins, dtype=np.int64)
    feat_pool = np.arange(n_feats)
    buf = np.empty(n, dtype=np.int64)

    stack = np.empty((n + 2, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        n_node = end - start

        sw = 0.0
        swy = 0.0
        for ii in range(start, end):
            i = idx[ii]
            sw += w[i]
            swy += w[i] * y[i]
        value[node] = swy / sw
        feature[node] = -1
        if n_node < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        parent_score = swy * swy / sw
        best_gain = 1e-12
        best_feat = -1
        best_bin = -1

        m = mtry if mtry < n_feats else n_feats
        for t in range(m):
            r = t + np.random.randint(0, n_feats - t)
            tmp = feat_pool[t]
            feat_pool[t] = feat_pool[r]
            feat_pool[r] = tmp
        for t in range(m):
            f = feat_pool[t]
            nb = n_bins[f]
            if nb <= 1:
                continue
            for b in range(nb):
                hist_w[b] = 0.0
                hist_wy[b] = 0.0
                hist_n[b] = 0
            for ii in range(start, end):
                i = idx[ii]
                b = codes[i, f]
                hist_w[b] += w[i]
                hist_wy[b] += w[i] * y[i]
                hist_n[b] += 1
            cw = 0.0
            cwy = 0.0
            cn = 0
            for b in range(nb - 1):
                cw += hist_w[b]
                cwy += hist_wy[b]
                cn += hist_n[b]
                if cn < min_leaf or cw <= 0.0:
                    continue
                if n_node - cn < min_leaf:
                    break
                rw = sw - cw
                if rw <= 0.0:
                    break
                rest = swy - cwy
                gain = cwy * cwy / cw + rest * rest / rw - parent_score
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    best_bin = b

        if best_feat < 0:
            continue

        nl = 0
        nr = 0
        for ii in range(start, end):
            i = idx[ii]
            if codes[i, best_feat] <= best_bin:
                idx[start + nl] = i
                nl += 1
            else:
                buf[nr] = i
                nr += 1
        for jj in range(nr):
            idx[start + nl + jj] = buf[jj]

        feature[node] = best_feat
        threshold[node] = best_bin
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack[top, 0] = n_nodes
        stack[top, 1] = start
        stack[top, 2] = start + nl
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = n_nodes + 1
        stack[top, 1] = start + nl
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        n_nodes += 2

    return n_nodes


@njit(cache=True)
def predict_tree_add(codes, feature, threshold, left, right, value, out):
    """Accumulate one tree's predictions into ``out`` (binned inputs)."""
    for r in range(codes.shape[0]):
        node = 0
        while feature[node] >= 0:
            if codes[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] += value[node]


@njit(cache=True)
def lasso_path(xs, ys, col_sq, lambdas, max_iter, tol, beta_out):
    """Cyclic coordinate descent over a decreasing lambda path, warm-started.

    Minimizes 0.5 * ||ys - xs @ beta||^2 + lam * ||beta||_1 for each lam.
    Callers pre-center (and optionally pre-scale) columns and fold sample
    weights into ``xs``/``ys`` as sqrt-weight row scalings.
    """
    n, p = xs.shape
    beta = np.zeros(p)
    r = ys.copy()
    for li in range(lambdas.shape[0]):
        lam = lambdas[li]
        for _ in range(max_iter):
            max_delta = 0.0
            for j in range(p):
                if col_sq[j] <= 0.0:
                    continue
                rho = col_sq[j] * beta[j]
                for i in range(n):
                    rho += xs[i, j] * r[i]
                if rho > lam:
                    bnew = (rho - lam) / col_sq[j]
                elif rho < -lam:
                    bnew = (rho + lam) / col_sq[j]
                else:
                    bnew = 0.0
                delta = bnew - beta[j]
                if delta != 0.0:
                    for i in range(n):
                        r[i] -= delta * xs[i, j]
                    beta[j] = bnew
                    scaled = abs(delta) * np.sqrt(col_sq[j])
                    if scaled > max_delta:
                        max_delta = scaled
            if max_delta < tol:
                break
        for j in range(p):
            beta_out[li, j] = beta[j]
