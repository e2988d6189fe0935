"""Compiled kernels for gini tree induction and traversal.

Trees are flat arrays indexed by node id (root = 0).  ``left[i] == -1``
marks a leaf.  Numeric splits send ``x <= threshold`` left.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _gini_from_counts(counts, total):
    if total <= 0:
        return 0.0
    s = 0.0
    for c in counts:
        s += c * c
    return 1.0 - s / (total * total)


@njit(cache=True)
def build_tree(X, y, sample_idx, n_classes, mtry, min_node_size, max_depth, seed):
    """Grow one tree on rows ``sample_idx`` (duplicates allowed).

    At every node ``mtry`` features are drawn without replacement; the
    (feature, midpoint) pair with the lowest weighted child gini wins, ties
    going to the earlier draw and the lower threshold.  A node becomes a leaf
    when it is pure, holds ``<= min_node_size`` rows, reaches ``max_depth``
    (negative = unlimited) or none of the drawn features varies.

    Returns (feature, threshold, left, right, counts, depth,
    impurity_decrease), each trimmed to the number of nodes grown.
    """
    np.random.seed(seed)
    n = sample_idx.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    counts = np.zeros((cap, n_classes))
    depth = np.zeros(cap, np.int64)
    decrease = np.zeros(cap)

    idx = sample_idx.copy()
    buf = np.empty(n, np.int64)
    vals = np.empty(n)
    feats = np.arange(p)
    cl = np.zeros(n_classes)
    cr = np.zeros(n_classes)

    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    top = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        size = hi - lo
        for t in range(lo, hi):
            counts[node, y[idx[t]]] += 1.0
        imp = _gini_from_counts(counts[node], size)
        if imp <= 0.0 or size <= min_node_size:
            continue
        if max_depth >= 0 and depth[node] >= max_depth:
            continue

        # partial Fisher-Yates draw of mtry candidate features
        for i in range(mtry):
            j = i + np.random.randint(p - i)
            tmp = feats[i]
            feats[i] = feats[j]
            feats[j] = tmp

        sq_total = 0.0
        for c in range(n_classes):
            sq_total += counts[node, c] * counts[node, c]

        best_score = -1.0
        best_feat = -1
        best_thr = 0.0
        for fi in range(mtry):
            f = feats[fi]
            for t in range(size):
                vals[t] = X[idx[lo + t], f]
            order = np.argsort(vals[:size], kind="mergesort")
            for c in range(n_classes):
                cl[c] = 0.0
                cr[c] = counts[node, c]
            sq_l = 0.0
            sq_r = sq_total
            for t in range(size - 1):
                c = y[idx[lo + order[t]]]
                sq_l += 2.0 * cl[c] + 1.0
                sq_r -= 2.0 * cr[c] - 1.0
                cl[c] += 1.0
                cr[c] -= 1.0
                v = vals[order[t]]
                vn = vals[order[t + 1]]
                if vn <= v:
                    continue
                nl = t + 1.0
                nr = size - nl
                # maximising sum_k n_k^2 / n per child == minimising weighted gini
                score = sq_l / nl + sq_r / nr
                if score > best_score:
                    best_score = score
                    best_feat = f
                    thr = 0.5 * (v + vn)
                    if thr >= vn:
                        thr = v
                    best_thr = thr
        if best_feat < 0:
            continue

        # stable partition of idx[lo:hi]
        nl_i = 0
        for t in range(lo, hi):
            if X[idx[t], best_feat] <= best_thr:
                nl_i += 1
        a = lo
        b = lo + nl_i
        for t in range(lo, hi):
            r = idx[t]
            if X[r, best_feat] <= best_thr:
                buf[a] = r
                a += 1
            else:
                buf[b] = r
                b += 1
        for t in range(lo, hi):
            idx[t] = buf[t]

        lch = n_nodes
        rch = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = lch
        right[node] = rch
        depth[lch] = depth[node] + 1
        depth[rch] = depth[node] + 1
        # size * gini(parent) - sum over children of size * gini(child)
        decrease[node] = best_score - sq_total / size
        # push right first so the left subtree is expanded first
        st_node[top] = rch
        st_lo[top] = lo + nl_i
        st_hi[top] = hi
        top += 1
        st_node[top] = lch
        st_lo[top] = lo
        st_hi[top] = lo + nl_i
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        counts[:n_nodes].copy(),
        depth[:n_nodes].copy(),
        decrease[:n_nodes].copy(),
    )


@njit(cache=True)
def apply_tree(feature, threshold, left, right, X):
    """Leaf id reached by every row of ``X``."""
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while left[node] != -1:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
