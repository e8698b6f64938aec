"""Gradient boosting with depth-limited regression trees.

Split search is exact over the distinct feature values when a feature has at
most ``max_bins`` of them, and over quantile cut points otherwise.  Leaf values
are second-order (Newton) steps with an L2 penalty on the leaf weight, so the
same code handles squared-error and logistic loss.
"""

from __future__ import annotations

import numba
import numpy as np
from scipy.special import expit


def _cut_points(x, max_bins):
    u = np.unique(x)
    if u.size <= 1:
        return np.empty(0)
    if u.size <= max_bins:
        return (u[:-1] + u[1:]) / 2.0
    q = np.quantile(x, np.linspace(0, 1, max_bins + 1)[1:-1])
    q = np.unique(q)
    return q[q < u[-1]]


class _Binner:
    def __init__(self, X, max_bins):
        self.thresholds = [_cut_points(X[:, j], max_bins) for j in range(X.shape[1])]
        self.nbins = max(t.size for t in self.thresholds) + 1

    def codes(self, X):
        # code = number of thresholds strictly below x, so x <= thr[b] <=> code <= b
        out = np.empty(X.shape, dtype=np.int64)
        for j, thr in enumerate(self.thresholds):
            out[:, j] = np.searchsorted(thr, X[:, j], side="left")
        return out


class Tree:
    """Array-backed binary tree; ``feature == -1`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            idx = np.flatnonzero(inner)
            nd = node[idx]
            go_left = X[idx, f[idx]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self):
        return {k: getattr(self, k).tolist()
                for k in ("feature", "threshold", "left", "right", "value")}


def _grow_tree(codes, flat, g, h, binner, max_depth, reg_lambda, min_child_weight):
    """Level-wise greedy growth.  Returns the tree and the leaf of every training row.

    All nodes of one level are scored with a single histogram pass.
    """
    n, p = codes.shape
    nb = binner.nbins
    valid = np.zeros((p, nb - 1), dtype=bool)
    for j, thr in enumerate(binner.thresholds):
        valid[j, :thr.size] = True

    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [0.0]
    level_nodes = np.array([0])          # tree ids of the current level
    pos = np.zeros(n, dtype=np.int64)    # row -> index into level_nodes, -1 once settled
    leaf_of = np.zeros(n, dtype=np.int64)
    for depth in range(max_depth + 1):
        live = np.flatnonzero(pos >= 0)
        L = level_nodes.size
        lp = pos[live]
        G = np.bincount(lp, weights=g[live], minlength=L)
        H = np.bincount(lp, weights=h[live], minlength=L)
        for a, node in enumerate(level_nodes):
            value[node] = -G[a] / (H[a] + reg_lambda)
        leaf_of[live] = level_nodes[lp]
        if depth == max_depth:
            break
        keys = (lp[:, None] * (p * nb) + flat[live]).ravel()
        GB = np.bincount(keys, weights=np.repeat(g[live], p), minlength=L * p * nb)
        HB = np.bincount(keys, weights=np.repeat(h[live], p), minlength=L * p * nb)
        GL = np.cumsum(GB.reshape(L, p, nb), axis=2)[:, :, :-1]
        HL = np.cumsum(HB.reshape(L, p, nb), axis=2)[:, :, :-1]
        Gn, Hn = G[:, None, None], H[:, None, None]
        GR, HR = Gn - GL, Hn - HL
        gain = (GL**2 / (HL + reg_lambda) + GR**2 / (HR + reg_lambda)
                - Gn**2 / (Hn + reg_lambda))
        ok = valid[None] & (HL >= min_child_weight) & (HR >= min_child_weight)
        gain = np.where(ok, gain, -np.inf).reshape(L, -1)
        # argmax returns the first maximum: lowest column, then smallest threshold
        best = np.argmax(gain, axis=1)
        best_gain = gain[np.arange(L), best]
        split = best_gain > 1e-12
        if not split.any():
            break
        bj, bb = np.divmod(best, nb - 1)
        child_left = np.full(L, -1)
        children = []
        for a in np.flatnonzero(split):
            node = level_nodes[a]
            j, b = int(bj[a]), int(bb[a])
            feature[node], threshold[node] = j, float(binner.thresholds[j][b])
            for _ in range(2):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
            left[node], right[node] = len(feature) - 2, len(feature) - 1
            child_left[a] = len(children)
            children.extend([left[node], right[node]])
        row_split = split[lp]
        settled = live[~row_split]
        pos[settled] = -1
        moving = live[row_split]
        mp = pos[moving]
        go_left = codes[moving, bj[mp]] <= bb[mp]
        pos[moving] = child_left[mp] + np.where(go_left, 0, 1)
        level_nodes = np.array(children, dtype=np.int64)
    return Tree(feature, threshold, left, right, value), leaf_of


def _loss(F, y, binary):
    if binary:
        return float(np.mean(np.logaddexp(0.0, F) - y * F))
    return float(0.5 * np.mean((y - F) ** 2))


def boost(X, y, binary, rounds=100, max_depth=3, learning_rate=0.1, reg_lambda=1.0,
          min_child_weight=1.0, max_bins=256):
    """Fit a boosted ensemble; returns ``(base_score, trees, loss_history)``.

    ``loss_history[r]`` is the mean training loss after ``r`` rounds.
    """
    n, p = X.shape
    binner = _Binner(X, max_bins)
    codes = binner.codes(X)
    flat = codes + (np.arange(p) * binner.nbins)[None, :]
    if binary:
        ybar = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        base = float(np.log(ybar / (1 - ybar)))
    else:
        base = float(y.mean())
    F = np.full(n, base)
    history = [_loss(F, y, binary)]
    trees = []
    for _ in range(rounds):
        if binary:
            mu = expit(F)
            g, h = mu - y, mu * (1 - mu)
        else:
            g, h = F - y, np.ones(n)
        tree, leaf_of = _grow_tree(codes, flat, g, h, binner, max_depth, reg_lambda,
                                   min_child_weight)
        tree.value *= learning_rate
        F = F + tree.value[leaf_of]
        trees.append(tree)
        history.append(_loss(F, y, binary))
    return base, trees, history


def _tree_depth(t, node=0):
    if t.feature[node] < 0:
        return 0
    return 1 + max(_tree_depth(t, t.left[node]), _tree_depth(t, t.right[node]))


def pack(trees):
    """Lay every tree out as a complete binary tree of the ensemble's depth.

    Internal node ``i`` has children ``2i+1`` / ``2i+2``.  Leaves above the
    bottom level become pass-through nodes (threshold ``+inf``) whose value is
    carried down the left branch, so prediction runs a fixed number of
    comparisons per tree.
    """
    D = max((_tree_depth(t) for t in trees), default=0)
    R, n_inner = len(trees), 2**D - 1
    feat = np.zeros((R, max(n_inner, 1)), dtype=np.int64)
    thr = np.full((R, max(n_inner, 1)), np.inf)
    leaf = np.zeros((R, 2**D))
    for r, t in enumerate(trees):
        stack = [(0, 0, 0)]  # (tree node, heap slot, depth)
        while stack:
            node, slot, d = stack.pop()
            if d == D:
                leaf[r, slot - n_inner] = t.value[node]
            elif t.feature[node] < 0:
                stack.append((node, 2 * slot + 1, d + 1))
            else:
                feat[r, slot], thr[r, slot] = t.feature[node], t.threshold[node]
                stack.append((t.left[node], 2 * slot + 1, d + 1))
                stack.append((t.right[node], 2 * slot + 2, d + 1))
    return D, feat, thr, leaf


@numba.njit(cache=True)
def _margin_packed(X, base, depth, feat, thr, leaf):
    n = X.shape[0]
    R = feat.shape[0]
    n_inner = (1 << depth) - 1
    out = np.full(n, base)
    for i in range(n):
        acc = 0.0
        for r in range(R):
            node = 0
            for _ in range(depth):
                node = 2 * node + 1 + (X[i, feat[r, node]] > thr[r, node])
            acc += leaf[r, node - n_inner]
        out[i] += acc
    return out


def ensemble_margin(base, trees, X, packed=None):
    if not trees:
        return np.full(X.shape[0], base)
    packed = pack(trees) if packed is None else packed
    return _margin_packed(np.ascontiguousarray(X, dtype=np.float64), float(base), *packed)
