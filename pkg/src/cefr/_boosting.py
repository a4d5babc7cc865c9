"""Histogram-based gradient boosted trees (internal engine).

Trees are grown level-wise on pre-binned features with an exact scan over
(feature, bin) split candidates, so training is deterministic and invariant
to row order up to float round-off. Nodes live in a complete binary heap
(children of i are 2i+1 and 2i+2); leaves carry Newton steps clipped to
LEAF_CLIP. The numba kernels below are the only performance-critical loops
in the package.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MAX_BINS = 64
LEAF_CLIP = 10.0
MIN_GAIN = 1e-12
_H_FLOOR = 1e-12


def bin_features(x: np.ndarray, max_bins: int = MAX_BINS):
    """Quantile bin edges per feature and the binned codes.

    Codes are ``searchsorted(edges, x, side='left')`` so code <= b exactly
    when x <= edges[b]; split thresholds in raw space are bin edges.
    """
    n, q = x.shape
    edges = []
    codes = np.empty((n, q), dtype=np.int64)
    for j in range(q):
        e = np.unique(np.quantile(x[:, j], np.linspace(0.0, 1.0, max_bins + 1)[1:-1]))
        edges.append(e)
        codes[:, j] = np.searchsorted(e, x[:, j], side="left")
    return edges, codes


@njit(cache=True, nogil=True)
def _grow_tree(codes, n_edges, grad, hess, max_depth, min_leaf,
               feat, bin_thr, leaf_val):  # pragma: no cover - jitted
    n, q = codes.shape
    node = np.zeros(n, dtype=np.int64)
    max_bins = 0
    for j in range(q):
        if n_edges[j] + 1 > max_bins:
            max_bins = n_edges[j] + 1
    for depth in range(max_depth + 1):
        first = 2 ** depth - 1
        n_level = 2 ** depth
        gs = np.zeros(n_level)
        hs = np.zeros(n_level)
        cs = np.zeros(n_level, dtype=np.int64)
        for i in range(n):
            nd = node[i]
            if nd >= first:
                r = nd - first
                gs[r] += grad[i]
                hs[r] += hess[i]
                cs[r] += 1
        for r in range(n_level):
            if cs[r] > 0:
                h = hs[r] if hs[r] > _H_FLOOR else _H_FLOOR
                v = -gs[r] / h
                if v > LEAF_CLIP:
                    v = LEAF_CLIP
                elif v < -LEAF_CLIP:
                    v = -LEAF_CLIP
                leaf_val[first + r] = v
        if depth == max_depth:
            break
        hg = np.zeros((n_level, q, max_bins))
        hh = np.zeros((n_level, q, max_bins))
        hc = np.zeros((n_level, q, max_bins), dtype=np.int64)
        for i in range(n):
            nd = node[i]
            if nd < first:
                continue
            r = nd - first
            g = grad[i]
            h = hess[i]
            for j in range(q):
                c = codes[i, j]
                hg[r, j, c] += g
                hh[r, j, c] += h
                hc[r, j, c] += 1
        for r in range(n_level):
            if cs[r] < 2 * min_leaf:
                continue
            gtot = gs[r]
            htot = hs[r] if hs[r] > _H_FLOOR else _H_FLOOR
            parent = gtot * gtot / htot
            best_gain = MIN_GAIN
            best_f = -1
            best_b = -1
            for j in range(q):
                gl = 0.0
                hl = 0.0
                cl = 0
                for b in range(n_edges[j]):
                    gl += hg[r, j, b]
                    hl += hh[r, j, b]
                    cl += hc[r, j, b]
                    cr = cs[r] - cl
                    if cl < min_leaf or cr < min_leaf:
                        continue
                    gr = gtot - gl
                    hld = hl if hl > _H_FLOOR else _H_FLOOR
                    hrd = hs[r] - hl
                    if hrd < _H_FLOOR:
                        hrd = _H_FLOOR
                    gain = 0.5 * (gl * gl / hld + gr * gr / hrd - parent)
                    if gain > best_gain:
                        best_gain = gain
                        best_f = j
                        best_b = b
            if best_f >= 0:
                feat[first + r] = best_f
                bin_thr[first + r] = best_b
        for i in range(n):
            nd = node[i]
            if nd >= first and feat[nd] >= 0:
                if codes[i, feat[nd]] > bin_thr[nd]:
                    node[i] = 2 * nd + 2
                else:
                    node[i] = 2 * nd + 1
    return node


@njit(cache=True, nogil=True)
def _predict_forest(feats, thr_vals, leaf_vals, x, lr, f0):  # pragma: no cover
    n = x.shape[0]
    n_trees = feats.shape[0]
    out = np.full(n, f0)
    for i in range(n):
        acc = 0.0
        for t in range(n_trees):
            nd = 0
            while feats[t, nd] >= 0:
                if x[i, feats[t, nd]] <= thr_vals[t, nd]:
                    nd = 2 * nd + 1
                else:
                    nd = 2 * nd + 2
            acc += leaf_vals[t, nd]
        out[i] = out[i] + lr * acc
    return out


class BoostedForest:
    """Stagewise ensemble of depth-limited regression trees.

    loss='squared' fits residuals; loss='logistic' fits the log-odds with
    per-leaf Newton steps. Raw scores accumulate as f0 + lr * sum(tree).
    """

    __slots__ = ("loss", "n_trees", "max_depth", "learning_rate", "min_leaf",
                 "f0", "feats", "thr_vals", "leaf_vals", "train_loss_path")

    def __init__(self, loss, n_trees, max_depth, learning_rate, min_leaf):
        self.loss = loss
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_leaf = min_leaf

    def fit(self, x: np.ndarray, y: np.ndarray) -> "BoostedForest":
        n = y.shape[0]
        edges, codes = bin_features(x)
        n_edges = np.array([len(e) for e in edges], dtype=np.int64)
        if self.loss == "squared":
            self.f0 = float(y.mean())
        else:
            p = min(max(float(y.mean()), 1e-12), 1.0 - 1e-12)
            self.f0 = float(np.log(p / (1.0 - p)))
        raw = np.full(n, self.f0)
        n_nodes = 2 ** (self.max_depth + 1) - 1
        feats = np.full((self.n_trees, n_nodes), -1, dtype=np.int64)
        thr_vals = np.zeros((self.n_trees, n_nodes))
        leaf_vals = np.zeros((self.n_trees, n_nodes))
        losses = np.empty(self.n_trees + 1)
        losses[0] = self._loss_value(raw, y)
        for t in range(self.n_trees):
            if self.loss == "squared":
                grad = raw - y
                hess = np.ones(n)
            else:
                p = 1.0 / (1.0 + np.exp(-raw))
                grad = p - y
                hess = np.maximum(p * (1.0 - p), _H_FLOOR)
            bin_thr = np.zeros(n_nodes, dtype=np.int64)
            node = _grow_tree(codes, n_edges, grad, hess,
                              self.max_depth, self.min_leaf,
                              feats[t], bin_thr, leaf_vals[t])
            split = feats[t] >= 0
            for nd in np.flatnonzero(split):
                thr_vals[t, nd] = edges[feats[t, nd]][bin_thr[nd]]
            raw = raw + self.learning_rate * leaf_vals[t][node]
            losses[t + 1] = self._loss_value(raw, y)
        self.feats = feats
        self.thr_vals = thr_vals
        self.leaf_vals = leaf_vals
        self.train_loss_path = losses
        return self

    def _loss_value(self, raw, y) -> float:
        if self.loss == "squared":
            return float(np.mean((y - raw) ** 2))
        # stable mean log-loss: log(1+e^raw) - y*raw
        return float(np.mean(np.logaddexp(0.0, raw) - y * raw))

    def raw_score(self, x: np.ndarray) -> np.ndarray:
        return _predict_forest(self.feats, self.thr_vals, self.leaf_vals,
                               np.ascontiguousarray(x, dtype=np.float64),
                               self.learning_rate, self.f0)

    def predict(self, x: np.ndarray) -> np.ndarray:
        raw = self.raw_score(x)
        if self.loss == "squared":
            return raw
        return 1.0 / (1.0 + np.exp(-raw))
