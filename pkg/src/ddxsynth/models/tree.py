"""CART classification trees (Gini) over integer-coded features.

Numeric and binary columns split as ``x <= v``; categorical columns split
one-vs-rest as ``x == v``.  Rows carry integer weights, so a bootstrap
resample is expressed as multiplicities rather than copied rows.

Leaf class counts are stored sparsely: node ``i`` owns the entries
``leaf_ptr[i]:leaf_ptr[i + 1]`` of ``leaf_class`` / ``leaf_count`` (empty for
internal nodes).
"""
from __future__ import annotations

import numpy as np
from numba import njit

THRESHOLD, EQUALS = 0, 1
LEAF = -1


@njit(cache=True)
def _splitmix(state):
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _build(X, y, w, rows, kinds, n_values, n_classes, max_features, max_depth, min_leaf, seed):
    n = rows.shape[0]
    D = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int32)
    kind = np.zeros(cap, np.int8)
    value = np.zeros(cap, np.int32)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    node_start = np.zeros(cap, np.int64)
    node_end = np.zeros(cap, np.int64)
    leaf_class = np.zeros(n, np.int32)
    leaf_count = np.zeros(n, np.float64)
    n_entries = 0

    vmax = 1
    for f in range(D):
        if n_values[f] > vmax:
            vmax = n_values[f]
    hist = np.zeros((vmax, n_classes))
    vw = np.zeros(vmax)
    tc = np.zeros(n_classes)
    lc = np.zeros(n_classes)
    feats = np.arange(D)
    state = np.zeros(1, np.uint64)
    state[0] = np.uint64(seed)

    st_start = np.zeros(cap, np.int64)
    st_end = np.zeros(cap, np.int64)
    st_depth = np.zeros(cap, np.int64)
    st_node = np.zeros(cap, np.int64)
    sp = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_node[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        node = st_node[sp]

        tc[:] = 0.0
        for i in range(start, end):
            r = rows[i]
            tc[y[r]] += w[r]
        W = 0.0
        sq = 0.0
        n_present = 0
        for k in range(n_classes):
            W += tc[k]
            sq += tc[k] * tc[k]
            if tc[k] > 0:
                n_present += 1

        best_score = np.inf
        best_f = -1
        best_v = 0
        can_split = n_present > 1 and W >= 2 * min_leaf and (max_depth < 0 or depth < max_depth)
        if can_split:
            visited = 0
            i = 0
            while i < D and visited < max_features:
                j = i + np.int64(_splitmix(state) % np.uint64(D - i))
                tmp = feats[i]
                feats[i] = feats[j]
                feats[j] = tmp
                f = feats[i]
                i += 1
                V = n_values[f]
                hist[:V, :] = 0.0
                vw[:V] = 0.0
                for t in range(start, end):
                    r = rows[t]
                    v = X[r, f]
                    hist[v, y[r]] += w[r]
                    vw[v] += w[r]
                nonempty = 0
                for v in range(V):
                    if vw[v] > 0:
                        nonempty += 1
                if nonempty < 2:
                    continue
                visited += 1
                if kinds[f] == THRESHOLD:
                    lc[:] = 0.0
                    lw = 0.0
                    for v in range(V - 1):
                        if vw[v] == 0:
                            continue
                        lsq = 0.0
                        rsq = 0.0
                        for k in range(n_classes):
                            lc[k] += hist[v, k]
                            lsq += lc[k] * lc[k]
                            rk = tc[k] - lc[k]
                            rsq += rk * rk
                        lw += vw[v]
                        rw = W - lw
                        if lw < min_leaf or rw < min_leaf:
                            continue
                        score = (lw - lsq / lw) + (rw - rsq / rw)
                        if score < best_score or (score == best_score and (f < best_f or (f == best_f and v < best_v))):
                            best_score = score
                            best_f = f
                            best_v = v
                else:
                    for v in range(V):
                        lw = vw[v]
                        rw = W - lw
                        if lw == 0 or lw < min_leaf or rw < min_leaf:
                            continue
                        lsq = 0.0
                        rsq = 0.0
                        for k in range(n_classes):
                            lk = hist[v, k]
                            lsq += lk * lk
                            rk = tc[k] - lk
                            rsq += rk * rk
                        score = (lw - lsq / lw) + (rw - rsq / rw)
                        if score < best_score or (score == best_score and (f < best_f or (f == best_f and v < best_v))):
                            best_score = score
                            best_f = f
                            best_v = v

        if best_f < 0:
            node_start[node] = n_entries
            for k in range(n_classes):
                if tc[k] > 0:
                    leaf_class[n_entries] = k
                    leaf_count[n_entries] = tc[k]
                    n_entries += 1
            node_end[node] = n_entries
            continue

        fk = kinds[best_f]
        lo = start
        hi = end - 1
        while lo <= hi:
            x = X[rows[lo], best_f]
            go_left = (x <= best_v) if fk == THRESHOLD else (x == best_v)
            if go_left:
                lo += 1
            else:
                tmp = rows[lo]
                rows[lo] = rows[hi]
                rows[hi] = tmp
                hi -= 1
        feature[node] = best_f
        kind[node] = fk
        value[node] = best_v
        left[node] = n_nodes
        right[node] = n_nodes + 1
        node_start[node] = n_entries
        node_end[node] = n_entries
        # right pushed first so the left subtree is numbered depth-first
        st_start[sp] = lo
        st_end[sp] = end
        st_depth[sp] = depth + 1
        st_node[sp] = n_nodes + 1
        sp += 1
        st_start[sp] = start
        st_end[sp] = lo
        st_depth[sp] = depth + 1
        st_node[sp] = n_nodes
        sp += 1
        n_nodes += 2

    return (
        feature[:n_nodes].copy(),
        kind[:n_nodes].copy(),
        value[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        node_start[:n_nodes].copy(),
        node_end[:n_nodes].copy(),
        leaf_class[:n_entries].copy(),
        leaf_count[:n_entries].copy(),
    )


@njit(cache=True, nogil=True)
def _apply(X, feature, kind, value, left, right):
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        node = 0
        while left[node] != -1:
            x = X[i, feature[node]]
            if kind[node] == 0:
                go_left = x <= value[node]
            else:
                go_left = x == value[node]
            node = left[node] if go_left else right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def _accumulate(leaves, node_start, node_end, leaf_class, leaf_count, out, scale):
    for i in range(leaves.shape[0]):
        node = leaves[i]
        total = 0.0
        for e in range(node_start[node], node_end[node]):
            total += leaf_count[e]
        for e in range(node_start[node], node_end[node]):
            out[i, leaf_class[e]] += scale * leaf_count[e] / total


class DecisionTree:
    """Gini-impurity CART tree; ``max_features=None`` considers every column."""

    def __init__(self, max_depth=None, min_samples_leaf=1, max_features=None, seed=0):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.seed = seed

    def fit(self, X, y, kinds, n_classes, sample_weight=None, n_values=None) -> "DecisionTree":
        X = np.ascontiguousarray(X, dtype=np.int32)
        y = np.ascontiguousarray(y, dtype=np.int32)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("X must be 2-D with one row per label")
        if X.size and X.min() < 0:
            raise ValueError("features must be non-negative integer codes")
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        rows = np.flatnonzero(w > 0).astype(np.int64)
        if n_values is None:
            n_values = X.max(axis=0) + 1 if len(X) else np.ones(X.shape[1], dtype=np.int64)
        kinds = np.asarray([EQUALS if k in (EQUALS, "categorical") else THRESHOLD for k in kinds], dtype=np.int8)
        D = X.shape[1]
        m = D if self.max_features is None else max(1, min(int(self.max_features), D))
        depth = -1 if self.max_depth is None else int(self.max_depth)
        self.n_classes = int(n_classes)
        self.n_features = D
        (
            self.feature,
            self.kind,
            self.value,
            self.left,
            self.right,
            self.node_start,
            self.node_end,
            self.leaf_class,
            self.leaf_count,
        ) = _build(
            X, y, w, rows, kinds, np.asarray(n_values, dtype=np.int64), self.n_classes,
            m, depth, float(self.min_samples_leaf), np.uint64(self.seed),
        )
        return self

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self) -> np.ndarray:
        return self.left == LEAF

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.int32)
        return _apply(X, self.feature, self.kind, self.value, self.left, self.right)

    def leaf_counts(self, node: int) -> np.ndarray:
        out = np.zeros(self.n_classes)
        sl = slice(self.node_start[node], self.node_end[node])
        out[self.leaf_class[sl]] = self.leaf_count[sl]
        return out

    def accumulate_proba(self, X, out: np.ndarray, scale: float = 1.0) -> np.ndarray:
        _accumulate(self.apply(X), self.node_start, self.node_end, self.leaf_class, self.leaf_count, out, scale)
        return out

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return self.accumulate_proba(X, np.zeros((len(X), self.n_classes)))

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "kind": self.kind.tolist(),
            "value": self.value.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "node_start": self.node_start.tolist(),
            "node_end": self.node_end.tolist(),
            "leaf_class": self.leaf_class.tolist(),
            "leaf_count": self.leaf_count.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, n_classes: int, n_features: int | None = None) -> "DecisionTree":
        t = cls()
        t.n_classes = int(n_classes)
        t.n_features = n_features
        t.feature = np.asarray(d["feature"], dtype=np.int32)
        t.kind = np.asarray(d["kind"], dtype=np.int8)
        t.value = np.asarray(d["value"], dtype=np.int32)
        t.left = np.asarray(d["left"], dtype=np.int32)
        t.right = np.asarray(d["right"], dtype=np.int32)
        t.node_start = np.asarray(d["node_start"], dtype=np.int64)
        t.node_end = np.asarray(d["node_end"], dtype=np.int64)
        t.leaf_class = np.asarray(d["leaf_class"], dtype=np.int32)
        t.leaf_count = np.asarray(d["leaf_count"], dtype=np.float64)
        return t
