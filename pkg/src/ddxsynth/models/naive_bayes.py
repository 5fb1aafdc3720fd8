"""Naive Bayes with a per-feature choice of likelihood.

Numeric columns are Gaussian, binary columns Bernoulli and categorical
columns categorical; all products are taken in log space and normalised with
log-sum-exp.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ..encoding import BINARY, CATEGORICAL, NUMERIC, EncodedDataset, SchemaMismatchError

FORMAT_VERSION = 1
_PROB_EPS = 1e-12


class FitError(ValueError):
    pass


def _as_rows(model, data) -> np.ndarray:
    if isinstance(data, EncodedDataset):
        if model.fingerprint is not None and data.fingerprint != model.fingerprint:
            raise SchemaMismatchError(
                f"dataset fingerprint {data.fingerprint[:12]} does not match model {model.fingerprint[:12]}"
            )
        data = data.features
    X = np.atleast_2d(np.asarray(data))
    if X.shape[1] != len(model.kinds):
        raise SchemaMismatchError(f"expected {len(model.kinds)} columns, got {X.shape[1]}")
    return X


class HybridNaiveBayes:
    def __init__(self, alpha: float = 1.0, var_floor: float = 1e-9):
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        if var_floor <= 0:
            raise ValueError("var_floor must be positive")
        self.alpha = alpha
        self.var_floor = var_floor
        self.fingerprint = None

    def fit(self, dataset: EncodedDataset) -> "HybridNaiveBayes":
        schema = dataset.schema
        self.fit_arrays(
            dataset.features,
            dataset.labels,
            schema.kinds,
            [f.n_categories for f in schema.features],
            schema.n_classes,
        )
        self.fingerprint = schema.fingerprint
        return self

    def fit_arrays(self, X, y, kinds, n_categories, n_classes: int) -> "HybridNaiveBayes":
        X = np.asarray(X)
        y = np.asarray(y)
        self.kinds = tuple(kinds)
        self.n_categories = tuple(int(c) for c in n_categories)
        self.n_classes = int(n_classes)
        onehot = np.zeros((len(y), n_classes))
        onehot[np.arange(len(y)), y] = 1.0
        counts = onehot.sum(axis=0)
        if np.any(counts == 0):
            missing = np.flatnonzero(counts == 0).tolist()
            raise FitError(f"classes without training rows: {missing}")
        self.class_log_prior_ = np.log(counts / counts.sum())

        kinds_arr = np.array(self.kinds)
        self.numeric_idx_ = np.flatnonzero(kinds_arr == NUMERIC)
        self.binary_idx_ = np.flatnonzero(kinds_arr == BINARY)
        self.categorical_idx_ = np.flatnonzero(kinds_arr == CATEGORICAL)

        Xn = X[:, self.numeric_idx_].astype(float)
        self.means_ = onehot.T @ Xn / counts[:, None]
        resid = Xn - self.means_[y]
        self.vars_ = np.maximum(onehot.T @ resid**2 / counts[:, None], self.var_floor)

        Xb = X[:, self.binary_idx_].astype(float)
        theta = (onehot.T @ Xb + self.alpha) / (counts[:, None] + 2 * self.alpha)
        self.theta_ = np.clip(theta, _PROB_EPS, 1 - _PROB_EPS)

        self.category_probs_ = []
        for j in self.categorical_idx_:
            n_cat = self.n_categories[j]
            col = X[:, j]
            if col.size and (col.min() < 0 or col.max() >= n_cat):
                raise FitError(f"column {j} has codes outside [0, {n_cat})")
            table = np.zeros((n_classes, n_cat))
            np.add.at(table, (y, col), 1.0)
            table = (table + self.alpha) / (counts[:, None] + n_cat * self.alpha)
            table = np.clip(table, _PROB_EPS, None)
            self.category_probs_.append(table / table.sum(axis=1, keepdims=True))
        self._cache_logs()
        return self

    def _cache_logs(self):
        self._log_theta = np.log(self.theta_)
        self._log_1m_theta = np.log1p(-self.theta_)
        self._log_cat = [np.log(t) for t in self.category_probs_]

    def joint_log_likelihood(self, data) -> np.ndarray:
        X = _as_rows(self, data)
        jll = np.tile(self.class_log_prior_, (X.shape[0], 1))
        if len(self.numeric_idx_):
            Xn = X[:, self.numeric_idx_].astype(float)
            diff = Xn[:, None, :] - self.means_[None, :, :]
            jll += (-0.5 * np.log(2 * np.pi * self.vars_)[None] - diff**2 / (2 * self.vars_[None])).sum(axis=2)
        if len(self.binary_idx_):
            Xb = X[:, self.binary_idx_].astype(float)
            jll += Xb @ self._log_theta.T + (1 - Xb) @ self._log_1m_theta.T
        for j, logt in zip(self.categorical_idx_, self._log_cat):
            col = X[:, j]
            if col.size and (col.min() < 0 or col.max() >= logt.shape[1]):
                raise SchemaMismatchError(f"column {j} has codes outside [0, {logt.shape[1]})")
            jll += logt[:, col].T
        return jll

    def predict_proba(self, data) -> np.ndarray:
        jll = self.joint_log_likelihood(data)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def predict(self, data) -> np.ndarray:
        return np.argmax(self.joint_log_likelihood(data), axis=1)

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "model": "naive_bayes",
            "version": FORMAT_VERSION,
            "fingerprint": self.fingerprint,
            "alpha": self.alpha,
            "var_floor": self.var_floor,
            "kinds": list(self.kinds),
            "n_categories": list(self.n_categories),
            "n_classes": self.n_classes,
            "class_log_prior": self.class_log_prior_.tolist(),
            "means": self.means_.tolist(),
            "vars": self.vars_.tolist(),
            "theta": self.theta_.tolist(),
            "category_probs": [t.tolist() for t in self.category_probs_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HybridNaiveBayes":
        if d.get("model") != "naive_bayes" or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a naive_bayes model of a supported version")
        m = cls(d["alpha"], d["var_floor"])
        m.fingerprint = d["fingerprint"]
        m.kinds = tuple(d["kinds"])
        m.n_categories = tuple(d["n_categories"])
        m.n_classes = d["n_classes"]
        kinds_arr = np.array(m.kinds)
        m.numeric_idx_ = np.flatnonzero(kinds_arr == NUMERIC)
        m.binary_idx_ = np.flatnonzero(kinds_arr == BINARY)
        m.categorical_idx_ = np.flatnonzero(kinds_arr == CATEGORICAL)
        k = m.n_classes
        m.class_log_prior_ = np.asarray(d["class_log_prior"], dtype=float)
        m.means_ = np.asarray(d["means"], dtype=float).reshape(k, len(m.numeric_idx_))
        m.vars_ = np.asarray(d["vars"], dtype=float).reshape(k, len(m.numeric_idx_))
        m.theta_ = np.asarray(d["theta"], dtype=float).reshape(k, len(m.binary_idx_))
        m.category_probs_ = [np.asarray(t, dtype=float) for t in d["category_probs"]]
        m._cache_logs()
        return m


def nb_fit(dataset: EncodedDataset, alpha: float = 1.0, var_floor: float = 1e-9) -> HybridNaiveBayes:
    return HybridNaiveBayes(alpha, var_floor).fit(dataset)


def nb_predict_proba(model: HybridNaiveBayes, rows) -> np.ndarray:
    return model.predict_proba(rows)
