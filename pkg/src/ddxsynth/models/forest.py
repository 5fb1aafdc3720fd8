"""Bagged ensemble of :class:`~ddxsynth.models.tree.DecisionTree`."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..encoding import CATEGORICAL, EncodedDataset, SchemaMismatchError
from .tree import EQUALS, THRESHOLD, DecisionTree

FORMAT_VERSION = 1


class RandomForest:
    def __init__(
        self,
        n_trees: int = 100,
        max_features: int | str | None = "sqrt",
        max_depth: int | None = None,
        min_samples_leaf: int = 1,
        bootstrap: bool = True,
        seed: int = 0,
        n_jobs: int = 1,
    ):
        if n_trees < 1:
            raise ValueError("n_trees must be positive")
        self.n_trees = n_trees
        self.max_features = max_features
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.seed = seed
        self.n_jobs = n_jobs
        self.fingerprint = None
        self.trees: list[DecisionTree] = []

    def _resolve_max_features(self, D: int) -> int:
        if self.max_features is None:
            return D
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(D)))
        return max(1, min(int(self.max_features), D))

    def fit(self, dataset: EncodedDataset) -> "RandomForest":
        kinds = [EQUALS if f.kind == CATEGORICAL else THRESHOLD for f in dataset.schema.features]
        self.fit_arrays(dataset.features, dataset.labels, kinds, dataset.schema.n_classes)
        self.fingerprint = dataset.fingerprint
        return self

    def fit_arrays(self, X, y, kinds, n_classes: int) -> "RandomForest":
        X = np.ascontiguousarray(X, dtype=np.int32)
        y = np.asarray(y, dtype=np.int32)
        if len(np.unique(y)) < 2:
            raise ValueError("random forest needs at least two classes in the training data")
        self.n_classes = int(n_classes)
        self.n_features = X.shape[1]
        self.kinds = list(kinds)
        m = self._resolve_max_features(X.shape[1])
        n_values = X.max(axis=0) + 1
        n = len(y)

        def grow(t: int) -> DecisionTree:
            rng = np.random.Generator(np.random.Philox(key=(int(self.seed) << 64) | t))
            weights = np.bincount(rng.integers(0, n, n), minlength=n) if self.bootstrap else None
            tree_seed = int(rng.integers(0, 2**63))
            tree = DecisionTree(self.max_depth, self.min_samples_leaf, m, tree_seed)
            return tree.fit(X, y, self.kinds, self.n_classes, sample_weight=weights, n_values=n_values)

        if self.n_jobs > 1:
            with ThreadPoolExecutor(self.n_jobs) as pool:
                self.trees = list(pool.map(grow, range(self.n_trees)))
        else:
            self.trees = [grow(t) for t in range(self.n_trees)]
        return self

    def _rows(self, data) -> np.ndarray:
        if isinstance(data, EncodedDataset):
            if self.fingerprint is not None and data.fingerprint != self.fingerprint:
                raise SchemaMismatchError(
                    f"dataset fingerprint {data.fingerprint[:12]} does not match model {self.fingerprint[:12]}"
                )
            data = data.features
        X = np.atleast_2d(np.asarray(data))
        if self.n_features is not None and X.shape[1] != self.n_features:
            raise SchemaMismatchError(f"expected {self.n_features} columns, got {X.shape[1]}")
        return X

    def predict_proba(self, data) -> np.ndarray:
        """Mean of the trees' leaf class distributions."""
        X = np.ascontiguousarray(self._rows(data), dtype=np.int32)
        out = np.zeros((len(X), self.n_classes))
        scale = 1.0 / len(self.trees)
        for tree in self.trees:
            tree.accumulate_proba(X, out, scale)
        return out

    def predict(self, data) -> np.ndarray:
        return np.argmax(self.predict_proba(data), axis=1)

    def to_dict(self) -> dict:
        return {
            "model": "random_forest",
            "version": FORMAT_VERSION,
            "fingerprint": self.fingerprint,
            "n_trees": self.n_trees,
            "max_features": self.max_features,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "kinds": list(map(int, self.kinds)),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        if d.get("model") != "random_forest" or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a random_forest model of a supported version")
        f = cls(d["n_trees"], d["max_features"], d["max_depth"], d["min_samples_leaf"], d["bootstrap"], d["seed"])
        f.fingerprint = d["fingerprint"]
        f.n_classes = d["n_classes"]
        f.n_features = d.get("n_features")
        f.kinds = d.get("kinds", [])
        f.trees = [DecisionTree.from_dict(t, f.n_classes, f.n_features) for t in d["trees"]]
        return f


def rf_fit(dataset: EncodedDataset, **params) -> RandomForest:
    return RandomForest(**params).fit(dataset)


def rf_predict_proba(model: RandomForest, rows) -> np.ndarray:
    return model.predict_proba(rows)
