import json
from pathlib import Path

import numpy as np

from .forest import RandomForest, rf_fit, rf_predict_proba
from .naive_bayes import FitError, HybridNaiveBayes, nb_fit, nb_predict_proba
from .tree import DecisionTree

__all__ = [
    "DecisionTree",
    "FitError",
    "HybridNaiveBayes",
    "RandomForest",
    "load_model",
    "nb_fit",
    "nb_predict_proba",
    "predict_top_k",
    "rf_fit",
    "rf_predict_proba",
    "save_model",
]


def predict_top_k(posterior, k: int) -> list[tuple[int, float]]:
    """Classes by descending probability; ties go to the lower class index."""
    if k < 1:
        raise ValueError("k must be at least 1")
    p = np.asarray(posterior, dtype=float)
    order = np.argsort(-p, kind="stable")[:k]
    return [(int(c), float(p[c])) for c in order]


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()) + "\n", encoding="utf-8")


def load_model(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    kind = doc.get("model")
    if kind == "naive_bayes":
        return HybridNaiveBayes.from_dict(doc)
    if kind == "random_forest":
        return RandomForest.from_dict(doc)
    raise ValueError(f"{path}: unknown model type {kind!r}")
