"""Differential-diagnosis metrics computed from posterior matrices.

``posteriors`` is always an ``(N, K)`` array of class probabilities and
``labels`` the ``N`` true class indices.  Ties in ranking go to the lower
class index everywhere, matching :func:`ddxsynth.models.predict_top_k`.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from fractions import Fraction
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

CASES = ("top1_accurate", "top5_accurate", "non_top1_accurate", "non_top5_accurate")
THRESHOLD_STATS = ("p25", "p50", "p75", "mean")


def _check(posteriors, labels):
    P = np.asarray(posteriors, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if P.ndim != 2 or y.ndim != 1 or len(P) != len(y):
        raise ValueError(f"posteriors {P.shape} and labels {y.shape} do not align")
    return P, y


def true_class_rank(posteriors, labels) -> np.ndarray:
    """0-based position of the true class in each row's ranking."""
    P, y = _check(posteriors, labels)
    p_true = P[np.arange(len(y)), y][:, None]
    idx = np.arange(P.shape[1])[None, :]
    return ((P > p_true) | ((P == p_true) & (idx < y[:, None]))).sum(axis=1)


def top_k_accuracy(posteriors, labels, k: int) -> float:
    if k < 1:
        raise ValueError("k must be at least 1")
    ranks = true_class_rank(posteriors, labels)
    return float(np.mean(ranks < k)) if len(ranks) else 0.0


def precision_multiclass(posteriors, labels):
    """Per-class precision of argmax predictions and its support-weighted mean."""
    P, y = _check(posteriors, labels)
    K = P.shape[1]
    pred = np.argmax(P, axis=1)
    predicted = np.bincount(pred, minlength=K)
    tp = np.bincount(pred[pred == y], minlength=K)
    never = predicted == 0
    if np.any(never & (np.bincount(y, minlength=K) > 0)):
        warnings.warn(
            f"{int(np.sum(never))} class(es) never predicted; their precision is set to 0",
            stacklevel=2,
        )
    per_class = np.divide(tp, predicted, out=np.zeros(K), where=~never)
    support = np.bincount(y, minlength=K)
    # exact rational sum, rounded once, so the result does not depend on summation order
    total = int(support.sum())
    weighted = (
        float(sum(Fraction(int(tp[c]), int(predicted[c])) * int(support[c]) for c in np.flatnonzero(~never)) / total)
        if total
        else 0.0
    )
    return per_class, weighted


def confusion_top5(posteriors, labels, condition: int, n: int = 5) -> list[tuple[int, int]]:
    """Most frequent wrong argmax predictions for rows whose truth is ``condition``."""
    P, y = _check(posteriors, labels)
    mask = y == condition
    if not mask.any():
        raise KeyError(f"class {condition} does not occur in labels")
    pred = np.argmax(P[mask], axis=1)
    pred = pred[pred != condition]
    counts = np.bincount(pred, minlength=P.shape[1])
    order = np.argsort(-counts, kind="stable")
    return [(int(c), int(counts[c])) for c in order[:n] if counts[c] > 0]


def nearest_rank(values, q: float) -> float:
    """The q-th percentile by the nearest-rank rule."""
    v = np.sort(np.asarray(values, dtype=float))
    if not len(v):
        raise ValueError("empty sample")
    rank = max(1, math.ceil(q / 100.0 * len(v)))
    return float(v[rank - 1])


@dataclass(frozen=True)
class PosteriorCaseStats:
    case: str
    n: int
    p25: float | None = None
    p50: float | None = None
    p75: float | None = None
    mean: float | None = None

    @property
    def empty(self) -> bool:
        return self.n == 0

    def threshold(self, stat: str) -> float | None:
        return getattr(self, stat)


def case_masks(posteriors, labels) -> dict[str, np.ndarray]:
    ranks = true_class_rank(posteriors, labels)
    return {
        "top1_accurate": ranks < 1,
        "top5_accurate": ranks < 5,
        "non_top1_accurate": ranks >= 1,
        "non_top5_accurate": ranks >= 5,
    }


def posterior_case_stats(posteriors, labels) -> dict[str, PosteriorCaseStats]:
    P, y = _check(posteriors, labels)
    top = P.max(axis=1) if len(P) else np.zeros(0)
    out = {}
    for case, mask in case_masks(P, y).items():
        vals = top[mask]
        if not len(vals):
            out[case] = PosteriorCaseStats(case, 0)
            continue
        out[case] = PosteriorCaseStats(
            case,
            int(len(vals)),
            nearest_rank(vals, 25),
            nearest_rank(vals, 50),
            nearest_rank(vals, 75),
            float(vals.mean()),
        )
    return out


def admission_statistic(posteriors, statistic: str = "max") -> np.ndarray:
    """Per-row confidence used to admit a prediction (``max`` or ``top5`` mass)."""
    P = np.asarray(posteriors, dtype=float)
    if statistic == "max":
        return P.max(axis=1)
    if statistic == "top5":
        k = min(5, P.shape[1])
        return -np.sort(-P, axis=1)[:, :k].sum(axis=1)
    raise ValueError(f"unknown statistic {statistic!r}")


@dataclass(frozen=True)
class ThresholdPoint:
    threshold: float
    diagnosed_fraction: float
    n_confident: int
    top1_accuracy: float | None
    top5_accuracy: float | None
    case: str | None = None
    stat: str | None = None


@dataclass(frozen=True)
class ThresholdSweep:
    points: tuple[ThresholdPoint, ...]
    statistic: str = "max"

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def threshold_sweep(posteriors, labels, thresholds: Sequence[float], statistic: str = "max", tags=None) -> ThresholdSweep:
    """Admit rows whose confidence is >= t and score only those rows."""
    P, y = _check(posteriors, labels)
    conf = admission_statistic(P, statistic) if len(P) else np.zeros(0)
    ranks = true_class_rank(P, y) if len(P) else np.zeros(0, dtype=int)
    points = []
    for i, t in enumerate(thresholds):
        if t < 0.0:
            raise ValueError(f"negative threshold {t}")
        admitted = conf >= t
        n_conf = int(admitted.sum())
        case, stat = tags[i] if tags is not None else (None, None)
        points.append(
            ThresholdPoint(
                threshold=float(t),
                diagnosed_fraction=n_conf / len(P) if len(P) else 0.0,
                n_confident=n_conf,
                top1_accuracy=float(np.mean(ranks[admitted] < 1)) if n_conf else None,
                top5_accuracy=float(np.mean(ranks[admitted] < 5)) if n_conf else None,
                case=case,
                stat=stat,
            )
        )
    return ThresholdSweep(tuple(points), statistic)


def confidence_thresholds(stats: dict[str, PosteriorCaseStats]):
    """(case, stat, value) for the 25th/50th/75th percentile and mean of each non-empty case."""
    out = []
    for case in CASES:
        s = stats[case]
        if s.empty:
            continue
        for stat in THRESHOLD_STATS:
            out.append((case, stat, s.threshold(stat)))
    return out


def confidence_analysis(posteriors, labels, statistic: str = "max") -> ThresholdSweep:
    stats = posterior_case_stats(posteriors, labels)
    triples = confidence_thresholds(stats)
    return threshold_sweep(
        posteriors, labels, [t for _, _, t in triples], statistic, tags=[(c, s) for c, s, _ in triples]
    )


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass
class EvaluationReport:
    top1: float
    top5: float
    precision_weighted: float
    precision_per_class: list[float]
    confusion_top5: dict[str, list[tuple[str, int]]]
    n_test: int
    classes: list[str] = field(default_factory=list)
    posterior_cases: dict[str, PosteriorCaseStats] = field(default_factory=dict)
    confidence: ThresholdSweep | None = None

    def to_dict(self) -> dict:
        return {
            "top1": self.top1,
            "top5": self.top5,
            "precision_weighted": self.precision_weighted,
            "precision_per_class": list(self.precision_per_class),
            "confusion_top5": {c: [[p, n] for p, n in lst] for c, lst in self.confusion_top5.items()},
            "n_test": self.n_test,
            "classes": list(self.classes),
            "posterior_cases": {k: asdict(v) for k, v in self.posterior_cases.items()},
            "confidence": None
            if self.confidence is None
            else {"statistic": self.confidence.statistic, "points": [asdict(p) for p in self.confidence]},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        conf = d.get("confidence")
        return cls(
            top1=d["top1"],
            top5=d["top5"],
            precision_weighted=d["precision_weighted"],
            precision_per_class=list(d["precision_per_class"]),
            confusion_top5={c: [(p, n) for p, n in lst] for c, lst in d["confusion_top5"].items()},
            n_test=d["n_test"],
            classes=list(d.get("classes", [])),
            posterior_cases={k: PosteriorCaseStats(**v) for k, v in d.get("posterior_cases", {}).items()},
            confidence=None
            if conf is None
            else ThresholdSweep(tuple(ThresholdPoint(**p) for p in conf["points"]), conf["statistic"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EvaluationReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def evaluate(posteriors, labels, classes: Sequence[str] | None = None, statistic: str = "max") -> EvaluationReport:
    P, y = _check(posteriors, labels)
    classes = list(classes) if classes is not None else [str(i) for i in range(P.shape[1])]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        per_class, weighted = precision_multiclass(P, y)
    confusion = {}
    for c in np.unique(y):
        confusion[classes[c]] = [(classes[p], n) for p, n in confusion_top5(P, y, int(c))]
    return EvaluationReport(
        top1=top_k_accuracy(P, y, 1),
        top5=top_k_accuracy(P, y, 5),
        precision_weighted=weighted,
        precision_per_class=per_class.tolist(),
        confusion_top5=confusion,
        n_test=len(y),
        classes=classes,
        posterior_cases=posterior_case_stats(P, y),
        confidence=confidence_analysis(P, y, statistic),
    )


def write_figure_csvs(report: EvaluationReport, outdir) -> list[Path]:
    """``posterior_cases.csv`` and ``confidence_thresholds.csv`` for plotting."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cases_path = outdir / "posterior_cases.csv"
    with open(cases_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "n", "p25", "p50", "p75", "mean"])
        for case in CASES:
            s = report.posterior_cases.get(case)
            if s is None:
                continue
            w.writerow([case, s.n] + ["" if v is None else repr(v) for v in (s.p25, s.p50, s.p75, s.mean)])
    sweep_path = outdir / "confidence_thresholds.csv"
    with open(sweep_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "stat", "threshold", "diagnosed_fraction", "n_confident", "top1_accuracy", "top5_accuracy"])
        for p in report.confidence or ():
            w.writerow(
                [
                    p.case or "",
                    p.stat or "",
                    repr(p.threshold),
                    repr(p.diagnosed_fraction),
                    p.n_confident,
                    "" if p.top1_accuracy is None else repr(p.top1_accuracy),
                    "" if p.top5_accuracy is None else repr(p.top5_accuracy),
                ]
            )
    return [cases_path, sweep_path]
