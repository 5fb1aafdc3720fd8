"""Synthetic patient records sampled from a knowledge base.

Each record ``i`` draws from its own Philox stream keyed on ``(seed, i)``,
so any slice of the dataset can be produced independently and concatenated
without changing a single value.
"""
from __future__ import annotations

import csv
import io
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .knowledge_base import (
    AGE_GROUP_LABELS,
    AGE_GROUPS,
    GENDERS,
    NA,
    NLICE_ATTRIBUTES,
    RACES,
    ConditionDef,
    KnowledgeBase,
    SymptomExpression,
    age_group_of,
)

_ALL_NA = MappingProxyType(dict.fromkeys(NLICE_ATTRIBUTES, NA))

CSV_HEADER = ("record_id", "age", "age_group", "gender", "race", "condition", "symptoms")


class GenerationError(RuntimeError):
    pass


class ConfigurationError(GenerationError):
    pass


@dataclass(frozen=True)
class Demographics:
    age_years: int
    age_group: int
    gender: str
    race: str

    @classmethod
    def from_age(cls, age_years: int, gender: str, race: str) -> "Demographics":
        return cls(int(age_years), age_group_of(int(age_years)), gender, race)

    @property
    def age_group_label(self) -> str:
        return AGE_GROUP_LABELS[self.age_group]


@dataclass(frozen=True)
class PresentedSymptom:
    symptom_id: str
    nlice_values: Mapping[str, str] = field(default_factory=lambda: dict.fromkeys(NLICE_ATTRIBUTES, NA))

    def token(self, mode: str) -> str:
        if mode == "symcat":
            return self.symptom_id
        return ":".join([self.symptom_id] + [self.nlice_values.get(a, NA) for a in NLICE_ATTRIBUTES])


@dataclass(frozen=True)
class PatientRecord:
    record_id: int
    demographics: Demographics
    condition_id: str
    symptoms: tuple[PresentedSymptom, ...]

    @property
    def symptom_ids(self) -> tuple[str, ...]:
        return tuple(s.symptom_id for s in self.symptoms)


@dataclass(frozen=True)
class GenerationConfig:
    num_records: int
    min_symptoms: int = 1
    seed: int = 0
    # keys "age_group" (8), "gender" (2), "race" (4); missing keys are uniform
    demographic_marginals: Mapping[str, Sequence[float]] | None = None
    max_rejection_retries: int = 100

    def marginal(self, name: str) -> np.ndarray:
        size = {"age_group": len(AGE_GROUPS), "gender": len(GENDERS), "race": len(RACES)}[name]
        given = (self.demographic_marginals or {}).get(name)
        if given is None:
            return np.full(size, 1.0 / size)
        arr = np.asarray(given, dtype=float)
        if arr.shape != (size,) or np.any(arr < 0) or not np.isclose(arr.sum(), 1.0):
            raise ConfigurationError(f"{name} marginal must be {size} non-negative values summing to 1")
        return arr


def _check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def record_rng(seed: int, record_id: int) -> np.random.Generator:
    """Counter-based stream for one record."""
    return np.random.Generator(np.random.Philox(key=(_check_seed(seed) << 64) | int(record_id)))


def _draw_cumulative(cum: list[float], u: float) -> int:
    # bisect_right skips zero-weight entries, so they are never drawn
    return min(bisect_right(cum, u * cum[-1]), len(cum) - 1)


def _draw_index(weights, u: float) -> int:
    return _draw_cumulative(np.cumsum(weights).tolist(), u)


def _odds_value(odds: Mapping[str, float], key: str, what: str, cond: ConditionDef) -> float:
    try:
        return float(odds[key])
    except KeyError:
        raise ConfigurationError(f"condition {cond.condition_id!r} has no {what} odds for {key!r}") from None


def condition_score(cond: ConditionDef, demo: Demographics) -> float:
    """Pr(c|age) * Pr(c|gender) * Pr(c|race), assuming conditional independence."""
    return (
        _odds_value(cond.age_odds, AGE_GROUP_LABELS[demo.age_group], "age", cond)
        * _odds_value(cond.gender_odds, demo.gender, "gender", cond)
        * _odds_value(cond.race_odds, demo.race, "race", cond)
    )


def sample_condition(kb: KnowledgeBase, demo: Demographics, rng: np.random.Generator) -> str:
    scores = np.array([condition_score(c, demo) for c in kb.conditions])
    if not scores.sum() > 0:
        raise GenerationError(
            f"no condition can be drawn for age group {demo.age_group_label}, "
            f"gender {demo.gender}, race {demo.race}"
        )
    return kb.conditions[_draw_index(scores, rng.random())].condition_id


def _check_min_symptoms(cond: ConditionDef, min_symptoms: int) -> None:
    possible = sum(1 for e in cond.symptoms if e.expression_prob > 0)
    if possible < min_symptoms:
        raise GenerationError(
            f"condition {cond.condition_id!r} has {possible} symptom(s) with positive "
            f"probability, fewer than min_symptoms={min_symptoms}"
        )


def _sample_symptom_mask(probs: np.ndarray, order: np.ndarray, min_symptoms: int, rng, max_retries: int):
    for _ in range(max_retries + 1):
        present = rng.random(len(probs)) < probs
        if present.sum() >= min_symptoms:
            return present
    # fallback: force the most probable ones, sample the rest
    present = rng.random(len(probs)) < probs
    present[order[:min_symptoms]] = True
    return present


def _forced_order(cond: ConditionDef) -> np.ndarray:
    # descending probability, ties by ascending symptom id
    return np.array(
        sorted(range(len(cond.symptoms)), key=lambda j: (-cond.symptoms[j].expression_prob, cond.symptoms[j].symptom_id)),
        dtype=np.intp,
    )


def sample_symptoms(
    cond: ConditionDef,
    min_symptoms: int,
    rng: np.random.Generator,
    max_retries: int = 100,
) -> list[str]:
    """Present each symptom independently; redraw until ``min_symptoms`` show."""
    _check_min_symptoms(cond, min_symptoms)
    probs = np.array([e.expression_prob for e in cond.symptoms])
    present = _sample_symptom_mask(probs, _forced_order(cond), min_symptoms, rng, max_retries)
    return sorted(cond.symptoms[j].symptom_id for j in np.flatnonzero(present))


def sample_nlice(expr: SymptomExpression, rng: np.random.Generator) -> dict[str, str]:
    values = dict.fromkeys(NLICE_ATTRIBUTES, NA)
    if expr.nlice is None:
        return values
    for attr in NLICE_ATTRIBUTES:
        dist = expr.nlice.get(attr)
        if not dist:
            continue
        labels = list(dist)
        values[attr] = labels[_draw_index(np.array([dist[k] for k in labels]), rng.random())]
    return values


def sample_demographics(config: GenerationConfig, rng: np.random.Generator) -> Demographics:
    group = _draw_index(config.marginal("age_group"), rng.random())
    _, lo, hi = AGE_GROUPS[group]
    age = int(rng.integers(lo, hi + 1))
    gender = GENDERS[_draw_index(config.marginal("gender"), rng.random())]
    race = RACES[_draw_index(config.marginal("race"), rng.random())]
    return Demographics(age, group, gender, race)


class _Sampler:
    """Per-kb tables shared by every record of one generation run."""

    def __init__(self, kb: KnowledgeBase, config: GenerationConfig):
        self.kb = kb
        self.config = config
        self.seed = _check_seed(config.seed)
        self.age_m = config.marginal("age_group")
        self.gender_m = config.marginal("gender")
        self.race_m = config.marginal("race")
        n_a, n_g, n_r = len(AGE_GROUPS), len(GENDERS), len(RACES)
        self.scores = np.zeros((n_a, n_g, n_r, len(kb.conditions)))
        for ci, c in enumerate(kb.conditions):
            for a in range(n_a):
                for g in range(n_g):
                    for r in range(n_r):
                        demo = Demographics(AGE_GROUPS[a][1], a, GENDERS[g], RACES[r])
                        self.scores[a, g, r, ci] = condition_score(c, demo)
        reachable_cells = (
            (self.age_m[:, None, None] > 0) & (self.gender_m[None, :, None] > 0) & (self.race_m[None, None, :] > 0)
        )
        reachable = (self.scores * reachable_cells[..., None]).reshape(-1, len(kb.conditions)).max(axis=0) > 0
        for ci in np.flatnonzero(reachable):
            _check_min_symptoms(kb.conditions[ci], config.min_symptoms)
        self.probs = [np.array([e.expression_prob for e in c.symptoms]) for c in kb.conditions]
        self.orders = [_forced_order(c) for c in kb.conditions]
        self.nlice = kb.mode == "nlice"
        self.age_cum = np.cumsum(self.age_m).tolist()
        self.gender_cum = np.cumsum(self.gender_m).tolist()
        self.race_cum = np.cumsum(self.race_m).tolist()
        self.score_cum = {
            (a, g, r): np.cumsum(self.scores[a, g, r]).tolist()
            for a in range(n_a)
            for g in range(n_g)
            for r in range(n_r)
        }
        self.sorted_exprs = [
            sorted(range(len(c.symptoms)), key=lambda j, c=c: c.symptoms[j].symptom_id) for c in kb.conditions
        ]

    def record(self, i: int) -> PatientRecord:
        kb, cfg = self.kb, self.config
        rng = np.random.Generator(np.random.Philox(key=(self.seed << 64) | i))
        a = _draw_cumulative(self.age_cum, rng.random())
        _, lo, hi = AGE_GROUPS[a]
        age = int(rng.integers(lo, hi + 1))
        g = _draw_cumulative(self.gender_cum, rng.random())
        r = _draw_cumulative(self.race_cum, rng.random())
        demo = Demographics(age, a, GENDERS[g], RACES[r])
        cum = self.score_cum[a, g, r]
        if not cum[-1] > 0:
            raise GenerationError(
                f"no condition can be drawn for age group {demo.age_group_label}, "
                f"gender {demo.gender}, race {demo.race}"
            )
        ci = _draw_cumulative(cum, rng.random())
        cond = kb.conditions[ci]
        present = _sample_symptom_mask(
            self.probs[ci], self.orders[ci], cfg.min_symptoms, rng, cfg.max_rejection_retries
        )
        chosen = [cond.symptoms[j] for j in self.sorted_exprs[ci] if present[j]]
        if self.nlice:
            symptoms = tuple(PresentedSymptom(e.symptom_id, sample_nlice(e, rng)) for e in chosen)
        else:
            symptoms = tuple(PresentedSymptom(e.symptom_id, _ALL_NA) for e in chosen)
        return PatientRecord(i, demo, cond.condition_id, symptoms)


def generate_records(kb: KnowledgeBase, config: GenerationConfig, start: int = 0, stop: int | None = None):
    """Records ``start..stop-1`` of the dataset described by ``config``."""
    stop = config.num_records if stop is None else min(stop, config.num_records)
    if config.num_records < 0:
        raise ConfigurationError("num_records must be non-negative")
    if config.min_symptoms < 1:
        raise ConfigurationError("min_symptoms must be at least 1")
    if start >= stop:
        return []
    sampler = _Sampler(kb, config)
    return [sampler.record(i) for i in range(start, stop)]


def generate_dataset(kb: KnowledgeBase, config: GenerationConfig, workers: int = 1) -> list[PatientRecord]:
    """Exactly ``config.num_records`` records; output does not depend on ``workers``."""
    if workers <= 1 or config.num_records < 2 * workers:
        return generate_records(kb, config)
    from concurrent.futures import ThreadPoolExecutor

    bounds = np.linspace(0, config.num_records, workers + 1).astype(int)
    with ThreadPoolExecutor(workers) as pool:
        parts = pool.map(lambda ab: generate_records(kb, config, ab[0], ab[1]), zip(bounds[:-1], bounds[1:]))
        return [r for part in parts for r in part]


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def write_records_csv(records: Iterable[PatientRecord], path_or_file, mode: str = "symcat") -> None:
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in records:
            d = rec.demographics
            w.writerow(
                [
                    rec.record_id,
                    d.age_years,
                    d.age_group_label,
                    d.gender,
                    d.race,
                    rec.condition_id,
                    ";".join(s.token(mode) for s in rec.symptoms),
                ]
            )
    finally:
        if own:
            fh.close()


def records_to_csv(records: Iterable[PatientRecord], mode: str = "symcat") -> str:
    buf = io.StringIO()
    write_records_csv(records, buf, mode)
    return buf.getvalue()


def _parse_token(token: str, mode: str) -> PresentedSymptom:
    if mode == "symcat":
        return PresentedSymptom(token)
    parts = token.rsplit(":", len(NLICE_ATTRIBUTES))
    if len(parts) != len(NLICE_ATTRIBUTES) + 1:
        raise ValueError(f"bad NLICE token {token!r}")
    return PresentedSymptom(parts[0], dict(zip(NLICE_ATTRIBUTES, parts[1:])))


def read_records_csv(path, mode: str = "symcat") -> list[PatientRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rid, age, _group, gender, race, cond, syms = row
                symptoms = tuple(_parse_token(t, mode) for t in syms.split(";") if t)
                records.append(PatientRecord(int(rid), Demographics.from_age(int(age), gender, race), cond, symptoms))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return records
