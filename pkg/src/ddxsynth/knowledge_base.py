"""Probabilistic condition-symptom knowledge bases.

Two flavours share one data model: ``symcat`` (binary symptoms only) and
``nlice`` (each symptom expression may carry categorical distributions for
nature, location, intensity, frequency, duration, onset and excitation).

The canonical on-disk form is a JSON document; :func:`import_symcat_csv`
adapts the two-file CSV layout used by scraped SymCat dumps.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

AGE_GROUPS: tuple[tuple[str, int, int], ...] = (
    ("<1", 0, 0),
    ("1-4", 1, 4),
    ("5-14", 5, 14),
    ("15-29", 15, 29),
    ("30-44", 30, 44),
    ("45-59", 45, 59),
    ("60-74", 60, 74),
    (">75", 75, 100),
)
AGE_GROUP_LABELS: tuple[str, ...] = tuple(g[0] for g in AGE_GROUPS)
RACES: tuple[str, ...] = ("white", "black", "hispanic", "other")
GENDERS: tuple[str, ...] = ("male", "female")

NLICE_ATTRIBUTES: tuple[str, ...] = (
    "nature",
    "location",
    "intensity",
    "frequency",
    "duration",
    "onset",
    "excitation",
)
NA = "NA"
MODES = ("symcat", "nlice")

_SUM_TOL = 1e-9


class KnowledgeBaseError(ValueError):
    """Raised when a knowledge base cannot be read or is structurally unusable."""


class KnowledgeBaseParseError(KnowledgeBaseError):
    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class KnowledgeBaseSchemaError(KnowledgeBaseParseError):
    """An NLICE attribute or label that the vocabulary does not declare."""


def age_group_of(age_years: int) -> int:
    """Index of the age group containing ``age_years``."""
    if age_years < 0:
        raise ValueError(f"negative age: {age_years}")
    for i, (_, lo, hi) in enumerate(AGE_GROUPS):
        if lo <= age_years <= hi:
            return i
    return len(AGE_GROUPS) - 1


@dataclass(frozen=True)
class SymptomDef:
    symptom_id: str
    display_name: str = ""
    age_odds: Mapping[str, float] | None = None
    race_odds: Mapping[str, float] | None = None
    gender_odds: Mapping[str, float] | None = None


@dataclass(frozen=True)
class NliceProfile:
    """Per-attribute categorical distributions; a missing attribute means unknown."""

    distributions: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    def get(self, attribute: str) -> Mapping[str, float] | None:
        return self.distributions.get(attribute)

    def __bool__(self) -> bool:
        return bool(self.distributions)


@dataclass(frozen=True)
class SymptomExpression:
    symptom_id: str
    expression_prob: float
    nlice: NliceProfile | None = None


@dataclass(frozen=True)
class ConditionDef:
    condition_id: str
    display_name: str
    age_odds: Mapping[str, float]
    gender_odds: Mapping[str, float]
    race_odds: Mapping[str, float]
    symptoms: tuple[SymptomExpression, ...]

    @property
    def symptom_ids(self) -> tuple[str, ...]:
        return tuple(s.symptom_id for s in self.symptoms)


@dataclass(frozen=True)
class KnowledgeBase:
    conditions: tuple[ConditionDef, ...]
    symptoms: tuple[SymptomDef, ...]
    mode: str = "symcat"
    attribute_vocabularies: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def condition(self, condition_id: str) -> ConditionDef:
        for c in self.conditions:
            if c.condition_id == condition_id:
                return c
        raise KeyError(condition_id)

    @property
    def condition_ids(self) -> tuple[str, ...]:
        return tuple(c.condition_id for c in self.conditions)

    @property
    def symptom_ids(self) -> tuple[str, ...]:
        return tuple(s.symptom_id for s in self.symptoms)

    def vocabulary(self, attribute: str) -> tuple[str, ...]:
        return tuple(self.attribute_vocabularies.get(attribute, ()))

    def with_conditions(self, conditions: Iterable[ConditionDef]) -> "KnowledgeBase":
        return replace(self, conditions=tuple(conditions))


# ---------------------------------------------------------------------------
# JSON (canonical format)
# ---------------------------------------------------------------------------


def _odds_to_json(odds):
    return None if odds is None else {k: float(v) for k, v in odds.items()}


def to_dict(kb: KnowledgeBase) -> dict:
    """Canonical JSON-ready representation."""
    symptoms = []
    for s in kb.symptoms:
        d = {"symptom_id": s.symptom_id, "display_name": s.display_name}
        for name in ("age_odds", "race_odds", "gender_odds"):
            val = getattr(s, name)
            if val is not None:
                d[name] = _odds_to_json(val)
        symptoms.append(d)
    conditions = []
    for c in kb.conditions:
        exprs = []
        for e in c.symptoms:
            d = {"symptom_id": e.symptom_id, "expression_prob": float(e.expression_prob)}
            if e.nlice is not None:
                d["nlice"] = {a: _odds_to_json(dist) for a, dist in e.nlice.distributions.items()}
            exprs.append(d)
        conditions.append(
            {
                "condition_id": c.condition_id,
                "display_name": c.display_name,
                "age_odds": _odds_to_json(c.age_odds),
                "gender_odds": _odds_to_json(c.gender_odds),
                "race_odds": _odds_to_json(c.race_odds),
                "symptoms": exprs,
            }
        )
    return {
        "mode": kb.mode,
        "attribute_vocabularies": {a: list(v) for a, v in kb.attribute_vocabularies.items()},
        "symptoms": symptoms,
        "conditions": conditions,
    }


def dumps(kb: KnowledgeBase) -> str:
    return json.dumps(to_dict(kb), indent=1, ensure_ascii=False) + "\n"


def save_knowledge_base(kb: KnowledgeBase, path) -> None:
    Path(path).write_text(dumps(kb), encoding="utf-8")


def _expect(obj, kind, where):
    if not isinstance(obj, kind):
        name = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise KnowledgeBaseParseError(f"expected {name}, got {type(obj).__name__}", where)
    return obj


def _number(obj, where) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise KnowledgeBaseParseError(f"expected a number, got {obj!r}", where)
    return float(obj)


def _string(obj, where) -> str:
    return _expect(obj, str, where)


def _odds(obj, where, allow_none=False):
    if obj is None and allow_none:
        return None
    _expect(obj, dict, where)
    return {_string(k, where): _number(v, f"{where}.{k}") for k, v in obj.items()}


def from_dict(doc: Mapping, mode: str | None = None) -> KnowledgeBase:
    """Build a :class:`KnowledgeBase` from its canonical dict form.

    Only parse-level checks are made here; use :func:`validate` for content.
    """
    _expect(doc, dict, "$")
    file_mode = doc.get("mode", mode or "symcat")
    if file_mode not in MODES:
        raise KnowledgeBaseParseError(f"unknown mode {file_mode!r}", "mode")
    if mode is not None and mode != file_mode:
        raise KnowledgeBaseParseError(f"file declares mode {file_mode!r}, expected {mode!r}", "mode")

    vocab_raw = _expect(doc.get("attribute_vocabularies", {}) or {}, dict, "attribute_vocabularies")
    vocab = {}
    for attr, labels in vocab_raw.items():
        where = f"attribute_vocabularies.{attr}"
        if attr not in NLICE_ATTRIBUTES:
            raise KnowledgeBaseSchemaError(f"unknown NLICE attribute {attr!r}", where)
        labels = _expect(labels, list, where)
        vocab[attr] = tuple(_string(x, where) for x in labels)
        if NA in vocab[attr]:
            raise KnowledgeBaseSchemaError(f"{NA!r} is reserved and may not be declared", where)

    symptoms = []
    for i, s in enumerate(_expect(doc.get("symptoms", []), list, "symptoms")):
        where = f"symptoms[{i}]"
        _expect(s, dict, where)
        if "symptom_id" not in s:
            raise KnowledgeBaseParseError("missing symptom_id", where)
        symptoms.append(
            SymptomDef(
                symptom_id=_string(s["symptom_id"], f"{where}.symptom_id"),
                display_name=_string(s.get("display_name", ""), f"{where}.display_name"),
                age_odds=_odds(s.get("age_odds"), f"{where}.age_odds", allow_none=True),
                race_odds=_odds(s.get("race_odds"), f"{where}.race_odds", allow_none=True),
                gender_odds=_odds(s.get("gender_odds"), f"{where}.gender_odds", allow_none=True),
            )
        )

    raw_conditions = _expect(doc.get("conditions", []), list, "conditions")
    if not raw_conditions:
        raise KnowledgeBaseParseError("no conditions", "conditions")
    conditions = []
    for i, c in enumerate(raw_conditions):
        where = f"conditions[{i}]"
        _expect(c, dict, where)
        for key in ("condition_id", "age_odds", "gender_odds", "race_odds", "symptoms"):
            if key not in c:
                raise KnowledgeBaseParseError(f"missing {key}", where)
        exprs = []
        for j, e in enumerate(_expect(c["symptoms"], list, f"{where}.symptoms")):
            ew = f"{where}.symptoms[{j}]"
            _expect(e, dict, ew)
            if "symptom_id" not in e or "expression_prob" not in e:
                raise KnowledgeBaseParseError("expression needs symptom_id and expression_prob", ew)
            nlice = None
            if e.get("nlice") is not None:
                dists = {}
                for attr, dist in _expect(e["nlice"], dict, f"{ew}.nlice").items():
                    aw = f"{ew}.nlice.{attr}"
                    if attr not in NLICE_ATTRIBUTES:
                        raise KnowledgeBaseSchemaError(f"unknown NLICE attribute {attr!r}", aw)
                    if dist is None:
                        continue
                    dist = _odds(dist, aw)
                    if file_mode == "nlice":
                        unknown = [lab for lab in dist if lab not in vocab.get(attr, ())]
                        if unknown:
                            raise KnowledgeBaseSchemaError(
                                f"label(s) {unknown} not in vocabulary for {attr}", aw
                            )
                    dists[attr] = dist
                nlice = NliceProfile(dists)
            exprs.append(
                SymptomExpression(
                    symptom_id=_string(e["symptom_id"], f"{ew}.symptom_id"),
                    expression_prob=_number(e["expression_prob"], f"{ew}.expression_prob"),
                    nlice=nlice,
                )
            )
        conditions.append(
            ConditionDef(
                condition_id=_string(c["condition_id"], f"{where}.condition_id"),
                display_name=_string(c.get("display_name", ""), f"{where}.display_name"),
                age_odds=_odds(c["age_odds"], f"{where}.age_odds"),
                gender_odds=_odds(c["gender_odds"], f"{where}.gender_odds"),
                race_odds=_odds(c["race_odds"], f"{where}.race_odds"),
                symptoms=tuple(exprs),
            )
        )
    return KnowledgeBase(
        conditions=tuple(conditions),
        symptoms=tuple(symptoms),
        mode=file_mode,
        attribute_vocabularies=vocab,
    )


def loads(text: str, mode: str | None = None) -> KnowledgeBase:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise KnowledgeBaseParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    return from_dict(doc, mode)


def parse_knowledge_base(path, mode: str | None = None) -> KnowledgeBase:
    """Read a canonical JSON knowledge base file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise KnowledgeBaseParseError("no conditions", str(path))
    return loads(text, mode)


def load_bundled(name: str) -> KnowledgeBase:
    """Load one of the knowledge bases shipped in ``ddxsynth/data``."""
    from importlib import resources

    fname = name if name.endswith(".json") else f"{name}.json"
    text = resources.files("ddxsynth.data").joinpath(fname).read_text(encoding="utf-8")
    return loads(text)


# ---------------------------------------------------------------------------
# SymCat CSV adapter
# ---------------------------------------------------------------------------

# conditions.csv: condition_id, name, one column per demographic cell, and a
# ``symptoms`` column of ``symptom_id:probability`` pairs joined by ';'.
# symptoms.csv: symptom_id, name and (optionally blank) demographic columns.
AGE_COLUMNS = tuple(f"age_{g}" for g in AGE_GROUP_LABELS)
GENDER_COLUMNS = tuple(f"gender_{g}" for g in GENDERS)
RACE_COLUMNS = tuple(f"race_{r}" for r in RACES)
DEMOGRAPHIC_COLUMNS = AGE_COLUMNS + GENDER_COLUMNS + RACE_COLUMNS
CONDITION_COLUMNS = ("condition_id", "name") + DEMOGRAPHIC_COLUMNS + ("symptoms",)
SYMPTOM_COLUMNS = ("symptom_id", "name")


def _read_csv(path, required):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise KnowledgeBaseParseError(f"missing column(s) {missing}", f"{path}:1")
        return list(enumerate(reader, start=2))


def _csv_float(value, where):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise KnowledgeBaseParseError(f"not a number: {value!r}", where) from None


def _csv_block(row, columns, labels, where, optional=False):
    values = [row.get(c, "") for c in columns]
    if optional and all(v in ("", None) for v in values):
        return None
    return {lab: _csv_float(v, f"{where} {col}") for lab, col, v in zip(labels, columns, values)}


def import_symcat_csv(conditions_csv, symptoms_csv) -> KnowledgeBase:
    """Map the two-file SymCat CSV layout onto the canonical model."""
    symptoms = []
    for lineno, row in _read_csv(symptoms_csv, SYMPTOM_COLUMNS):
        where = f"{symptoms_csv}:{lineno}"
        symptoms.append(
            SymptomDef(
                symptom_id=row["symptom_id"],
                display_name=row["name"] or "",
                age_odds=_csv_block(row, AGE_COLUMNS, AGE_GROUP_LABELS, where, optional=True),
                race_odds=_csv_block(row, RACE_COLUMNS, RACES, where, optional=True),
                gender_odds=_csv_block(row, GENDER_COLUMNS, GENDERS, where, optional=True),
            )
        )
    conditions = []
    for lineno, row in _read_csv(conditions_csv, CONDITION_COLUMNS):
        where = f"{conditions_csv}:{lineno}"
        exprs = []
        for token in filter(None, (row["symptoms"] or "").split(";")):
            sid, sep, prob = token.rpartition(":")
            if not sep or not sid:
                raise KnowledgeBaseParseError(f"bad symptom token {token!r}", f"{where} symptoms")
            exprs.append(SymptomExpression(sid, _csv_float(prob, f"{where} symptoms")))
        conditions.append(
            ConditionDef(
                condition_id=row["condition_id"],
                display_name=row["name"] or "",
                age_odds=_csv_block(row, AGE_COLUMNS, AGE_GROUP_LABELS, where),
                gender_odds=_csv_block(row, GENDER_COLUMNS, GENDERS, where),
                race_odds=_csv_block(row, RACE_COLUMNS, RACES, where),
                symptoms=tuple(exprs),
            )
        )
    if not conditions:
        raise KnowledgeBaseParseError("no conditions", str(conditions_csv))
    return KnowledgeBase(tuple(conditions), tuple(symptoms), mode="symcat")


def export_symcat_csv(kb: KnowledgeBase, conditions_csv, symptoms_csv) -> None:
    """Inverse of :func:`import_symcat_csv` (NLICE data is dropped)."""

    def block(odds, labels):
        if odds is None:
            return [""] * len(labels)
        return [repr(float(odds[lab])) for lab in labels]

    with open(symptoms_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SYMPTOM_COLUMNS + DEMOGRAPHIC_COLUMNS)
        for s in kb.symptoms:
            w.writerow(
                [s.symptom_id, s.display_name]
                + block(s.age_odds, AGE_GROUP_LABELS)
                + block(s.gender_odds, GENDERS)
                + block(s.race_odds, RACES)
            )
    with open(conditions_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CONDITION_COLUMNS)
        for c in kb.conditions:
            tokens = ";".join(f"{e.symptom_id}:{float(e.expression_prob)!r}" for e in c.symptoms)
            w.writerow(
                [c.condition_id, c.display_name]
                + block(c.age_odds, AGE_GROUP_LABELS)
                + block(c.gender_odds, GENDERS)
                + block(c.race_odds, RACES)
                + [tokens]
            )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    location: str
    message: str

    def to_dict(self) -> dict:
        return {"severity": self.severity, "location": self.location, "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def errors(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.severity == "error")

    @property
    def ok(self) -> bool:
        return not self.errors

    def __len__(self) -> int:
        return len(self.findings)

    def __iter__(self):
        return iter(self.findings)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(f.to_dict()) + "\n" for f in self.findings)


def _check_odds(odds, labels, where, out, required=True):
    if odds is None:
        if required:
            out.append(Finding("error", where, "missing odds table"))
        return
    for lab in labels:
        if lab not in odds:
            if required:
                out.append(Finding("error", f"{where}.{lab}", "missing odds entry"))
            continue
    for lab, p in odds.items():
        if lab not in labels:
            out.append(Finding("error", f"{where}.{lab}", f"unknown category {lab!r}"))
        elif not (0.0 <= p <= 1.0) or math.isnan(p):
            out.append(Finding("error", f"{where}.{lab}", f"probability {p} out of range [0, 1]"))


def validate(kb: KnowledgeBase) -> ValidationReport:
    """Report-only content checks; ``kb`` is never modified."""
    out: list[Finding] = []
    seen = set()
    for i, s in enumerate(kb.symptoms):
        where = f"symptoms[{i}]"
        if s.symptom_id in seen:
            out.append(Finding("error", where, f"duplicate symptom id {s.symptom_id!r}"))
        seen.add(s.symptom_id)
        _check_odds(s.age_odds, AGE_GROUP_LABELS, f"{where}.age_odds", out, required=False)
        _check_odds(s.race_odds, RACES, f"{where}.race_odds", out, required=False)
        _check_odds(s.gender_odds, GENDERS, f"{where}.gender_odds", out, required=False)

    cond_seen = set()
    for i, c in enumerate(kb.conditions):
        where = f"conditions[{i}]"
        if c.condition_id in cond_seen:
            out.append(Finding("error", where, f"duplicate condition id {c.condition_id!r}"))
        cond_seen.add(c.condition_id)
        _check_odds(c.age_odds, AGE_GROUP_LABELS, f"{where}.age_odds", out)
        _check_odds(c.gender_odds, GENDERS, f"{where}.gender_odds", out)
        _check_odds(c.race_odds, RACES, f"{where}.race_odds", out)
        if not c.symptoms:
            out.append(Finding("error", f"{where}.symptoms", "condition has no symptoms"))
        in_cond = set()
        for j, e in enumerate(c.symptoms):
            ew = f"{where}.symptoms[{j}]"
            if e.symptom_id not in seen:
                out.append(Finding("error", ew, f"dangling symptom reference {e.symptom_id!r}"))
            if e.symptom_id in in_cond:
                out.append(Finding("error", ew, f"duplicate symptom {e.symptom_id!r} in condition"))
            in_cond.add(e.symptom_id)
            p = e.expression_prob
            if not (0.0 <= p <= 1.0) or math.isnan(p):
                out.append(Finding("error", f"{ew}.expression_prob", f"probability {p} out of range [0, 1]"))
            elif p == 0.0:
                out.append(Finding("warning", f"{ew}.expression_prob", "symptom can never present"))
            if e.nlice is None:
                continue
            for attr, dist in e.nlice.distributions.items():
                aw = f"{ew}.nlice.{attr}"
                if attr not in NLICE_ATTRIBUTES:
                    out.append(Finding("error", aw, f"unknown NLICE attribute {attr!r}"))
                    continue
                if any(not (0.0 <= q <= 1.0) for q in dist.values()):
                    out.append(Finding("error", aw, "probability out of range [0, 1]"))
                total = sum(dist.values())
                if abs(total - 1.0) > _SUM_TOL:
                    out.append(Finding("error", aw, f"distribution sums to {total!r}, not 1"))
                if kb.mode == "nlice":
                    vocab = kb.vocabulary(attr)
                    for lab in dist:
                        if lab not in vocab:
                            out.append(Finding("error", aw, f"label {lab!r} not in vocabulary"))
    return ValidationReport(tuple(out))


def prune_orphan_symptoms(kb: KnowledgeBase) -> KnowledgeBase:
    """Drop symptoms that no condition references."""
    used = {e.symptom_id for c in kb.conditions for e in c.symptoms}
    kept = tuple(s for s in kb.symptoms if s.symptom_id in used)
    if len(kept) == len(kb.symptoms):
        return kb
    return replace(kb, symptoms=kept)


@dataclass(frozen=True)
class KBStats:
    n_conditions: int
    n_symptoms: int
    min_symptoms_per_condition: int
    mean_symptoms_per_condition: float
    max_symptoms_per_condition: int
    nlice_coverage: Mapping[str, float]

    def to_dict(self) -> dict:
        return {
            "n_conditions": self.n_conditions,
            "n_symptoms": self.n_symptoms,
            "min_symptoms_per_condition": self.min_symptoms_per_condition,
            "mean_symptoms_per_condition": self.mean_symptoms_per_condition,
            "max_symptoms_per_condition": self.max_symptoms_per_condition,
            "nlice_coverage": dict(self.nlice_coverage),
        }


def kb_stats(kb: KnowledgeBase) -> KBStats:
    sizes = [len(c.symptoms) for c in kb.conditions]
    exprs = [e for c in kb.conditions for e in c.symptoms]
    coverage = {}
    for attr in NLICE_ATTRIBUTES:
        n = sum(1 for e in exprs if e.nlice is not None and e.nlice.get(attr) is not None)
        coverage[attr] = n / len(exprs) if exprs else 0.0
    return KBStats(
        n_conditions=len(kb.conditions),
        n_symptoms=len(kb.symptoms),
        min_symptoms_per_condition=min(sizes) if sizes else 0,
        mean_symptoms_per_condition=sum(sizes) / len(sizes) if sizes else 0.0,
        max_symptoms_per_condition=max(sizes) if sizes else 0,
        nlice_coverage=coverage,
    )
