"""Turn patient records into integer feature matrices.

Column layout is ``age`` (numeric), ``gender`` (binary), ``race``
(categorical, 4), then one block per symptom sorted by id.  In symcat mode a
block is a single binary presence column.  In nlice mode a block has eight
categorical slots: presence (absent/present) followed by the seven NLICE
attributes, each coded ``0 = absent``, ``1 = NA``, ``2 + k`` = k-th label of
the attribute vocabulary.
"""
from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .generator import Demographics, PatientRecord, PresentedSymptom
from .knowledge_base import GENDERS, NA, NLICE_ATTRIBUTES, RACES, KnowledgeBase

NUMERIC, BINARY, CATEGORICAL = "numeric", "binary", "categorical"
ABSENT_CODE, NA_CODE, FIRST_LABEL_CODE = 0, 1, 2
SLOTS_PER_SYMPTOM = 1 + len(NLICE_ATTRIBUTES)
MAX_AGE = 100


class EncodingError(ValueError):
    pass


class SchemaMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureDescriptor:
    name: str
    kind: str
    n_categories: int = 0


@dataclass(frozen=True)
class FeatureSchema:
    mode: str
    features: tuple[FeatureDescriptor, ...]
    classes: tuple[str, ...]
    symptoms: tuple[str, ...]
    vocabularies: dict

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(f.kind for f in self.features)

    def class_index(self, condition_id: str) -> int:
        return self._class_lookup[condition_id]

    @property
    def _class_lookup(self) -> dict:
        lookup = self.__dict__.get("_lookup_cache")
        if lookup is None:
            lookup = {c: i for i, c in enumerate(self.classes)}
            object.__setattr__(self, "_lookup_cache", lookup)
        return lookup

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "features": [[f.name, f.kind, f.n_categories] for f in self.features],
            "classes": list(self.classes),
            "symptoms": list(self.symptoms),
            "vocabularies": {a: list(v) for a, v in self.vocabularies.items()},
        }

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(
            mode=d["mode"],
            features=tuple(FeatureDescriptor(n, k, int(c)) for n, k, c in d["features"]),
            classes=tuple(d["classes"]),
            symptoms=tuple(d["symptoms"]),
            vocabularies={a: tuple(v) for a, v in d["vocabularies"].items()},
        )

    def save(self, path) -> None:
        doc = {"fingerprint": self.fingerprint, **self.to_dict()}
        Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        schema = cls.from_dict(doc)
        if doc.get("fingerprint") not in (None, schema.fingerprint):
            raise SchemaMismatchError(f"{path}: stored fingerprint does not match schema content")
        return schema


def build_schema(kb: KnowledgeBase, mode: str | None = None) -> FeatureSchema:
    """Column layout for ``kb``; ``mode="symcat"`` drops NLICE slots from an nlice kb."""
    mode = mode or kb.mode
    if mode == "nlice" and kb.mode != "nlice":
        raise ValueError("an nlice schema needs an nlice knowledge base")
    features = [
        FeatureDescriptor("age", NUMERIC),
        FeatureDescriptor("gender", BINARY),
        FeatureDescriptor("race", CATEGORICAL, len(RACES)),
    ]
    symptoms = tuple(sorted(kb.symptom_ids))
    vocabularies = {}
    if mode == "nlice":
        vocabularies = {a: tuple(kb.vocabulary(a)) for a in NLICE_ATTRIBUTES}
        for sid in symptoms:
            features.append(FeatureDescriptor(sid, CATEGORICAL, 2))
            for a in NLICE_ATTRIBUTES:
                features.append(FeatureDescriptor(f"{sid}:{a}", CATEGORICAL, len(vocabularies[a]) + 2))
    else:
        features.extend(FeatureDescriptor(sid, BINARY) for sid in symptoms)
    return FeatureSchema(mode, tuple(features), kb.condition_ids, symptoms, vocabularies)


@dataclass(frozen=True)
class EncodedDataset:
    features: np.ndarray  # (N, D) int32
    labels: np.ndarray  # (N,) int32
    schema: FeatureSchema
    record_ids: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def fingerprint(self) -> str:
        return self.schema.fingerprint

    def subset(self, idx) -> "EncodedDataset":
        idx = np.asarray(idx)
        rids = None if self.record_ids is None else self.record_ids[idx]
        return EncodedDataset(self.features[idx], self.labels[idx], self.schema, rids)


def encode(records: Sequence[PatientRecord], schema: FeatureSchema) -> EncodedDataset:
    n = len(records)
    X = np.zeros((n, schema.n_features), dtype=np.int32)
    y = np.zeros(n, dtype=np.int32)
    rids = np.zeros(n, dtype=np.int64)
    nlice = schema.mode == "nlice"
    width = SLOTS_PER_SYMPTOM if nlice else 1
    col = {sid: 3 + i * width for i, sid in enumerate(schema.symptoms)}
    codes = {a: {lab: FIRST_LABEL_CODE + k for k, lab in enumerate(schema.vocabularies.get(a, ()))} for a in NLICE_ATTRIBUTES}
    for a in codes:
        codes[a][NA] = NA_CODE
    gender_code = {g: i for i, g in enumerate(GENDERS)}
    race_code = {r: i for i, r in enumerate(RACES)}

    for i, rec in enumerate(records):
        if not rec.symptoms:
            raise EncodingError(f"record {rec.record_id} presents no symptoms")
        d = rec.demographics
        try:
            y[i] = schema.class_index(rec.condition_id)
            X[i, 1] = gender_code[d.gender]
            X[i, 2] = race_code[d.race]
        except KeyError as exc:
            raise EncodingError(f"record {rec.record_id}: unknown value {exc.args[0]!r}") from None
        if not 0 <= d.age_years <= MAX_AGE:
            raise EncodingError(f"record {rec.record_id}: age {d.age_years} outside [0, {MAX_AGE}]")
        X[i, 0] = d.age_years
        rids[i] = rec.record_id
        for s in rec.symptoms:
            c = col.get(s.symptom_id)
            if c is None:
                raise EncodingError(f"record {rec.record_id}: unknown symptom {s.symptom_id!r}")
            X[i, c] = 1
            if nlice:
                for k, a in enumerate(NLICE_ATTRIBUTES, start=1):
                    label = s.nlice_values.get(a, NA)
                    code = codes[a].get(label)
                    if code is None:
                        raise EncodingError(
                            f"record {rec.record_id}: label {label!r} not in {a} vocabulary"
                        )
                    X[i, c + k] = code
    return EncodedDataset(X, y, schema, rids)


def decode(dataset: EncodedDataset) -> list[PatientRecord]:
    """Inverse of :func:`encode` (age group is re-derived from the age column)."""
    schema = dataset.schema
    nlice = schema.mode == "nlice"
    width = SLOTS_PER_SYMPTOM if nlice else 1
    rids = dataset.record_ids if dataset.record_ids is not None else np.arange(len(dataset))
    out = []
    for i, row in enumerate(dataset.features):
        symptoms = []
        for j, sid in enumerate(schema.symptoms):
            c = 3 + j * width
            if row[c] == 0:
                continue
            if nlice:
                values = {}
                for k, a in enumerate(NLICE_ATTRIBUTES, start=1):
                    code = int(row[c + k])
                    values[a] = NA if code == NA_CODE else schema.vocabularies[a][code - FIRST_LABEL_CODE]
                symptoms.append(PresentedSymptom(sid, values))
            else:
                symptoms.append(PresentedSymptom(sid))
        demo = Demographics.from_age(int(row[0]), GENDERS[row[1]], RACES[row[2]])
        out.append(PatientRecord(int(rids[i]), demo, schema.classes[dataset.labels[i]], tuple(symptoms)))
    return out


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def schema_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.name.rsplit(".", 1)[0] + ".schema.json")


def _write_npz(path, **arrays) -> None:
    # np.savez stamps entries with the wall clock; a fixed date keeps files byte-stable
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            zf.writestr(info, buf.getvalue())


def save_encoded(dataset: EncodedDataset, path, fmt: str | None = None) -> Path:
    """Write features + labels (``npz`` or ``csv``) and a sidecar schema file."""
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "npz")
    rids = dataset.record_ids if dataset.record_ids is not None else np.arange(len(dataset))
    if fmt == "npz":
        _write_npz(
            path,
            features=dataset.features,
            labels=dataset.labels,
            record_ids=rids,
            fingerprint=np.array(dataset.fingerprint),
        )
    elif fmt == "csv":
        header = ["record_id", "label"] + [f.name for f in dataset.schema.features]
        table = np.column_stack([rids, dataset.labels, dataset.features])
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# fingerprint={dataset.fingerprint}\n")
            fh.write(",".join(header) + "\n")
            np.savetxt(fh, table, fmt="%d", delimiter=",")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    sidecar = schema_path_for(path)
    dataset.schema.save(sidecar)
    return sidecar


def load_encoded(path, schema_path=None) -> EncodedDataset:
    path = Path(path)
    schema = FeatureSchema.load(schema_path or schema_path_for(path))
    if path.suffix == ".csv":
        with open(path, encoding="utf-8") as fh:
            first = fh.readline().strip()
        stored = first.split("=", 1)[1] if first.startswith("# fingerprint=") else None
        table = np.loadtxt(path, delimiter=",", skiprows=2, dtype=np.int64, ndmin=2)
        table = table.reshape(-1, schema.n_features + 2)
        rids, labels, X = table[:, 0], table[:, 1].astype(np.int32), table[:, 2:].astype(np.int32)
    else:
        with np.load(path) as z:
            stored = str(z["fingerprint"])
            X, labels, rids = z["features"], z["labels"], z["record_ids"]
    if stored is not None and stored != schema.fingerprint:
        raise SchemaMismatchError(f"{path}: data fingerprint {stored[:12]} != schema {schema.fingerprint[:12]}")
    return EncodedDataset(X, labels, schema, rids)


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    test: np.ndarray
    test_fraction: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "test_fraction": self.test_fraction,
            "seed": self.seed,
            "train": self.train.tolist(),
            "test": self.test.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Split":
        return cls(
            np.asarray(d["train"], dtype=np.int64),
            np.asarray(d["test"], dtype=np.int64),
            float(d["test_fraction"]),
            int(d["seed"]),
        )


def stratified_split(dataset, test_fraction: float = 0.2, seed: int = 0) -> Split:
    """Per-class shuffled split; ``dataset`` may also be a bare label array."""
    if not 0.0 < test_fraction < 1.0:
        raise SplitError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    labels = np.asarray(dataset.labels if isinstance(dataset, EncodedDataset) else dataset)
    classes, counts = np.unique(labels, return_counts=True)
    singles = classes[counts < 2]
    if len(singles):
        raise SplitError(f"classes with fewer than 2 records: {singles.tolist()}")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    train, test = [], []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_test = min(max(int(round(len(idx) * test_fraction)), 1), len(idx) - 1)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return Split(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)), test_fraction, int(seed))
