"""Config-driven end-to-end runs with a checksummed manifest."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .encoding import build_schema, encode, save_encoded, stratified_split
from .evaluation import evaluate
from .generator import GenerationConfig, generate_dataset, write_records_csv
from .knowledge_base import (
    KnowledgeBase,
    load_bundled,
    parse_knowledge_base,
    prune_orphan_symptoms,
    validate,
)
from .models import HybridNaiveBayes, RandomForest, save_model
from .scenarios import InjectionSpec, PerturbationSpec, inject, perturb

OUT_ENV = "DDXSYNTH_OUT"
BUNDLED_PREFIX = "bundled:"


class ValidationFailed(RuntimeError):
    def __init__(self, report):
        self.report = report
        super().__init__(f"knowledge base has {len(report.errors)} error(s)")


def derive_seed(global_seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{int(global_seed)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_kb(ref: str, mode: str | None = None) -> KnowledgeBase:
    """A file path, or ``bundled:<name>`` for a packaged knowledge base."""
    if ref.startswith(BUNDLED_PREFIX):
        kb = load_bundled(ref[len(BUNDLED_PREFIX):])
        if mode is not None and kb.mode != mode:
            raise ValueError(f"{ref} is a {kb.mode} knowledge base, not {mode}")
        return kb
    return parse_knowledge_base(ref, mode)


@dataclass
class RunConfig:
    kb: str
    mode: str | None = None
    num_records: int = 10000
    min_symptoms: int = 1
    seed: int = 0
    # {"perturb": {"delta": 0.3}} | {"inject": {"mode": "max"}} | {"min_symptoms": 3}
    scenario: dict | None = None
    eval_records: int | None = None
    test_fraction: float = 0.2
    model: str = "nb"
    model_params: dict = field(default_factory=dict)
    out_dir: str | None = None
    threads: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def config_hash(self) -> str:
        # output location and worker count do not change results
        d = {k: v for k, v in self.to_dict().items() if k not in ("out_dir", "threads")}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def stage_seeds(self) -> dict[str, int]:
        return {s: derive_seed(self.seed, s) for s in ("generate", "split", "train", "transform", "evaluate")}


@dataclass
class PipelineResult:
    ok: bool
    out_dir: Path
    manifest: dict
    report: object = None
    error: str | None = None

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else self.manifest.get("exit_code", 4)


def make_model(name: str, params: dict, seed: int, threads: int = 1):
    if name == "nb":
        return HybridNaiveBayes(**params)
    if name == "rf":
        return RandomForest(**{"seed": seed, "n_jobs": threads, **params})
    raise ValueError(f"unknown model {name!r}; expected 'nb' or 'rf'")


def transform_kb(kb: KnowledgeBase, scenario: dict | None, seed: int) -> tuple[KnowledgeBase, int | None]:
    """Apply a scenario; returns the evaluation kb and an optional min_symptoms override."""
    if not scenario:
        return kb, None
    if len(scenario) != 1:
        raise ValueError("scenario must have exactly one key")
    (name, arg), = scenario.items()
    if name == "perturb":
        return perturb(kb, PerturbationSpec(float(arg["delta"]), int(arg.get("seed", seed)))), None
    if name == "inject":
        return inject(kb, InjectionSpec(arg["mode"])), None
    if name == "min_symptoms":
        return kb, int(arg)
    raise ValueError(f"unknown scenario {name!r}")


def run_pipeline(config: RunConfig) -> PipelineResult:
    out = Path(config.out_dir or os.environ.get(OUT_ENV, "ddxsynth-out"))
    out.mkdir(parents=True, exist_ok=True)
    seeds = config.stage_seeds()
    manifest = {
        "tool": "ddxsynth",
        "version": __version__,
        "config_hash": config.config_hash,
        "config": config.to_dict(),
        "seeds": seeds,
        "artifacts": {},
        "status": "running",
    }
    stage = "validate"

    def record(name, path):
        manifest["artifacts"][name] = {"path": Path(path).name, "sha256": sha256_file(path)}

    report = None
    try:
        kb = load_kb(config.kb, config.mode)
        vr = validate(kb)
        if not vr.ok:
            raise ValidationFailed(vr)
        kb = prune_orphan_symptoms(kb)

        stage = "generate"
        gen_cfg = GenerationConfig(config.num_records, config.min_symptoms, seeds["generate"])
        records = generate_dataset(kb, gen_cfg, workers=config.threads)
        write_records_csv(records, out / "dataset.csv", kb.mode)
        record("dataset", out / "dataset.csv")

        stage = "encode"
        schema = build_schema(kb)
        data = encode(records, schema)
        sidecar = save_encoded(data, out / "encoded.npz")
        record("encoded", out / "encoded.npz")
        record("schema", sidecar)

        stage = "train"
        split = stratified_split(data, config.test_fraction, seeds["split"])
        model = make_model(config.model, config.model_params, seeds["train"], config.threads)
        model.fit(data.subset(split.train))
        save_model(model, out / "model.json")
        record("model", out / "model.json")

        stage = "transform"
        eval_kb, min_override = transform_kb(kb, config.scenario, seeds["transform"])
        if eval_kb is kb and min_override is None:
            test = data.subset(split.test)
        else:
            n_eval = config.eval_records or len(split.test)
            eval_cfg = GenerationConfig(n_eval, min_override or config.min_symptoms, seeds["evaluate"])
            test = encode(generate_dataset(eval_kb, eval_cfg, workers=config.threads), schema)

        stage = "evaluate"
        report = evaluate(model.predict_proba(test), test.labels, schema.classes)
        report.save(out / "evaluation.json")
        record("evaluation", out / "evaluation.json")
        manifest["status"] = "complete"
        ok, err = True, None
    except Exception as exc:  # recorded in the manifest, surfaced via exit code
        manifest["status"] = "failed"
        manifest["failed_stage"] = stage
        manifest["error"] = str(exc)
        manifest["exit_code"] = 3 if isinstance(exc, ValidationFailed) else 4
        manifest["partial"] = sorted(manifest["artifacts"])
        ok, err = False, f"{stage}: {exc}"
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return PipelineResult(ok, out, manifest, report, err)
