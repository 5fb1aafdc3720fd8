"""Command-line entry point: ``ddxsynth <verb> ...``.

Exit codes: 0 success, 2 usage, 3 validation failure, 4 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .encoding import build_schema, encode, load_encoded, save_encoded, Split, stratified_split
from .evaluation import EvaluationReport, evaluate, top_k_accuracy, write_figure_csvs
from .generator import GenerationConfig, generate_dataset, read_records_csv, write_records_csv
from .knowledge_base import (
    KnowledgeBaseError,
    import_symcat_csv,
    kb_stats,
    prune_orphan_symptoms,
    save_knowledge_base,
    validate,
)
from .models import load_model, predict_top_k, save_model
from .pipeline import OUT_ENV, RunConfig, load_kb, make_model, run_pipeline
from .scenarios import InjectionSpec, PerturbationSpec, inject, perturb

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3, 4


def _default_out(name: str) -> str:
    return str(Path(os.environ.get(OUT_ENV, ".")) / name)


def _out(args, name: str) -> Path:
    path = Path(args.out or _default_out(name))
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_kb_validate(args) -> int:
    kb = load_kb(args.kb, args.mode)
    report = validate(kb)
    text = report.to_jsonl()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_kb_stats(args) -> int:
    kb = load_kb(args.kb, args.mode)
    if args.prune:
        kb = prune_orphan_symptoms(kb)
    _emit(kb_stats(kb).to_dict())
    return EXIT_OK


def cmd_kb_import(args) -> int:
    kb = import_symcat_csv(args.conditions, args.symptoms)
    if args.prune:
        kb = prune_orphan_symptoms(kb)
    save_knowledge_base(kb, _out(args, "kb.json"))
    return EXIT_OK


def _generation_config(args) -> GenerationConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
    for key in ("num_records", "min_symptoms", "seed", "max_rejection_retries"):
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    if "num_records" not in base:
        raise SystemExit("generate: --num-records (or a config file) is required")
    return GenerationConfig(**base)


def cmd_generate(args) -> int:
    kb = load_kb(args.kb, args.mode)
    records = generate_dataset(kb, _generation_config(args), workers=args.threads)
    write_records_csv(records, _out(args, "dataset.csv"), kb.mode)
    return EXIT_OK


def cmd_transform(args) -> int:
    kb = load_kb(args.kb, args.mode)
    if args.transform == "perturb":
        kb = perturb(kb, PerturbationSpec(args.delta, _seed(args)))
    else:
        kb = inject(kb, InjectionSpec(args.inject_mode))
    save_knowledge_base(kb, _out(args, "kb.json"))
    return EXIT_OK


def cmd_encode(args) -> int:
    kb = load_kb(args.kb, args.mode)
    schema = build_schema(kb, args.schema_mode)
    records = read_records_csv(args.records, kb.mode)
    save_encoded(encode(records, schema), _out(args, f"encoded.{args.format}"), args.format)
    return EXIT_OK


def cmd_split(args) -> int:
    data = load_encoded(args.encoded)
    split = stratified_split(data, args.test_fraction, _seed(args))
    _out(args, "split.json").write_text(json.dumps(split.to_dict()) + "\n", encoding="utf-8")
    return EXIT_OK


def _load_split(path):
    return Split.from_dict(json.loads(Path(path).read_text(encoding="utf-8"))) if path else None


def cmd_train(args) -> int:
    data = load_encoded(args.encoded)
    split = _load_split(args.split)
    if split is not None:
        data = data.subset(split.train)
    if args.algorithm == "nb":
        params = {"alpha": args.alpha, "var_floor": args.var_floor}
    else:
        params = {
            "n_trees": args.n_trees,
            "max_features": args.max_features,
            "max_depth": args.max_depth,
            "min_samples_leaf": args.min_samples_leaf,
            "bootstrap": not args.no_bootstrap,
        }
    model = make_model(args.algorithm, params, _seed(args), args.threads)
    model.fit(data)
    save_model(model, _out(args, "model.json"))
    return EXIT_OK


def _test_data(args):
    data = load_encoded(args.encoded)
    split = _load_split(args.split)
    return data.subset(split.test) if split is not None else data


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data = _test_data(args)
    post = model.predict_proba(data)
    out = _out(args, "posteriors.npy")
    np.save(out, post)
    if args.top_k:
        for rid, row in zip(data.record_ids, post):
            ranked = [[data.schema.classes[c], p] for c, p in predict_top_k(row, args.top_k)]
            _emit({"record_id": int(rid), "top_k": ranked})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    data = _test_data(args)
    post = model.predict_proba(data)
    report = evaluate(post, data.labels, data.schema.classes, args.statistic)
    report.save(_out(args, "evaluation.json"))
    summary = {"top1": report.top1, "top5": report.top5, "precision": report.precision_weighted}
    if args.top_k:
        summary[f"top{args.top_k}"] = top_k_accuracy(post, data.labels, args.top_k)
    _emit(summary)
    return EXIT_OK


def cmd_report(args) -> int:
    report = EvaluationReport.load(args.evaluation)
    paths = write_figure_csvs(report, args.out or _default_out("report"))
    _emit({"written": [str(p) for p in paths]})
    return EXIT_OK


def cmd_run(args) -> int:
    config = RunConfig.load(args.config)
    if args.out:
        config.out_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    if args.threads:
        config.threads = args.threads
    result = run_pipeline(config)
    if not result.ok:
        print(f"ddxsynth: {result.error}", file=sys.stderr)
    _emit({"status": result.manifest["status"], "manifest": str(result.out_dir / "manifest.json")})
    return result.exit_code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--out", default=None, help=f"output path (default under ${OUT_ENV} or .)")
    common.add_argument("--threads", type=int, default=1, help="worker cap")

    kb_args = argparse.ArgumentParser(add_help=False)
    kb_args.add_argument("kb", help="knowledge base JSON path or bundled:<name>")
    kb_args.add_argument("--mode", choices=("symcat", "nlice"), default=None)

    parser = argparse.ArgumentParser(prog="ddxsynth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    kb = sub.add_parser("kb", help="knowledge base utilities").add_subparsers(dest="kb_command", required=True)
    p = kb.add_parser("validate", parents=[common, kb_args])
    p.set_defaults(func=cmd_kb_validate)
    p = kb.add_parser("stats", parents=[common, kb_args])
    p.add_argument("--prune", action="store_true", help="drop unreferenced symptoms first")
    p.set_defaults(func=cmd_kb_stats)
    p = kb.add_parser("import-symcat", parents=[common], help="convert SymCat CSVs to canonical JSON")
    p.add_argument("--conditions", required=True)
    p.add_argument("--symptoms", required=True)
    p.add_argument("--prune", action="store_true")
    p.set_defaults(func=cmd_kb_import)

    p = sub.add_parser("generate", parents=[common, kb_args], help="sample patient records")
    p.add_argument("--num-records", type=int, dest="num_records")
    p.add_argument("--min-symptoms", type=int, dest="min_symptoms")
    p.add_argument("--max-retries", type=int, dest="max_rejection_retries")
    p.add_argument("--config", help="GenerationConfig JSON; flags override it")
    p.set_defaults(func=cmd_generate)

    tr = sub.add_parser("transform", help="scenario transforms").add_subparsers(dest="transform", required=True)
    p = tr.add_parser("perturb", parents=[common, kb_args])
    p.add_argument("--delta", type=float, required=True)
    p.set_defaults(func=cmd_transform)
    p = tr.add_parser("inject", parents=[common])
    p.add_argument("kb", help="knowledge base JSON path or bundled:<name>")
    p.add_argument("--mode", dest="inject_mode", choices=("min", "mean", "max"), required=True)
    p.add_argument("--kb-mode", dest="mode", choices=("symcat", "nlice"), default=None)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("encode", parents=[common, kb_args], help="records CSV -> feature matrix")
    p.add_argument("records")
    p.add_argument("--format", choices=("npz", "csv"), default="npz")
    p.add_argument("--schema-mode", choices=("symcat", "nlice"), default=None)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("split", parents=[common], help="stratified train/test split")
    p.add_argument("encoded")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_split)

    tn = sub.add_parser("train", help="fit a model").add_subparsers(dest="algorithm", required=True)
    p = tn.add_parser("nb", parents=[common])
    p.add_argument("encoded")
    p.add_argument("--split")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--var-floor", type=float, default=1e-9)
    p.set_defaults(func=cmd_train)
    p = tn.add_parser("rf", parents=[common])
    p.add_argument("encoded")
    p.add_argument("--split")
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-features", default="sqrt", type=lambda s: s if s == "sqrt" else int(s))
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--no-bootstrap", action="store_true")
    p.set_defaults(func=cmd_train)

    for name, func in (("predict", cmd_predict), ("evaluate", cmd_evaluate)):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("model")
        p.add_argument("encoded")
        p.add_argument("--split", help="use only the split's test rows")
        p.add_argument("--top-k", type=int, default=None, dest="top_k")
        if name == "evaluate":
            p.add_argument("--statistic", choices=("max", "top5"), default="max")
        p.set_defaults(func=func)

    p = sub.add_parser("report", parents=[common], help="figure-ready CSVs from an evaluation JSON")
    p.add_argument("evaluation")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", parents=[common], help="full pipeline from a RunConfig JSON")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KnowledgeBaseError as exc:
        print(f"ddxsynth: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"ddxsynth: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
