"""Optional large-scale check against a full SymCat knowledge base.

The SymCat tables are not bundled.  Point this script at the conditions and
symptoms CSVs (same columns as ``ddxsynth kb import-symcat`` expects); it
prunes unreferenced symptoms, trains naive Bayes on a large synthetic sample
and reports whether Top-1 accuracy lands in the expected band.

    python tools/reproduce_symcat.py conditions.csv symptoms.csv --num-records 5000000
"""
import argparse
import sys
import time

from ddxsynth.encoding import build_schema, encode, stratified_split
from ddxsynth.evaluation import top_k_accuracy
from ddxsynth.generator import GenerationConfig, generate_dataset
from ddxsynth.knowledge_base import import_symcat_csv, kb_stats, prune_orphan_symptoms
from ddxsynth.models import HybridNaiveBayes

BAND = (0.55, 0.62)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("conditions")
    ap.add_argument("symptoms")
    ap.add_argument("--num-records", type=int, default=5_000_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)

    kb = prune_orphan_symptoms(import_symcat_csv(args.conditions, args.symptoms))
    s = kb_stats(kb)
    print(f"{s.n_conditions} conditions, {s.n_symptoms} symptoms after pruning")

    t0 = time.time()
    records = generate_dataset(kb, GenerationConfig(args.num_records, seed=args.seed), workers=args.workers)
    data = encode(records, build_schema(kb))
    split = stratified_split(data, 0.2, seed=args.seed)
    model = HybridNaiveBayes().fit(data.subset(split.train))
    test = data.subset(split.test)
    top1 = top_k_accuracy(model.predict_proba(test), test.labels, 1)
    ok = BAND[0] <= top1 <= BAND[1]
    print(f"top-1 {top1:.4f}  band {BAND}  {'PASS' if ok else 'FAIL'}  ({time.time() - t0:.0f}s)")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
