"""
Why symptom attributes matter
=============================

Two conditions present exactly the same symptoms with the same rates.  Only
the nature of the symptoms (dry and sharp versus productive and dull)
tells them apart, so a presence-only encoding is stuck at chance.
"""

from ddxsynth.encoding import build_schema, encode, stratified_split
from ddxsynth.evaluation import evaluate
from ddxsynth.generator import GenerationConfig, generate_dataset
from ddxsynth.knowledge_base import load_bundled
from ddxsynth.models import HybridNaiveBayes, RandomForest

kb = load_bundled("nlice_pair")
records = generate_dataset(kb, GenerationConfig(10_000, seed=3))
print(records[0].symptoms[0].token("nlice"))

for mode in ("symcat", "nlice"):
    data = encode(records, build_schema(kb, mode))
    split = stratified_split(data, 0.2, seed=0)
    train, test = data.subset(split.train), data.subset(split.test)
    for name, model in (("nb", HybridNaiveBayes()), ("rf", RandomForest(n_trees=30, seed=0))):
        report = evaluate(model.fit(train).predict_proba(test), test.labels, data.schema.classes)
        print(f"{mode:>6} {name}: top-1 {report.top1:.3f}  precision {report.precision_weighted:.3f}")
