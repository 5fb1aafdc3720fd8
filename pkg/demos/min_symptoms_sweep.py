"""
More symptoms per patient, better diagnoses
===========================================

Train once on baseline data, then evaluate on datasets where every patient
presents at least 1..5 symptoms.
"""

from ddxsynth.encoding import build_schema, encode
from ddxsynth.evaluation import top_k_accuracy
from ddxsynth.generator import GenerationConfig, generate_dataset
from ddxsynth.knowledge_base import load_bundled
from ddxsynth.models import HybridNaiveBayes, RandomForest

kb = load_bundled("toy10")
schema = build_schema(kb)
train = encode(generate_dataset(kb, GenerationConfig(30_000, seed=1)), schema)

models = {"nb": HybridNaiveBayes().fit(train), "rf": RandomForest(n_trees=50, seed=1).fit(train)}

print("min  " + "  ".join(f"{m:>6}" for m in models))
for k in range(1, 6):
    test = encode(generate_dataset(kb, GenerationConfig(10_000, min_symptoms=k, seed=2)), schema)
    accs = [top_k_accuracy(m.predict_proba(test), test.labels, 1) for m in models.values()]
    print(f"{k:>3}  " + "  ".join(f"{a:6.3f}" for a in accs))
