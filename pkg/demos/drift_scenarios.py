"""
Perturbed and injected knowledge bases
======================================

Models trained on the original knowledge base meet patients generated from
a drifted one: expression probabilities scaled by 1 +/- delta, or extra
symptoms borrowed from co-occurring conditions.
"""

import numpy as np

from ddxsynth.encoding import build_schema, encode
from ddxsynth.evaluation import top_k_accuracy
from ddxsynth.generator import GenerationConfig, generate_dataset
from ddxsynth.knowledge_base import load_bundled
from ddxsynth.models import HybridNaiveBayes
from ddxsynth.scenarios import (
    InjectionSpec,
    PerturbationSpec,
    build_cooccurrence_graph,
    inject,
    injection_candidates,
    perturb,
)

kb = load_bundled("toy10")
schema = build_schema(kb)
model = HybridNaiveBayes().fit(encode(generate_dataset(kb, GenerationConfig(30_000, seed=1)), schema))


def top1(eval_kb):
    test = encode(generate_dataset(eval_kb, GenerationConfig(10_000, seed=2)), schema)
    return top_k_accuracy(model.predict_proba(test), test.labels, 1)


print("baseline", round(top1(kb), 3))

# perturbation: average a few sign patterns per delta
for delta in (0.1, 0.3, 0.5, 0.7):
    accs = [top1(perturb(kb, PerturbationSpec(delta, seed))) for seed in range(3)]
    print(f"perturb {delta:.1f}", round(float(np.mean(accs)), 3))

# which symptoms would be injected into the first condition?
graph = build_cooccurrence_graph(kb)
print(kb.conditions[0].condition_id, injection_candidates(graph, kb.conditions[0]))

for mode in ("min", "mean", "max"):
    print(f"inject {mode}", round(top1(inject(kb, InjectionSpec(mode))), 3))
