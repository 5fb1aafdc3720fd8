"""
Synthetic patients and a first differential diagnosis
=====================================================

Sample patients from the bundled three-condition knowledge base, train a
naive Bayes model and rank the conditions for a few records.
"""

import numpy as np

from ddxsynth.encoding import build_schema, encode, stratified_split
from ddxsynth.evaluation import top_k_accuracy
from ddxsynth.generator import GenerationConfig, generate_dataset
from ddxsynth.knowledge_base import kb_stats, load_bundled
from ddxsynth.models import HybridNaiveBayes, predict_top_k

kb = load_bundled("demo_toy")
print(kb_stats(kb).to_dict())

# every record gets its own random stream, so this is reproducible
records = generate_dataset(kb, GenerationConfig(num_records=5000, seed=7))
for rec in records[:3]:
    d = rec.demographics
    print(rec.condition_id, d.age_years, d.gender, d.race, rec.symptom_ids)

schema = build_schema(kb)
data = encode(records, schema)
split = stratified_split(data, test_fraction=0.2, seed=1)
model = HybridNaiveBayes().fit(data.subset(split.train))

test = data.subset(split.test)
post = model.predict_proba(test)
print("top-1", top_k_accuracy(post, test.labels, 1))
print("top-2", top_k_accuracy(post, test.labels, 2))

for row, label in zip(post[:3], test.labels[:3]):
    ranked = [(schema.classes[c], round(p, 3)) for c, p in predict_top_k(row, 3)]
    print("truth", schema.classes[label], "->", ranked)

np.set_printoptions(precision=3)
print(post[:3])
