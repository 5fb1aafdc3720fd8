"""Knowledge-base transforms that emulate drift between synthetic and real data.

* :func:`perturb` scales every expression probability up or down by ``delta``.
* :func:`inject` adds up to five co-occurrence-similar symptoms per condition.

The minimum-symptoms scenario lives in :class:`ddxsynth.generator.GenerationConfig`.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

from .knowledge_base import ConditionDef, KnowledgeBase, SymptomExpression

PERTURBATION_DELTAS = (0.1, 0.2, 0.3, 0.5, 0.7)
INJECTION_MODES = ("min", "mean", "max")
MAX_INJECTED = 5


@dataclass(frozen=True)
class PerturbationSpec:
    delta: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")


@dataclass(frozen=True)
class InjectionSpec:
    mode: str = "mean"
    max_injected: int = MAX_INJECTED

    def __post_init__(self):
        if self.mode not in INJECTION_MODES:
            raise ValueError(f"mode must be one of {INJECTION_MODES}, got {self.mode!r}")


def perturbation_signs(kb: KnowledgeBase, seed: int) -> list[np.ndarray]:
    """+1/-1 per (condition, symptom) pair, one Philox stream per condition."""
    signs = []
    for ci, c in enumerate(kb.conditions):
        rng = np.random.Generator(np.random.Philox(key=(int(seed) << 64) | ci))
        signs.append(np.where(rng.random(len(c.symptoms)) < 0.5, 1.0, -1.0))
    return signs


def perturb(kb: KnowledgeBase, spec: PerturbationSpec) -> KnowledgeBase:
    """Replace each p with clamp(p * (1 +/- delta), 0, 1)."""
    conditions = []
    for c, sign in zip(kb.conditions, perturbation_signs(kb, spec.seed)):
        exprs = tuple(
            replace(e, expression_prob=min(1.0, max(0.0, e.expression_prob * (1.0 + s * spec.delta))))
            for e, s in zip(c.symptoms, sign)
        )
        conditions.append(replace(c, symptoms=exprs))
    return kb.with_conditions(conditions)


class CooccurrenceGraph:
    """Symptoms as nodes; each condition adds one edge between every pair it contains."""

    def __init__(self, nodes, edge_count):
        self.nodes = tuple(nodes)
        self._adj: dict[str, dict[str, int]] = defaultdict(dict)
        for (a, b), n in edge_count.items():
            if n:
                self._adj[a][b] = n
                self._adj[b][a] = n

    def edge_count(self, a: str, b: str) -> int:
        if a == b:
            raise ValueError("self-edges are undefined")
        return self._adj.get(a, {}).get(b, 0)

    def edges(self) -> dict[tuple[str, str], int]:
        return {(a, b): n for a, nbrs in self._adj.items() for b, n in nbrs.items() if a < b}

    def neighbours(self, a: str) -> dict[str, int]:
        return dict(self._adj.get(a, {}))

    def __len__(self) -> int:
        return sum(len(v) for v in self._adj.values()) // 2


def build_cooccurrence_graph(kb: KnowledgeBase) -> CooccurrenceGraph:
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for c in kb.conditions:
        for a, b in combinations(sorted(set(c.symptom_ids)), 2):
            counts[(a, b)] += 1
    return CooccurrenceGraph(kb.symptom_ids, counts)


def similarity(graph: CooccurrenceGraph, cond: ConditionDef, candidate: str) -> int:
    """Sum of co-occurrence counts between ``candidate`` and the symptoms of ``cond``."""
    if candidate in cond.symptom_ids:
        raise ValueError(f"{candidate!r} already belongs to condition {cond.condition_id!r}")
    return sum(graph.edge_count(s, candidate) for s in cond.symptom_ids)


def _similarity_table(graph: CooccurrenceGraph, cond: ConditionDef) -> dict[str, int]:
    own = set(cond.symptom_ids)
    scores: dict[str, int] = defaultdict(int)
    for s in own:
        for other, n in graph.neighbours(s).items():
            if other not in own:
                scores[other] += n
    return scores


def injection_candidates(graph: CooccurrenceGraph, cond: ConditionDef, limit: int = MAX_INJECTED):
    """Top ``limit`` (symptom_id, K) pairs with K > 0, ties by ascending id."""
    scores = _similarity_table(graph, cond)
    ranked = sorted(((sid, k) for sid, k in scores.items() if k > 0), key=lambda t: (-t[1], t[0]))
    return ranked[:limit]


def _injected_prob(cond: ConditionDef, mode: str) -> float:
    probs = [e.expression_prob for e in cond.symptoms]
    if mode == "min":
        return min(probs)
    if mode == "max":
        return max(probs)
    return sum(probs) / len(probs)


def inject(kb: KnowledgeBase, spec: InjectionSpec) -> KnowledgeBase:
    graph = build_cooccurrence_graph(kb)
    conditions = []
    for c in kb.conditions:
        picked = injection_candidates(graph, c, spec.max_injected)
        if not picked or not c.symptoms:
            conditions.append(c)
            continue
        p = _injected_prob(c, spec.mode)
        added = tuple(SymptomExpression(sid, p, None) for sid, _ in picked)
        conditions.append(replace(c, symptoms=c.symptoms + added))
    return kb.with_conditions(conditions)
