import numpy as np
import pytest

from ddxsynth.knowledge_base import AGE_GROUP_LABELS, GENDERS, RACES, from_dict


def flat_condition(cid, exprs, age=1.0, gender=1.0, race=1.0):
    """Condition dict with constant odds; ``exprs`` is [(sid, p)] or [(sid, p, nlice)]."""
    syms = []
    for e in exprs:
        d = {"symptom_id": e[0], "expression_prob": e[1]}
        if len(e) > 2:
            d["nlice"] = e[2]
        syms.append(d)
    return {
        "condition_id": cid,
        "age_odds": dict.fromkeys(AGE_GROUP_LABELS, age),
        "gender_odds": dict.fromkeys(GENDERS, gender),
        "race_odds": dict.fromkeys(RACES, race),
        "symptoms": syms,
    }


def make_kb(conditions, symptoms=None, mode="symcat", vocab=None):
    """KnowledgeBase from {cid: [(sid, p), ...]}; symptoms default to every referenced id."""
    conds = [flat_condition(cid, exprs) for cid, exprs in conditions.items()]
    if symptoms is None:
        symptoms = sorted({e[0] for exprs in conditions.values() for e in exprs})
    return from_dict(
        {
            "mode": mode,
            "attribute_vocabularies": vocab or {},
            "symptoms": [{"symptom_id": s} for s in symptoms],
            "conditions": conds,
        }
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
