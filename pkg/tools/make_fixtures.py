"""Regenerate the knowledge bases bundled in src/ddxsynth/data.

    python tools/make_fixtures.py

Every table is either written out literally or drawn from a fixed-seed RNG,
so rerunning the script reproduces the committed files byte for byte.
"""
from pathlib import Path

import numpy as np

from ddxsynth.knowledge_base import (
    AGE_GROUP_LABELS,
    GENDERS,
    NLICE_ATTRIBUTES,
    RACES,
    from_dict,
    save_knowledge_base,
    validate,
)

OUT = Path(__file__).resolve().parents[1] / "src" / "ddxsynth" / "data"

FLAT_AGE = dict.fromkeys(AGE_GROUP_LABELS, 1.0)
FLAT_GENDER = dict.fromkeys(GENDERS, 1.0)
FLAT_RACE = dict.fromkeys(RACES, 1.0)

NLICE_VOCAB = {
    "nature": ["dry", "productive", "sharp", "dull", "burning", "throbbing", "cramping"],
    "location": [
        "head", "chest", "throat", "back", "limbs", "generalized",
        "abdomen_upper_right", "abdomen_upper_left", "abdomen_lower_right", "abdomen_lower_left",
    ],
    "intensity": ["mild", "moderate", "severe"],
    "frequency": ["constant", "intermittent", "episodic"],
    "duration": ["hours", "days", "weeks", "months"],
    "onset": ["sudden", "gradual"],
    "excitation": ["exertion", "eating", "lying_down", "cold", "stress", "none_known"],
}


def r3(x):
    return float(round(float(x), 3))


def odds(rng, labels, lo, hi):
    return {lab: r3(rng.uniform(lo, hi)) for lab in labels}


def condition(cid, name, symptoms, age=None, gender=None, race=None):
    return {
        "condition_id": cid,
        "display_name": name,
        "age_odds": age or FLAT_AGE,
        "gender_odds": gender or FLAT_GENDER,
        "race_odds": race or FLAT_RACE,
        "symptoms": symptoms,
    }


def expr(sid, p, nlice=None):
    d = {"symptom_id": sid, "expression_prob": p}
    if nlice is not None:
        d["nlice"] = nlice
    return d


def categorical(rng, labels, k):
    picked = sorted(rng.choice(len(labels), size=k, replace=False))
    w = rng.dirichlet(np.ones(k))
    probs = [r3(x) for x in w[:-1]]
    probs.append(float(round(1.0 - sum(probs), 3)))
    if probs[-1] <= 0:
        probs = [r3(1.0 / k)] * (k - 1) + [float(round(1.0 - r3(1.0 / k) * (k - 1), 3))]
    return {labels[i]: p for i, p in zip(picked, probs)}


def demo_toy():
    """Three respiratory-ish conditions over five symptoms."""
    symptoms = [
        ("cough", "Cough"),
        ("fever", "Fever"),
        ("wheezing", "Wheezing"),
        ("sore_throat", "Sore throat"),
        ("fatigue", "Fatigue"),
    ]
    age_child = {"<1": 0.2, "1-4": 0.6, "5-14": 0.5, "15-29": 0.2, "30-44": 0.1, "45-59": 0.1, "60-74": 0.1, ">75": 0.1}
    return {
        "mode": "symcat",
        "attribute_vocabularies": {},
        "symptoms": [{"symptom_id": s, "display_name": n} for s, n in symptoms],
        "conditions": [
            condition(
                "asthma", "Asthma",
                [expr("cough", 0.8), expr("wheezing", 0.7), expr("fatigue", 0.2)],
                age=dict(age_child), gender={"male": 0.55, "female": 0.45},
                race={"white": 0.4, "black": 0.5, "hispanic": 0.3, "other": 0.3},
            ),
            condition(
                "common_cold", "Common cold",
                [expr("cough", 0.6), expr("sore_throat", 0.7), expr("fever", 0.3), expr("fatigue", 0.4)],
                age={k: 0.5 for k in AGE_GROUP_LABELS}, gender={"male": 0.5, "female": 0.5},
                race={"white": 0.5, "black": 0.5, "hispanic": 0.5, "other": 0.5},
            ),
            condition(
                "influenza", "Influenza",
                [expr("fever", 0.9), expr("fatigue", 0.8), expr("cough", 0.5)],
                age={"<1": 0.1, "1-4": 0.3, "5-14": 0.4, "15-29": 0.4, "30-44": 0.4, "45-59": 0.5, "60-74": 0.6, ">75": 0.7},
                gender={"male": 0.1, "female": 1.0},
                race={"white": 0.3, "black": 0.3, "hispanic": 0.3, "other": 0.3},
            ),
        ],
    }


def toy10(seed=20231):
    """Ten conditions over 20 symptoms in two families of five.

    Each family shares three near-certain anchor symptoms (so an empty draw is
    all but impossible), and members differ only through six low-probability
    symptoms picked from overlapping windows.  Records with few symptoms are
    therefore ambiguous within a family, which is what makes a higher
    minimum-symptom count pay off.
    """
    rng = np.random.default_rng(seed)
    sids = [f"s{i:02d}" for i in range(1, 21)]
    anchors = (sids[0:3], sids[3:6])
    lows = sids[6:]
    conditions = []
    for c in range(10):
        centre = int(round(c * len(lows) / 10))
        pool = [lows[(centre + off) % len(lows)] for off in range(-3, 4)]
        chosen = sorted(rng.choice(pool, size=6, replace=False))
        exprs = [expr(s, r3(rng.uniform(0.85, 0.95))) for s in anchors[c // 5]]
        exprs += [expr(s, r3(rng.uniform(0.08, 0.25))) for s in chosen]
        conditions.append(
            condition(
                f"c{c:02d}", f"Condition {c}", exprs,
                age=odds(rng, AGE_GROUP_LABELS, 0.3, 1.0),
                gender=odds(rng, GENDERS, 0.4, 1.0),
                race=odds(rng, RACES, 0.4, 1.0),
            )
        )
    return {
        "mode": "symcat",
        "attribute_vocabularies": {},
        "symptoms": [{"symptom_id": s, "display_name": f"Symptom {s[1:]}"} for s in sids],
        "conditions": conditions,
    }


def nlice_demo(seed=55137):
    """55 conditions over 137 symptoms with partial NLICE profiles."""
    rng = np.random.default_rng(seed)
    n_cond, n_sym = 55, 137
    sids = [f"sym{i:03d}" for i in range(1, n_sym + 1)]
    sets = [set() for _ in range(n_cond)]
    for i, s in enumerate(sids):
        sets[i % n_cond].add(s)
    for c in range(n_cond):
        target = int(rng.integers(6, 15))
        while len(sets[c]) < target:
            sets[c].add(sids[int(rng.integers(0, n_sym))])
    conditions = []
    for c in range(n_cond):
        exprs = []
        for s in sorted(sets[c]):
            nlice = None
            if rng.random() < 0.7:
                nlice = {}
                for attr in NLICE_ATTRIBUTES:
                    if rng.random() < 0.6:
                        labels = NLICE_VOCAB[attr]
                        nlice[attr] = categorical(rng, labels, int(rng.integers(1, min(3, len(labels)) + 1)))
            exprs.append(expr(s, r3(rng.uniform(0.1, 0.9)), nlice))
        conditions.append(
            condition(
                f"cond{c:02d}", f"Condition {c}", exprs,
                age=odds(rng, AGE_GROUP_LABELS, 0.05, 1.0),
                gender=odds(rng, GENDERS, 0.3, 1.0),
                race=odds(rng, RACES, 0.3, 1.0),
            )
        )
    return {
        "mode": "nlice",
        "attribute_vocabularies": NLICE_VOCAB,
        "symptoms": [{"symptom_id": s, "display_name": f"Symptom {s[3:]}"} for s in sids],
        "conditions": conditions,
    }


def nlice_pair():
    """Two conditions with identical binary profiles, told apart only by nature."""
    shared = [("cough", 0.7), ("chest_pain", 0.5), ("fever", 0.4), ("fatigue", 0.3)]
    dry = {"nature": {"dry": 0.7, "sharp": 0.3}, "intensity": {"mild": 0.5, "moderate": 0.5}}
    wet = {"nature": {"productive": 0.6, "dull": 0.4}, "intensity": {"mild": 0.5, "moderate": 0.5}}
    return {
        "mode": "nlice",
        "attribute_vocabularies": NLICE_VOCAB,
        "symptoms": [{"symptom_id": s, "display_name": s.replace("_", " ")} for s, _ in shared],
        "conditions": [
            condition("bronchitis_dry", "Dry-type bronchitis", [expr(s, p, dry) for s, p in shared]),
            condition("bronchitis_wet", "Productive bronchitis", [expr(s, p, wet) for s, p in shared]),
        ],
    }


def inject4():
    """Four conditions whose similarity scores include ties."""
    sym = ["a", "b", "c", "d", "e", "f", "g", "h"]
    return {
        "mode": "symcat",
        "attribute_vocabularies": {},
        "symptoms": [{"symptom_id": s, "display_name": s.upper()} for s in sym],
        "conditions": [
            condition("k1", "K1", [expr("a", 0.2), expr("b", 0.8)]),
            condition("k2", "K2", [expr("a", 0.5), expr("b", 0.4), expr("c", 0.3)]),
            condition("k3", "K3", [expr("b", 0.6), expr("d", 0.1), expr("e", 0.9), expr("f", 0.4)]),
            condition("k4", "K4", [expr("c", 0.3), expr("g", 0.3), expr("h", 0.7), expr("a", 0.6)]),
        ],
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, doc in [
        ("demo_toy", demo_toy()),
        ("toy10", toy10()),
        ("nlice_demo", nlice_demo()),
        ("nlice_pair", nlice_pair()),
        ("inject4", inject4()),
    ]:
        kb = from_dict(doc)
        report = validate(kb)
        assert report.ok, report.to_jsonl()
        save_knowledge_base(kb, OUT / f"{name}.json")
        print(f"{name}: {len(kb.conditions)} conditions, {len(kb.symptoms)} symptoms")


if __name__ == "__main__":
    main()
