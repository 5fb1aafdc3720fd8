import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddxsynth.generator import (
    ConfigurationError,
    Demographics,
    GenerationConfig,
    GenerationError,
    PatientRecord,
    generate_dataset,
    generate_records,
    read_records_csv,
    record_rng,
    records_to_csv,
    sample_condition,
    sample_demographics,
    sample_nlice,
    sample_symptoms,
    condition_score,
    write_records_csv,
)
from ddxsynth.knowledge_base import (
    AGE_GROUP_LABELS,
    AGE_GROUPS,
    GENDERS,
    NA,
    NLICE_ATTRIBUTES,
    RACES,
    ConditionDef,
    NliceProfile,
    SymptomExpression,
    from_dict,
    load_bundled,
)

from conftest import flat_condition, make_kb


def _cond(probs, cid="c"):
    return ConditionDef(
        cid, cid,
        dict.fromkeys(AGE_GROUP_LABELS, 1.0), dict.fromkeys(GENDERS, 1.0), dict.fromkeys(RACES, 1.0),
        tuple(SymptomExpression(s, p) for s, p in probs.items()),
    )


def _demo(group="15-29", gender="female", race="black"):
    g = AGE_GROUP_LABELS.index(group)
    return Demographics(AGE_GROUPS[g][1], g, gender, race)


def test_condition_score_product():
    cond = _cond({"a": 0.5})
    cond = ConditionDef("c", "c", {**cond.age_odds, "15-29": 0.2}, {**cond.gender_odds, "female": 0.5},
                        {**cond.race_odds, "black": 0.3}, cond.symptoms)
    assert condition_score(cond, _demo()) == pytest.approx(0.03, abs=1e-15)


def test_condition_score_zero_factor():
    cond = _cond({"a": 0.5})
    cond = ConditionDef("c", "c", cond.age_odds, {"male": 1.0, "female": 0.0}, cond.race_odds, cond.symptoms)
    assert condition_score(cond, _demo()) == 0.0


def test_condition_score_demo_toy():
    # influenza: age 15-29 -> 0.4 ... pick male (0.1) and white (0.3)? use hand numbers instead
    kb = load_bundled("demo_toy")
    flu = kb.condition("influenza")
    demo = _demo("<1", "female", "other")
    expected = flu.age_odds["<1"] * flu.gender_odds["female"] * flu.race_odds["other"]
    assert condition_score(flu, demo) == pytest.approx(expected)
    assert (flu.age_odds["<1"], flu.gender_odds["female"]) == (0.1, 1.0)


def test_condition_score_hand_multiplied():
    doc = flat_condition("x", [("a", 0.5)])
    doc["age_odds"]["15-29"], doc["gender_odds"]["female"], doc["race_odds"]["black"] = 0.1, 1.0, 0.5
    kb = from_dict({"conditions": [doc], "symptoms": [{"symptom_id": "a"}]})
    assert condition_score(kb.conditions[0], _demo()) == pytest.approx(0.05, abs=1e-15)


def test_condition_score_missing_odds():
    cond = _cond({"a": 0.5})
    cond = ConditionDef("c", "c", {"<1": 1.0}, cond.gender_odds, cond.race_odds, cond.symptoms)
    with pytest.raises(ConfigurationError, match="age"):
        condition_score(cond, _demo())


def test_sample_condition_three_to_one():
    doc1 = flat_condition("first", [("a", 0.5)], age=0.3, gender=0.1, race=1.0)   # 0.03
    doc2 = flat_condition("second", [("a", 0.5)], age=0.1, gender=0.1, race=1.0)  # 0.01
    kb = from_dict({"conditions": [doc1, doc2], "symptoms": [{"symptom_id": "a"}]})
    demo = _demo()
    n = 100_000
    hits = sum(sample_condition(kb, demo, record_rng(7, i)) == "first" for i in range(n))
    assert abs(hits / n - 0.75) <= 0.01


def test_sample_condition_single():
    kb = make_kb({"only": [("a", 0.5)]})
    assert {sample_condition(kb, _demo(), record_rng(1, i)) for i in range(200)} == {"only"}


def test_sample_condition_all_zero_names_cell():
    doc = flat_condition("z", [("a", 0.5)], race=0.0)
    kb = from_dict({"conditions": [doc], "symptoms": [{"symptom_id": "a"}]})
    with pytest.raises(GenerationError, match="15-29.*female.*black"):
        sample_condition(kb, _demo(), record_rng(0, 0))


def test_symptoms_degenerate():
    cond = _cond({"A": 1.0, "B": 0.0})
    assert {tuple(sample_symptoms(cond, 1, record_rng(3, i))) for i in range(500)} == {("A",)}


def test_symptoms_forced_pair():
    cond = _cond({"A": 0.5, "B": 0.5})
    assert {tuple(sample_symptoms(cond, 2, record_rng(3, i))) for i in range(500)} == {("A", "B")}


def _accepted_marginal(probs, min_symptoms, target):
    """Pr(target present | at least min_symptoms present), by enumerating every outcome."""
    ids = list(probs)
    acc = num = 0.0
    for outcome in itertools.product((0, 1), repeat=len(ids)):
        w = np.prod([probs[s] if o else 1 - probs[s] for s, o in zip(ids, outcome)])
        if sum(outcome) >= min_symptoms:
            acc += w
            if outcome[ids.index(target)]:
                num += w
    return num / acc


def test_symptoms_rejection_matches_enumeration():
    probs = {"A": 0.7, "B": 0.3}
    expected = _accepted_marginal(probs, 1, "B")
    cond = _cond(probs)
    n = 100_000
    hits = sum("B" in sample_symptoms(cond, 1, record_rng(11, i)) for i in range(n))
    assert abs(hits / n - expected) <= 0.01
    assert expected == pytest.approx(0.3 / 0.79)


def test_symptoms_precondition():
    with pytest.raises(GenerationError, match="'c'"):
        sample_symptoms(_cond({"A": 0.5, "B": 0.0}), 2, record_rng(0, 0))


def test_symptoms_fallback_forces_most_probable():
    # zero retries with tiny probabilities: the fallback must still meet the minimum
    cond = _cond({"A": 0.01, "B": 0.02, "C": 0.001})
    for i in range(200):
        got = sample_symptoms(cond, 2, record_rng(5, i), max_retries=0)
        assert len(got) >= 2 and {"A", "B"} <= set(got)


def _expr(nlice):
    return SymptomExpression("s", 0.5, None if nlice is None else NliceProfile(nlice))


def test_nlice_point_mass():
    vals = sample_nlice(_expr({"nature": {"dry": 1.0}}), record_rng(0, 0))
    assert vals["nature"] == "dry"
    assert all(vals[a] == NA for a in NLICE_ATTRIBUTES if a != "nature")


def test_nlice_empty_profile():
    assert set(sample_nlice(_expr(None), record_rng(0, 0)).values()) == {NA}
    assert set(sample_nlice(_expr({}), record_rng(0, 0)).values()) == {NA}


def test_nlice_frequency():
    e = _expr({"nature": {"dry": 0.6, "productive": 0.4}})
    n = 100_000
    dry = sum(sample_nlice(e, record_rng(2, i))["nature"] == "dry" for i in range(n))
    assert abs(dry / n - 0.6) <= 0.01


def test_demographics_uniform_race():
    cfg = GenerationConfig(0)
    n = 100_000
    counts = Counter(sample_demographics(cfg, record_rng(4, i)).race for i in range(n))
    for r in RACES:
        assert abs(counts[r] / n - 0.25) <= 0.01


def test_demographics_point_mass():
    cfg = GenerationConfig(
        0,
        demographic_marginals={
            "age_group": [0, 0, 0, 1, 0, 0, 0, 0],
            "gender": [0, 1],
            "race": [0, 1, 0, 0],
        },
    )
    cells = {
        (d.age_group_label, d.gender, d.race)
        for d in (sample_demographics(cfg, record_rng(9, i)) for i in range(500))
    }
    assert cells == {("15-29", "female", "black")}


def test_demographics_age_in_group():
    cfg = GenerationConfig(0, demographic_marginals={"age_group": [0, 1, 0, 0, 0, 0, 0, 0]})
    ages = {sample_demographics(cfg, record_rng(9, i)).age_years for i in range(500)}
    assert ages == {1, 2, 3, 4}


def test_bad_marginal():
    with pytest.raises(ConfigurationError):
        GenerationConfig(1, demographic_marginals={"race": [0.5, 0.5]}).marginal("race")


def test_generate_deterministic_files(tmp_path):
    kb = load_bundled("toy10")
    cfg = GenerationConfig(1000, seed=7)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_records_csv(generate_dataset(kb, cfg), a)
    write_records_csv(generate_dataset(kb, cfg), b)
    assert a.read_bytes() == b.read_bytes()


def test_generate_empty():
    assert generate_dataset(load_bundled("toy10"), GenerationConfig(0)) == []


def test_chunking_and_workers_do_not_matter():
    kb = load_bundled("nlice_demo")
    cfg = GenerationConfig(600, min_symptoms=2, seed=3)
    whole = generate_dataset(kb, cfg)
    parts = generate_records(kb, cfg, 0, 250) + generate_records(kb, cfg, 250, 600)
    assert whole == parts == generate_dataset(kb, cfg, workers=4)


def test_seed_changes_output():
    kb = load_bundled("toy10")
    assert generate_dataset(kb, GenerationConfig(50, seed=1)) != generate_dataset(kb, GenerationConfig(50, seed=2))


def test_records_respect_min_and_kb():
    kb = load_bundled("toy10")
    for rec in generate_dataset(kb, GenerationConfig(2000, min_symptoms=3, seed=5)):
        assert len(rec.symptoms) >= 3
        assert set(rec.symptom_ids) <= set(kb.condition(rec.condition_id).symptom_ids)
        assert list(rec.symptom_ids) == sorted(rec.symptom_ids)


def test_generation_guard_names_condition():
    kb = load_bundled("demo_toy")
    with pytest.raises(GenerationError, match="asthma"):
        generate_dataset(kb, GenerationConfig(10, min_symptoms=4))


def test_demographic_selectivity():
    # a condition with zero odds for male never appears on male records
    kb = load_bundled("demo_toy")
    doc = flat_condition("x", [("cough", 0.5)])
    doc["gender_odds"]["male"] = 0.0
    kb2 = kb.with_conditions(kb.conditions + (from_dict({"conditions": [doc], "symptoms": [{"symptom_id": "cough"}]}).conditions[0],))
    recs = generate_dataset(kb2, GenerationConfig(3000, seed=1))
    assert any(r.condition_id == "x" for r in recs)
    assert all(r.demographics.gender == "female" for r in recs if r.condition_id == "x")


def test_nlice_records_use_vocabulary():
    kb = load_bundled("nlice_demo")
    for rec in generate_dataset(kb, GenerationConfig(300, seed=2)):
        for s in rec.symptoms:
            for a in NLICE_ATTRIBUTES:
                assert s.nlice_values[a] == NA or s.nlice_values[a] in kb.vocabulary(a)


@pytest.mark.parametrize("name", ["toy10", "nlice_demo"])
def test_csv_round_trip(name, tmp_path):
    kb = load_bundled(name)
    recs = generate_dataset(kb, GenerationConfig(300, seed=4))
    path = tmp_path / "r.csv"
    write_records_csv(recs, path, kb.mode)
    assert read_records_csv(path, kb.mode) == recs
    assert path.read_text() == records_to_csv(recs, kb.mode)


def test_csv_bad_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n")
    with pytest.raises(ValueError, match="header"):
        read_records_csv(p)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 10**9))
def test_record_stream_is_pure(seed, rid):
    a = record_rng(seed, rid).random(4)
    b = record_rng(seed, rid).random(4)
    assert np.array_equal(a, b)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=6), st.integers(1, 6), st.integers(0, 1000))
def test_min_symptoms_always_met(probs, m, seed):
    m = min(m, len(probs))
    cond = _cond({f"s{i}": p for i, p in enumerate(probs)})
    for i in range(20):
        assert len(sample_symptoms(cond, m, record_rng(seed, i), max_retries=3)) >= m
