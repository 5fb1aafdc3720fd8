import json

import pytest

from ddxsynth.pipeline import RunConfig, derive_seed, load_kb, run_pipeline, sha256_file
from ddxsynth.knowledge_base import load_bundled, save_knowledge_base, to_dict

ARTIFACTS = {"dataset", "encoded", "schema", "model", "evaluation"}


def _config(tmp_path, name="run", **kw):
    base = dict(kb="bundled:demo_toy", num_records=600, seed=11, out_dir=str(tmp_path / name))
    base.update(kw)
    return RunConfig(**base)


def test_smoke_five_artifacts(tmp_path):
    result = run_pipeline(_config(tmp_path))
    assert result.ok and result.exit_code == 0
    man = json.loads((result.out_dir / "manifest.json").read_text())
    assert man["status"] == "complete"
    assert set(man["artifacts"]) == ARTIFACTS
    for art in man["artifacts"].values():
        assert sha256_file(result.out_dir / art["path"]) == art["sha256"]
    assert man["config_hash"] == _config(tmp_path).config_hash
    assert set(man["seeds"]) == {"generate", "split", "train", "transform", "evaluate"}


@pytest.mark.parametrize("model", ["nb", "rf"])
def test_same_config_same_checksums(tmp_path, model):
    params = {"n_trees": 8} if model == "rf" else {}
    a = run_pipeline(_config(tmp_path, "a", model=model, model_params=params))
    b = run_pipeline(_config(tmp_path, "b", model=model, model_params=params, threads=3))
    assert a.manifest["artifacts"] == b.manifest["artifacts"]


def test_seed_changes_checksums(tmp_path):
    a = run_pipeline(_config(tmp_path, "a"))
    b = run_pipeline(_config(tmp_path, "b", seed=12))
    assert a.manifest["artifacts"]["dataset"] != b.manifest["artifacts"]["dataset"]


def test_min_symptoms_guard_names_condition(tmp_path):
    result = run_pipeline(_config(tmp_path, min_symptoms=4))
    assert not result.ok and result.exit_code == 4
    man = json.loads((result.out_dir / "manifest.json").read_text())
    assert man["failed_stage"] == "generate"
    assert "asthma" in man["error"]
    assert man["partial"] == []


def test_scenario_guard_flags_partial_artifacts(tmp_path):
    result = run_pipeline(_config(tmp_path, scenario={"min_symptoms": 4}))
    assert result.exit_code == 4
    assert result.manifest["failed_stage"] == "transform"
    assert set(result.manifest["partial"]) == {"dataset", "encoded", "schema", "model"}


def test_validation_failure_exit_3(tmp_path):
    doc = to_dict(load_bundled("demo_toy"))
    doc["conditions"][0]["symptoms"][0]["expression_prob"] = 1.5
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    result = run_pipeline(_config(tmp_path, kb=str(path)))
    assert result.exit_code == 3 and result.manifest["failed_stage"] == "validate"


@pytest.mark.parametrize(
    "scenario",
    [{"perturb": {"delta": 0.3}}, {"inject": {"mode": "max"}}, {"min_symptoms": 2}],
)
def test_scenarios_run(tmp_path, scenario):
    result = run_pipeline(_config(tmp_path, kb="bundled:toy10", scenario=scenario, eval_records=300))
    assert result.ok
    assert result.report.n_test == 300


def test_bad_scenario(tmp_path):
    result = run_pipeline(_config(tmp_path, scenario={"shuffle": 1}))
    assert result.exit_code == 4 and "shuffle" in result.manifest["error"]


def test_env_default_out(tmp_path, monkeypatch):
    monkeypatch.setenv("DDXSYNTH_OUT", str(tmp_path / "envout"))
    result = run_pipeline(RunConfig(kb="bundled:demo_toy", num_records=100))
    assert result.out_dir == tmp_path / "envout"
    assert (tmp_path / "envout" / "manifest.json").exists()


def test_config_file_round_trip(tmp_path):
    cfg = _config(tmp_path, model="rf", model_params={"n_trees": 3}, scenario={"inject": {"mode": "min"}})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.load(path) == cfg
    with pytest.raises(ValueError, match="unknown config keys"):
        RunConfig.from_dict({"kb": "x", "colour": 1})


def test_config_hash_ignores_location():
    a = RunConfig(kb="k", out_dir="/a", threads=1)
    b = RunConfig(kb="k", out_dir="/b", threads=8)
    assert a.config_hash == b.config_hash
    assert a.config_hash != RunConfig(kb="k", seed=1).config_hash


def test_stage_seeds_distinct_and_stable():
    seeds = RunConfig(kb="k", seed=5).stage_seeds()
    assert len(set(seeds.values())) == len(seeds)
    assert seeds["generate"] == derive_seed(5, "generate")
    assert derive_seed(5, "generate") != derive_seed(6, "generate")


def test_load_kb_paths(tmp_path):
    kb = load_bundled("toy10")
    save_knowledge_base(kb, tmp_path / "k.json")
    assert load_kb(str(tmp_path / "k.json")) == kb == load_kb("bundled:toy10")
    with pytest.raises(ValueError):
        load_kb("bundled:toy10", "nlice")
