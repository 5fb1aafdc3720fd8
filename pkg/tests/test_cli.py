import json

import numpy as np
import pytest

from ddxsynth.cli import main
from ddxsynth.encoding import build_schema, encode, load_encoded, save_encoded, stratified_split
from ddxsynth.evaluation import top_k_accuracy
from ddxsynth.generator import GenerationConfig, generate_dataset, write_records_csv
from ddxsynth.knowledge_base import KnowledgeBaseParseError, dumps, load_bundled, parse_knowledge_base, to_dict
from ddxsynth.models import HybridNaiveBayes, load_model, save_model
from ddxsynth.scenarios import InjectionSpec, PerturbationSpec, inject, perturb


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_kb_validate_ok_and_failing(tmp_path, capsys):
    code, out, _ = run(capsys, "kb", "validate", "bundled:toy10")
    assert code == 0 and out == ""
    doc = to_dict(load_bundled("demo_toy"))
    doc["conditions"][0]["symptoms"][0]["expression_prob"] = 1.3
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    code, out, _ = run(capsys, "kb", "validate", tmp_path / "bad.json")
    assert code == 3
    assert json.loads(out.splitlines()[0])["severity"] == "error"


def test_kb_parse_error_exit_3(tmp_path, capsys):
    (tmp_path / "e.json").write_text("")
    code, _, err = run(capsys, "kb", "stats", tmp_path / "e.json")
    assert code == 3 and "no conditions" in err


def test_kb_stats(capsys):
    code, out, _ = run(capsys, "kb", "stats", "bundled:nlice_demo")
    stats = json.loads(out)
    assert code == 0 and (stats["n_conditions"], stats["n_symptoms"]) == (55, 137)


def test_import_symcat(tmp_path, capsys):
    from ddxsynth.knowledge_base import export_symcat_csv

    kb = load_bundled("toy10")
    export_symcat_csv(kb, tmp_path / "c.csv", tmp_path / "s.csv")
    code, _, _ = run(capsys, "kb", "import-symcat", "--conditions", tmp_path / "c.csv",
                     "--symptoms", tmp_path / "s.csv", "--out", tmp_path / "kb.json")
    assert code == 0 and parse_knowledge_base(tmp_path / "kb.json") == kb


def test_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["transform", "inject", "bundled:toy10", "--mode", "median"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_generate_matches_library(tmp_path, capsys):
    code, _, _ = run(capsys, "generate", "bundled:nlice_demo", "--num-records", 250, "--seed", 9,
                     "--min-symptoms", 2, "--threads", 3, "--out", tmp_path / "cli.csv")
    assert code == 0
    kb = load_bundled("nlice_demo")
    write_records_csv(generate_dataset(kb, GenerationConfig(250, 2, 9)), tmp_path / "lib.csv", kb.mode)
    assert (tmp_path / "cli.csv").read_bytes() == (tmp_path / "lib.csv").read_bytes()


def test_generate_config_file(tmp_path, capsys):
    (tmp_path / "g.json").write_text(json.dumps({"num_records": 40, "seed": 3}))
    run(capsys, "generate", "bundled:toy10", "--config", tmp_path / "g.json", "--out", tmp_path / "a.csv")
    run(capsys, "generate", "bundled:toy10", "--num-records", 40, "--seed", 3, "--out", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_generate_guard_exit_4(tmp_path, capsys):
    code, _, err = run(capsys, "generate", "bundled:demo_toy", "--num-records", 5, "--min-symptoms", 4,
                       "--out", tmp_path / "x.csv")
    assert code == 4 and "asthma" in err


def test_perturb_twice_identical(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(capsys, "transform", "perturb", "bundled:toy10", "--delta", 0.2, "--seed", 1,
                   "--out", tmp_path / f"{name}.json")[0] == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    lib = perturb(load_bundled("toy10"), PerturbationSpec(0.2, 1))
    assert parse_knowledge_base(tmp_path / "a.json") == lib


def test_inject_matches_library(tmp_path, capsys):
    assert run(capsys, "transform", "inject", "bundled:inject4", "--mode", "mean", "--out", tmp_path / "i.json")[0] == 0
    assert dumps(parse_knowledge_base(tmp_path / "i.json")) == dumps(inject(load_bundled("inject4"), InjectionSpec("mean")))


@pytest.fixture
def workflow(tmp_path, capsys):
    """generate -> encode -> split -> train nb, all through the CLI."""
    run(capsys, "generate", "bundled:toy10", "--num-records", 1500, "--seed", 2, "--out", tmp_path / "d.csv")
    run(capsys, "encode", "bundled:toy10", tmp_path / "d.csv", "--out", tmp_path / "e.npz")
    run(capsys, "split", tmp_path / "e.npz", "--seed", 4, "--test-fraction", 0.25, "--out", tmp_path / "s.json")
    run(capsys, "train", "nb", tmp_path / "e.npz", "--split", tmp_path / "s.json", "--out", tmp_path / "nb.json")
    return tmp_path


def test_workflow_matches_library(workflow, tmp_path):
    kb = load_bundled("toy10")
    ds = encode(generate_dataset(kb, GenerationConfig(1500, seed=2)), build_schema(kb))
    save_encoded(ds, tmp_path / "lib.npz")
    assert (workflow / "e.npz").read_bytes() == (tmp_path / "lib.npz").read_bytes()
    split = stratified_split(ds, 0.25, 4)
    assert json.loads((workflow / "s.json").read_text())["test"] == split.test.tolist()
    model = HybridNaiveBayes().fit(ds.subset(split.train))
    save_model(model, tmp_path / "lib_nb.json")
    assert (workflow / "nb.json").read_bytes() == (tmp_path / "lib_nb.json").read_bytes()


def test_evaluate_top_k(workflow, capsys):
    code, out, _ = run(capsys, "evaluate", workflow / "nb.json", workflow / "e.npz", "--split", workflow / "s.json",
                       "--top-k", 5, "--out", workflow / "ev.json")
    assert code == 0
    printed = json.loads(out)
    ds = load_encoded(workflow / "e.npz")
    test = ds.subset(json.loads((workflow / "s.json").read_text())["test"])
    want = top_k_accuracy(load_model(workflow / "nb.json").predict_proba(test), test.labels, 5)
    assert printed["top5"] == want
    assert json.loads((workflow / "ev.json").read_text())["top5"] == want


def test_predict_and_report(workflow, capsys):
    code, out, _ = run(capsys, "predict", workflow / "nb.json", workflow / "e.npz", "--split", workflow / "s.json",
                       "--top-k", 3, "--out", workflow / "p.npy")
    assert code == 0
    lines = [json.loads(l) for l in out.splitlines()]
    post = np.load(workflow / "p.npy")
    assert len(lines) == len(post) and len(lines[0]["top_k"]) == 3
    run(capsys, "evaluate", workflow / "nb.json", workflow / "e.npz", "--out", workflow / "ev.json")
    code, out, _ = run(capsys, "report", workflow / "ev.json", "--out", workflow / "fig")
    assert code == 0
    assert (workflow / "fig" / "posterior_cases.csv").exists()
    assert (workflow / "fig" / "confidence_thresholds.csv").exists()


def test_train_rf(workflow, capsys):
    code, _, _ = run(capsys, "train", "rf", workflow / "e.npz", "--n-trees", 5, "--seed", 3, "--out", workflow / "rf.json")
    assert code == 0 and load_model(workflow / "rf.json").n_trees == 5


def test_run_subcommand(tmp_path, capsys):
    cfg = {"kb": "bundled:demo_toy", "num_records": 300, "seed": 1}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    code, out, _ = run(capsys, "run", "--config", tmp_path / "c.json", "--out", tmp_path / "o")
    assert code == 0 and json.loads(out)["status"] == "complete"
    (tmp_path / "c.json").write_text(json.dumps({**cfg, "min_symptoms": 9}))
    code, _, err = run(capsys, "run", "--config", tmp_path / "c.json", "--out", tmp_path / "o2")
    assert code == 4 and "generate" in err


def test_env_var_output(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DDXSYNTH_OUT", str(tmp_path))
    assert run(capsys, "generate", "bundled:toy10", "--num-records", 10)[0] == 0
    assert (tmp_path / "dataset.csv").exists()
