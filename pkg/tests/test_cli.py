import json

import pytest

from icurisk.cli import main
from icurisk.config import load_config
from icurisk.errors import ConfigError
from icurisk.manifest import RunManifest


def tiny_args(out, extra=()):
    return [
        "--out", str(out),
        "--set", "generate.n_stays=160",
        "--set", "windows.horizons=360 1440",
        "--set", "model.rounds=12",
        "--set", "model.max_depth=2",
        "--set", "evaluate.bootstrap_iterations=8",
        "--set", "explain.perturb_repeats=1",
        *extra,
    ]


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    assert main(tiny_args(out) + ["all"]) == 0
    return out


def test_all_stage_outputs_exist(tiny_run):
    expected = [
        "cohort/stays.csv", "cohort/measurements.csv", "cohort/variables.csv",
        "features/h0360.csv", "features/h1440.csv", "features/split.json",
        "features/exclusions.csv",
        "models/h0360.gbdt.json", "models/h0360.imputer.txt",
        "models/h0360.logistic.json", "models/h0360.standardizer.txt",
        "reports/h0360.metrics.json", "reports/h0360.scores.csv",
        "reports/horizon_table.csv", "reports/horizon_metrics.svg",
        "reports/consistency.csv",
        "explain/rankings.csv", "explain/attributions.csv",
        "explain/perturbation.json", "explain/h0360.ranking.svg",
        "curves/h0360.decision.csv", "curves/h0360.decision.svg",
        "curves/h0360.impact.csv", "curves/h0360.impact.svg",
        "report/summary.md", "manifest.json",
    ]
    for rel in expected:
        assert (tiny_run / rel).exists(), rel


def test_manifest_records_all_stages(tiny_run):
    manifest = RunManifest(tiny_run, "x")
    stages = set(manifest.data["stages"])
    assert {"generate", "prepare", "train", "evaluate", "explain", "curves", "report"} <= stages
    assert manifest.data["partition_hash"]


def test_metrics_json_shape(tiny_run):
    doc = json.loads((tiny_run / "reports" / "h0360.metrics.json").read_text())
    assert doc["horizon"] == 360
    assert 0.0 <= doc["metrics"]["auroc"] <= 1.0
    assert "auroc" in doc["bootstrap"]
    assert doc["bootstrap"]["auroc"]["lower"] <= doc["bootstrap"]["auroc"]["upper"]
    assert "sex" in doc["subpopulations"] and "ethnicity" in doc["subpopulations"]


def test_rerunning_stage_reproduces_bytes(tiny_run):
    target = tiny_run / "reports" / "h0360.scores.csv"
    before = target.read_bytes()
    table_before = (tiny_run / "reports" / "horizon_table.csv").read_bytes()
    assert main(tiny_args(tiny_run) + ["evaluate"]) == 0
    assert target.read_bytes() == before
    assert (tiny_run / "reports" / "horizon_table.csv").read_bytes() == table_before


def test_partition_tamper_detected(tiny_run, tmp_path):
    split = tiny_run / "features" / "split.json"
    original = split.read_text()
    doc = json.loads(original)
    doc["train"], doc["test"] = doc["train"][1:] + [doc["test"][0]], doc["test"][1:] + [doc["train"][0]]
    split.write_text(json.dumps(doc))
    try:
        assert main(tiny_args(tiny_run) + ["evaluate"]) == 3
    finally:
        split.write_text(original)
    assert main(tiny_args(tiny_run) + ["evaluate"]) == 0


def test_unknown_config_key_exits_2(tmp_path):
    assert main(["--out", str(tmp_path), "--set", "model.bogus=1", "generate"]) == 2
    assert main(["--out", str(tmp_path), "--set", "nonsense", "generate"]) == 2


def test_missing_config_file_exits_2(tmp_path):
    assert main(["--config", str(tmp_path / "nope.ini"), "generate"]) == 2


def test_invalid_fraction_exits_2(tmp_path):
    assert main(["--out", str(tmp_path), "--set", "split.test_fraction=1.0", "generate"]) == 2


def test_missing_inputs_exit_2(tmp_path):
    # prepare without generate: stays file absent
    assert main(["--out", str(tmp_path), "prepare"]) == 2


def test_impossible_inclusion_exits_5(tmp_path):
    out = tmp_path / "r"
    assert main(tiny_args(out) + ["generate"]) == 0
    code = main(tiny_args(out) + ["--set", "windows.horizons=500000", "prepare"])
    assert code == 5


def test_init_writes_loadable_config(tmp_path):
    path = tmp_path / "demo.ini"
    assert main(["init", str(path)]) == 0
    cfg = load_config(str(path))
    assert cfg.n_stays == 5000
    assert cfg.horizons == (360, 720, 1080, 1440)


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[generate]\nn_stays = 77\nseed = 3\n[windows]\nhorizons = 360 720\n")
    cfg = load_config(str(path), ["generate.n_stays=88"])
    assert cfg.n_stays == 88  # command line wins
    assert cfg.generate_seed == 3
    assert cfg.horizons == (360, 720)
    with pytest.raises(ConfigError):
        load_config(str(path), ["windows.horizons=0"])


def test_unknown_section_rejected(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[nope]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_env_var_sets_default_out_root(monkeypatch):
    monkeypatch.setenv("ICURISK_OUT", "/somewhere/else")
    cfg = load_config(None)
    assert cfg.out_root == "/somewhere/else"


def test_exclusions_file_conserves_counts(tiny_run):
    rows = (tiny_run / "features" / "exclusions.csv").read_text().strip().splitlines()[1:]
    counts = {name: int(value) for name, value in (r.split(",") for r in rows)}
    excluded = sum(v for k, v in counts.items() if k not in ("input", "retained"))
    assert counts["input"] == counts["retained"] + excluded


def test_tune_stage_feeds_train(tiny_run):
    grid = ["--set", "grid.max_depth=1 2", "--set", "grid.rounds=8", "--set", "split.folds=3"]
    assert main(tiny_args(tiny_run) + grid + ["tune"]) == 0
    doc = json.loads((tiny_run / "tuning" / "h0360.json").read_text())
    assert len(doc["table"]) == 2
    assert all(len(e["fold_aurocs"]) == 3 for e in doc["table"])
    assert doc["best"]["max_depth"] in (1, 2)
    # train now picks the tuned parameters up from the file
    assert main(tiny_args(tiny_run) + ["train"]) == 0
    model = json.loads((tiny_run / "models" / "h0360.gbdt.json").read_text())
    assert model["params"]["max_depth"] == doc["best"]["max_depth"]
    assert model["params"]["rounds"] == doc["best"]["rounds"]
    # restore untuned artifacts for the remaining tests in this module
    for path in (tiny_run / "tuning").glob("*.json"):
        path.unlink()
    assert main(tiny_args(tiny_run) + ["train"]) == 0
    assert main(tiny_args(tiny_run) + ["evaluate"]) == 0


def test_scores_align_with_split(tiny_run):
    split = json.loads((tiny_run / "features" / "split.json").read_text())
    lines = (tiny_run / "reports" / "h0360.scores.csv").read_text().strip().splitlines()[1:]
    stay_ids = [line.split(",")[0] for line in lines]
    expected = [split["universe"][i] for i in split["test"]]
    assert stay_ids == expected
