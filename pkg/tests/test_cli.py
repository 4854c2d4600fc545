from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest
import yaml

from test_pipeline import TINY
from infraclust.cli import EXIT_CONFIG, EXIT_OK, main, parse_weights
from infraclust.pipeline import ConfigError


@pytest.fixture()
def cfg_file(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return path


def test_parse_weights():
    assert parse_weights("water=0.7,power=0.3") == {"water": 0.7, "power": 0.3}
    assert parse_weights("0.25,0.75") == {"power": 0.25, "water": 0.75}
    with pytest.raises(ConfigError):
        parse_weights("1,2,3")
    with pytest.raises(ConfigError):
        parse_weights("water=abc")


def test_config_errors_exit_2(tmp_path, cfg_file):
    assert main(["run-all", "--config", str(tmp_path / "nope.yaml"), "--out-dir", str(tmp_path / "o")]) \
        == EXIT_CONFIG
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({**TINY, "strategies": []}))
    assert main(["run-all", "--config", str(bad), "--out-dir", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["simulate", "--net", str(tmp_path / "none.json"), "--scenarios", str(cfg_file),
                 "--out-dir", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["run-all", "--manifest", str(tmp_path / "m.json"), "--out-dir", str(tmp_path / "o")]) \
        == EXIT_CONFIG


def test_unknown_verb_is_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["fly"])
    assert err.value.code == 2


def test_stepwise_verbs(tmp_path, cfg_file, capsys):
    c = ["--config", str(cfg_file), "--out-dir", str(tmp_path)]
    net = tmp_path / "net.json"
    assert main(["testbed", *c, "--out", str(net)]) == EXIT_OK
    scen = tmp_path / "scen.jsonl"
    assert main(["generate-scenarios", *c, "--net", str(net), "--out", str(scen)]) == EXIT_OK
    assert len(scen.read_text().splitlines()) == TINY["hazard"]["count"]
    sims = tmp_path / "sims.jsonl"
    assert main(["simulate", *c, "--net", str(net), "--scenarios", str(scen), "--strategy", "zone",
                 "--weights", "water=1,power=0", "--out", str(sims)]) == EXIT_OK
    recs = [json.loads(line) for line in sims.read_text().splitlines()]
    assert len(recs) == TINY["hazard"]["count"] and {r["strategy"] for r in recs} == {"zone"}
    assert sims.with_suffix(".csv").exists()
    assert main(["features", *c, "--net", str(net)]) == EXIT_OK
    feat = tmp_path / "features" / "water_link.csv"
    assert feat.exists()
    clusters = tmp_path / "cl.csv"
    assert main(["cluster", *c, "--features", str(feat), "--k", "3", "--out", str(clusters)]) == EXIT_OK
    with clusters.open() as fh:
        assert len({r["cluster_id"] for r in csv.DictReader(fh)}) == 3
    assert main(["cluster", *c, "--features", str(feat), "--k", "999"]) == EXIT_CONFIG
    assert main(["cluster", *c, "--features", str(feat), "--k", "auto", "--out", str(clusters)]) == EXIT_OK


def test_run_all_twice_identical(tmp_path, cfg_file, capsys):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run-all", "--config", str(cfg_file), "--out-dir", str(out)]) == EXIT_OK
        outs.append(out)
    for rel in ("report.csv", "search_trace.csv", "simulations.csv", "scatter.csv", "stats.csv"):
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel
    printed = capsys.readouterr().out
    assert "method,total_clusters" in printed
    # the manifest replays the same run
    replay = tmp_path / "c"
    assert main(["run-all", "--manifest", str(outs[0] / "manifest.json"), "--out-dir", str(replay)]) == EXIT_OK
    assert (replay / "report.csv").read_bytes() == (outs[0] / "report.csv").read_bytes()
    # train and predict on a dataset the pipeline wrote
    data = outs[0] / "datasets" / "kneedle.csv"
    model = tmp_path / "m.json"
    assert main(["train", "--config", str(cfg_file), "--data", str(data), "--model-out", str(model)]) == EXIT_OK
    fit = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert {"train_r2", "test_r2", "params"} <= set(fit)
    preds = tmp_path / "p.csv"
    assert main(["predict", "--model", str(model), "--data", str(data), "--out", str(preds)]) == EXIT_OK
    with preds.open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == TINY["hazard"]["count"] * 3
    wrong = outs[0] / "datasets" / "single.csv"
    assert main(["predict", "--model", str(model), "--data", str(wrong)]) == EXIT_CONFIG


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "infraclust.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for verb in ("testbed", "generate-scenarios", "simulate", "features", "cluster", "train", "predict",
                 "search-k", "report", "run-all"):
        assert verb in res.stdout
