from __future__ import annotations

import csv
import json
from dataclasses import replace

import pytest

from infraclust.pipeline import (ConfigError, Pipeline, PipelineConfig, StageError, Workspace, config_from_manifest,
                                 file_checksum, load_config, load_records, pearson, simulation_plan)
from infraclust.search import COMPARISON_COLUMNS, read_comparison_csv

TINY = {
    "testbed": {"nx": 4, "ny": 4},
    "hazard": {"count": 24, "max_failures": 10},
    "grid": [{"n_trees": 10, "max_depth": 4}, {"n_trees": 10, "max_depth": 8}],
    "search": {"k_max": 6, "max_up": 2, "restarts": 2},
}


def tiny_config(**over) -> PipelineConfig:
    return PipelineConfig.from_dict({**TINY, **over})


def test_config_defaults_and_validation():
    cfg = PipelineConfig()
    assert cfg.hazard.count == 325
    assert cfg.weights == {"water": 0.5, "power": 0.5}
    assert cfg.train_fraction == 0.75 and cfg.folds == 3
    with pytest.raises(ConfigError, match="strategy"):
        PipelineConfig.from_dict({"strategies": []})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"strategies": ["random"]})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"weights": {"water": -1.0, "power": 1.0}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"weights": {"water": 0.0}})
    with pytest.raises(ConfigError, match="unknown config keys"):
        PipelineConfig.from_dict({"colour": "blue"})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"hazard": {"p0": 2.0}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"search": {"kinds": ["edge"]}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"strategy_sampling": 7})


def test_config_round_trip_and_seed():
    cfg = tiny_config()
    again = PipelineConfig.from_dict(cfg.to_dict())
    assert again == cfg and again.hash() == cfg.hash()
    seeded = cfg.with_seed(4)
    assert seeded.seeds.hazard == seeded.seeds.split == seeded.seeds.train == 4
    assert seeded.seeds.testbed == cfg.seeds.testbed
    assert seeded.hash() != cfg.hash()


def test_load_config(tmp_path):
    assert load_config(None) == PipelineConfig()
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    listy = tmp_path / "list.yaml"
    listy.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(listy)
    ref = tmp_path / "ref.yaml"
    ref.write_text("network: net.json\n")
    with pytest.raises(ConfigError, match="not found"):
        load_config(ref)
    (tmp_path / "net.json").write_text("{}")
    assert load_config(ref).network == str(tmp_path / "net.json")
    js = tmp_path / "c.json"
    js.write_text(json.dumps(TINY))
    assert load_config(js) == tiny_config()


def test_simulation_plan():
    from infraclust.hazard import Scenario
    scen = [Scenario.from_components(f"s{i}", []) for i in range(5)]
    assert len(simulation_plan(scen, tiny_config())) == 15
    sampled = simulation_plan(scen, tiny_config(strategy_sampling=1))
    assert len(sampled) == 5
    assert simulation_plan(scen, tiny_config(strategy_sampling=1)) == sampled


def test_pearson():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    pipe = Pipeline(tiny_config(), Workspace(out))
    manifest = pipe.run_all()
    return pipe, out, manifest


def test_run_all_outputs(tiny_run):
    pipe, out, manifest = tiny_run
    for name in ("network.json", "scenarios.jsonl", "simulations.jsonl", "simulations.csv", "report.csv",
                 "search_trace.csv", "inertia.csv", "scatter.csv", "stats.csv", "pcs_series.csv",
                 "clusters_elbow.csv", "clusters_kneedle.csv", "logs/events.jsonl",
                 "figures/eoh_vs_failures.png", "figures/inertia_curves.png", "figures/search_trace.png",
                 "figures/pcs_series.png"):
        assert (out / name).exists(), name
    records = load_records(out / "simulations.jsonl")
    assert len(records) == 24 * 3
    rows = read_comparison_csv(out / "report.csv")
    assert [r["method"] for r in rows] == ["single_cluster", "elbow", "kneedle"]
    assert tuple(rows[0]) == COMPARISON_COLUMNS
    assert rows[0]["test_r2_change_pct"] == "--"
    data = json.loads(manifest.read_text())
    assert data["config_hash"] == pipe.cfg.hash()
    for rel, digest in data["artifacts"].items():
        assert file_checksum(out / rel) == digest
    assert "report.csv" in data["artifacts"] and "figures/pcs_series.png" in data["artifacts"]
    assert config_from_manifest(manifest) == pipe.cfg


def test_scatter_matches_records(tiny_run):
    _, out, _ = tiny_run
    records = {(r.scenario_id, r.strategy): r for r in load_records(out / "simulations.jsonl")}
    with open(out / "scatter.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(records)
    for row in rows:
        rec = records[(row["scenario_id"], row["strategy"])]
        assert int(row["failure_count"]) == rec.failure_count
        assert float(row["weighted_eoh"]) == pytest.approx(rec.weighted_gamma, abs=1e-6)


def test_stage_cache_reused(tiny_run):
    pipe, out, _ = tiny_run
    before = (out / "report.csv").stat().st_mtime_ns
    Pipeline(pipe.cfg, Workspace(out)).run_all()
    assert (out / "report.csv").stat().st_mtime_ns == before
    forced = Pipeline(pipe.cfg, Workspace(out, force=True))
    forced.run_all()
    assert (out / "report.csv").stat().st_mtime_ns != before


def test_tampered_manifest(tiny_run, tmp_path):
    _, _, manifest = tiny_run
    data = json.loads(manifest.read_text())
    data["config"]["folds"] = 5
    bad = tmp_path / "manifest.json"
    bad.write_text(json.dumps(data))
    with pytest.raises(ConfigError, match="hash"):
        config_from_manifest(bad)


def test_stage_errors_are_tagged(tmp_path):
    ws = Workspace(tmp_path)

    def boom():
        raise ZeroDivisionError("nope")

    with pytest.raises(StageError) as err:
        ws.run_stage("simulate", "k", boom)
    assert err.value.stage == "simulate"
    assert "simulate" in str(err.value)


def test_run_dataset_records(tmp_path):
    cfg = replace(tiny_config(), strategies=("zone",))
    records = Pipeline(cfg, Workspace(tmp_path)).run_dataset()
    assert len(records) == 24 and all(r.strategy == "zone" for r in records)
    assert all(r.weighted_gamma >= 0 for r in records)


def test_workers_do_not_change_records(small_testbed):
    from infraclust.hazard import HazardConfig, generate_scenarios
    from infraclust.pipeline import simulate_all
    scen = generate_scenarios(small_testbed, HazardConfig(count=6, max_failures=8), seed=3)
    one, _ = simulate_all(small_testbed, scen, tiny_config(), workers=1)
    two, _ = simulate_all(small_testbed, scen, tiny_config(), workers=2)
    assert [r.to_dict() for r in one] == [r.to_dict() for r in two]
