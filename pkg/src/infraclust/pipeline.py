"""End-to-end experiment: testbed, scenarios, simulations, clustering search and report.

Every stage writes plain files under one output directory and records a
key (hash of its settings and input checksums) next to them, so a rerun
skips stages whose inputs did not change.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import yaml

from . import __version__
from .clustering import build_clustering, write_assignments_csv
from .features import (DEFAULT_FEATURES, ComponentFeatures, assemble_feature_matrix, compute_component_features,
                       read_features_csv, write_features_csv)
from .hazard import HazardConfig, Scenario, generate_scenarios, load_scenarios, save_scenarios
from .network import InfraNetwork, TestbedConfig, build_synthetic_testbed, load_network, save_network, validate_network
from .regression import ForestParams, default_grid, save_model, write_dataset_csv
from .search import (ComparisonRow, ModelSpec, Outcome, clustered_dataset, elbow_baseline, iterative_search,
                     single_cluster_dataset, write_comparison_csv, write_trace_csv)
from .simulation import STRATEGIES, CrewConfig, SimulationResult, Simulator, baseline_flows

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or inconsistent pipeline configuration."""


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeedSettings:
    testbed: int = 7
    hazard: int = 0
    cluster: int = 0
    split: int = 0
    train: int = 0
    sample: int = 0  # scenario picked for the PCS time-series figure


@dataclass(frozen=True)
class SearchSettings:
    kinds: tuple[str, ...] = ("link",)
    features: tuple[str, ...] = DEFAULT_FEATURES
    k_max: int = 15
    restarts: int = 10
    max_up: int | None = 10
    flat_tol: float = 0.005


@dataclass(frozen=True)
class PipelineConfig:
    network: str | None = None  # network JSON; a synthetic testbed is built when unset
    testbed: TestbedConfig = field(default_factory=TestbedConfig)
    hazard: HazardConfig = field(default_factory=HazardConfig)
    strategies: tuple[str, ...] = STRATEGIES
    # "all" simulates every scenario under every strategy; an integer n samples n strategies per scenario
    strategy_sampling: str | int = "all"
    weights: dict = field(default_factory=lambda: {"water": 0.5, "power": 0.5})
    crew: CrewConfig = field(default_factory=CrewConfig)
    tmax: float | None = None
    train_fraction: float = 0.75
    folds: int = 3
    grid: tuple[ForestParams, ...] = field(default_factory=lambda: tuple(default_grid()))
    search: SearchSettings = field(default_factory=SearchSettings)
    seeds: SeedSettings = field(default_factory=SeedSettings)
    figures: bool = True

    def __post_init__(self):
        if not self.strategies:
            raise ConfigError("at least one recovery strategy is required")
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategies {bad}; choose from {list(STRATEGIES)}")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigError("strategies repeat")
        if any(w < 0 for w in self.weights.values()) or not any(w > 0 for w in self.weights.values()):
            raise ConfigError(f"weights must be >= 0 with at least one positive, got {self.weights}")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if not self.grid:
            raise ConfigError("empty hyper-parameter grid")
        if self.strategy_sampling != "all":
            if not isinstance(self.strategy_sampling, int) or not 1 <= self.strategy_sampling <= len(self.strategies):
                raise ConfigError("strategy_sampling must be 'all' or an integer in [1, len(strategies)]")
        if not set(self.search.kinds) <= {"node", "link"} or not self.search.kinds:
            raise ConfigError(f"search.kinds must be a non-empty subset of node/link, got {self.search.kinds}")
        if self.search.k_max < 3:
            raise ConfigError("search.k_max must be at least 3")

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "PipelineConfig":
        d = dict(d or {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            kw: dict = {}
            if "network" in d:
                kw["network"] = d["network"]
            if "testbed" in d:
                kw["testbed"] = TestbedConfig.from_dict(d["testbed"])
            if "hazard" in d:
                kw["hazard"] = HazardConfig.from_dict(d["hazard"])
            if "strategies" in d:
                kw["strategies"] = tuple(d["strategies"])
            for key in ("strategy_sampling", "tmax", "train_fraction", "folds", "figures"):
                if key in d:
                    kw[key] = d[key]
            if "weights" in d:
                kw["weights"] = {k: float(v) for k, v in d["weights"].items()}
            if "crew" in d:
                kw["crew"] = CrewConfig.from_dict(d["crew"])
            if "grid" in d:
                kw["grid"] = tuple(ForestParams(**g) for g in d["grid"])
            if "search" in d:
                s = dict(d["search"])
                for key in ("kinds", "features"):
                    if key in s:
                        s[key] = tuple(s[key])
                kw["search"] = SearchSettings(**s)
            if "seeds" in d:
                kw["seeds"] = SeedSettings(**d["seeds"])
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "network": self.network,
            "testbed": _plain(self.testbed),
            "hazard": _plain(self.hazard),
            "strategies": list(self.strategies),
            "strategy_sampling": self.strategy_sampling,
            "weights": dict(sorted(self.weights.items())),
            "crew": _plain(self.crew),
            "tmax": self.tmax,
            "train_fraction": self.train_fraction,
            "folds": self.folds,
            "grid": [g.to_dict() for g in self.grid],
            "search": _plain(self.search),
            "seeds": _plain(self.seeds),
            "figures": self.figures,
        }

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Same config with every stochastic stage except the testbed seeded by ``seed``."""
        return replace(self, seeds=replace(self.seeds, hazard=seed, cluster=seed, split=seed, train=seed,
                                           sample=seed))

    def hash(self) -> str:
        return _sha(json.dumps(self.to_dict(), sort_keys=True))


def _plain(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _plain(getattr(obj, k)) for k in obj.__dataclass_fields__}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def load_config(path: str | Path | None) -> PipelineConfig:
    """Read a YAML or JSON config file; ``None`` gives the defaults."""
    if path is None:
        return PipelineConfig()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} not found")
    try:
        data = yaml.safe_load(p.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    cfg = PipelineConfig.from_dict(data)
    if cfg.network is not None:
        net_path = Path(cfg.network)
        if not net_path.is_absolute():
            net_path = p.parent / net_path
        if not net_path.exists():
            raise ConfigError(f"network file {net_path} not found")
        cfg = replace(cfg, network=str(net_path))
    return cfg


# ---------------------------------------------------------------------------
# stage bookkeeping
# ---------------------------------------------------------------------------

def _sha(text: str | bytes) -> str:
    if isinstance(text, str):
        text = text.encode()
    return hashlib.sha256(text).hexdigest()


def file_checksum(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class Workspace:
    """Output directory layout and stage cache."""

    def __init__(self, out_dir: str | Path, workers: int = 1, force: bool = False):
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.workers = max(1, int(workers))
        self.force = force

    def path(self, *parts: str) -> Path:
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def _key_file(self, stage: str) -> Path:
        return self.path(".cache", f"{stage}.json")

    def cached(self, stage: str, key: str) -> bool:
        kf = self._key_file(stage)
        if self.force or not kf.exists():
            return False
        rec = json.loads(kf.read_text())
        if rec.get("key") != key:
            return False
        for rel, digest in rec.get("outputs", {}).items():
            p = self.root / rel
            if not p.exists() or file_checksum(p) != digest:
                return False
        return True

    def commit(self, stage: str, key: str, outputs: Sequence[Path]) -> None:
        rec = {"key": key, "outputs": {str(Path(o).relative_to(self.root)): file_checksum(o) for o in outputs}}
        self._key_file(stage).write_text(json.dumps(rec, sort_keys=True, indent=1))

    def run_stage(self, stage: str, key: str, fn: Callable[[], Sequence[Path]]) -> None:
        if self.cached(stage, key):
            log.info("stage %s: cached", stage)
            return
        log.info("stage %s: running", stage)
        try:
            outputs = fn()
        except (ConfigError, StageError):
            raise
        except Exception as exc:
            raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
        self.commit(stage, key, outputs)


def _stage_key(name: str, settings, *inputs: Path) -> str:
    payload = {"stage": name, "version": __version__, "settings": _plain(settings),
               "inputs": [file_checksum(p) for p in inputs]}
    return _sha(json.dumps(payload, sort_keys=True))


# ---------------------------------------------------------------------------
# simulation records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimulationRecord:
    scenario_id: str
    strategy: str
    failed: tuple[str, ...]
    gamma: dict[str, float]
    weighted_gamma: float
    horizon: float

    @property
    def failure_count(self) -> int:
        return len(self.failed)

    def to_dict(self) -> dict:
        return {"scenario_id": self.scenario_id, "strategy": self.strategy, "failed": list(self.failed),
                "failure_count": self.failure_count, "gamma": dict(sorted(self.gamma.items())),
                "weighted_gamma": self.weighted_gamma, "horizon": self.horizon}

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationRecord":
        return cls(d["scenario_id"], d["strategy"], tuple(d["failed"]),
                   {k: float(v) for k, v in d["gamma"].items()}, float(d["weighted_gamma"]), float(d["horizon"]))

    @classmethod
    def from_result(cls, scenario: Scenario, res: SimulationResult) -> "SimulationRecord":
        return cls(scenario.id, res.strategy, tuple(scenario.failed_components),
                   {k: float(v) for k, v in res.gamma.items()}, float(res.weighted_gamma), float(res.tmax))


def save_records(records: Sequence[SimulationRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def load_records(path: str | Path) -> list[SimulationRecord]:
    with open(path) as fh:
        return [SimulationRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_records_csv(records: Sequence[SimulationRecord], path: str | Path) -> None:
    systems = sorted({s for r in records for s in r.gamma})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario_id", "strategy", "failure_count", *(f"eoh_{s}" for s in systems),
                    "weighted_eoh", "horizon"])
        for r in records:
            w.writerow([r.scenario_id, r.strategy, r.failure_count, *(repr(r.gamma.get(s, 0.0)) for s in systems),
                        repr(r.weighted_gamma), repr(r.horizon)])


def simulation_plan(scenarios: Sequence[Scenario], cfg: PipelineConfig) -> list[tuple[int, str]]:
    """(scenario index, strategy) pairs to simulate."""
    if cfg.strategy_sampling == "all":
        return [(i, st) for i in range(len(scenarios)) for st in cfg.strategies]
    rng = np.random.default_rng(cfg.seeds.hazard + 1)
    plan = []
    for i in range(len(scenarios)):
        picks = sorted(rng.choice(len(cfg.strategies), size=int(cfg.strategy_sampling), replace=False))
        plan.extend((i, cfg.strategies[j]) for j in picks)
    return plan


_WORKER: dict = {}


def _worker_init(net_dict: dict, crew: CrewConfig):
    from .network import network_from_dict
    net = network_from_dict(net_dict)
    _WORKER["sim"] = Simulator(net, crew)


def _worker_run(args):
    scenario_dict, strategy, weights, tmax = args
    sc = Scenario.from_dict(scenario_dict)
    res = _WORKER["sim"].run(sc, strategy, weights, tmax)
    return SimulationRecord.from_result(sc, res), res.events


def simulate_all(net: InfraNetwork, scenarios: Sequence[Scenario], cfg: PipelineConfig, workers: int = 1,
                 progress: Callable[[int, int], None] | None = None
                 ) -> tuple[list[SimulationRecord], list[dict]]:
    plan = simulation_plan(scenarios, cfg)
    jobs = [(scenarios[i].to_dict(), st, cfg.weights, cfg.tmax) for i, st in plan]
    records: list[SimulationRecord] = []
    events: list[dict] = []

    def collect(k, rec, ev):
        records.append(rec)
        events.extend({"scenario_id": rec.scenario_id, "strategy": rec.strategy, **e} for e in ev)
        if progress and ((k + 1) % 50 == 0 or k + 1 == len(jobs)):
            progress(k + 1, len(jobs))

    if workers > 1:
        from .network import network_to_dict
        with ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(network_to_dict(net), cfg.crew)) as ex:
            for k, (rec, ev) in enumerate(ex.map(_worker_run, jobs, chunksize=16)):
                collect(k, rec, ev)
    else:
        sim = Simulator(net, cfg.crew)
        for k, (sd, st, w, tmax) in enumerate(jobs):
            sc = scenarios[plan[k][0]]
            res = sim.run(sc, st, w, tmax)
            collect(k, SimulationRecord.from_result(sc, res), res.events)
    return records, events


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

@dataclass
class Pipeline:
    cfg: PipelineConfig
    ws: Workspace

    # file locations
    @property
    def network_file(self) -> Path:
        return self.ws.path("network.json")

    @property
    def scenarios_file(self) -> Path:
        return self.ws.path("scenarios.jsonl")

    @property
    def records_file(self) -> Path:
        return self.ws.path("simulations.jsonl")

    @property
    def report_file(self) -> Path:
        return self.ws.path("report.csv")

    def feature_file(self, system: str, kind: str) -> Path:
        return self.ws.path("features", f"{system}_{kind}.csv")

    # stages
    def stage_network(self) -> InfraNetwork:
        cfg = self.cfg
        if cfg.network:
            src = Path(cfg.network)
            key = _stage_key("network", {"file": True}, src)
        else:
            key = _stage_key("network", {"testbed": cfg.testbed, "seed": cfg.seeds.testbed})

        def run():
            if cfg.network:
                net = load_network(cfg.network)
            else:
                net = build_synthetic_testbed(cfg.testbed, cfg.seeds.testbed)
            problems = validate_network(net)
            if problems:
                raise StageError("network", "; ".join(problems[:5]))
            save_network(net, self.network_file)
            return [self.network_file]

        self.ws.run_stage("network", key, run)
        return load_network(self.network_file)

    def stage_scenarios(self, net: InfraNetwork) -> list[Scenario]:
        key = _stage_key("scenarios", {"hazard": self.cfg.hazard, "seed": self.cfg.seeds.hazard}, self.network_file)

        def run():
            save_scenarios(generate_scenarios(net, self.cfg.hazard, self.cfg.seeds.hazard), self.scenarios_file)
            return [self.scenarios_file]

        self.ws.run_stage("scenarios", key, run)
        return load_scenarios(self.scenarios_file)

    def stage_simulate(self, net: InfraNetwork, scenarios: Sequence[Scenario]) -> list[SimulationRecord]:
        c = self.cfg
        settings = {"strategies": c.strategies, "sampling": c.strategy_sampling, "weights": c.weights,
                    "crew": c.crew, "tmax": c.tmax, "seed": c.seeds.hazard}
        key = _stage_key("simulate", settings, self.network_file, self.scenarios_file)
        csv_file = self.ws.path("simulations.csv")
        events_file = self.ws.path("logs", "events.jsonl")

        def run():
            def progress(done, total):
                log.info("simulated %d/%d", done, total)
            records, events = simulate_all(net, scenarios, c, self.ws.workers, progress)
            save_records(records, self.records_file)
            write_records_csv(records, csv_file)
            with open(events_file, "w") as fh:
                for e in events:
                    fh.write(json.dumps(e, sort_keys=True) + "\n")
            return [self.records_file, csv_file, events_file]

        self.ws.run_stage("simulate", key, run)
        return load_records(self.records_file)

    def stage_features(self, net: InfraNetwork) -> dict[tuple[str, str], ComponentFeatures]:
        groups = [(s, k) for s in sorted(net.systems) for k in ("node", "link")]
        key = _stage_key("features", {"groups": groups}, self.network_file)

        def run():
            sim_supply = Simulator(net, self.cfg.crew).supply
            outputs = []
            for system in sorted(net.systems):
                g = net.system(system)
                feats = compute_component_features(g, baseline_flows(net, system, sim_supply))
                for kind in ("node", "link"):
                    if feats[kind].ids:
                        p = self.feature_file(system, kind)
                        write_features_csv(feats[kind], p)
                        outputs.append(p)
            return outputs

        self.ws.run_stage("features", key, run)
        out = {}
        for s, k in groups:
            p = self.feature_file(s, k)
            if p.exists():
                out[(s, k)] = read_features_csv(p)
        return out

    def model_spec(self) -> ModelSpec:
        c = self.cfg
        return ModelSpec(c.train_fraction, c.folds, c.grid, c.seeds.split, c.seeds.train)

    def stage_experiment(self, net: InfraNetwork, scenarios: Sequence[Scenario],
                         records: Sequence[SimulationRecord],
                         features: Mapping[tuple[str, str], ComponentFeatures]) -> dict:
        c = self.cfg
        feature_inputs = [self.feature_file(s, k) for s, k in sorted(features)]
        settings = {"search": c.search, "grid": c.grid, "folds": c.folds, "train_fraction": c.train_fraction,
                    "seeds": c.seeds}
        key = _stage_key("experiment", settings, self.scenarios_file, self.records_file, *feature_inputs)
        files = {
            "report": self.report_file,
            "trace": self.ws.path("search_trace.csv"),
            "inertia": self.ws.path("inertia.csv"),
            "scatter": self.ws.path("scatter.csv"),
            "stats": self.ws.path("stats.csv"),
            "elbow_clusters": self.ws.path("clusters_elbow.csv"),
            "kneedle_clusters": self.ws.path("clusters_kneedle.csv"),
            "data_single": self.ws.path("datasets", "single.csv"),
            "data_elbow": self.ws.path("datasets", "elbow.csv"),
            "data_kneedle": self.ws.path("datasets", "kneedle.csv"),
            "model_single": self.ws.path("models", "single.json"),
            "model_elbow": self.ws.path("models", "elbow.json"),
            "model_kneedle": self.ws.path("models", "kneedle.json"),
        }

        def run():
            return self._experiment(net, scenarios, records, features, files)

        self.ws.run_stage("experiment", key, run)
        return files

    def _experiment(self, net, scenarios, records, features, files) -> list[Path]:
        c = self.cfg
        scen = {s.id: s for s in scenarios}
        outcomes = [Outcome(r.scenario_id, r.strategy, r.weighted_gamma) for r in records]
        groups = [(s, k) for (s, k) in sorted(features) if k in c.search.kinds]
        if not groups:
            raise StageError("experiment", f"no component groups of kinds {c.search.kinds}")
        matrices = {g: assemble_feature_matrix(features[g], c.search.features) for g in groups}
        elbow, curves = elbow_baseline(matrices, c.search.k_max, c.seeds.cluster, c.search.restarts)
        log.info("elbow counts %s", {f"{s}:{k}": v for (s, k), v in elbow.items()})
        spec = self.model_spec()

        systems = sorted({s for s, _ in groups})
        ds_single = single_cluster_dataset(outcomes, scen, systems)
        fit_single = spec.fit(ds_single)
        elbow_clusters = build_clustering(matrices, elbow, c.seeds.cluster, c.search.restarts)
        ds_elbow = clustered_dataset(outcomes, scen, elbow_clusters)
        fit_elbow = spec.fit(ds_elbow)
        trace = iterative_search(outcomes, scen, matrices, elbow, spec, c.search.max_up, c.seeds.cluster,
                                 c.search.restarts, c.search.flat_tol)
        chosen_counts = {g: elbow[g] + trace.chosen_offset for g in elbow}
        knee_clusters = build_clustering(matrices, chosen_counts, c.seeds.cluster, c.search.restarts)
        ds_knee = clustered_dataset(outcomes, scen, knee_clusters)
        fit_knee = trace.chosen.report

        write_comparison_csv([ComparisonRow("single_cluster", len(systems), fit_single),
                              ComparisonRow("elbow", elbow_clusters.total, fit_elbow),
                              ComparisonRow("kneedle", knee_clusters.total, fit_knee)], files["report"])
        write_trace_csv(trace, files["trace"], systems)
        with open(files["inertia"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["system", "kind", "k", "inertia", "elbow"])
            for (s, k), curve in sorted(curves.items()):
                for j, val in enumerate(curve, start=1):
                    w.writerow([s, k, j, f"{val:.6f}", int(j == elbow[(s, k)])])
        with open(files["scatter"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario_id", "strategy", "failure_count", "weighted_eoh"])
            for r in records:
                w.writerow([r.scenario_id, r.strategy, r.failure_count, f"{r.weighted_gamma:.6f}"])
        rho = pearson([r.failure_count for r in records], [r.weighted_gamma for r in records])
        with open(files["stats"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            w.writerow(["records", len(records)])
            w.writerow(["scenarios", len(scenarios)])
            w.writerow(["pearson_weighted_eoh_vs_failures", f"{rho:.6f}"])
            w.writerow(["elbow_total_clusters", elbow_clusters.total])
            w.writerow(["kneedle_total_clusters", knee_clusters.total])
            w.writerow(["kneedle_offset", trace.chosen_offset])
            w.writerow(["kneedle_fallback", int(trace.used_fallback)])
        write_assignments_csv(elbow_clusters, files["elbow_clusters"])
        write_assignments_csv(knee_clusters, files["kneedle_clusters"])
        for name, ds, fit in (("single", ds_single, fit_single), ("elbow", ds_elbow, fit_elbow),
                              ("kneedle", ds_knee, fit_knee)):
            write_dataset_csv(ds, files[f"data_{name}"])
            save_model(fit.model, files[f"model_{name}"])
        return list(files.values())

    def stage_figures(self, net: InfraNetwork, scenarios: Sequence[Scenario], files: Mapping[str, Path]) -> list[Path]:
        from . import plotting

        sample = self.sample_scenario(scenarios)
        series_file = self.ws.path("pcs_series.csv")
        key = _stage_key("figures", {"seed": self.cfg.seeds.sample, "crew": self.cfg.crew,
                                     "weights": self.cfg.weights, "strategies": self.cfg.strategies},
                         self.network_file, self.scenarios_file, files["scatter"], files["inertia"], files["trace"])
        figs = [self.ws.path("figures", n) for n in
                ("eoh_vs_failures.png", "inertia_curves.png", "search_trace.png", "pcs_series.png")]

        def run():
            sim = Simulator(net, self.cfg.crew)
            results = [sim.run(sample, st, self.cfg.weights, self.cfg.tmax) for st in self.cfg.strategies]
            plotting.write_pcs_series_csv(results, series_file)
            outputs = [series_file]
            if self.cfg.figures:
                plotting.scatter_figure(files["scatter"], figs[0])
                plotting.inertia_figure(files["inertia"], figs[1])
                plotting.trace_figure(files["trace"], figs[2])
                plotting.pcs_figure(series_file, figs[3])
                outputs += figs
            return outputs

        self.ws.run_stage("figures", key, run)
        return [series_file, *(f for f in figs if f.exists())]

    def sample_scenario(self, scenarios: Sequence[Scenario]) -> Scenario:
        rng = np.random.default_rng(self.cfg.seeds.sample)
        return scenarios[int(rng.integers(len(scenarios)))]

    # composite runs
    def run_dataset(self) -> list[SimulationRecord]:
        net = self.stage_network()
        return self.stage_simulate(net, self.stage_scenarios(net))

    def run_all(self) -> Path:
        net = self.stage_network()
        scenarios = self.stage_scenarios(net)
        records = self.stage_simulate(net, scenarios)
        features = self.stage_features(net)
        files = self.stage_experiment(net, scenarios, records, features)
        self.stage_figures(net, scenarios, files)
        return self.write_manifest()

    def write_manifest(self) -> Path:
        path = self.ws.path("manifest.json")
        artifacts = {}
        for p in sorted(self.ws.root.rglob("*")):
            if p.is_file() and ".cache" not in p.parts and p != path and p.name != "run.log":
                artifacts[str(p.relative_to(self.ws.root))] = file_checksum(p)
        manifest = {"package": "infraclust", "version": __version__, "config_hash": self.cfg.hash(),
                    "seeds": _plain(self.cfg.seeds), "config": self.cfg.to_dict(), "artifacts": artifacts}
        path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
        return path


def config_from_manifest(path: str | Path) -> PipelineConfig:
    data = json.loads(Path(path).read_text())
    cfg = data.get("config")
    if cfg is None:
        raise ConfigError(f"{path}: manifest has no config")
    out = PipelineConfig.from_dict(cfg)
    if out.hash() != data.get("config_hash"):
        raise ConfigError(f"{path}: config hash mismatch")
    return out

