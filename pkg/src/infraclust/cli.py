"""Command-line entry point: ``infraclust <verb> [options]``.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .clustering import Clustering, build_clustering, elbow_k, write_assignments_csv
from .features import assemble_feature_matrix, read_features_csv
from .hazard import generate_scenarios, load_scenarios, save_scenarios
from .network import build_synthetic_testbed, load_network, save_network, validate_network
from .pipeline import (ConfigError, Pipeline, PipelineConfig, StageError, Workspace, config_from_manifest,
                       load_config, save_records, simulate_all, write_records_csv)
from .regression import (fit_and_evaluate, load_model, read_dataset_csv, save_model, split_dataset)
from .simulation import STRATEGIES

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3
log = logging.getLogger("infraclust")


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="YAML or JSON pipeline config")
    p.add_argument("--seed", type=int, help="seed for the stage(s) this verb runs")
    p.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for simulations")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="infraclust", parents=[common],
                                     description="Cluster-based outage prediction for interdependent networks")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("testbed", parents=[common], help="build the synthetic testbed network")
    p.add_argument("--out", type=Path, help="network JSON (default: <out-dir>/network.json)")

    p = sub.add_parser("generate-scenarios", parents=[common], help="draw flood scenarios")
    p.add_argument("--net", type=Path, required=True)
    p.add_argument("--out", type=Path, help="scenario JSONL (default: <out-dir>/scenarios.jsonl)")

    p = sub.add_parser("simulate", parents=[common], help="simulate recovery for every scenario")
    p.add_argument("--net", type=Path, required=True)
    p.add_argument("--scenarios", type=Path, required=True)
    p.add_argument("--strategy", choices=STRATEGIES, help="one strategy (default: all configured)")
    p.add_argument("--weights", help="w_power,w_water or name=value pairs, e.g. water=0.5,power=0.5")
    p.add_argument("--out", type=Path, help="records JSONL (default: <out-dir>/simulations.jsonl)")

    p = sub.add_parser("features", parents=[common], help="write per-group component feature CSVs")
    p.add_argument("--net", type=Path, required=True)

    p = sub.add_parser("cluster", parents=[common], help="k-means clusters for one feature CSV")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--k", default="auto", help="cluster count or 'auto' for the elbow")
    p.add_argument("--out", type=Path, help="assignment CSV (default: <out-dir>/clusters.csv)")

    p = sub.add_parser("train", parents=[common], help="tune and fit a forest on a dataset CSV")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--model-out", type=Path, required=True)

    p = sub.add_parser("predict", parents=[common], help="predict with a saved forest")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, help="prediction CSV (default: stdout)")

    sub.add_parser("search-k", parents=[common], help="run the pipeline through the cluster-count search")
    sub.add_parser("report", parents=[common], help="run the pipeline and print the model comparison")
    p = sub.add_parser("run-all", parents=[common], help="run every stage and write a manifest")
    p.add_argument("--manifest", type=Path, help="rerun with the config recorded in a manifest")
    p.add_argument("--force", action="store_true", help="ignore cached stage outputs")
    return parser


def parse_weights(text: str) -> dict[str, float]:
    parts = [t.strip() for t in text.split(",") if t.strip()]
    try:
        if all("=" in t for t in parts):
            return {k.strip(): float(v) for k, v in (t.split("=", 1) for t in parts)}
        if len(parts) != 2:
            raise ConfigError("--weights takes two values (power,water) or name=value pairs")
        # positional order follows sorted system names
        return {"power": float(parts[0]), "water": float(parts[1])}
    except ValueError as exc:
        raise ConfigError(f"bad --weights {text!r}: {exc}") from exc


def _config(args) -> PipelineConfig:
    return load_config(args.config)


def _setup_logging(args, out_dir: Path | None) -> None:
    level = logging.DEBUG if args.verbose else logging.INFO
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if out_dir is not None:
        (out_dir / "logs").mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(out_dir / "logs" / "run.log"))
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s",
                        handlers=handlers, force=True)
    logging.captureWarnings(True)


def _out(args, given: Path | None, name: str) -> Path:
    path = given or args.out_dir / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def cmd_testbed(args) -> int:
    cfg = _config(args)
    seed = cfg.seeds.testbed if args.seed is None else args.seed
    net = build_synthetic_testbed(cfg.testbed, seed)
    problems = validate_network(net)
    if problems:
        raise StageError("testbed", "; ".join(problems[:5]))
    out = _out(args, args.out, "network.json")
    save_network(net, out)
    print(out)
    return EXIT_OK


def _load_net(path: Path):
    if not path.exists():
        raise ConfigError(f"network file {path} not found")
    net = load_network(path)
    problems = validate_network(net)
    if problems:
        raise ConfigError(f"{path}: invalid network: {'; '.join(problems[:5])}")
    return net


def cmd_generate_scenarios(args) -> int:
    cfg = _config(args)
    net = _load_net(args.net)
    seed = cfg.seeds.hazard if args.seed is None else args.seed
    out = _out(args, args.out, "scenarios.jsonl")
    save_scenarios(generate_scenarios(net, cfg.hazard, seed), out)
    print(out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if args.strategy:
        cfg = replace(cfg, strategies=(args.strategy,), strategy_sampling="all")
    if args.weights:
        cfg = replace(cfg, weights=parse_weights(args.weights))
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    net = _load_net(args.net)
    if not args.scenarios.exists():
        raise ConfigError(f"scenario file {args.scenarios} not found")
    scenarios = load_scenarios(args.scenarios)
    records, _ = simulate_all(net, scenarios, cfg, args.workers)
    out = _out(args, args.out, "simulations.jsonl")
    save_records(records, out)
    write_records_csv(records, out.with_suffix(".csv"))
    print(out)
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = replace(_config(args), network=str(args.net))
    if not args.net.exists():
        raise ConfigError(f"network file {args.net} not found")
    pipe = Pipeline(cfg, Workspace(args.out_dir, args.workers))
    net = pipe.stage_network()
    for key in sorted(pipe.stage_features(net)):
        print(pipe.feature_file(*key))
    return EXIT_OK


def cmd_cluster(args) -> int:
    cfg = _config(args)
    if not args.features.exists():
        raise ConfigError(f"feature file {args.features} not found")
    feats = read_features_csv(args.features)
    matrix = assemble_feature_matrix(feats, cfg.search.features)
    seed = cfg.seeds.cluster if args.seed is None else args.seed
    if args.k == "auto":
        ks = list(range(1, min(cfg.search.k_max, len(matrix.ids)) + 1))
        k = elbow_k(matrix, ks, seed=seed, restarts=cfg.search.restarts)[0] if len(ks) >= 3 else 1
    else:
        try:
            k = int(args.k)
        except ValueError:
            raise ConfigError(f"--k must be an integer or 'auto', got {args.k!r}") from None
        if not 1 <= k <= len(matrix.ids):
            raise ConfigError(f"--k {k} outside [1, {len(matrix.ids)}]")
    clustering: Clustering = build_clustering({(feats.system, feats.kind): matrix},
                                              {(feats.system, feats.kind): k}, seed, cfg.search.restarts)
    out = _out(args, args.out, "clusters.csv")
    write_assignments_csv(clustering, out)
    print(f"{out} k={k}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    if not args.data.exists():
        raise ConfigError(f"data file {args.data} not found")
    if args.folds < 2:
        raise ConfigError("--folds must be at least 2")
    seed = cfg.seeds.train if args.seed is None else args.seed
    ds = read_dataset_csv(args.data)
    train, test = split_dataset(ds, cfg.train_fraction, seed)
    fit = fit_and_evaluate(train, test, cfg.grid, args.folds, seed)
    args.model_out.parent.mkdir(parents=True, exist_ok=True)
    save_model(fit.model, args.model_out)
    print(json.dumps({**fit.row(), "params": fit.model.params.to_dict()}, sort_keys=True))
    return EXIT_OK


def cmd_predict(args) -> int:
    for p in (args.model, args.data):
        if not p.exists():
            raise ConfigError(f"{p} not found")
    model = load_model(args.model)
    ds = read_dataset_csv(args.data)
    if model.columns and tuple(ds.columns) != model.columns:
        raise ConfigError("data columns do not match the model's training columns")
    pred = model.predict(ds.x)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["key", "prediction"])
        keys = ds.keys or tuple(str(i) for i in range(len(ds)))
        for k, v in zip(keys, pred):
            w.writerow([k, f"{v:.6f}"])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def _pipeline(args, force: bool = False) -> Pipeline:
    cfg = _config(args)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return Pipeline(cfg, Workspace(args.out_dir, args.workers, force))


def cmd_search_k(args) -> int:
    pipe = _pipeline(args)
    net = pipe.stage_network()
    scenarios = pipe.stage_scenarios(net)
    records = pipe.stage_simulate(net, scenarios)
    files = pipe.stage_experiment(net, scenarios, records, pipe.stage_features(net))
    print(Path(files["trace"]).read_text(), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    pipe = _pipeline(args)
    pipe.run_all()
    print(pipe.report_file.read_text(), end="")
    return EXIT_OK


def cmd_run_all(args) -> int:
    if args.manifest:
        if not args.manifest.exists():
            raise ConfigError(f"manifest {args.manifest} not found")
        cfg = config_from_manifest(args.manifest)
        pipe = Pipeline(cfg, Workspace(args.out_dir, args.workers, args.force))
    else:
        pipe = _pipeline(args, args.force)
    manifest = pipe.run_all()
    print(pipe.report_file.read_text(), end="")
    print(f"manifest: {manifest}")
    return EXIT_OK


COMMANDS = {
    "testbed": cmd_testbed,
    "generate-scenarios": cmd_generate_scenarios,
    "simulate": cmd_simulate,
    "features": cmd_features,
    "cluster": cmd_cluster,
    "train": cmd_train,
    "predict": cmd_predict,
    "search-k": cmd_search_k,
    "report": cmd_report,
    "run-all": cmd_run_all,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    stage_verbs = {"features", "search-k", "report", "run-all"}
    _setup_logging(args, args.out_dir if args.verb in stage_verbs else None)
    warnings.simplefilter("default")
    np.seterr(all="ignore")
    try:
        return COMMANDS[args.verb](args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except StageError as exc:
        log.error("stage failed: %s", exc)
        return EXIT_STAGE
    except Exception as exc:  # any other failure is a stage failure for the caller
        log.error("%s failed: %s: %s", args.verb, type(exc).__name__, exc)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
