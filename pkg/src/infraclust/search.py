"""Cluster-count selection: per-group elbow counts and the supervised offset search.

The offset search moves every clustered group by the same offset ``b``
from its elbow count, retrains a tuned forest on the resulting
cluster-level features and picks the knee of test R^2 against the total
cluster count.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .clustering import Clustering, build_clustering, cluster_features, elbow_k, inertia_curve, kneedle
from .features import FeatureMatrix
from .hazard import Scenario
from .regression import (Dataset, FitReport, ForestParams, ExperimentRecord, fit_and_evaluate,
                         records_to_dataset, split_dataset)

log = logging.getLogger(__name__)

Group = tuple[str, str]  # (system, kind)


class NoKneeFallbackWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Outcome:
    """Simulated weighted outage hours of one scenario under one strategy."""

    scenario_id: str
    strategy: str
    target: float


def elbow_baseline(matrices: Mapping[Group, FeatureMatrix], k_max: int = 15, seed: int = 0,
                   restarts: int = 10) -> tuple[dict[Group, int], dict[Group, list[float]]]:
    """Elbow cluster count for every group, plus the inertia curves used."""
    counts: dict[Group, int] = {}
    curves: dict[Group, list[float]] = {}
    for key in sorted(matrices):
        m = matrices[key]
        n = len(m.ids)
        if n == 1:
            counts[key], curves[key] = 1, [0.0]
            continue
        ks = list(range(1, min(k_max, n) + 1))
        if len(ks) < 3:
            counts[key] = 1
            curves[key] = inertia_curve(m, ks, seed=seed, restarts=restarts)
            continue
        counts[key], curves[key] = elbow_k(m, ks, seed=seed, restarts=restarts)
    return counts, curves


def bounds(elbow: Mapping, sizes: Mapping) -> tuple[int, int]:
    """(b_minus, b_plus): how far every group can move down or up together.

    ``b_minus = min(l_e - 1)`` and ``b_plus = min(size - l_e)`` over groups.
    """
    if not elbow:
        raise ValueError("no elbow counts")
    missing = set(elbow) - set(sizes)
    if missing:
        raise KeyError(f"no size for {sorted(missing)}")
    for key, le in elbow.items():
        if not 1 <= le <= sizes[key]:
            raise ValueError(f"elbow count {le} for {key} outside [1, {sizes[key]}]")
    return min(le - 1 for le in elbow.values()), min(sizes[k] - le for k, le in elbow.items())


def per_system_counts(counts: Mapping[Group, int]) -> dict[str, int]:
    out: dict[str, int] = {}
    for (system, _), k in sorted(counts.items()):
        out[system] = out.get(system, 0) + k
    return out


# ---------------------------------------------------------------------------
# datasets for a clustering
# ---------------------------------------------------------------------------

def clustered_dataset(outcomes: Sequence[Outcome], scenarios: Mapping[str, Scenario],
                      clustering: Clustering) -> Dataset:
    """Cluster-level failure counts plus strategy one-hot for every outcome."""
    names = clustering.cluster_ids
    cache: dict[str, tuple[float, ...]] = {}
    records = []
    for o in outcomes:
        if o.scenario_id not in cache:
            f = cluster_features(scenarios[o.scenario_id], clustering)
            cache[o.scenario_id] = tuple(float(f[n]) for n in names)
        records.append(ExperimentRecord(o.scenario_id, o.strategy, cache[o.scenario_id], o.target))
    return records_to_dataset(records, names)


def single_cluster_dataset(outcomes: Sequence[Outcome], scenarios: Mapping[str, Scenario],
                           systems: Sequence[str]) -> Dataset:
    """Per-system failure counts plus strategy one-hot."""
    names = [f"{s}:all" for s in systems]
    records = [ExperimentRecord(o.scenario_id, o.strategy,
                                tuple(float(len(scenarios[o.scenario_id].failures_in(s))) for s in systems),
                                o.target) for o in outcomes]
    return records_to_dataset(records, names)


@dataclass(frozen=True)
class ModelSpec:
    """Shared training settings so every compared model sees the same split."""

    train_fraction: float = 0.75
    folds: int = 3
    grid: tuple[ForestParams, ...] | None = None
    split_seed: int = 0
    train_seed: int = 0

    def fit(self, ds: Dataset) -> FitReport:
        train, test = split_dataset(ds, self.train_fraction, self.split_seed)
        return fit_and_evaluate(train, test, self.grid, self.folds, self.train_seed)


# ---------------------------------------------------------------------------
# offset search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceEntry:
    offset: int
    counts: dict[str, int]  # per system
    total: int
    report: FitReport

    @property
    def test_r2(self) -> float:
        return self.report.test_r2


@dataclass
class SearchTrace:
    entries: list[TraceEntry] = field(default_factory=list)
    chosen_offset: int | None = None
    used_fallback: bool = False

    @property
    def offsets(self) -> list[int]:
        return [e.offset for e in self.entries]

    @property
    def chosen(self) -> TraceEntry:
        for e in self.entries:
            if e.offset == self.chosen_offset:
                return e
        raise LookupError("no offset chosen")

    def entry(self, offset: int) -> TraceEntry:
        for e in self.entries:
            if e.offset == offset:
                return e
        raise KeyError(offset)


def select_knee(totals: Sequence[int], test_r2: Sequence[float], flat_tol: float = 0.005,
                sensitivity: float = 1.0) -> tuple[int, bool]:
    """Index of the chosen point and whether the fallback rule was used.

    The knee of the increasing concave R^2 curve is preferred. A flat curve
    (spread below ``flat_tol``), too few points, or no knee falls back to
    the smallest total whose R^2 is within ``flat_tol`` of the best.
    """
    r2 = np.asarray(test_r2, dtype=float)
    if len(r2) == 0:
        raise ValueError("empty trace")
    if len(r2) >= 3 and np.ptp(r2) >= flat_tol:
        knee = kneedle(totals, r2, sensitivity=sensitivity, direction="increasing", curvature="concave")
        if knee is not None:
            return int(np.flatnonzero(np.asarray(totals) == knee)[0]), False
    best = r2.max()
    idx = int(np.flatnonzero(r2 >= best - flat_tol)[0])
    if len(r2) > 1:
        warnings.warn(f"no knee in test R^2 curve; using total {totals[idx]} (within {flat_tol} of best)",
                      NoKneeFallbackWarning, stacklevel=2)
    return idx, True


def iterative_search(outcomes: Sequence[Outcome], scenarios: Mapping[str, Scenario],
                     matrices: Mapping[Group, FeatureMatrix], elbow: Mapping[Group, int],
                     spec: ModelSpec = ModelSpec(), max_up: int | None = 10, seed: int = 0,
                     restarts: int = 10, flat_tol: float = 0.005) -> SearchTrace:
    """Retrain at every common offset in [-b_minus, min(b_plus, max_up)] and choose the knee."""
    sizes = {k: len(m.ids) for k, m in matrices.items()}
    b_minus, b_plus = bounds(elbow, sizes)
    hi = b_plus if max_up is None else min(b_plus, max_up)
    offsets = list(range(-b_minus, hi + 1))
    if not offsets:
        raise ValueError("no feasible offsets")
    trace = SearchTrace()
    for b in offsets:
        counts = {k: elbow[k] + b for k in elbow}
        clustering = build_clustering(matrices, counts, seed=seed, restarts=restarts)
        report = spec.fit(clustered_dataset(outcomes, scenarios, clustering))
        trace.entries.append(TraceEntry(b, clustering.counts(), clustering.total, report))
        log.info("offset %+d: total %d clusters, test R2 %.4f", b, clustering.total, report.test_r2)
    idx, fallback = select_knee([e.total for e in trace.entries], [e.test_r2 for e in trace.entries], flat_tol)
    trace.chosen_offset = trace.entries[idx].offset
    trace.used_fallback = fallback
    return trace


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.6f}"


def write_trace_csv(trace: SearchTrace, path: str | Path, systems: Sequence[str] | None = None) -> None:
    systems = list(systems) if systems else sorted({s for e in trace.entries for s in e.counts})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["offset", *(f"clusters_{s}" for s in systems), "total_clusters",
                    "train_r2", "test_r2", "train_rmse", "test_rmse", "chosen"])
        for e in trace.entries:
            r = e.report
            w.writerow([e.offset, *(e.counts.get(s, 0) for s in systems), e.total,
                        _fmt(r.train_r2), _fmt(r.test_r2), _fmt(r.train_rmse), _fmt(r.test_rmse),
                        int(e.offset == trace.chosen_offset)])


def read_trace_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    total_clusters: int
    report: FitReport


COMPARISON_COLUMNS = ("method", "total_clusters", "train_r2", "test_r2", "train_rmse", "test_rmse",
                      "test_r2_change_pct", "test_rmse_change_pct")
BASELINE_MARKER = "--"


def comparison_table(rows: Sequence[ComparisonRow]) -> list[list[str]]:
    """Rows of the model comparison; changes are percent of the first (baseline) row's test metrics."""
    if not rows:
        raise ValueError("no models to compare")
    base = rows[0].report
    out = []
    for i, row in enumerate(rows):
        r = row.report
        if i == 0:
            changes = [BASELINE_MARKER, BASELINE_MARKER]
        else:
            changes = [f"{100.0 * (r.test_r2 - base.test_r2) / abs(base.test_r2):.2f}"
                       if base.test_r2 != 0 else "nan",
                       f"{100.0 * (r.test_rmse - base.test_rmse) / base.test_rmse:.2f}"
                       if base.test_rmse != 0 else "nan"]
        out.append([row.method, str(row.total_clusters), _fmt(r.train_r2), _fmt(r.test_r2),
                    _fmt(r.train_rmse), _fmt(r.test_rmse), *changes])
    return out


def write_comparison_csv(rows: Sequence[ComparisonRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARISON_COLUMNS)
        w.writerows(comparison_table(rows))


def read_comparison_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or tuple(rows[0].keys()) != COMPARISON_COLUMNS:
        raise ValueError(f"{path}: not a model comparison table")
    return rows


def relative_change(value: float, base: float) -> float:
    if base == 0:
        return math.nan
    return (value - base) / abs(base)
