"""K-means component clustering, cluster-level failure counts and knee detection."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .features import FeatureMatrix
from .hazard import Scenario
from .network import parse_component_id

log = logging.getLogger(__name__)


class NoKneeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    history: tuple[float, ...]  # inertia after each assignment step


def _as_array(matrix) -> np.ndarray:
    x = matrix.values if isinstance(matrix, FeatureMatrix) else matrix
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def _sq_dist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    closest = ((x - x[chosen[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # every point already coincides with a centre
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        else:
            nxt = int(rng.choice(n, p=closest / total))
        chosen.append(nxt)
        closest = np.minimum(closest, ((x - x[nxt]) ** 2).sum(1))
    return x[chosen].copy()


def _relabel(labels: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Number clusters by first appearance in row order."""
    _, first = np.unique(labels, return_index=True)
    old = labels[np.sort(first)]
    mapping = {int(o): k for k, o in enumerate(old)}
    new_labels = np.array([mapping[int(l)] for l in labels], dtype=int)
    return new_labels, centroids[old]


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int) -> KMeansResult:
    k = len(centroids)
    history = []
    labels = None
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dist(x, centroids)
        new = d.argmin(1)
        inertia = float(d[np.arange(len(x)), new].sum())
        if history and inertia > history[-1] * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"k-means inertia rose from {history[-1]} to {inertia}")
        history.append(inertia)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = x[members].mean(0)
        empty = [j for j in range(k) if not (labels == j).any()]
        if empty:
            own = d[np.arange(len(x)), labels]
            taken: set[int] = set()
            for j in empty:
                order = np.argsort(-own, kind="stable")
                far = next(int(i) for i in order if int(i) not in taken)
                taken.add(far)
                centroids[j] = x[far]
    d = _sq_dist(x, centroids)
    labels = d.argmin(1)
    inertia = float(((x - centroids[labels]) ** 2).sum())
    labels, centroids = _relabel(labels, centroids)
    return KMeansResult(labels, centroids, inertia, it, tuple(history))


def kmeans(matrix, k: int, seed: int = 0, restarts: int = 10, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm from k-means++ starts; keeps the lowest-inertia restart."""
    x = _as_array(matrix)
    n = len(x)
    if n == 0:
        raise ValueError("cannot cluster an empty matrix")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        res = _lloyd(x, _plusplus(x, k, rng), max_iter)
        if best is None or res.inertia < best.inertia - 1e-12:
            best = res
    return best


# ---------------------------------------------------------------------------
# partitions and cluster-level features
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    """Clusters of one (system, kind) component group."""

    system: str
    kind: str
    ids: tuple[str, ...]
    labels: tuple[int, ...]
    inertia: float = 0.0

    @property
    def k(self) -> int:
        return len(set(self.labels))

    def cluster_name(self, label: int) -> str:
        return f"{self.system}:{self.kind}:c{label}"

    @property
    def cluster_names(self) -> list[str]:
        return [self.cluster_name(j) for j in range(self.k)]


def partition_from_kmeans(matrix: FeatureMatrix, result: KMeansResult) -> Partition:
    groups = {parse_component_id(c)[:2] for c in matrix.ids}
    if len(groups) != 1:
        raise ValueError(f"feature matrix mixes component groups {sorted(groups)}")
    system, kind = groups.pop()
    return Partition(system, kind, tuple(matrix.ids), tuple(int(l) for l in result.labels), result.inertia)


class Clustering:
    """Partitions for several component groups, addressable by component id."""

    def __init__(self, partitions: Iterable[Partition]):
        self.partitions = sorted(partitions, key=lambda p: (p.system, p.kind))
        self._where: dict[str, str] = {}
        self._groups = {(p.system, p.kind) for p in self.partitions}
        for p in self.partitions:
            for cid, lab in zip(p.ids, p.labels):
                self._where[cid] = p.cluster_name(lab)

    @property
    def cluster_ids(self) -> list[str]:
        return [name for p in self.partitions for name in p.cluster_names]

    def counts(self) -> dict[str, int]:
        """Clusters per system (node plus link clusters)."""
        out: dict[str, int] = {}
        for p in self.partitions:
            out[p.system] = out.get(p.system, 0) + p.k
        return out

    @property
    def total(self) -> int:
        return sum(p.k for p in self.partitions)

    def cluster_of(self, cid: str) -> str:
        try:
            return self._where[cid]
        except KeyError:
            raise KeyError(f"component {cid} is in no cluster") from None

    def covers_group(self, cid: str) -> bool:
        return parse_component_id(cid)[:2] in self._groups

    def members(self, cluster: str) -> list[str]:
        return sorted(c for c, name in self._where.items() if name == cluster)


def membership_indicator(clustering: Clustering, component: str, cluster: str) -> int:
    """1 when ``component`` belongs to ``cluster``, else 0."""
    return int(clustering.cluster_of(component) == cluster)


def cluster_features(scenario: Scenario, clustering: Clustering) -> dict[str, int]:
    """Failed-component count per cluster, in ``clustering.cluster_ids`` order.

    Failures in component groups that were not clustered are ignored.
    """
    counts = dict.fromkeys(clustering.cluster_ids, 0)
    for cid in scenario.failed_components:
        if not clustering.covers_group(cid):
            continue
        counts[clustering.cluster_of(cid)] += 1
    return counts


def write_assignments_csv(clustering: Clustering, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component_id", "system", "kind", "cluster_id"])
        for p in clustering.partitions:
            for cid, lab in zip(p.ids, p.labels):
                w.writerow([cid, p.system, p.kind, p.cluster_name(lab)])


def read_assignments_csv(path: str | Path) -> Clustering:
    groups: dict[tuple[str, str], list[tuple[str, int]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            label = int(row["cluster_id"].rsplit(":c", 1)[1])
            groups.setdefault((row["system"], row["kind"]), []).append((row["component_id"], label))
    return Clustering(Partition(s, k, tuple(c for c, _ in rows), tuple(l for _, l in rows))
                      for (s, k), rows in groups.items())


# ---------------------------------------------------------------------------
# knee detection
# ---------------------------------------------------------------------------

def kneedle(xs: Sequence[float], ys: Sequence[float], sensitivity: float = 1.0,
            direction: str = "increasing", curvature: str = "concave") -> float | None:
    """Knee of a sampled curve by the kneedle method (offline, no smoothing).

    The curve is min-max normalized and mapped onto the increasing-concave
    orientation. The knee is the x at the maximum of the difference curve,
    accepted when the difference later falls below
    ``peak - sensitivity * mean(x spacing)``. Returns ``None`` otherwise.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) != len(y):
        raise ValueError("xs and ys differ in length")
    if len(x) < 3:
        raise ValueError("kneedle needs at least 3 points")
    if np.any(np.diff(x) <= 0):
        raise ValueError("xs must be strictly increasing")
    if direction not in ("increasing", "decreasing") or curvature not in ("concave", "convex"):
        raise ValueError(f"bad orientation {direction}/{curvature}")
    yr = y.max() - y.min()
    if yr <= 0:
        return None
    xn = (x - x.min()) / (x.max() - x.min())
    yn = (y - y.min()) / yr

    # reflect onto an increasing concave curve
    flip_x = (direction == "increasing") != (curvature == "concave")
    flip_y = curvature == "convex"
    xt = 1.0 - xn if flip_x else xn
    yt = 1.0 - yn if flip_y else yn
    order = np.argsort(xt, kind="stable")
    xt, yt = xt[order], yt[order]
    diff = yt - xt

    threshold = diff.max() - sensitivity * np.mean(np.diff(xt))
    i = int(np.argmax(diff))
    if np.any(diff[i + 1:] < threshold):
        return float(x[order[i]])
    return None


def inertia_curve(matrix, k_values: Sequence[int], seed: int = 0, restarts: int = 10) -> list[float]:
    return [kmeans(matrix, int(k), seed=seed, restarts=restarts).inertia for k in k_values]


def elbow_k(matrix, k_range: Sequence[int], seed: int = 0, restarts: int = 10,
            sensitivity: float = 1.0) -> tuple[int, list[float]]:
    """Cluster count at the knee of the decreasing convex inertia curve.

    Falls back to the smallest k (with a :class:`NoKneeWarning`) when the
    curve has no knee. Returns ``(k, inertias)``.
    """
    x = _as_array(matrix)
    ks = [int(k) for k in k_range if 1 <= int(k) <= len(x)]
    if len(x) == 1:
        return 1, [0.0]
    if len(ks) < 3:
        raise ValueError(f"need at least 3 feasible k values for knee detection, got {ks}")
    inertias = inertia_curve(x, ks, seed=seed, restarts=restarts)
    knee = kneedle(ks, inertias, sensitivity=sensitivity, direction="decreasing", curvature="convex")
    if knee is None:
        warnings.warn(f"no elbow in inertia curve over k={ks[0]}..{ks[-1]}; using k={ks[0]}",
                      NoKneeWarning, stacklevel=2)
        return ks[0], inertias
    return int(round(knee)), inertias


def build_clustering(matrices: Mapping[tuple[str, str], FeatureMatrix], counts: Mapping[tuple[str, str], int],
                     seed: int = 0, restarts: int = 10) -> Clustering:
    """K-means partitions for every (system, kind) group at the given counts."""
    parts = []
    for key in sorted(matrices):
        m = matrices[key]
        k = max(1, min(int(counts[key]), len(m.ids)))
        parts.append(partition_from_kmeans(m, kmeans(m, k, seed=seed, restarts=restarts)))
    return Clustering(parts)
