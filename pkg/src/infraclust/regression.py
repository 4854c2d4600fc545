"""Random-forest regression of weighted outage hours on cluster-level failure counts.

Trees are CART regressors grown on bootstrap samples. Each column is
pre-binned into its sorted distinct training values, so a node's best
split on a column is found from a histogram in O(rows + distinct
values). Thresholds sit midway between neighbouring distinct values,
which makes the result identical to a sort-based exhaustive search.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .simulation import STRATEGIES

MODEL_FORMAT = "infraclust-forest"
MODEL_VERSION = 1
DEFAULT_TREES = (50, 100, 200)
DEFAULT_DEPTHS = (4, 8, 16)


# ---------------------------------------------------------------------------
# records and datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentRecord:
    scenario_id: str
    strategy: str
    features: tuple[float, ...]  # cluster-level failure counts
    target: float

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not all(math.isfinite(v) for v in self.features):
            raise ValueError(f"non-finite predictor in record {self.scenario_id}/{self.strategy}")
        if not (math.isfinite(self.target) and self.target >= 0):
            raise ValueError(f"target must be finite and >= 0, got {self.target}")

    @property
    def one_hot(self) -> tuple[float, ...]:
        return tuple(float(s == self.strategy) for s in STRATEGIES)

    @property
    def predictors(self) -> tuple[float, ...]:
        return (*self.features, *self.one_hot)


@dataclass(frozen=True)
class Dataset:
    """Predictor matrix, target and row keys; columns are named."""

    x: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...]
    keys: tuple[str, ...] = ()

    def __post_init__(self):
        if self.x.ndim != 2 or len(self.x) != len(self.y):
            raise ValueError(f"shape mismatch: x {self.x.shape}, y {self.y.shape}")
        if len(self.columns) != self.x.shape[1]:
            raise ValueError("column names do not match predictor width")

    def __len__(self) -> int:
        return len(self.y)

    def take(self, idx: np.ndarray) -> "Dataset":
        keys = tuple(self.keys[i] for i in idx) if self.keys else ()
        return Dataset(self.x[idx], self.y[idx], self.columns, keys)


def records_to_dataset(records: Sequence[ExperimentRecord], feature_names: Sequence[str]) -> Dataset:
    if not records:
        raise ValueError("no records")
    width = len(feature_names)
    for r in records:
        if len(r.features) != width:
            raise ValueError(f"record {r.scenario_id}/{r.strategy} has {len(r.features)} features, expected {width}")
    x = np.array([r.predictors for r in records], dtype=float)
    y = np.array([r.target for r in records], dtype=float)
    columns = (*feature_names, *(f"strategy_{s}" for s in STRATEGIES))
    return Dataset(x, y, tuple(columns), tuple(f"{r.scenario_id}/{r.strategy}" for r in records))


def write_dataset_csv(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", *ds.columns, "target"])
        keys = ds.keys or tuple(str(i) for i in range(len(ds)))
        for k, row, t in zip(keys, ds.x, ds.y):
            w.writerow([k, *(repr(float(v)) for v in row), repr(float(t))])


def read_dataset_csv(path: str | Path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "key" or rows[0][-1] != "target":
        raise ValueError(f"{path}: expected header 'key,...,target'")
    body = rows[1:]
    if not body:
        raise ValueError(f"{path}: no rows")
    x = np.array([[float(v) for v in r[1:-1]] for r in body], dtype=float).reshape(len(body), len(rows[0]) - 2)
    y = np.array([float(r[-1]) for r in body])
    return Dataset(x, y, tuple(rows[0][1:-1]), tuple(r[0] for r in body))


def split_dataset(ds: Dataset, train_fraction: float = 0.75, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Uniform random split without replacement; both parts are non-empty."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(ds)
    if n < 2:
        raise ValueError(f"dataset of {n} rows is too small to split")
    n_train = min(max(int(round(train_fraction * n)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return ds.take(np.sort(perm[:n_train])), ds.take(np.sort(perm[n_train:]))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def r_squared(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError("y and y_hat differ in shape")
    if len(y) < 2:
        raise ValueError("r_squared needs at least 2 observations")
    sst = float(((y - y.mean()) ** 2).sum())
    if sst == 0.0:
        raise ValueError("r_squared undefined: target has zero variance")
    return 1.0 - float(((y - y_hat) ** 2).sum()) / sst


def rmse(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError("y and y_hat differ in shape")
    if len(y) == 0:
        raise ValueError("rmse of an empty sample")
    return math.sqrt(float(((y - y_hat) ** 2).mean()))


# ---------------------------------------------------------------------------
# CART kernel
# ---------------------------------------------------------------------------

@njit(cache=True)
def _grow_tree(bins, edges, n_edges, y, rows, candidates, mtry, max_depth, min_leaf, seed,
               feat, thr, left, right, value):
    """Grow one tree over ``rows``; returns the node count.

    ``bins[i, j]`` is the rank of row i's value among column j's distinct
    values ``edges[j, :n_edges[j]]``. Node arrays are preallocated to
    2 * len(rows) entries.
    """
    np.random.seed(seed)
    n_feat = len(candidates)
    max_bins = edges.shape[1]
    cnt = np.zeros(max_bins, dtype=np.int64)
    tot = np.zeros(max_bins)
    # stack of (node, start, end, depth) over the row buffer
    st_node = np.empty(len(rows) * 2 + 1, dtype=np.int64)
    st_lo = np.empty_like(st_node)
    st_hi = np.empty_like(st_node)
    st_d = np.empty_like(st_node)
    buf = rows.copy()
    tmp = np.empty_like(buf)
    n_nodes = 1
    sp = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = len(buf)
    st_d[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        depth = st_d[sp]
        m = hi - lo
        s = 0.0
        for k in range(lo, hi):
            s += y[buf[k]]
        mean = s / m
        value[node] = mean
        feat[node] = -1
        left[node] = -1
        right[node] = -1
        if (max_depth >= 0 and depth >= max_depth) or m < 2 * min_leaf:
            continue
        sse = 0.0
        for k in range(lo, hi):
            d = y[buf[k]] - mean
            sse += d * d
        if sse <= 0.0:
            continue
        order = np.random.permutation(n_feat)
        best_gain = 0.0
        best_f = -1
        best_b = -1
        tried = 0
        for oi in range(n_feat):
            if tried >= mtry and best_f >= 0:
                break
            f = candidates[order[oi]]
            tried += 1
            nb = n_edges[f]
            for b in range(nb):
                cnt[b] = 0
                tot[b] = 0.0
            for k in range(lo, hi):
                r = buf[k]
                b = bins[r, f]
                cnt[b] += 1
                tot[b] += y[r]
            # scan split points between consecutive occupied bins
            nl = 0
            sl = 0.0
            for b in range(nb - 1):
                if cnt[b] == 0:
                    continue
                nl += cnt[b]
                sl += tot[b]
                nr = m - nl
                if nr == 0:
                    break
                if nl < min_leaf or nr < min_leaf:
                    continue
                sr = s - sl
                # SSE reduction = nl*ml^2 + nr*mr^2 - m*mean^2
                gain = sl * sl / nl + sr * sr / nr - s * s / m
                if gain > best_gain * (1.0 + 1e-12) + 1e-12 * sse:
                    best_gain = gain
                    best_f = f
                    best_b = b
        if best_f < 0:
            continue
        # threshold midway to the next occupied bin
        nxt = best_b + 1
        while True:
            found = False
            for k in range(lo, hi):
                if bins[buf[k], best_f] == nxt:
                    found = True
                    break
            if found:
                break
            nxt += 1
        t = 0.5 * (edges[best_f, best_b] + edges[best_f, nxt])
        # stable partition of the node's rows
        a = lo
        c = 0
        for k in range(lo, hi):
            r = buf[k]
            if bins[r, best_f] <= best_b:
                buf[a] = r
                a += 1
            else:
                tmp[c] = r
                c += 1
        for k in range(c):
            buf[a + k] = tmp[k]
        feat[node] = best_f
        thr[node] = t
        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        left[node] = li
        right[node] = ri
        st_node[sp] = ri
        st_lo[sp] = a
        st_hi[sp] = hi
        st_d[sp] = depth + 1
        sp += 1
        st_node[sp] = li
        st_lo[sp] = lo
        st_hi[sp] = a
        st_d[sp] = depth + 1
        sp += 1
    return n_nodes


@njit(cache=True)
def _predict_tree(x, feat, thr, left, right, value, out):
    for i in range(x.shape[0]):
        node = 0
        while feat[node] >= 0:
            if x[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]


def _bin_columns(x: np.ndarray):
    n, p = x.shape
    uniques = [np.unique(x[:, j]) for j in range(p)]
    width = max(1, max((len(u) for u in uniques), default=1))
    edges = np.zeros((p, width))
    n_edges = np.zeros(p, dtype=np.int64)
    bins = np.zeros((n, p), dtype=np.int64)
    for j, u in enumerate(uniques):
        edges[j, : len(u)] = u
        n_edges[j] = len(u)
        bins[:, j] = np.searchsorted(u, x[:, j])
    return bins, edges, n_edges


# ---------------------------------------------------------------------------
# trees and forests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        out = np.empty(len(x))
        _predict_tree(x, self.feature, self.threshold, self.left, self.right, self.value, out)
        return out

    @property
    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] >= 0:
                stack += [(int(self.left[node]), d + 1), (int(self.right[node]), d + 1)]
        return best


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = 8  # None grows until leaves are pure or minimal
    min_samples_leaf: int = 1
    feature_fraction: float = 1.0 / 3.0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be at least 1")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ValueError("feature_fraction must lie in (0, 1]")

    def key(self) -> tuple:
        depth = math.inf if self.max_depth is None else self.max_depth
        return (self.n_trees, depth, self.min_samples_leaf, self.feature_fraction)

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "min_samples_leaf": self.min_samples_leaf,
                "feature_fraction": self.feature_fraction, "bootstrap": self.bootstrap}

    @classmethod
    def from_dict(cls, d: dict) -> "ForestParams":
        return cls(**d)


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[Tree, ...]
    params: ForestParams
    seed: int
    columns: tuple[str, ...] = ()
    n_features: int = 0

    def predict_trees(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} predictor columns, got shape {x.shape}")
        return np.stack([t.predict(x) for t in self.trees])

    def predict(self, x) -> np.ndarray:
        return self.predict_trees(x).mean(axis=0)


def train_forest(train: Dataset, params: ForestParams = ForestParams(), seed: int = 0) -> ForestModel:
    """Bootstrap-aggregated CART regressors.

    Split candidates are drawn per node from the columns that vary in the
    training data, so appending a constant column leaves the model
    unchanged. If none of the drawn columns admits a split the remaining
    varying columns are tried in the same random order.
    """
    x = np.ascontiguousarray(train.x, dtype=float)
    y = np.ascontiguousarray(train.y, dtype=float)
    n = len(y)
    if n == 0:
        raise ValueError("empty training set")
    bins, edges, n_edges = _bin_columns(x)
    candidates = np.flatnonzero(n_edges > 1).astype(np.int64)
    mtry = max(1, int(math.ceil(params.feature_fraction * len(candidates)))) if len(candidates) else 0
    max_depth = -1 if params.max_depth is None else int(params.max_depth)
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(params.n_trees):
        tree_seed = int(rng.integers(2**31 - 1))
        if params.bootstrap:
            rows = np.sort(rng.integers(0, n, size=n)).astype(np.int64)
        else:
            rows = np.arange(n, dtype=np.int64)
        size = 2 * len(rows) + 1
        feat = np.empty(size, dtype=np.int64)
        thr = np.zeros(size)
        left = np.empty(size, dtype=np.int64)
        right = np.empty(size, dtype=np.int64)
        value = np.empty(size)
        k = _grow_tree(bins, edges, n_edges, y, rows, candidates, mtry, max_depth,
                       int(params.min_samples_leaf), tree_seed, feat, thr, left, right, value)
        trees.append(Tree(feat[:k].copy(), thr[:k].copy(), left[:k].copy(), right[:k].copy(), value[:k].copy()))
    return ForestModel(tuple(trees), params, seed, tuple(train.columns), x.shape[1])


# ---------------------------------------------------------------------------
# tuning
# ---------------------------------------------------------------------------

def default_grid(feature_fraction: float = 1.0 / 3.0) -> list[ForestParams]:
    return [ForestParams(t, d, 1, feature_fraction) for t in DEFAULT_TREES for d in DEFAULT_DEPTHS]


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Shuffled partition of range(n) into ``folds`` near-equal parts."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise ValueError(f"{n} rows cannot fill {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


@dataclass(frozen=True)
class CVResult:
    best: ForestParams
    scores: tuple[tuple[ForestParams, float], ...]


def cross_validate(train: Dataset, grid: Sequence[ForestParams] | None = None, folds: int = 3,
                   seed: int = 0) -> CVResult:
    """Grid search by mean validation R^2; ties prefer fewer trees, then shallower."""
    grid = list(grid) if grid is not None else default_grid()
    if not grid:
        raise ValueError("empty hyper-parameter grid")
    parts = fold_indices(len(train), folds, seed)
    scores = []
    for params in grid:
        vals = []
        for k, val_idx in enumerate(parts):
            fit_idx = np.concatenate([p for j, p in enumerate(parts) if j != k])
            model = train_forest(train.take(fit_idx), params, seed=seed + k)
            yv = train.y[val_idx]
            pred = model.predict(train.x[val_idx])
            if len(yv) >= 2 and np.ptp(yv) > 0:
                vals.append(r_squared(yv, pred))
            else:
                # degenerate fold: fall back to negative squared error scale
                vals.append(-rmse(yv, pred))
        scores.append((params, float(np.mean(vals))))
    best_score = max(s for _, s in scores)
    tied = [p for p, s in scores if s >= best_score - 1e-12]
    best = min(tied, key=lambda p: p.key())
    return CVResult(best, tuple(scores))


@dataclass(frozen=True)
class FitReport:
    model: ForestModel
    train_r2: float
    test_r2: float
    train_rmse: float
    test_rmse: float
    cv: CVResult | None = None

    def row(self) -> dict:
        return {"train_r2": self.train_r2, "test_r2": self.test_r2,
                "train_rmse": self.train_rmse, "test_rmse": self.test_rmse}


def fit_and_evaluate(train: Dataset, test: Dataset, grid: Sequence[ForestParams] | None = None,
                     folds: int = 3, seed: int = 0) -> FitReport:
    """Tune on the training split, refit on all of it and score both splits."""
    cv = cross_validate(train, grid, folds, seed) if folds else None
    params = cv.best if cv else (list(grid)[0] if grid else ForestParams())
    model = train_forest(train, params, seed)
    return FitReport(model, r_squared(train.y, model.predict(train.x)), r_squared(test.y, model.predict(test.x)),
                     rmse(train.y, model.predict(train.x)), rmse(test.y, model.predict(test.x)), cv)


def linear_fit(train: Dataset) -> np.ndarray:
    """Least-squares coefficients with an intercept first."""
    a = np.column_stack([np.ones(len(train)), train.x])
    coef, *_ = np.linalg.lstsq(a, train.y, rcond=None)
    return coef


def linear_predict(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    return coef[0] + np.asarray(x, dtype=float) @ coef[1:]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def model_to_dict(model: ForestModel) -> dict:
    trees = []
    for t in model.trees:
        nodes = []
        for i in range(len(t.feature)):
            if t.feature[i] < 0:
                nodes.append({"leaf": float(t.value[i])})
            else:
                nodes.append({"split": [int(t.feature[i]), float(t.threshold[i]),
                                        int(t.left[i]), int(t.right[i])], "mean": float(t.value[i])})
        trees.append(nodes)
    return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "params": model.params.to_dict(),
            "seed": model.seed, "columns": list(model.columns), "n_features": model.n_features,
            "trees": trees}


def model_from_dict(d: dict) -> ForestModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a forest model file (format={d.get('format')!r})")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    trees = []
    for nodes in d["trees"]:
        k = len(nodes)
        feat = np.full(k, -1, dtype=np.int64)
        thr = np.zeros(k)
        left = np.full(k, -1, dtype=np.int64)
        right = np.full(k, -1, dtype=np.int64)
        value = np.zeros(k)
        for i, nd in enumerate(nodes):
            if "leaf" in nd:
                value[i] = nd["leaf"]
            else:
                feat[i], thr[i], left[i], right[i] = nd["split"]
                value[i] = nd.get("mean", 0.0)
        trees.append(Tree(feat, thr, left, right, value))
    return ForestModel(tuple(trees), ForestParams.from_dict(d["params"]), int(d["seed"]),
                       tuple(d.get("columns", ())), int(d["n_features"]))


def save_model(model: ForestModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), separators=(",", ":")) + "\n")


def load_model(path: str | Path) -> ForestModel:
    return model_from_dict(json.loads(Path(path).read_text()))
