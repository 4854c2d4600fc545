"""Topological and functional component features for clustering.

All centralities use hop-count shortest paths on the undirected system
graph. Node-valued features reported for a link are encoded as the
(min, max) of the two endpoint values so the columns do not depend on
link orientation.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .network import SystemGraph, parse_component_id

NODE_FEATURES = ("degree", "betweenness", "eigenvector", "closeness", "flow", "weighted_flow")
LINK_FEATURES = ("degree_min", "degree_max", "betweenness", "eigenvector_min", "eigenvector_max",
                 "closeness_min", "closeness_max", "flow", "weighted_flow")

# base feature name -> link columns it expands to
LINK_COLUMNS = {
    "degree": ("degree_min", "degree_max"),
    "betweenness": ("betweenness",),
    "eigenvector": ("eigenvector_min", "eigenvector_max"),
    "closeness": ("closeness_min", "closeness_max"),
    "flow": ("flow",),
    "weighted_flow": ("weighted_flow",),
}
DEFAULT_FEATURES = ("degree", "betweenness", "eigenvector", "closeness", "flow", "weighted_flow")


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, iterate: dict[str, float], residual: float):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


def _pair(a: float, b: float) -> tuple[float, float]:
    return (a, b) if a <= b else (b, a)


def degree_centrality(g: SystemGraph) -> tuple[dict[str, float], dict[str, tuple[float, float]]]:
    adj = g.adjacency()
    nodes = {n: float(len(adj[n])) for n in g.node_ids}
    links = {e.id: _pair(nodes[e.u], nodes[e.v]) for e in g.links.values()}
    return nodes, links


def _bfs_sigma(adj: Mapping[str, Mapping[str, str]], s: str):
    """Single-source BFS returning visit order, predecessors, path counts and distances."""
    order: list[str] = []
    preds: dict[str, list[str]] = {v: [] for v in adj}
    sigma = dict.fromkeys(adj, 0.0)
    dist = dict.fromkeys(adj, -1)
    sigma[s] = 1.0
    dist[s] = 0
    queue = deque([s])
    while queue:
        v = queue.popleft()
        order.append(v)
        for w in adj[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
            if dist[w] == dist[v] + 1:
                sigma[w] += sigma[v]
                preds[w].append(v)
    return order, preds, sigma, dist


def betweenness_centrality(g: SystemGraph) -> tuple[dict[str, float], dict[str, float]]:
    """Brandes betweenness for nodes and links, normalized over unordered pairs.

    Nodes are divided by (n-1)(n-2)/2 and links by n(n-1)/2.
    """
    adj = g.adjacency()
    node_bc = dict.fromkeys(adj, 0.0)
    link_bc = dict.fromkeys(g.links, 0.0)
    for s in g.node_ids:
        order, preds, sigma, _ = _bfs_sigma(adj, s)
        delta = dict.fromkeys(adj, 0.0)
        for w in reversed(order):
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                c = sigma[v] * coeff
                link_bc[adj[v][w]] += c
                delta[v] += c
            if w != s:
                node_bc[w] += delta[w]
    n = len(adj)
    node_norm = (n - 1) * (n - 2) / 2.0
    link_norm = n * (n - 1) / 2.0
    # every unordered pair was counted from both ends
    nodes = {v: (b / 2.0 / node_norm if node_norm > 0 else 0.0) for v, b in node_bc.items()}
    links = {e: (b / 2.0 / link_norm if link_norm > 0 else 0.0) for e, b in link_bc.items()}
    return nodes, links


def eigenvector_centrality(g: SystemGraph, tol: float = 1e-10, max_iter: int = 10000
                           ) -> tuple[dict[str, float], dict[str, tuple[float, float]]]:
    """Dominant adjacency eigenvector by power iteration, scaled so the max entry is 1.

    Iterates on A + I, which has the same eigenvectors as A but a unique
    dominant eigenvalue on bipartite graphs (paths, stars, grids), where
    plain power iteration would oscillate.
    """
    ids = g.node_ids
    n = len(ids)
    if n == 0:
        return {}, {}
    index = {v: k for k, v in enumerate(ids)}
    a = np.zeros((n, n))
    for e in g.links.values():
        a[index[e.u], index[e.v]] = a[index[e.v], index[e.u]] = 1.0
    if not a.any():
        nodes = dict.fromkeys(ids, 1.0)
        return nodes, {}
    x = np.ones(n)
    residual = np.inf
    for _ in range(max_iter):
        y = a @ x + x
        y /= y.max()
        residual = float(np.abs(y - x).max())
        x = y
        if residual < tol:
            break
    else:
        raise ConvergenceError(
            f"eigenvector centrality did not converge in {max_iter} iterations (residual {residual:.3g})",
            dict(zip(ids, x.tolist())), residual)
    nodes = {v: float(x[index[v]]) for v in ids}
    links = {e.id: _pair(nodes[e.u], nodes[e.v]) for e in g.links.values()}
    return nodes, links


def closeness_centrality(g: SystemGraph) -> tuple[dict[str, float], dict[str, tuple[float, float]]]:
    adj = g.adjacency()
    n = len(adj)
    nodes = {}
    for v in g.node_ids:
        _, _, _, dist = _bfs_sigma(adj, v)
        total = sum(d for d in dist.values() if d > 0)
        nodes[v] = (n - 1) / total if total > 0 else 0.0
    links = {e.id: _pair(nodes[e.u], nodes[e.v]) for e in g.links.values()}
    return nodes, links


def flow_features(g: SystemGraph, baseline_flows: Mapping[str, float],
                  link_betweenness: Mapping[str, float] | None = None
                  ) -> tuple[dict[str, tuple[float, float]], dict[str, tuple[float, float]]]:
    """Flow-rate and betweenness-weighted flow-rate for nodes and links.

    Returns ``(nodes, links)`` mapping component id -> (Q, weighted Q).
    """
    if link_betweenness is None:
        link_betweenness = betweenness_centrality(g)[1]
    links = {}
    for lid in g.link_ids:
        if lid not in baseline_flows:
            raise KeyError(f"no baseline flow for link {lid}")
        q = abs(float(baseline_flows[lid]))
        links[lid] = (q, link_betweenness[lid] * q)
    nodes = {}
    for v in g.node_ids:
        inc = g.incident_links(v)
        nodes[v] = (sum(links[e][0] for e in inc), sum(links[e][1] for e in inc))
    return nodes, links


@dataclass(frozen=True)
class ComponentFeatures:
    """Raw feature table for one (system, component kind) group."""

    system: str
    kind: str
    ids: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]


def compute_component_features(g: SystemGraph, baseline_flows: Mapping[str, float] | None = None
                               ) -> dict[str, ComponentFeatures]:
    """All raw features for nodes and links of one system.

    Without ``baseline_flows`` the flow columns are zero.
    """
    deg_n, deg_l = degree_centrality(g)
    bc_n, bc_l = betweenness_centrality(g)
    ev_n, ev_l = eigenvector_centrality(g)
    cl_n, cl_l = closeness_centrality(g)
    flows = baseline_flows if baseline_flows is not None else dict.fromkeys(g.links, 0.0)
    q_n, q_l = flow_features(g, flows, bc_l)

    node_ids = tuple(g.node_ids)
    node_vals = np.array([[deg_n[v], bc_n[v], ev_n[v], cl_n[v], q_n[v][0], q_n[v][1]]
                          for v in node_ids], dtype=float).reshape(len(node_ids), len(NODE_FEATURES))
    link_ids = tuple(g.link_ids)
    link_vals = np.array([[*deg_l[e], bc_l[e], *ev_l[e], *cl_l[e], q_l[e][0], q_l[e][1]]
                          for e in link_ids], dtype=float).reshape(len(link_ids), len(LINK_FEATURES))
    return {
        "node": ComponentFeatures(g.kind, "node", node_ids, NODE_FEATURES, node_vals),
        "link": ComponentFeatures(g.kind, "link", link_ids, LINK_FEATURES, link_vals),
    }


@dataclass(frozen=True)
class FeatureMatrix:
    ids: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray  # standardized, rows follow ids
    mean: np.ndarray
    std: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Z-score columns with population stddev; zero-variance columns become zeros."""
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    centered = x - mean
    # relative threshold: float noise in a constant column is not variance
    scale = np.maximum(np.abs(mean), 1.0)
    const = std <= 1e-12 * scale
    safe = np.where(const, 1.0, std)
    z = np.where(const, 0.0, centered / safe)
    return z, mean, np.where(const, 0.0, std)


def select_columns(features: ComponentFeatures, selected: Sequence[str] = DEFAULT_FEATURES) -> list[str]:
    cols = []
    for name in selected:
        if features.kind == "link":
            if name in LINK_COLUMNS:
                cols.extend(LINK_COLUMNS[name])
            elif name in LINK_FEATURES:
                cols.append(name)
            else:
                raise KeyError(f"unknown feature {name!r}")
        else:
            if name not in NODE_FEATURES:
                raise KeyError(f"unknown feature {name!r}")
            cols.append(name)
    return cols


def assemble_feature_matrix(features: ComponentFeatures,
                            selected: Sequence[str] = DEFAULT_FEATURES) -> FeatureMatrix:
    if not features.ids:
        raise ValueError(f"no {features.kind} components in {features.system} system")
    cols = select_columns(features, selected)
    raw = np.column_stack([features.column(c) for c in cols])
    z, mean, std = standardize(raw)
    return FeatureMatrix(features.ids, tuple(cols), z, mean, std)


def write_features_csv(features: ComponentFeatures, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component_id", *features.columns])
        for cid, row in zip(features.ids, features.values):
            w.writerow([cid, *(repr(float(v)) for v in row)])


def read_features_csv(path: str | Path) -> ComponentFeatures:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "component_id":
        raise ValueError(f"{path}: missing component_id header")
    header, body = rows[0], rows[1:]
    if not body:
        raise ValueError(f"{path}: no component rows")
    ids = tuple(r[0] for r in body)
    groups = {parse_component_id(c)[:2] for c in ids}
    if len(groups) != 1:
        raise ValueError(f"{path}: mixes component groups {sorted(groups)}")
    system, kind = groups.pop()
    values = np.array([[float(v) for v in r[1:]] for r in body], dtype=float)
    return ComponentFeatures(system, kind, ids, tuple(header[1:]), values)
