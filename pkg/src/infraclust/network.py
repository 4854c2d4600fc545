"""Interdependent network data model and the synthetic grid-town testbed.

Component identifiers are global strings of the form
``<system>:<node|link>:<local-id>``, e.g. ``water:link:x2y3-x3y3``.

Grid construction rule used by :func:`build_synthetic_testbed` for an
``nx`` by ``ny`` grid with spacing ``s`` meters:

* grid points sit at ``(i*s, j*s)`` for ``0 <= i < nx``, ``0 <= j < ny``;
  every system has one node per grid point (``nx*ny`` nodes each);
* transport links join every pair of horizontally or vertically adjacent
  grid points, giving ``nx*(ny-1) + ny*(nx-1)`` road links;
* water and power links start from a radial shortest-path forest grown
  from the system's sources over randomly weighted grid edges
  (``nx*ny - sources`` links), then a seeded fraction of the remaining
  grid edges is added back as loops (``water_loop_fraction`` and
  ``power_tie_fraction`` of the remaining edges, rounded to the nearest
  integer count); if the trees of a multi-source system are still
  apart, the lowest-index remaining edges that join them are added too;
* each water source is pump-powered by the power node at the same grid
  point (one ``pump-power-feed`` dependency per water source);
* one consumer per grid point draws water and power at that point.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np

FORMAT_NAME = "infraclust-network"
FORMAT_VERSION = 1


class SystemKind(str, Enum):
    POWER = "power"
    WATER = "water"
    TRANSPORT = "transport"


class Zone(str, Enum):
    CBD = "CBD"
    INDUSTRIAL = "industrial"
    RESIDENTIAL = "residential"


def component_id(system: str, kind: str, local_id: str) -> str:
    return f"{system}:{kind}:{local_id}"


def parse_component_id(cid: str) -> tuple[str, str, str]:
    """Split a global component id into ``(system, kind, local_id)``."""
    parts = cid.split(":", 2)
    if len(parts) != 3 or parts[1] not in ("node", "link"):
        raise ValueError(f"malformed component id: {cid!r}")
    return parts[0], parts[1], parts[2]


@dataclass(frozen=True)
class Node:
    id: str
    x: float
    y: float
    zone: str = Zone.RESIDENTIAL.value
    capacity: float = 1.0


@dataclass(frozen=True)
class Link:
    id: str
    u: str
    v: str
    capacity: float
    length: float

    @property
    def endpoints(self) -> tuple[str, str]:
        return self.u, self.v

    def other(self, node: str) -> str:
        return self.v if node == self.u else self.u


@dataclass(frozen=True)
class DependencyLink:
    from_system: str
    from_node: str
    to_system: str
    to_node: str
    kind: str = "pump-power-feed"

    @property
    def id(self) -> str:
        return f"dep:{self.from_node}->{self.to_node}"


@dataclass(frozen=True)
class Consumer:
    id: str
    attachments: dict[str, str]
    demand: dict[str, float]
    priority: float = 1.0


class SystemGraph:
    """One infrastructure system: nodes, undirected links and source nodes.

    Treated as immutable once built; the adjacency index is computed on
    construction.
    """

    def __init__(self, kind: str, nodes: Iterable[Node], links: Iterable[Link],
                 sources: Iterable[str]):
        self.kind = SystemKind(kind).value
        self.nodes: dict[str, Node] = {n.id: n for n in nodes}
        self.links: dict[str, Link] = {e.id: e for e in links}
        self.sources: tuple[str, ...] = tuple(sources)
        self._adj: dict[str, dict[str, str]] = {n: {} for n in self.nodes}
        for e in self.links.values():
            if e.u in self._adj and e.v in self._adj and e.u != e.v:
                self._adj[e.u][e.v] = e.id
                self._adj[e.v][e.u] = e.id

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SystemGraph):
            return NotImplemented
        return (self.kind == other.kind and self.nodes == other.nodes
                and self.links == other.links and self.sources == other.sources)

    def __repr__(self) -> str:
        return (f"SystemGraph({self.kind!r}, nodes={len(self.nodes)}, "
                f"links={len(self.links)}, sources={len(self.sources)})")

    @property
    def node_ids(self) -> list[str]:
        return sorted(self.nodes)

    @property
    def link_ids(self) -> list[str]:
        return sorted(self.links)

    def link_between(self, a: str, b: str) -> str | None:
        return self._adj.get(a, {}).get(b)

    def incident_links(self, node: str) -> list[str]:
        return sorted(self._adj[node].values())

    def adjacency(self) -> dict[str, dict[str, str]]:
        """Node -> {neighbor: link id}. Do not mutate."""
        return self._adj


def neighbors(g: SystemGraph, node: str) -> set[str]:
    if node not in g.nodes:
        raise KeyError(f"unknown node {node!r} in {g.kind} system")
    return set(g.adjacency()[node])


@dataclass(frozen=True)
class InfraNetwork:
    systems: dict[str, SystemGraph]
    dependencies: tuple[DependencyLink, ...] = ()
    consumers: tuple[Consumer, ...] = ()
    stream_polyline: tuple[tuple[float, float], ...] = ()

    def system(self, kind: str) -> SystemGraph:
        return self.systems[SystemKind(kind).value]

    def component_system(self, cid: str) -> str:
        return parse_component_id(cid)[0]

    def has_component(self, cid: str) -> bool:
        try:
            system, kind, _ = parse_component_id(cid)
        except ValueError:
            return False
        g = self.systems.get(system)
        if g is None:
            return False
        return cid in (g.nodes if kind == "node" else g.links)

    def component_midpoint(self, cid: str) -> tuple[float, float]:
        system, kind, _ = parse_component_id(cid)
        g = self.systems[system]
        if kind == "node":
            n = g.nodes[cid]
            return n.x, n.y
        e = g.links[cid]
        a, b = g.nodes[e.u], g.nodes[e.v]
        return (a.x + b.x) / 2.0, (a.y + b.y) / 2.0

    def component_zone(self, cid: str) -> str:
        """Zone of a node, or of a link's higher-priority endpoint."""
        system, kind, _ = parse_component_id(cid)
        g = self.systems[system]
        if kind == "node":
            return g.nodes[cid].zone
        e = g.links[cid]
        zones = [g.nodes[e.u].zone, g.nodes[e.v].zone]
        return min(zones, key=ZONE_PRIORITY.__getitem__)


ZONE_PRIORITY = {Zone.CBD.value: 0, Zone.INDUSTRIAL.value: 1, Zone.RESIDENTIAL.value: 2}


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _is_connected(g: SystemGraph) -> bool:
    if not g.nodes:
        return False
    adj = g.adjacency()
    start = next(iter(g.nodes))
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(g.nodes)


def validate_network(net: InfraNetwork) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems: list[str] = []
    seen_ids: set[str] = set()

    def claim(cid: str, system: str, kind: str) -> None:
        if cid in seen_ids:
            problems.append(f"duplicate component id {cid}")
        seen_ids.add(cid)
        try:
            s, k, _ = parse_component_id(cid)
        except ValueError:
            problems.append(f"malformed component id {cid}")
            return
        if s != system or k != kind:
            problems.append(f"component id {cid} does not match {system}:{kind}")

    for name, g in net.systems.items():
        if name != g.kind:
            problems.append(f"system key {name} holds a {g.kind} graph")
        for n in g.nodes.values():
            claim(n.id, g.kind, "node")
            if not n.capacity > 0:
                problems.append(f"node {n.id} has non-positive capacity")
        pairs: set[frozenset[str]] = set()
        for e in g.links.values():
            claim(e.id, g.kind, "link")
            if e.u not in g.nodes or e.v not in g.nodes:
                problems.append(f"link {e.id} references a missing endpoint")
            if e.u == e.v:
                problems.append(f"link {e.id} is a self-loop")
            pair = frozenset((e.u, e.v))
            if pair in pairs:
                problems.append(f"link {e.id} duplicates an existing node pair")
            pairs.add(pair)
            if not e.capacity > 0:
                problems.append(f"link {e.id} has non-positive capacity")
            if not e.length > 0:
                problems.append(f"link {e.id} has non-positive length")
        if not g.sources:
            problems.append(f"{g.kind} system has no source node")
        for s in g.sources:
            if s not in g.nodes:
                problems.append(f"{g.kind} source {s} is not a node")
        if g.nodes and not _is_connected(g):
            problems.append(f"{g.kind} system is not connected")

    # counting the ids above already covers cross-system duplicates
    for dep in net.dependencies:
        if dep.from_system == dep.to_system:
            problems.append(f"dependency {dep.id} stays within {dep.from_system}")
        for system, node in ((dep.from_system, dep.from_node), (dep.to_system, dep.to_node)):
            g = net.systems.get(system)
            if g is None or node not in g.nodes:
                problems.append(f"dependency {dep.id} references missing node {system}/{node}")

    consumer_ids: set[str] = set()
    for c in net.consumers:
        if c.id in consumer_ids:
            problems.append(f"duplicate consumer id {c.id}")
        consumer_ids.add(c.id)
        if not c.attachments:
            problems.append(f"consumer {c.id} has no attachment")
        for system, node in c.attachments.items():
            g = net.systems.get(system)
            if g is None or node not in g.nodes:
                problems.append(f"consumer {c.id} attached to missing node {system}/{node}")
        for system, d in c.demand.items():
            if not (math.isfinite(d) and d >= 0):
                problems.append(f"consumer {c.id} has invalid {system} demand {d}")
    return problems


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def network_to_dict(net: InfraNetwork) -> dict:
    systems = {}
    for name in sorted(net.systems):
        g = net.systems[name]
        systems[name] = {
            "kind": g.kind,
            "nodes": [
                {"id": n.id, "x": n.x, "y": n.y, "zone": n.zone, "capacity": n.capacity}
                for n in (g.nodes[k] for k in sorted(g.nodes))
            ],
            "links": [
                {"id": e.id, "from": e.u, "to": e.v, "capacity": e.capacity, "length": e.length}
                for e in (g.links[k] for k in sorted(g.links))
            ],
            "sources": list(g.sources),
        }
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "systems": systems,
        "dependencies": [
            {"from": {"system": d.from_system, "node": d.from_node},
             "to": {"system": d.to_system, "node": d.to_node},
             "kind": d.kind}
            for d in net.dependencies
        ],
        "consumers": [
            {"id": c.id, "attachments": dict(sorted(c.attachments.items())),
             "demand": dict(sorted(c.demand.items())), "priority": c.priority}
            for c in net.consumers
        ],
        "stream_polyline": [list(p) for p in net.stream_polyline],
    }


def network_from_dict(data: dict) -> InfraNetwork:
    if data.get("format", FORMAT_NAME) != FORMAT_NAME:
        raise ValueError(f"not a network document: format={data.get('format')!r}")
    if int(data.get("version", FORMAT_VERSION)) > FORMAT_VERSION:
        raise ValueError(f"unsupported network format version {data['version']}")
    systems = {}
    for name, s in data["systems"].items():
        nodes = [Node(n["id"], float(n["x"]), float(n["y"]), n.get("zone", Zone.RESIDENTIAL.value),
                      float(n.get("capacity", 1.0))) for n in s["nodes"]]
        links = [Link(e["id"], e["from"], e["to"], float(e["capacity"]), float(e["length"]))
                 for e in s["links"]]
        systems[name] = SystemGraph(s.get("kind", name), nodes, links, s["sources"])
    deps = tuple(
        DependencyLink(d["from"]["system"], d["from"]["node"], d["to"]["system"], d["to"]["node"],
                       d.get("kind", "pump-power-feed"))
        for d in data.get("dependencies", [])
    )
    consumers = tuple(
        Consumer(c["id"], dict(c["attachments"]), {k: float(v) for k, v in c["demand"].items()},
                 float(c.get("priority", 1.0)))
        for c in data.get("consumers", [])
    )
    stream = tuple((float(p[0]), float(p[1])) for p in data.get("stream_polyline", []))
    return InfraNetwork(systems, deps, consumers, stream)


def dumps_network(net: InfraNetwork) -> str:
    return json.dumps(network_to_dict(net), indent=1, sort_keys=False)


def save_network(net: InfraNetwork, path: str | Path) -> None:
    Path(path).write_text(dumps_network(net) + "\n")


def load_network(path: str | Path) -> InfraNetwork:
    return network_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# synthetic testbed
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestbedConfig:
    """Parameters of the grid-town generator. Distances in meters."""

    __test__ = False  # keep pytest from collecting this as a test class

    nx: int = 8
    ny: int = 8
    spacing: float = 250.0
    water_sources: int = 1
    power_sources: int = 2
    water_loop_fraction: float = 0.15
    power_tie_fraction: float = 0.04
    capacity_margin: float = 1.5
    source_margin: float = 1.3
    demand_by_zone: dict = field(default_factory=lambda: {
        "water": {"CBD": 1.5, "industrial": 2.5, "residential": 1.0},
        "power": {"CBD": 2.0, "industrial": 3.0, "residential": 1.0},
    })
    demand_jitter: float = 0.5
    stream_vertices: int = 6
    stream_meander: float = 0.6

    @classmethod
    def from_dict(cls, d: dict | None) -> "TestbedConfig":
        return cls(**(d or {}))


def _local(i: int, j: int) -> str:
    return f"x{i}y{j}"


def _zone_of(i: int, j: int, nx: int, ny: int) -> str:
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    if abs(i - cx) <= nx / 6.0 + 0.5 and abs(j - cy) <= ny / 6.0 + 0.5:
        return Zone.CBD.value
    if i > cx and j < cy:
        return Zone.INDUSTRIAL.value
    return Zone.RESIDENTIAL.value


def _grid_edges(nx: int, ny: int) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    edges = []
    for j in range(ny):
        for i in range(nx):
            if i + 1 < nx:
                edges.append(((i, j), (i + 1, j)))
            if j + 1 < ny:
                edges.append(((i, j), (i, j + 1)))
    return edges


def _radial_forest(nx: int, ny: int, sources: list[tuple[int, int]], rng: np.random.Generator):
    """Multi-source shortest-path forest over randomly weighted grid edges."""
    edges = _grid_edges(nx, ny)
    weights = rng.uniform(1.0, 2.0, size=len(edges))
    adj: dict[tuple[int, int], list[tuple[float, tuple[int, int], int]]] = {}
    for k, (a, b) in enumerate(edges):
        adj.setdefault(a, []).append((weights[k], b, k))
        adj.setdefault(b, []).append((weights[k], a, k))
    dist = {s: 0.0 for s in sources}
    parent: dict[tuple[int, int], int] = {}
    heap = [(0.0, s) for s in sorted(sources)]
    heapq.heapify(heap)
    done: set[tuple[int, int]] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for w, v, k in sorted(adj[u], key=lambda t: t[2]):
            nd = d + w
            if v not in done and nd < dist.get(v, math.inf):
                dist[v] = nd
                parent[v] = k
                heapq.heappush(heap, (nd, v))
    tree = sorted(set(parent.values()))
    rest = [k for k in range(len(edges)) if k not in set(tree)]
    return edges, tree, rest, parent


def _joining_edges(edges, used: list[int], rest: list[int], points) -> list[int]:
    """Lowest-index unused edges that join the trees of a multi-source forest."""
    root = {p: p for p in points}

    def find(p):
        while root[p] != p:
            root[p] = root[root[p]]
            p = root[p]
        return p

    for k in used:
        a, b = edges[k]
        root[find(a)] = find(b)
    added = []
    taken = set(used)
    for k in rest:
        if k in taken:
            continue
        a, b = edges[k]
        ra, rb = find(a), find(b)
        if ra != rb:
            root[ra] = rb
            added.append(k)
    return added


def _polyline_stream(cfg: TestbedConfig, rng: np.random.Generator) -> tuple[tuple[float, float], ...]:
    w = (cfg.nx - 1) * cfg.spacing
    h = (cfg.ny - 1) * cfg.spacing
    # runs corner to corner, south-west to north-east, with lateral meander
    m = max(2, cfg.stream_vertices)
    pts = []
    for k in range(m):
        t = k / (m - 1)
        bx, by = -0.05 * w + t * 1.1 * w, -0.05 * h + t * 1.1 * h
        off = 0.0 if k in (0, m - 1) else rng.uniform(-1, 1) * cfg.stream_meander * cfg.spacing
        # perpendicular to the diagonal
        nrm = math.hypot(w, h) or 1.0
        pts.append((round(bx - off * h / nrm, 3), round(by + off * w / nrm, 3)))
    return tuple(pts)


def build_synthetic_testbed(cfg: TestbedConfig | None = None, seed: int = 0) -> InfraNetwork:
    """Generate a deterministic power/water/transport grid town."""
    cfg = cfg or TestbedConfig()
    if cfg.nx < 2 or cfg.ny < 2:
        raise ValueError(f"testbed grid must be at least 2x2, got {cfg.nx}x{cfg.ny}")
    rng = np.random.default_rng(seed)
    nx_, ny_ = cfg.nx, cfg.ny
    points = [(i, j) for j in range(ny_) for i in range(nx_)]
    zone = {p: _zone_of(p[0], p[1], nx_, ny_) for p in points}

    # consumer demands, one consumer per grid point
    jitter = 1.0 + cfg.demand_jitter * rng.uniform(-1.0, 1.0, size=(len(points), 2))
    demand = {}
    for k, p in enumerate(points):
        demand[p] = {
            "water": float(round(cfg.demand_by_zone["water"][zone[p]] * jitter[k, 0], 4)),
            "power": float(round(cfg.demand_by_zone["power"][zone[p]] * jitter[k, 1], 4)),
        }

    def pick_sources(count: int, avoid: set) -> list[tuple[int, int]]:
        # sources go near the periphery, away from the stream diagonal
        cands = [p for p in points if p not in avoid
                 and (p[0] in (0, nx_ - 1) or p[1] in (0, ny_ - 1))]
        cands.sort(key=lambda p: (-abs(p[0] / max(nx_ - 1, 1) - p[1] / max(ny_ - 1, 1)), p))
        pool = cands[: max(count * 3, count)]
        idx = rng.choice(len(pool), size=min(count, len(pool)), replace=False)
        return sorted(pool[int(i)] for i in idx)

    systems: dict[str, SystemGraph] = {}
    src_points: dict[str, list[tuple[int, int]]] = {}
    src_points["power"] = pick_sources(max(1, cfg.power_sources), set())
    src_points["water"] = pick_sources(max(1, cfg.water_sources), set(src_points["power"]))

    for sysname, loop_frac in (("water", cfg.water_loop_fraction), ("power", cfg.power_tie_fraction)):
        sources = src_points[sysname]
        edges, tree, rest, parent = _radial_forest(nx_, ny_, sources, rng)
        n_extra = int(round(loop_frac * len(rest)))
        extra = sorted(int(k) for k in rng.choice(rest, size=n_extra, replace=False)) if n_extra else []
        extra = sorted(extra + _joining_edges(edges, tree + extra, rest, points))
        # tree flows size the link capacities; loops get the smallest tree capacity
        sub_demand = {p: demand[p][sysname] for p in points}
        children: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for child, k in parent.items():
            a, b = edges[k]
            par = a if b == child else b
            children.setdefault(par, []).append(child)

        def subtotal(p):
            total = sub_demand[p]
            stack = list(children.get(p, []))
            while stack:
                q = stack.pop()
                total += sub_demand[q]
                stack.extend(children.get(q, []))
            return total

        link_flow = {k: subtotal(child) for child, k in parent.items()}
        min_cap = min(link_flow.values()) if link_flow else 1.0
        total_demand = sum(sub_demand.values())
        # sources supply their own tree's demand with margin; other nodes get a non-binding throughput
        src_cap = {s: subtotal(s) * cfg.source_margin for s in sources}
        nodes = [Node(component_id(sysname, "node", _local(*p)), p[0] * cfg.spacing, p[1] * cfg.spacing,
                      zone[p], float(round(src_cap.get(p, total_demand * cfg.capacity_margin), 4)))
                 for p in points]
        links = []
        for k in sorted(set(tree) | set(extra)):
            a, b = edges[k]
            cap = link_flow.get(k, min_cap) * cfg.capacity_margin
            lid = component_id(sysname, "link", f"{_local(*a)}-{_local(*b)}")
            links.append(Link(lid, component_id(sysname, "node", _local(*a)),
                              component_id(sysname, "node", _local(*b)), float(round(cap, 4)), float(cfg.spacing)))
        systems[sysname] = SystemGraph(sysname, nodes, links,
                                       [component_id(sysname, "node", _local(*s)) for s in sources])

    # transport: full grid
    t_nodes = [Node(component_id("transport", "node", _local(*p)), p[0] * cfg.spacing, p[1] * cfg.spacing,
                    zone[p], 1800.0) for p in points]
    t_links = [Link(component_id("transport", "link", f"{_local(*a)}-{_local(*b)}"),
                    component_id("transport", "node", _local(*a)),
                    component_id("transport", "node", _local(*b)), 1800.0, cfg.spacing)
               for a, b in _grid_edges(nx_, ny_)]
    depot = min(points, key=lambda p: (abs(p[0] - (nx_ - 1) / 2) + abs(p[1] - (ny_ - 1) / 2), p))
    systems["transport"] = SystemGraph("transport", t_nodes, t_links,
                                       [component_id("transport", "node", _local(*depot))])

    deps = tuple(
        DependencyLink("power", component_id("power", "node", _local(*s)),
                       "water", component_id("water", "node", _local(*s)), "pump-power-feed")
        for s in src_points["water"]
    )
    consumers = tuple(
        Consumer(f"consumer:{_local(*p)}",
                 {"water": component_id("water", "node", _local(*p)),
                  "power": component_id("power", "node", _local(*p))},
                 dict(demand[p]), 1.0)
        for p in points
    )
    stream = _polyline_stream(cfg, rng)
    return InfraNetwork(dict(sorted(systems.items())), deps, consumers, stream)
