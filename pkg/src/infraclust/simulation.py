"""Surrogate interdependent flow model and event-driven recovery simulation.

Supply to consumers is a capacitated max-flow from each system's sources
to its consumers; shortfalls are rationed by proportional progressive
filling. Internal time is in hours, so equivalent outage hours come out
of the step-function integral directly.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from ._maxflow import FlowNetwork
from .features import betweenness_centrality
from .hazard import Scenario
from .network import ZONE_PRIORITY, InfraNetwork, SystemGraph, parse_component_id

log = logging.getLogger(__name__)

STRATEGIES = ("betweenness", "maxflow", "zone")
ISOLATION_DELAY_H = 10.0 / 60.0
DEFAULT_WEIGHTS = {"water": 0.5, "power": 0.5}
_INT_LIMIT = 2 ** 30
_TOL = 1e-9


# ---------------------------------------------------------------------------
# supply
# ---------------------------------------------------------------------------

@dataclass
class SupplyState:
    """Consumer supply snapshot. ``supply[system][consumer]`` in resource-units/hour."""

    supply: dict[str, dict[str, float]]
    baseline: dict[str, dict[str, float]]
    link_flows: dict[str, dict[str, float]] = field(default_factory=dict)
    disabled_nodes: dict[str, set[str]] = field(default_factory=dict)


class _SystemFlow:
    """Fixed-pattern integer flow network for one system.

    Node order: system nodes (sorted ids), super-source, one pseudo-node per
    consumer, super-sink. Failures zero arc capacities; the sparsity
    pattern never changes.
    """

    def __init__(self, g: SystemGraph, consumers: Sequence[tuple[str, str, float]]):
        self.g = g
        self.node_ids = g.node_ids
        self.index = {v: k for k, v in enumerate(self.node_ids)}
        n = len(self.node_ids)
        self.consumers = [c for c in consumers if c[2] > 0]
        self.consumer_ids = [c[0] for c in self.consumers]
        self.demand = np.array([c[2] for c in self.consumers], dtype=float)
        m = len(self.consumers)
        self.src, self.sink = n, n + m + 1
        self.size = n + m + 2
        total = float(self.demand.sum()) if m else 0.0

        rows, cols, caps, self.link_arc = [], [], [], {}
        self.link_ids = g.link_ids
        for lid in self.link_ids:
            e = g.links[lid]
            u, v = self.index[e.u], self.index[e.v]
            # capacity above total demand never binds; clipping keeps integers small
            cap = min(e.capacity, total + 1.0)
            self.link_arc[lid] = (len(caps), len(caps) + 1)
            rows += [u, v]
            cols += [v, u]
            caps += [cap, cap]
        self.source_arc = {}
        for s in g.sources:
            self.source_arc[s] = len(caps)
            rows.append(self.src)
            cols.append(self.index[s])
            caps.append(min(g.nodes[s].capacity, total + 1.0))
        self.consumer_arc = []
        self.consumer_node = []
        for k, (cid, node, d) in enumerate(self.consumers):
            self.consumer_arc.append(len(caps))
            self.consumer_node.append(self.index[node])
            rows += [self.index[node], n + 1 + k]
            cols += [n + 1 + k, self.sink]
            caps += [d, d]
        self.consumer_arc = np.array(self.consumer_arc, dtype=int)
        self.sink_arc = self.consumer_arc + 1
        self.base_caps = np.array(caps, dtype=float)
        self.rows = np.array(rows, dtype=np.int32)
        self.cols = np.array(cols, dtype=np.int32)
        bound = max(float(self.base_caps.sum()) if len(caps) else 1.0, 1.0)
        # power-of-two scale keeps the integer network well inside int64
        self.scale = float(min(2.0 ** 20, 2.0 ** math.floor(math.log2(_INT_LIMIT / bound))))
        self.network = FlowNetwork(self.size, self.rows, self.cols)
        self._cache: dict[tuple[frozenset, frozenset], tuple[np.ndarray, dict[str, float]]] = {}

    def _caps_for(self, dead_links: Iterable[str], dead_nodes: Iterable[str]) -> np.ndarray:
        caps = self.base_caps.copy()
        dead_nodes = set(dead_nodes)
        for lid in dead_links:
            a, b = self.link_arc[lid]
            caps[a] = caps[b] = 0.0
        for node in dead_nodes:
            for lid in self.g.incident_links(node):
                a, b = self.link_arc[lid]
                caps[a] = caps[b] = 0.0
            if node in self.source_arc:
                caps[self.source_arc[node]] = 0.0
        if dead_nodes:
            for k, node in enumerate(self.consumer_node):
                if self.node_ids[node] in dead_nodes:
                    caps[self.consumer_arc[k]] = caps[self.sink_arc[k]] = 0.0
        return caps

    def _solve(self, caps: np.ndarray):
        icaps = np.floor(caps * self.scale).astype(np.int64)
        value, flows, side = self.network.max_flow(self.src, self.sink, icaps)
        return value, flows, side, icaps

    def reachable_from_sources(self, caps: np.ndarray) -> np.ndarray:
        """Boolean mask over system nodes connected to a live source."""
        n = len(self.node_ids)
        c = caps.copy()
        if len(self.consumer_arc):
            c[self.consumer_arc] = 0.0
        mask = self.network.reachable(self.src, np.floor(c * self.scale).astype(np.int64))
        return mask[:n]

    def solve(self, dead_links: Iterable[str] = (), dead_nodes: Iterable[str] = ()):
        """Return (per-consumer supply array, link net flows)."""
        key = (frozenset(dead_links), frozenset(dead_nodes))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        caps = self._caps_for(key[0], key[1])
        value, f, _, icaps = self._solve(caps)
        if value < int(icaps[self.sink_arc].sum()):
            f, icaps = self._ration(caps)
        self._check(f, icaps)
        f = f.astype(float)
        supply = f[self.consumer_arc] / self.scale
        flows = {lid: (f[self.link_arc[lid][0]] - f[self.link_arc[lid][1]]) / self.scale
                 for lid in self.link_ids}
        out = (supply, flows)
        if len(self._cache) > 20000:
            self._cache.clear()
        self._cache[key] = out
        return out

    def _ration(self, caps: np.ndarray):
        """Proportional progressive filling among consumers.

        Each round finds the largest common fraction of demand all active
        consumers can receive, then freezes the ones whose attachment node
        sits behind a saturated cut at any higher level.
        """
        m = len(self.consumers)
        assigned = np.zeros(m)
        active = np.ones(m, dtype=bool)
        fed = self.reachable_from_sources(caps)
        node_of = np.asarray(self.consumer_node, dtype=int)
        active &= fed[node_of] & (caps[self.consumer_arc] > 0)
        demand = self.demand

        def trial(alpha: float):
            c = caps.copy()
            amount = np.where(active, alpha * demand, assigned)
            c[self.consumer_arc] = amount
            c[self.sink_arc] = amount
            value, f, side, ic = self._solve(c)
            return value >= int(ic[self.sink_arc].sum()), side

        while active.any():
            if trial(1.0)[0]:
                assigned[active] = demand[active]
                break
            lo, hi = 0.0, 1.0
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if trial(mid)[0]:
                    lo = mid
                else:
                    hi = mid
            _, side = trial(hi)
            stuck = active & ~side[node_of]
            if not stuck.any():
                stuck = active.copy()
            assigned[stuck] = lo * demand[stuck]
            active &= ~stuck
        c = caps.copy()
        c[self.consumer_arc] = assigned
        c[self.sink_arc] = assigned
        _, f, _, icaps = self._solve(c)
        return f, icaps

    def _check(self, f: np.ndarray, icaps: np.ndarray) -> None:
        # integer flows, so capacity and conservation hold exactly
        if np.any(f < 0) or np.any(f > icaps):
            raise AssertionError("arc flow outside [0, capacity]")
        net = np.zeros(self.size, dtype=np.int64)
        np.add.at(net, self.cols, f)
        np.subtract.at(net, self.rows, f)
        inner = np.ones(self.size, dtype=bool)
        inner[[self.src, self.sink]] = False
        if np.any(net[inner] != 0):
            raise AssertionError("flow conservation violated")


class SupplyModel:
    """Steady-state supply for every system of a network, with dependency handling."""

    def __init__(self, net: InfraNetwork):
        self.net = net
        self.flows: dict[str, _SystemFlow] = {}
        for name, g in net.systems.items():
            consumers = [(c.id, c.attachments[name], float(c.demand.get(name, 0.0)))
                         for c in net.consumers if name in c.attachments]
            self.flows[name] = _SystemFlow(g, consumers)
        self.order = self._dependency_order()
        self._baseline = None

    def _dependency_order(self) -> list[str]:
        systems = sorted(self.net.systems)
        deps = {s: set() for s in systems}
        for d in self.net.dependencies:
            deps[d.to_system].add(d.from_system)
        order: list[str] = []
        pending = set(systems)
        while pending:
            ready = sorted(s for s in pending if deps[s] <= set(order))
            if not ready:
                raise ValueError(f"cyclic system dependencies among {sorted(pending)}")
            order.extend(ready)
            pending -= set(ready)
        return order

    def snapshot(self, out_of_service: Iterable[str] = ()) -> SupplyState:
        dead_links: dict[str, set[str]] = {s: set() for s in self.net.systems}
        dead_nodes: dict[str, set[str]] = {s: set() for s in self.net.systems}
        for cid in out_of_service:
            system, kind, _ = parse_component_id(cid)
            (dead_links if kind == "link" else dead_nodes)[system].add(cid)
        supply, flows, disabled = {}, {}, {}
        energized: dict[str, np.ndarray] = {}
        for name in self.order:
            model = self.flows[name]
            # a dependent node stops working when its feed node is cut off from every source
            off = set()
            for d in self.net.dependencies:
                if d.to_system != name:
                    continue
                feed = self.flows[d.from_system]
                mask = energized.get(d.from_system)
                if mask is None or not mask[feed.index[d.from_node]]:
                    off.add(d.to_node)
            disabled[name] = off
            nodes_down = dead_nodes[name] | off
            s, q = model.solve(dead_links[name], nodes_down)
            supply[name] = dict(zip(model.consumer_ids, s.tolist()))
            flows[name] = q
            energized[name] = model.reachable_from_sources(model._caps_for(dead_links[name], nodes_down))
        baseline = self.baseline().supply if self._baseline is not None else supply
        return SupplyState(supply, baseline, flows, disabled)

    def baseline(self) -> SupplyState:
        if self._baseline is None:
            self._baseline = self.snapshot(())
        return self._baseline


def steady_supply(net: InfraNetwork, failed_components: Iterable[str] = (),
                  model: SupplyModel | None = None) -> SupplyState:
    """Consumer supply with the given components removed."""
    failed = list(failed_components)
    for cid in failed:
        if not net.has_component(cid):
            raise KeyError(f"unknown component {cid}")
    model = model or SupplyModel(net)
    model.baseline()
    return model.snapshot(failed)


def baseline_flows(net: InfraNetwork, system: str, model: SupplyModel | None = None) -> dict[str, float]:
    """Normal-operation link flows, routed at minimum total length.

    The baseline consumer supply is fixed by max-flow; the link flows that
    deliver it are chosen by a min-cost flow (cost = link length) so that
    resources take short paths, as a loss-minimizing simulator would.
    Transport carries no consumer resource; its flow is a traffic proxy
    of link betweenness times capacity.
    """
    g = net.system(system)
    model = model or SupplyModel(net)
    base = model.baseline()
    supply = base.supply[system]
    if not supply or sum(supply.values()) <= 0:
        _, link_bc = betweenness_centrality(g)
        return {lid: link_bc[lid] * g.links[lid].capacity for lid in g.link_ids}
    ids = g.node_ids
    index = {v: k for k, v in enumerate(ids)}
    links = g.link_ids
    n, m = len(ids), len(links)
    sources = list(g.sources)
    # variables: forward flow per link, backward flow per link, injection per source
    nvar = 2 * m + len(sources)
    cost = np.zeros(nvar)
    a_eq = np.zeros((n, nvar))
    for k, lid in enumerate(links):
        e = g.links[lid]
        cost[k] = cost[m + k] = e.length
        u, v = index[e.u], index[e.v]
        a_eq[u, k] -= 1
        a_eq[v, k] += 1
        a_eq[v, m + k] -= 1
        a_eq[u, m + k] += 1
    caps = [(0, g.links[lid].capacity) for lid in links]
    bounds = caps + caps
    for j, s in enumerate(sources):
        a_eq[index[s], 2 * m + j] += 1
        bounds.append((0, g.nodes[s].capacity))
    b_eq = np.zeros(n)
    for c in net.consumers:
        node = c.attachments.get(system)
        if node is not None:
            b_eq[index[node]] += supply.get(c.id, 0.0)
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if not res.success:
        log.warning("min-cost routing failed for %s (%s); using max-flow flows", system, res.message)
        return dict(base.link_flows[system])
    x = res.x
    return {lid: float(x[k] - x[m + k]) for k, lid in enumerate(links)}


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def pcs(supply: Mapping[str, float], baseline: Mapping[str, float]) -> float:
    """Delivered over baseline supply, summed over consumers with positive baseline."""
    num = den = 0.0
    for cid, base in baseline.items():
        if base > 0:
            num += supply.get(cid, 0.0)
            den += base
    if den <= 0:
        raise ValueError("baseline supply is zero for every consumer")
    return min(1.0, max(0.0, num / den))


def eoh(series: Sequence[tuple[float, float]], t0: float, tmax: float) -> float:
    """Exact integral of (1 - PCS) over a right-continuous step function, in hours.

    ``series`` holds (time, value) breakpoints; each value holds until the
    next breakpoint. Service is full before the first breakpoint.
    """
    if tmax <= t0:
        raise ValueError(f"tmax ({tmax}) must exceed t0 ({t0})")
    total = 0.0
    pts = sorted(series, key=lambda p: p[0])
    for k, (t, v) in enumerate(pts):
        end = pts[k + 1][0] if k + 1 < len(pts) else tmax
        a, b = max(t, t0), min(end, tmax)
        if b > a:
            total += (1.0 - v) * (b - a)
    return total


def weighted_eoh(gammas: Mapping[str, float], weights: Mapping[str, float]) -> float:
    for k, w in weights.items():
        if w < 0:
            raise ValueError(f"negative weight for {k}")
    return float(sum(w * gammas.get(k, 0.0) for k, w in weights.items()))


# ---------------------------------------------------------------------------
# recovery simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrewConfig:
    speed_kmh: float = 20.0
    repair_hours: dict = field(default_factory=lambda: {"water": 8.0, "power": 4.0, "transport": 12.0})
    crews: dict = field(default_factory=lambda: {"water": 1, "power": 1, "transport": 1})
    # system -> transport node id; defaults to the road node nearest the system's first source
    home: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict | None) -> "CrewConfig":
        d = dict(d or {})
        base = cls()
        return cls(
            speed_kmh=float(d.get("speed_kmh", base.speed_kmh)),
            repair_hours={**base.repair_hours, **d.get("repair_hours", {})},
            crews={**base.crews, **d.get("crews", {})},
            home=dict(d.get("home", {})),
        )


@dataclass
class RecoveryTask:
    component: str
    start: float
    duration: float
    crew: int
    travel: float = 0.0
    teleported: bool = False


@dataclass
class SimulationResult:
    scenario_id: str
    strategy: str
    pcs: dict[str, list[tuple[float, float]]]
    gamma: dict[str, float]
    weighted_gamma: float
    t0: float
    tmax: float
    plan: dict[str, list[RecoveryTask]]
    events: list[dict]

    def pcs_at(self, system: str, t: float) -> float:
        value = 1.0
        for tt, v in self.pcs[system]:
            if tt <= t:
                value = v
            else:
                break
        return value


def _link_priority_betweenness(g: SystemGraph) -> dict[str, float]:
    node_bc, link_bc = betweenness_centrality(g)
    return {**link_bc, **node_bc}


class Simulator:
    """Runs recovery simulations against one immutable network.

    Holds the supply model, strategy rankings and road-graph helpers so
    repeated runs share their caches.
    """

    def __init__(self, net: InfraNetwork, crew: CrewConfig | None = None):
        self.net = net
        self.crew = crew or CrewConfig()
        self.supply = SupplyModel(net)
        self.base = self.supply.baseline()
        self.tracked = sorted(s for s, sup in self.base.supply.items()
                              if sup and sum(sup.values()) > 0)
        self._betweenness = {s: _link_priority_betweenness(g) for s, g in net.systems.items()}
        self._flow = {}
        for s, g in net.systems.items():
            q = baseline_flows(net, s, self.supply)
            node_q = {v: sum(abs(q[e]) for e in g.incident_links(v)) for v in g.node_ids}
            self._flow[s] = {**{k: abs(v) for k, v in q.items()}, **node_q}
        self.road = net.systems.get("transport")
        self._road_nodes = self.road.node_ids if self.road else []
        self._road_xy = np.array([[self.road.nodes[v].x, self.road.nodes[v].y] for v in self._road_nodes]) \
            if self.road else np.zeros((0, 2))
        self._access_cache: dict[str, tuple[str, ...]] = {}

    # -- strategy ---------------------------------------------------------
    def priority_key(self, strategy: str, cid: str):
        system = parse_component_id(cid)[0]
        if strategy == "betweenness":
            return (-self._betweenness[system][cid], cid)
        if strategy == "maxflow":
            return (-self._flow[system][cid], cid)
        if strategy == "zone":
            return (ZONE_PRIORITY[self.net.component_zone(cid)], cid)
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")

    def repair_order(self, strategy: str, components: Iterable[str]) -> list[str]:
        return sorted(components, key=lambda c: self.priority_key(strategy, c))

    # -- roads --------------------------------------------------------------
    def nearest_road_node(self, x: float, y: float) -> str:
        d = np.hypot(self._road_xy[:, 0] - x, self._road_xy[:, 1] - y)
        best = np.flatnonzero(d <= d.min() + 1e-9)
        return min(self._road_nodes[k] for k in best)

    def access_nodes(self, cid: str) -> tuple[str, ...]:
        hit = self._access_cache.get(cid)
        if hit is not None:
            return hit
        system, kind, _ = parse_component_id(cid)
        g = self.net.systems[system]
        if system == "transport":
            out = (g.links[cid].u, g.links[cid].v) if kind == "link" else (cid,)
        elif kind == "link":
            e = g.links[cid]
            out = tuple(sorted({self.nearest_road_node(g.nodes[v].x, g.nodes[v].y) for v in (e.u, e.v)}))
        else:
            n = g.nodes[cid]
            out = (self.nearest_road_node(n.x, n.y),)
        self._access_cache[cid] = out
        return out

    def home_node(self, system: str) -> str:
        if system in self.crew.home:
            return self.crew.home[system]
        g = self.net.systems[system]
        if system == "transport":
            return g.sources[0]
        s = g.nodes[g.sources[0]]
        return self.nearest_road_node(s.x, s.y)

    def _road_distances(self, origin: str, closed: set[str]) -> dict[str, float]:
        """Dijkstra over open road links, in meters."""
        adj = self.road.adjacency()
        dist = {origin: 0.0}
        heap = [(0.0, origin)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist.get(u, math.inf):
                continue
            for v, lid in adj[u].items():
                if lid in closed:
                    continue
                nd = d + self.road.links[lid].length
                if nd < dist.get(v, math.inf):
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        return dist

    # -- main loop ----------------------------------------------------------
    def run(self, scenario: Scenario, strategy: str, weights: Mapping[str, float] | None = None,
            tmax: float | None = None, t0: float = 0.0) -> SimulationResult:
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
        weights = dict(DEFAULT_WEIGHTS if weights is None else weights)
        net = self.net
        failed_all = scenario.failed_components
        for cid in failed_all:
            if not net.has_component(cid):
                raise KeyError(f"scenario {scenario.id} fails unknown component {cid}")
        events: list[dict] = []
        failed = {s: set(scenario.failures_in(s)) for s in net.systems}
        held: dict[str, set[str]] = {s: set() for s in net.systems}  # repaired, waiting to reopen
        speed = self.crew.speed_kmh * 1000.0  # meters per hour
        iso_time = t0 + ISOLATION_DELAY_H

        series: dict[str, list[tuple[float, float]]] = {s: [] for s in self.tracked}

        def out_of_service() -> set[str]:
            out = set()
            for s in net.systems:
                out |= failed[s] | held[s]
            return out

        def record(t: float) -> None:
            snap = self.supply.snapshot(out_of_service())
            for s in self.tracked:
                base = self.base.supply[s]
                for cid, v in snap.supply[s].items():
                    if v < -_TOL or v > base.get(cid, 0.0) + _TOL:
                        raise AssertionError(f"supply bound violated for {cid} in {s}: {v}")
                value = pcs(snap.supply[s], base)
                ser = series[s]
                if ser and abs(ser[-1][0] - t) < 1e-12:
                    ser[-1] = (t, value)
                elif not ser or abs(ser[-1][1] - value) > 1e-12:
                    ser.append((t, value))

        for s in self.tracked:
            series[s].append((t0, 1.0))
        events.append({"t": t0, "event": "failure", "components": failed_all})
        record(t0)
        if failed.get("water"):
            events.append({"t": iso_time, "event": "isolation", "system": "water",
                           "components": sorted(failed["water"])})

        # crew state
        queues = {s: self.repair_order(strategy, failed[s]) for s in net.systems}
        plan: dict[str, list[RecoveryTask]] = {s: [] for s in net.systems}
        crews = []  # (system, index)
        crew_loc: dict[tuple[str, int], str] = {}
        for s in sorted(net.systems):
            for k in range(int(self.crew.crews.get(s, 1))):
                crews.append((s, k))
                crew_loc[(s, k)] = self.home_node(s)
        idle = set(crews)
        in_progress: dict[tuple[str, int], str] = {}
        heap: list[tuple[float, int, str, tuple[str, int]]] = []
        seq = 0

        def closed_roads() -> set[str]:
            return failed.get("transport", set()) | held.get("transport", set())

        def dispatch(t: float) -> None:
            nonlocal seq
            for crew_id in sorted(idle):
                s = crew_id[0]
                pending = [c for c in queues[s] if c not in in_progress.values()]
                if not pending:
                    continue
                dist = self._road_distances(crew_loc[crew_id], closed_roads()) if self.road else {}
                choice = None
                for cid in pending:
                    reach = [(dist[a], a) for a in self.access_nodes(cid) if a in dist]
                    if reach:
                        d, node = min(reach)
                        choice = (cid, d, node, False)
                        break
                if choice is None:
                    road_busy = any(c[0] == "transport" for c in in_progress) or bool(
                        [c for c in queues.get("transport", []) if c not in in_progress.values()])
                    if s != "transport" and road_busy:
                        continue  # wait for a road to reopen
                    cid = pending[0]
                    node = self.access_nodes(cid)[0]
                    a = self.road.nodes[crew_loc[crew_id]]
                    b = self.road.nodes[node]
                    choice = (cid, math.hypot(a.x - b.x, a.y - b.y), node, True)
                    events.append({"t": t, "event": "teleport", "system": s, "component": cid,
                                   "detail": "no open road route; straight-line fallback"})
                cid, d, node, tele = choice
                travel = d / speed
                start = t + travel
                if s == "water":
                    start = max(start, iso_time)
                duration = float(self.crew.repair_hours.get(s, 8.0))
                plan[s].append(RecoveryTask(cid, start, duration, crew_id[1], travel, tele))
                events.append({"t": start, "event": "repair_start", "system": s, "component": cid})
                in_progress[crew_id] = cid
                crew_loc[crew_id] = node
                idle.discard(crew_id)
                heapq.heappush(heap, (start + duration, seq, cid, crew_id))
                seq += 1

        dispatch(t0)
        last = t0
        while heap:
            t, _, cid, crew_id = heapq.heappop(heap)
            batch = [(cid, crew_id)]
            while heap and abs(heap[0][0] - t) < 1e-12:
                _, _, c2, k2 = heapq.heappop(heap)
                batch.append((c2, k2))
            for cid, crew_id in batch:
                s = crew_id[0]
                failed[s].discard(cid)
                queues[s].remove(cid)
                in_progress.pop(crew_id)
                idle.add(crew_id)
                held[s].add(cid)
                events.append({"t": t, "event": "repair_done", "system": s, "component": cid})
            for s in net.systems:
                for cid in sorted(held[s]):
                    if s == "transport" or not self._touches_failure(cid, failed[s]):
                        held[s].discard(cid)
                        events.append({"t": t, "event": "restored", "system": s, "component": cid})
            record(t)
            last = t
            dispatch(t)
            if not heap and any(queues[s] for s in net.systems):
                # every idle crew is blocked and nothing will reopen a road
                raise RuntimeError(f"scenario {scenario.id}: recovery stalled")

        for s in self.tracked:
            if series[s][-1][1] < 1.0 - 1e-9:
                raise AssertionError(f"{s} not fully restored after the last repair in {scenario.id}")
        end = last if tmax is None else tmax
        if tmax is not None and tmax < last:
            raise ValueError(f"tmax={tmax} h ends before the last repair at {last:.3f} h")
        if end <= t0:
            end = t0 + 1.0
        gamma = {s: eoh(series[s], t0, end) for s in self.tracked}
        return SimulationResult(scenario.id, strategy, series, gamma, weighted_eoh(gamma, weights),
                                t0, end, plan, events)

    def _touches_failure(self, cid: str, failed: set[str]) -> bool:
        """Whether a repaired component shares a node with a still-failed one."""
        if not failed:
            return False
        system, kind, _ = parse_component_id(cid)
        g = self.net.systems[system]
        ends = {g.links[cid].u, g.links[cid].v} if kind == "link" else {cid}
        for f in failed:
            _, fk, _ = parse_component_id(f)
            other = {g.links[f].u, g.links[f].v} if fk == "link" else {f}
            if ends & other:
                return True
        return False


def simulate_event(net: InfraNetwork, scenario: Scenario, strategy: str,
                   crew_cfg: CrewConfig | None = None, weights: Mapping[str, float] | None = None,
                   tmax: float | None = None, simulator: Simulator | None = None) -> SimulationResult:
    sim = simulator or Simulator(net, crew_cfg)
    return sim.run(scenario, strategy, weights, tmax)
