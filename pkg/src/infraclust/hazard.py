"""Synthetic flood scenarios: links near the stream fail more often."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .network import InfraNetwork, parse_component_id


@dataclass(frozen=True)
class HazardConfig:
    p0: float = 0.7
    decay_length: float = 250.0  # meters
    max_failures: int = 35
    count: int = 325
    eligible: tuple[str, ...] = ("water:link", "power:link", "transport:link")
    # per-scenario intensity multiplier on p0, drawn uniformly from this range
    intensity_range: tuple[float, float] = (0.15, 1.0)
    max_retries: int = 100

    def __post_init__(self):
        if not 0.0 <= self.p0 <= 1.0:
            raise ValueError(f"p0 must lie in [0, 1], got {self.p0}")
        if not self.decay_length > 0:
            raise ValueError("decay_length must be positive")
        if self.max_failures < 1:
            raise ValueError("max_failures must be at least 1")
        lo, hi = self.intensity_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"intensity_range must satisfy 0 <= lo <= hi <= 1, got {self.intensity_range}")

    @classmethod
    def from_dict(cls, d: dict | None) -> "HazardConfig":
        d = dict(d or {})
        for key in ("eligible", "intensity_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class Scenario:
    id: str
    failed_links: dict[str, tuple[str, ...]]
    failed_nodes: dict[str, tuple[str, ...]] = field(default_factory=dict)
    intensity: float = 1.0
    seed: int = 0

    @property
    def failed_components(self) -> list[str]:
        out = []
        for group in (self.failed_links, self.failed_nodes):
            for system in sorted(group):
                out.extend(group[system])
        return sorted(out)

    @property
    def failure_count(self) -> int:
        return sum(len(v) for v in self.failed_links.values()) + sum(len(v) for v in self.failed_nodes.values())

    def failures_in(self, system: str) -> list[str]:
        return sorted([*self.failed_links.get(system, ()), *self.failed_nodes.get(system, ())])

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "failed_links": {k: list(v) for k, v in sorted(self.failed_links.items())},
            "failed_nodes": {k: list(v) for k, v in sorted(self.failed_nodes.items())},
            "intensity": self.intensity,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(d["id"], {k: tuple(v) for k, v in d.get("failed_links", {}).items()},
                   {k: tuple(v) for k, v in d.get("failed_nodes", {}).items()},
                   float(d.get("intensity", 1.0)), int(d.get("seed", 0)))

    @classmethod
    def from_components(cls, sid: str, components: Iterable[str], intensity: float = 1.0,
                        seed: int = 0) -> "Scenario":
        links: dict[str, list[str]] = {}
        nodes: dict[str, list[str]] = {}
        for cid in components:
            system, kind, _ = parse_component_id(cid)
            (links if kind == "link" else nodes).setdefault(system, []).append(cid)
        return cls(sid, {k: tuple(sorted(v)) for k, v in sorted(links.items())},
                   {k: tuple(sorted(v)) for k, v in sorted(nodes.items())}, intensity, seed)


def point_segment_distance(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    px, py = p
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / seg2))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def distance_to_polyline(p: Sequence[float], polyline: Sequence[Sequence[float]]) -> float:
    if not polyline:
        raise ValueError("empty stream polyline")
    if len(polyline) == 1:
        return math.hypot(p[0] - polyline[0][0], p[1] - polyline[0][1])
    return min(point_segment_distance(p, polyline[k], polyline[k + 1]) for k in range(len(polyline) - 1))


def failure_probability(distance: float, p0: float, decay_length: float) -> float:
    return p0 * math.exp(-distance / decay_length)


def component_failure_probability(net: InfraNetwork, cid: str, cfg: HazardConfig) -> float:
    """Flood failure probability of a component from its distance to the stream.

    Links are measured from their midpoint.
    """
    d = distance_to_polyline(net.component_midpoint(cid), net.stream_polyline)
    return failure_probability(d, cfg.p0, cfg.decay_length)


def eligible_components(net: InfraNetwork, cfg: HazardConfig) -> list[str]:
    out = []
    for spec in cfg.eligible:
        system, kind = spec.split(":")
        g = net.systems.get(system)
        if g is None:
            continue
        out.extend(g.link_ids if kind == "link" else g.node_ids)
    return sorted(out)


def generate_scenarios(net: InfraNetwork, cfg: HazardConfig, seed: int) -> list[Scenario]:
    """Draw ``cfg.count`` independent flood scenarios.

    Each eligible component fails independently with probability
    ``intensity * p0 * exp(-d / decay_length)``. Oversized draws keep the
    ``max_failures`` failed components nearest the stream; empty draws are
    redrawn up to ``max_retries`` times.
    """
    comps = eligible_components(net, cfg)
    if not comps:
        raise ValueError("hazard config selects no eligible components")
    dist = np.array([distance_to_polyline(net.component_midpoint(c), net.stream_polyline) for c in comps])
    base_p = cfg.p0 * np.exp(-dist / cfg.decay_length)
    # nearest first; ids break distance ties
    rank = np.lexsort((np.arange(len(comps)), dist))
    position = np.empty(len(comps), dtype=int)
    position[rank] = np.arange(len(comps))

    rng = np.random.default_rng(seed)
    lo, hi = cfg.intensity_range
    scenarios = []
    width = max(3, len(str(cfg.count - 1)))
    for k in range(cfg.count):
        for _ in range(cfg.max_retries + 1):
            intensity = float(rng.uniform(lo, hi)) if hi > lo else float(hi)
            hit = rng.random(len(comps)) < intensity * base_p
            if hit.any():
                break
        else:
            raise RuntimeError(
                f"scenario {k}: no component failed after {cfg.max_retries} retries; "
                f"raise p0 (={cfg.p0}) or the intensity range")
        idx = np.flatnonzero(hit)
        if len(idx) > cfg.max_failures:
            idx = idx[np.argsort(position[idx])[: cfg.max_failures]]
        scenarios.append(Scenario.from_components(
            f"h{k:0{width}d}", [comps[i] for i in idx], round(intensity, 6), seed))
    return scenarios


def save_scenarios(scenarios: Iterable[Scenario], path: str | Path) -> None:
    with open(path, "w") as fh:
        for s in scenarios:
            fh.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")


def load_scenarios(path: str | Path) -> list[Scenario]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(Scenario.from_dict(json.loads(line)))
    return out
