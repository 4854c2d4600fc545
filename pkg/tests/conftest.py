from __future__ import annotations

import itertools

import numpy as np
import pytest

from infraclust.network import (Consumer, InfraNetwork, Link, Node, SystemGraph, TestbedConfig,
                                build_synthetic_testbed)


def make_graph(kind: str, n: int, edges, sources=None, caps=None, coords=None) -> SystemGraph:
    """Small system graph with nodes ``n0..n{n-1}`` and links named after their ends."""
    nodes = []
    for i in range(n):
        x, y = coords[i] if coords else (float(i), 0.0)
        nodes.append(Node(f"{kind}:node:n{i}", x, y, capacity=100.0))
    links = []
    for k, (a, b) in enumerate(edges):
        a, b = min(a, b), max(a, b)
        cap = caps[k] if caps else 100.0
        links.append(Link(f"{kind}:link:n{a}-n{b}", f"{kind}:node:n{a}", f"{kind}:node:n{b}", cap, 1.0))
    src = sources if sources is not None else [0]
    return SystemGraph(kind, nodes, links, [f"{kind}:node:n{s}" for s in src])


def random_connected_edges(rng: np.random.Generator, n: int) -> list[tuple[int, int]]:
    """Random spanning tree plus random extra edges."""
    edges = set()
    order = rng.permutation(n)
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(k)])
        edges.add((min(a, b), max(a, b)))
    for a, b in itertools.combinations(range(n), 2):
        if rng.random() < 0.3:
            edges.add((a, b))
    return sorted(edges)


@pytest.fixture(scope="session")
def small_testbed() -> InfraNetwork:
    return build_synthetic_testbed(TestbedConfig(nx=4, ny=4), seed=7)


@pytest.fixture(scope="session")
def default_testbed() -> InfraNetwork:
    return build_synthetic_testbed(TestbedConfig(), seed=7)


def water_pair_network(repair_hours: float = 10.0) -> InfraNetwork:
    """Water source feeding two equal consumers over separate links; roads co-located."""
    coords = [(0.0, 0.0), (100.0, 0.0), (0.0, 100.0)]
    water = make_graph("water", 3, [(0, 1), (0, 2)], sources=[0], caps=[10.0, 10.0], coords=coords)
    roads = make_graph("transport", 3, [(0, 1), (0, 2)], sources=[0], coords=coords)
    consumers = (
        Consumer("consumer:a", {"water": "water:node:n1"}, {"water": 5.0}),
        Consumer("consumer:b", {"water": "water:node:n2"}, {"water": 5.0}),
    )
    return InfraNetwork({"transport": roads, "water": water}, (), consumers, ((0.0, 0.0), (1.0, 1.0)))
