from __future__ import annotations

import numpy as np
from hypothesis import given, settings, strategies as st

from oracles import brute_min_cut
from infraclust._maxflow import FlowNetwork


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 7))
def test_max_flow_equals_enumerated_min_cut(seed, n):
    rng = np.random.default_rng(seed)
    arcs = [(u, v) for u in range(n) for v in range(n) if u != v and rng.random() < 0.45]
    if not arcs:
        arcs = [(0, n - 1)]
    caps = rng.integers(0, 20, size=len(arcs)).astype(np.int64)
    fn = FlowNetwork(n, [a for a, _ in arcs], [b for _, b in arcs])
    value, flows, source_side = fn.max_flow(0, n - 1, caps)
    assert value == brute_min_cut(n, arcs, caps.tolist(), 0, n - 1)
    assert np.all(flows >= 0) and np.all(flows <= caps)
    net = np.zeros(n)
    for (u, v), f in zip(arcs, flows):
        net[u] -= f
        net[v] += f
    assert np.all(np.abs(net[1:n - 1]) <= 1e-9)
    assert net[n - 1] == value
    # residual reachability certifies the cut
    assert source_side[0] and not source_side[n - 1]
    cut = sum(c for (u, v), c in zip(arcs, caps) if source_side[u] and not source_side[v])
    assert cut == value


def test_reachable_ignores_zero_capacity_arcs():
    fn = FlowNetwork(3, [0, 1], [1, 2])
    assert fn.reachable(0, np.array([5, 0])).tolist() == [True, True, False]
