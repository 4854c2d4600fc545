"""Integer Dinic max-flow on a fixed arc list, compiled with numba.

Arc ``j`` of the input list becomes residual arcs ``2j`` (forward) and
``2j + 1`` (reverse). Capacities are int64, so flows are exact.
"""

from __future__ import annotations

import numpy as np
from numba import njit


def build_residual_index(n: int, tails: np.ndarray, heads: np.ndarray):
    """CSR adjacency over residual arcs: for node u, residual arcs leaving u."""
    m = len(tails)
    out_tail = np.empty(2 * m, dtype=np.int64)
    out_head = np.empty(2 * m, dtype=np.int64)
    out_tail[0::2] = tails
    out_head[0::2] = heads
    out_tail[1::2] = heads
    out_head[1::2] = tails
    order = np.argsort(out_tail, kind="stable").astype(np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, out_tail + 1, 1)
    indptr = np.cumsum(indptr).astype(np.int64)
    return indptr, order, out_head


@njit(cache=True)
def _bfs(n, s, indptr, order, head, resid, level):
    for i in range(n):
        level[i] = -1
    queue = np.empty(n, dtype=np.int64)
    qh = 0
    qt = 0
    level[s] = 0
    queue[qt] = s
    qt += 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for k in range(indptr[u], indptr[u + 1]):
            a = order[k]
            v = head[a]
            if resid[a] > 0 and level[v] < 0:
                level[v] = level[u] + 1
                queue[qt] = v
                qt += 1


@njit(cache=True)
def _dinic(n, s, t, indptr, order, head, caps):
    m2 = 2 * len(caps)
    resid = np.zeros(m2, dtype=np.int64)
    for j in range(len(caps)):
        resid[2 * j] = caps[j]
    level = np.empty(n, dtype=np.int64)
    it = np.empty(n, dtype=np.int64)
    stack_node = np.empty(n + 1, dtype=np.int64)
    stack_arc = np.empty(n + 1, dtype=np.int64)
    total = 0
    while True:
        _bfs(n, s, indptr, order, head, resid, level)
        if level[t] < 0:
            break
        for i in range(n):
            it[i] = indptr[i]
        while True:
            # iterative DFS for one blocking path
            depth = 0
            stack_node[0] = s
            found = False
            while depth >= 0:
                u = stack_node[depth]
                if u == t:
                    found = True
                    break
                advanced = False
                while it[u] < indptr[u + 1]:
                    a = order[it[u]]
                    v = head[a]
                    if resid[a] > 0 and level[v] == level[u] + 1:
                        stack_arc[depth] = a
                        depth += 1
                        stack_node[depth] = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    # dead end: prune u and back up
                    level[u] = -1
                    depth -= 1
                    if depth >= 0:
                        it[stack_node[depth]] += 1
            if not found:
                break
            push = resid[stack_arc[0]]
            for d in range(1, depth):
                if resid[stack_arc[d]] < push:
                    push = resid[stack_arc[d]]
            for d in range(depth):
                a = stack_arc[d]
                resid[a] -= push
                resid[a ^ 1] += push
            total += push
    # final BFS marks the residual source side of a minimum cut
    _bfs(n, s, indptr, order, head, resid, level)
    flows = np.empty(len(caps), dtype=np.int64)
    for j in range(len(caps)):
        flows[j] = caps[j] - resid[2 * j]
    return total, flows, level >= 0


class FlowNetwork:
    """Directed arc list with a reusable residual index."""

    def __init__(self, n: int, tails, heads):
        self.n = int(n)
        self.tails = np.asarray(tails, dtype=np.int64)
        self.heads = np.asarray(heads, dtype=np.int64)
        self.indptr, self.order, self.head = build_residual_index(self.n, self.tails, self.heads)

    def reachable(self, s: int, caps: np.ndarray) -> np.ndarray:
        """Nodes reachable from ``s`` along arcs with positive capacity."""
        caps = np.ascontiguousarray(caps, dtype=np.int64)
        resid = np.zeros(2 * len(caps), dtype=np.int64)
        resid[0::2] = caps
        level = np.empty(self.n, dtype=np.int64)
        _bfs(self.n, int(s), self.indptr, self.order, self.head, resid, level)
        return level >= 0

    def max_flow(self, s: int, t: int, caps: np.ndarray):
        """Return (value, per-arc flow, source-side mask of the residual graph)."""
        caps = np.ascontiguousarray(caps, dtype=np.int64)
        return _dinic(self.n, int(s), int(t), self.indptr, self.order, self.head, caps)
