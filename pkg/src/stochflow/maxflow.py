"""Integer max-flow: shortest augmenting paths, incremental updates, Gusfield trees.

Every link ``i`` owns the arc pair ``2i`` (tail -> head) and ``2i + 1``
(head -> tail), each the reverse of the other.  An undirected link of
capacity ``c`` gives both arcs residual ``c``; a directed one gives the
reverse arc residual ``0``.  The flow on link ``i`` can be read off the
residuals, so a residual vector is a complete flow state.

The numba kernels at the top of this module are shared by the estimators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .network import NetworkModel

__all__ = [
    "FlowNetwork",
    "FlowState",
    "GomoryHuTree",
    "max_flow",
    "all_pairs_max_flow",
]

UNBOUNDED = np.int64(1) << 60


# ---------------------------------------------------------------------------
# kernels

@njit(cache=True, nogil=True)
def reset_residual(res, caps, directed):
    for i in range(caps.shape[0]):
        res[2 * i] = caps[i]
        res[2 * i + 1] = 0 if directed else caps[i]


@njit(cache=True, nogil=True)
def raise_link(res, i, delta, directed):
    res[2 * i] += delta
    if not directed:
        res[2 * i + 1] += delta


@njit(cache=True, nogil=True)
def augment(res, head, adj_ptr, adj_arc, s, t, limit, prev, queue):
    """Push at most ``limit`` units from ``s`` to ``t``; return the amount pushed."""
    n = adj_ptr.shape[0] - 1
    pushed = 0
    while pushed < limit:
        for v in range(n):
            prev[v] = -1
        prev[s] = -2
        queue[0] = s
        qh = 0
        qt = 1
        found = False
        while qh < qt and not found:
            v = queue[qh]
            qh += 1
            for p in range(adj_ptr[v], adj_ptr[v + 1]):
                a = adj_arc[p]
                if res[a] > 0:
                    w = head[a]
                    if prev[w] == -1:
                        prev[w] = a
                        if w == t:
                            found = True
                            break
                        queue[qt] = w
                        qt += 1
        if not found:
            break
        delta = limit - pushed
        w = t
        while w != s:
            a = prev[w]
            if res[a] < delta:
                delta = res[a]
            w = head[a ^ 1]
        w = t
        while w != s:
            a = prev[w]
            res[a] -= delta
            res[a ^ 1] += delta
            w = head[a ^ 1]
        pushed += delta
    return pushed


@njit(cache=True, nogil=True)
def flow_from_scratch(res, caps, directed, head, adj_ptr, adj_arc, s, t, limit, prev, queue):
    reset_residual(res, caps, directed)
    return augment(res, head, adj_ptr, adj_arc, s, t, limit, prev, queue)


@njit(cache=True, nogil=True)
def reachable(res, head, adj_ptr, adj_arc, s, mark, queue):
    n = adj_ptr.shape[0] - 1
    for v in range(n):
        mark[v] = False
    mark[s] = True
    queue[0] = s
    qh = 0
    qt = 1
    while qh < qt:
        v = queue[qh]
        qh += 1
        for p in range(adj_ptr[v], adj_ptr[v + 1]):
            a = adj_arc[p]
            if res[a] > 0 and not mark[head[a]]:
                mark[head[a]] = True
                queue[qt] = head[a]
                qt += 1


@njit(cache=True, nogil=True)
def gusfield(caps, head, adj_ptr, adj_arc, parent, weight, res, prev, queue, mark):
    """Gusfield's flow-equivalent tree: ``n - 1`` single-pair max-flows."""
    n = adj_ptr.shape[0] - 1
    for v in range(n):
        parent[v] = 0
        weight[v] = 0
    parent[0] = -1
    for s in range(1, n):
        t = parent[s]
        weight[s] = flow_from_scratch(res, caps, False, head, adj_ptr, adj_arc,
                                      s, t, UNBOUNDED, prev, queue)
        reachable(res, head, adj_ptr, adj_arc, s, mark, queue)
        for v in range(s + 1, n):
            if mark[v] and parent[v] == t:
                parent[v] = s
    return n - 1


@njit(cache=True, nogil=True)
def tree_all_pairs(parent, weight, out):
    """Fill ``out[v, w]`` with the minimum weight on the tree path ``v -- w``."""
    n = parent.shape[0]
    # children lists through a parent scan; n is small
    stack = np.empty(n, np.int64)
    for r in range(n):
        for v in range(n):
            out[r, v] = -1
        out[r, r] = UNBOUNDED
        stack[0] = r
        top = 1
        while top > 0:
            top -= 1
            v = stack[top]
            # neighbours of v in the tree: its parent and its children
            p = parent[v]
            if p >= 0 and out[r, p] < 0:
                out[r, p] = min(out[r, v], weight[v])
                stack[top] = p
                top += 1
            for c in range(n):
                if parent[c] == v and out[r, c] < 0:
                    out[r, c] = min(out[r, v], weight[c])
                    stack[top] = c
                    top += 1
        out[r, r] = UNBOUNDED


# ---------------------------------------------------------------------------
# Python API

class FlowNetwork:
    """Arc/adjacency arrays of a graph, independent of capacities."""

    def __init__(self, nodes: int, endpoints, directed: bool = False):
        ends = np.asarray(endpoints, dtype=np.int64).reshape(-1, 2)
        self.nodes = int(nodes)
        self.m = ends.shape[0]
        self.directed = bool(directed)
        self.endpoints = ends
        head = np.empty(2 * self.m, np.int64)
        head[0::2] = ends[:, 1]
        head[1::2] = ends[:, 0]
        tail = head.reshape(-1, 2)[:, ::-1].ravel()
        order = np.argsort(tail, kind="stable")
        counts = np.bincount(tail, minlength=self.nodes)
        self.head = head
        self.adj_arc = order.astype(np.int64)
        self.adj_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    @classmethod
    def from_model(cls, model: NetworkModel) -> "FlowNetwork":
        return cls(model.nodes, model.endpoints, model.directed)

    def scratch(self):
        """Fresh ``(res, prev, queue)`` work arrays."""
        return (
            np.zeros(2 * self.m, np.int64),
            np.empty(self.nodes, np.int64),
            np.empty(self.nodes, np.int64),
        )


def _as_network(net) -> FlowNetwork:
    if isinstance(net, FlowNetwork):
        return net
    if isinstance(net, NetworkModel):
        return FlowNetwork.from_model(net)
    raise TypeError(f"expected FlowNetwork or NetworkModel, got {type(net).__name__}")


class FlowState:
    """A feasible integer flow together with its residual graph.

    ``value`` is the flow out of the source.  Without a ``limit`` it is the
    maximum flow; with one, augmentation stops once ``limit`` units flow,
    which is all an estimator needs to decide ``value >= demand``.
    """

    def __init__(self, network: FlowNetwork, capacities, source: int, sink: int,
                 limit: int | None = None):
        if source == sink:
            raise ValueError("source and sink must differ")
        caps = np.array(capacities, dtype=np.int64)
        if caps.shape != (network.m,):
            raise ValueError(f"expected {network.m} capacities, got shape {caps.shape}")
        if (caps < 0).any():
            raise ValueError("capacities must be nonnegative")
        self.network = network
        self.capacities = caps
        self.source = int(source)
        self.sink = int(sink)
        self.limit = UNBOUNDED if limit is None else np.int64(limit)
        self.res, self._prev, self._queue = network.scratch()
        self.value = int(flow_from_scratch(
            self.res, caps, network.directed, network.head, network.adj_ptr,
            network.adj_arc, self.source, self.sink, self.limit, self._prev, self._queue))

    def increase_capacity(self, link: int, new_capacity: int) -> "FlowState":
        """Raise one link and re-augment from the current residual graph (in place)."""
        delta = int(new_capacity) - int(self.capacities[link])
        if delta < 0:
            raise ValueError(
                f"link {link}: capacity decrease {self.capacities[link]} -> {new_capacity}"
            )
        if delta:
            net = self.network
            self.capacities[link] += delta
            raise_link(self.res, link, delta, net.directed)
            self.value += int(augment(self.res, net.head, net.adj_ptr, net.adj_arc,
                                      self.source, self.sink, self.limit - self.value,
                                      self._prev, self._queue))
        return self

    def snapshot(self):
        return self.capacities.copy(), self.res.copy(), self.value

    def rollback(self, snap) -> None:
        caps, res, value = snap
        self.capacities[:] = caps
        self.res[:] = res
        self.value = value

    def link_flows(self) -> np.ndarray:
        """Signed flow on each link in its tail -> head direction."""
        fwd, rev = self.res[0::2], self.res[1::2]
        if self.network.directed:
            return rev.copy()
        return (rev - fwd) // 2

    def source_side(self) -> np.ndarray:
        """Boolean mask of nodes reachable from the source in the residual graph."""
        net = self.network
        mark = np.zeros(net.nodes, np.bool_)
        reachable(self.res, net.head, net.adj_ptr, net.adj_arc, self.source, mark,
                  np.empty(net.nodes, np.int64))
        return mark

    def to_dot(self) -> str:
        """Residual graph in Graphviz DOT, arcs with positive residual only."""
        net = self.network
        lines = [f"digraph residual {{  // flow value {self.value}"]
        for v in range(net.nodes):
            shape = "doublecircle" if v in (self.source, self.sink) else "circle"
            lines.append(f"  {v} [shape={shape}];")
        for a in range(2 * net.m):
            if self.res[a] > 0:
                u, w = net.head[a ^ 1], net.head[a]
                lines.append(f'  {u} -> {w} [label="{self.res[a]}", link={a // 2}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def max_flow(network, capacities, source: int | None = None, sink: int | None = None,
             limit: int | None = None) -> FlowState:
    """Maximum ``source -> sink`` flow under integer link capacities.

    ``network`` may be a :class:`FlowNetwork` or a :class:`NetworkModel`; for
    a model the terminals default to the model's source and sink.
    """
    if isinstance(network, NetworkModel):
        source = network.source if source is None else source
        sink = network.sink if sink is None else sink
    if source is None or sink is None:
        raise ValueError("source and sink are required")
    return FlowState(_as_network(network), capacities, source, sink, limit)


@dataclass(frozen=True)
class GomoryHuTree:
    """Flow-equivalent tree; ``flow(v, w)`` is the min weight on the tree path."""

    parent: np.ndarray
    weight: np.ndarray
    flow_calls: int

    def matrix(self) -> np.ndarray:
        n = self.parent.shape[0]
        out = np.empty((n, n), np.int64)
        tree_all_pairs(self.parent, self.weight, out)
        return out

    def flow(self, v: int, w: int) -> int:
        if v == w:
            raise ValueError("pairwise flow needs two distinct nodes")
        # climb both endpoints to their common ancestor
        depth = self._depths()
        best = int(UNBOUNDED)
        while v != w:
            if depth[v] >= depth[w]:
                best = min(best, int(self.weight[v]))
                v = int(self.parent[v])
            else:
                best = min(best, int(self.weight[w]))
                w = int(self.parent[w])
        return best

    def _depths(self) -> np.ndarray:
        n = self.parent.shape[0]
        depth = np.full(n, -1, np.int64)
        for v in range(n):
            path = []
            u = v
            while u >= 0 and depth[u] < 0:
                path.append(u)
                u = int(self.parent[u])
            d = -1 if u < 0 else int(depth[u])
            for x in reversed(path):
                d += 1
                depth[x] = d
        return depth


def all_pairs_max_flow(network, capacities) -> GomoryHuTree:
    """All-pairs max-flow values of an undirected network via Gusfield's method."""
    net = _as_network(network)
    if net.directed:
        raise ValueError("all-pairs flow trees need an undirected network")
    caps = np.asarray(capacities, dtype=np.int64)
    parent = np.empty(net.nodes, np.int64)
    weight = np.empty(net.nodes, np.int64)
    res, prev, queue = net.scratch()
    calls = gusfield(caps, net.head, net.adj_ptr, net.adj_arc, parent, weight, res, prev,
                     queue, np.zeros(net.nodes, np.bool_))
    return GomoryHuTree(parent, weight, int(calls))
