"""Louvain modularity maximization on the unsigned projection.

Two-phase Louvain: seeded local moves until no positive modularity gain, then
graph aggregation, repeated until a full pass moves nothing. Ties in gain are
broken toward the lowest candidate community id so runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import UndirectedGraph


@dataclass(frozen=True)
class Partition:
    """Total assignment of nodes to dense community ids 0..k-1."""
    assignment: tuple[int, ...]
    k: int

    def __post_init__(self):
        if self.k != len(set(self.assignment)):
            raise ValueError("community ids must be dense and communities non-empty")
        if self.assignment and set(self.assignment) != set(range(self.k)):
            raise ValueError("community ids must be 0..k-1")

    def community_of(self, node: int) -> int:
        return self.assignment[node]

    def members(self, c: int) -> list[int]:
        return [i for i, ci in enumerate(self.assignment) if ci == c]

    def same_community(self, u: int, v: int) -> bool:
        return self.assignment[u] == self.assignment[v]

    @staticmethod
    def from_labels(labels) -> "Partition":
        """Relabel arbitrary community labels densely, ordered by first member."""
        remap: dict = {}
        dense = []
        for lab in labels:
            if lab not in remap:
                remap[lab] = len(remap)
            dense.append(remap[lab])
        return Partition(tuple(dense), len(remap))


def modularity(g: UndirectedGraph, p: Partition, resolution: float = 1.0) -> float:
    """Newman modularity Q of a partition; 0 for an empty graph by convention."""
    if len(p.assignment) != g.num_nodes:
        raise ValueError("partition must cover every node")
    m = g.total_weight
    if m == 0:
        return 0.0
    intra = np.zeros(p.k)
    tot = np.zeros(p.k)
    for u in range(g.num_nodes):
        cu = p.assignment[u]
        tot[cu] += g.degrees[u]
        for v, w in g.adj[u].items():
            if p.assignment[v] == cu:
                # A_uu = 2w for a self-loop; off-diagonal pairs visited twice
                intra[cu] += 2.0 * w if u == v else w
    q = intra / (2.0 * m) - resolution * (tot / (2.0 * m)) ** 2
    return float(q.sum())


def _local_moves(g: UndirectedGraph, rng: np.random.Generator,
                 resolution: float) -> tuple[list[int], int]:
    """Phase 1: greedy seeded node moves. Returns (community labels, #moves)."""
    n = g.num_nodes
    m2 = 2.0 * g.total_weight
    if m2 == 0:
        return list(range(n)), 0
    comm = list(range(n))
    comm_tot = g.degrees.astype(float).copy()  # sum of degrees per community
    order = rng.permutation(n)
    total_moves = 0
    improved = True
    while improved:
        improved = False
        for v in order:
            v = int(v)
            cv = comm[v]
            kv = g.degrees[v]
            # weight from v to each neighboring community (self-loops excluded)
            links: dict[int, float] = {}
            for u, w in g.adj[v].items():
                if u != v:
                    links[comm[u]] = links.get(comm[u], 0.0) + w
            comm_tot[cv] -= kv
            stay_gain = links.get(cv, 0.0) - resolution * kv * comm_tot[cv] / m2
            best_c, best_gain = cv, stay_gain
            for c in sorted(links):
                if c == cv:
                    continue
                gain = links[c] - resolution * kv * comm_tot[c] / m2
                if gain > best_gain + 1e-12 or (abs(gain - best_gain) <= 1e-12
                                                and c < best_c):
                    best_c, best_gain = c, gain
            if best_c != cv and best_gain > stay_gain + 1e-12:
                comm[v] = best_c
                comm_tot[best_c] += kv
                total_moves += 1
                improved = True
            else:
                comm[v] = cv
                comm_tot[cv] += kv
    return comm, total_moves


def _aggregate(g: UndirectedGraph, comm: list[int], k: int) -> UndirectedGraph:
    """Phase 2: collapse communities into supernodes with self-loop weights."""
    weights: dict[tuple[int, int], float] = {}
    for u in range(g.num_nodes):
        cu = comm[u]
        for v, w in g.adj[u].items():
            if u == v:
                key = (cu, cu)
                weights[key] = weights.get(key, 0.0) + w
            elif u < v:
                cv = comm[v]
                key = (min(cu, cv), max(cu, cv))
                weights[key] = weights.get(key, 0.0) + w
    return UndirectedGraph(k, weights)


def louvain(g: UndirectedGraph, seed: int = 0, resolution: float = 1.0) -> Partition:
    """Community detection by modularity maximization, deterministic under seed.

    Isolated nodes end up as singleton communities. Modularity is asserted to
    be nondecreasing across passes.
    """
    rng = np.random.default_rng(seed)
    n = g.num_nodes
    node_comm = list(range(n))  # original node -> community of current level
    level = g
    prev_q = modularity(g, Partition.from_labels(node_comm), resolution)
    while True:
        local, moves = _local_moves(level, rng, resolution)
        if moves == 0:
            break
        dense: dict[int, int] = {}
        for c in local:
            if c not in dense:
                dense[c] = len(dense)
        node_comm = [dense[local[c]] for c in node_comm]
        q = modularity(g, Partition.from_labels(node_comm), resolution)
        assert q >= prev_q - 1e-9, "modularity decreased across a Louvain pass"
        prev_q = q
        level = _aggregate(level, [dense[c] for c in local], len(dense))
    return Partition.from_labels(node_comm)
