"""Shared fixture graphs: the documented toy stream plus synthetic generators
used by tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .seeding import rng_for
from .store import DyTagStore


def toy_store() -> DyTagStore:
    """Three nodes, five edges, two labels; the worked example used across
    the documentation and test suite.

    ======  =====  =====  ====  ======  =========
    edge    src    dst    ts    label   edge text
    ======  =====  =====  ====  ======  =========
    e1      1      2      1     A       "budget question"
    e2      1      2      2     A       "budget follow up"
    e3      1      3      3     B       "weekend plans"
    e4      2      3      4     A       "forwarding the budget"
    e5      1      2      5     A       "final budget numbers"
    ======  =====  =====  ====  ======  =========
    """
    edges = [
        (1, 2, 1.0, 0, 0),
        (1, 2, 2.0, 0, 1),
        (1, 3, 3.0, 1, 2),
        (2, 3, 4.0, 0, 3),
        (1, 2, 5.0, 0, 4),
    ]
    node_texts = {1: "alice", 2: "bob", 3: "carol"}
    edge_texts = {
        0: "budget question",
        1: "budget follow up",
        2: "weekend plans",
        3: "forwarding the budget",
        4: "final budget numbers",
    }
    labels = {0: "A", 1: "B"}
    return DyTagStore(edges, node_texts, edge_texts, labels, bipartite=False)


def random_store(
    seed: int,
    n_nodes: int = 40,
    n_edges: int = 200,
    n_labels: int = 6,
    with_edge_texts: bool = True,
) -> DyTagStore:
    """Uniform random stream with duplicate timestamps to exercise tie rules."""
    rng = rng_for(seed, "random-store")
    n_nodes = max(2, n_nodes)
    src = rng.integers(0, n_nodes, size=n_edges)
    dst = rng.integers(0, n_nodes, size=n_edges)
    ts = np.sort(rng.integers(0, max(2, n_edges), size=n_edges)).astype(float)
    label = rng.integers(0, n_labels, size=n_edges)
    edges = [
        (int(src[i]), int(dst[i]), float(ts[i]), int(label[i]), i if with_edge_texts else None)
        for i in range(n_edges)
    ]
    node_texts = {n: f"node {n}" for n in range(n_nodes)}
    edge_texts = {i: f"interaction {i}" for i in range(n_edges)} if with_edge_texts else {}
    labels = {l: f"label-{l}" for l in range(n_labels)}
    return DyTagStore(edges, node_texts, edge_texts, labels, bipartite=False)


def bipartite_store(seed: int, n_left: int = 30, n_right: int = 30, n_edges: int = 300) -> DyTagStore:
    """Random bipartite stream: sources 0..n_left-1, destinations n_left..n_left+n_right-1."""
    rng = rng_for(seed, "bipartite-store")
    src = rng.integers(0, n_left, size=n_edges)
    dst = rng.integers(n_left, n_left + n_right, size=n_edges)
    ts = np.sort(rng.integers(0, n_edges, size=n_edges)).astype(float)
    label = rng.integers(0, 2, size=n_edges)
    edges = [
        (int(src[i]), int(dst[i]), float(ts[i]), int(label[i]), i) for i in range(n_edges)
    ]
    node_texts = {n: f"node {n}" for n in range(n_left + n_right)}
    edge_texts = {i: f"review {i}" for i in range(n_edges)}
    labels = {0: "up", 1: "down"}
    return DyTagStore(edges, node_texts, edge_texts, labels, bipartite=True)


def zipf_store(seed: int, n_nodes: int = 1000, n_edges: int = 10000, alpha: float = 1.2) -> DyTagStore:
    """Stream whose endpoints follow a Zipf(alpha) rank distribution, giving
    the heavy-tailed activity profile typical of interaction data."""
    rng = rng_for(seed, "zipf-store")
    ranks = np.arange(1, n_nodes + 1, dtype=float)
    weights = ranks ** (-alpha)
    weights /= weights.sum()
    src = rng.choice(n_nodes, size=n_edges, p=weights)
    dst = rng.choice(n_nodes, size=n_edges, p=weights)
    # avoid self loops so pair metrics stay meaningful
    bump = (src == dst).astype(np.int64)
    dst = (dst + bump) % n_nodes
    ts = np.sort(rng.integers(0, n_edges, size=n_edges)).astype(float)
    label = rng.integers(0, 4, size=n_edges)
    edges = [(int(src[i]), int(dst[i]), float(ts[i]), int(label[i]), None) for i in range(n_edges)]
    node_texts = {n: f"node {n}" for n in range(n_nodes)}
    labels = {l: f"label-{l}" for l in range(4)}
    return DyTagStore(edges, node_texts, {}, labels, bipartite=False)


def clustered_store(seed: int, n_clusters: int = 12, nodes_per_cluster: int = 6, n_edges: int = 500) -> DyTagStore:
    """Stream with intra-cluster bias so historical metrics separate positives
    from random negatives; used for end-to-end determinism runs."""
    rng = rng_for(seed, "clustered-store")
    n_nodes = n_clusters * nodes_per_cluster
    edges = []
    for i in range(n_edges):
        c = int(rng.integers(0, n_clusters))
        u = c * nodes_per_cluster + int(rng.integers(0, nodes_per_cluster))
        if rng.random() < 0.85:
            v = c * nodes_per_cluster + int(rng.integers(0, nodes_per_cluster))
        else:
            v = int(rng.integers(0, n_nodes))
        if v == u:
            v = (v + 1) % n_nodes
        ts = float(i // 2)
        label = c % 3
        edges.append((u, v, ts, label, i))
    node_texts = {n: f"member {n} of circle {n // nodes_per_cluster}" for n in range(n_nodes)}
    edge_texts = {i: f"note {i} about topic {i % 7}" for i in range(n_edges)}
    labels = {0: "work", 1: "social", 2: "family"}
    return DyTagStore(edges, node_texts, edge_texts, labels, bipartite=False)
