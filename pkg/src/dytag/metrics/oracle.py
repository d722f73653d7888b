"""Brute-force reference implementations of every temporal metric.

Each query walks the full edge list once and derives all metrics from
scratch. Deliberately unoptimized and independent of the store indexes
and the incremental cursor; the test suite holds both fast paths to
these results exactly.

Folding semantics (shared definition, identical in the fast paths):

* an edge (s, d) with ts < t adds 1 to s's as-source count and 1 to d's
  as-destination count; frequency is their sum, so a self loop adds 2
* neighbor sets are undirected counterparts; a self loop makes a node
  its own neighbor
* node label distributions count one per incidence (a self loop counts
  its label twice), which keeps sum(counts) == frequency
* pair counts and pair label distributions treat (u, v) as unordered
* label count dicts are ordered by first occurrence, assuming edges are
  scanned in chronological order
"""

from __future__ import annotations

from typing import Iterable


def scan_evidence(edges: Iterable[tuple], u: int, v: int, t: float) -> dict:
    """All metrics for the pair (u, v) at time t from one linear scan.

    ``edges`` yields (src, dst, ts, label) in chronological order.
    Per-node state is keyed by node id so a query with u == v shares one
    tally instead of double counting.
    """
    freq: dict[int, int] = {}
    nodes = {u, v}
    as_src = {n: 0 for n in nodes}
    as_dst = {n: 0 for n in nodes}
    nbrs: dict[int, set] = {n: set() for n in nodes}
    elds: dict[int, dict[int, int]] = {n: {} for n in nodes}
    eld_pair: dict[int, int] = {}
    pair_count = 0
    pair = frozenset((u, v))

    for s, d, ts, lab in edges:
        if ts >= t:
            continue
        freq[s] = freq.get(s, 0) + 1
        freq[d] = freq.get(d, 0) + 1
        if s in nodes:
            as_src[s] += 1
            nbrs[s].add(d)
            elds[s][lab] = elds[s].get(lab, 0) + 1
        if d in nodes:
            as_dst[d] += 1
            nbrs[d].add(s)
            elds[d][lab] = elds[d].get(lab, 0) + 1
        if frozenset((s, d)) == pair:
            pair_count += 1
            eld_pair[lab] = eld_pair.get(lab, 0) + 1

    def activity(node: int) -> tuple[int, int, int, float]:
        total = as_src[node] + as_dst[node]
        if nbrs[node]:
            avg = sum(freq.get(w, 0) for w in nbrs[node]) / len(nbrs[node])
        else:
            avg = 0.0
        return total, as_src[node], as_dst[node], avg

    return {
        "hi": pair_count,
        "cn": len(nbrs[u] & nbrs[v]),
        "src_activity": activity(u),
        "dst_activity": activity(v),
        "eld_src": dict(elds[u]),
        "eld_dst": dict(elds[v]),
        "eld_pair": eld_pair,
    }


def scan_neighbors(edges: Iterable[tuple], node: int, t: float, directed: bool = False) -> set[int]:
    out = set()
    for s, d, ts, _lab in edges:
        if ts >= t:
            continue
        if s == node:
            out.add(d)
        if not directed and d == node:
            out.add(s)
    return out


def scan_hi_directed(edges: Iterable[tuple], u: int, v: int, t: float) -> int:
    return sum(1 for s, d, ts, _lab in edges if ts < t and s == u and d == v)
