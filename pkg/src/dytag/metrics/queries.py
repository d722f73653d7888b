"""Temporal metric queries over a store.

Two execution paths:

* per-query functions backed by the store's per-node incidence indexes,
  for ad-hoc lookups;
* :func:`batch_evidence`, which folds edges through an incremental
  cursor exactly once for a time-sorted query stream (the path used by
  evaluation runs).

All history is strict: an edge at exactly the query timestamp never
counts. The default pair reading is undirected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..store import DyTagStore

SCOPE_SOURCE = "source-node"
SCOPE_DESTINATION = "destination-node"
SCOPE_PAIR = "pair"
SCOPES = (SCOPE_SOURCE, SCOPE_DESTINATION, SCOPE_PAIR)


@dataclass(frozen=True)
class NodeActivity:
    """Interaction profile of one node at a cutoff time.

    ``frequency`` counts incidences (as source plus as destination), and
    ``avg_neighbor_frequency`` is the mean total frequency over the node's
    distinct historical neighbors (0.0 when it has none).
    """

    node: int
    frequency: int
    as_source: int
    as_destination: int
    avg_neighbor_frequency: float


@dataclass(frozen=True)
class EdgeLabelDistribution:
    """Label -> count over a node's or pair's history at a cutoff time.

    Only labels with count > 0 appear. Iteration order of ``counts`` is
    first occurrence in the history, which downstream ranking uses as the
    tie-break.
    """

    scope: str
    counts: dict[int, int] = field(default_factory=dict)

    def total(self) -> int:
        return sum(self.counts.values())

    def ranked_labels(self) -> list[int]:
        """Labels by descending count; ties keep first-occurrence order."""
        return [lab for lab, _ in sorted(self.counts.items(), key=lambda kv: -kv[1])]

    def modal_label(self) -> int | None:
        ranked = self.ranked_labels()
        return ranked[0] if ranked else None


@dataclass(frozen=True)
class PairEvidence:
    """Everything the prompting layer needs about one (src, dst, t) query."""

    src: int
    dst: int
    t: float
    hi: int
    cn: int
    src_activity: NodeActivity
    dst_activity: NodeActivity
    eld_src: EdgeLabelDistribution
    eld_dst: EdgeLabelDistribution
    eld_pair: EdgeLabelDistribution
    src_text: str = ""
    dst_text: str = ""
    edge_text: str | None = None

    @property
    def dnf(self) -> int:
        """Destination node frequency, the recall metric named DNF."""
        return self.dst_activity.frequency

    def metric(self, name: str) -> int:
        if name == "HI":
            return self.hi
        if name == "CN":
            return self.cn
        if name == "DNF":
            return self.dnf
        raise KeyError(f"unknown metric {name!r}")

    def to_json(self, store: DyTagStore | None = None) -> dict:
        def eld(d: EdgeLabelDistribution) -> dict:
            if store is None:
                return {str(k): v for k, v in d.counts.items()}
            return {store.label_text(k): v for k, v in d.counts.items()}

        def act(a: NodeActivity) -> dict:
            return {
                "frequency": a.frequency,
                "as_source": a.as_source,
                "as_destination": a.as_destination,
                "avg_neighbor_frequency": a.avg_neighbor_frequency,
            }

        out = {
            "hi": self.hi,
            "cn": self.cn,
            "src_activity": act(self.src_activity),
            "dst_activity": act(self.dst_activity),
            "eld_src": eld(self.eld_src),
            "eld_dst": eld(self.eld_dst),
            "eld_pair": eld(self.eld_pair),
        }
        if self.edge_text is not None:
            out["edge_text"] = self.edge_text
        return out


# ----------------------------------------------------------------------
# per-query indexed operations


def node_frequency(store: DyTagStore, node: int, t: float) -> int:
    """Total incidences of ``node`` strictly before ``t``."""
    count = 0
    ts = store._out_ts.get(node)
    if ts is not None:
        count += int(np.searchsorted(ts, t, side="left"))
    ts = store._in_ts.get(node)
    if ts is not None:
        count += int(np.searchsorted(ts, t, side="left"))
    return count


def historical_interaction_count(
    store: DyTagStore, u: int, v: int, t: float, directed: bool = False
) -> int:
    """Number of past edges between u and v (either direction by default)."""
    out_u = store.out_edges_before(u, t)
    count = int(np.count_nonzero(store.dst[out_u] == v))
    if directed or u == v:
        return count
    out_v = store.out_edges_before(v, t)
    return count + int(np.count_nonzero(store.dst[out_v] == u))


def common_neighbor_count(store: DyTagStore, u: int, v: int, t: float) -> int:
    return len(store.neighbors_before(u, t) & store.neighbors_before(v, t))


def node_activity(store: DyTagStore, node: int, t: float) -> NodeActivity:
    as_source = len(store.out_edges_before(node, t))
    as_destination = len(store.in_edges_before(node, t))
    nbrs = store.neighbors_before(node, t)
    if nbrs:
        avg = sum(node_frequency(store, w, t) for w in nbrs) / len(nbrs)
    else:
        avg = 0.0
    return NodeActivity(node, as_source + as_destination, as_source, as_destination, avg)


def edge_label_distribution(
    store: DyTagStore,
    key: int | tuple[int, int],
    t: float,
    scope: str,
    directed: bool = False,
) -> EdgeLabelDistribution:
    """Historical label counts for a node (all incident edges) or a pair.

    ``key`` is a node id for the node scopes and a (u, v) tuple for the
    pair scope. ``directed`` restricts the pair scope to u -> v edges.
    """
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}; expected one of {SCOPES}")
    counts: dict[int, int] = {}
    if scope == SCOPE_PAIR:
        u, v = key  # type: ignore[misc]
        out_u = store.out_edges_before(u, t)
        idx = out_u[store.dst[out_u] == v]
        if not directed and u != v:
            out_v = store.out_edges_before(v, t)
            rev = out_v[store.dst[out_v] == u]
            idx = np.concatenate([idx, rev])
            idx.sort()
        for i in idx:
            lab = int(store.label[i])
            counts[lab] = counts.get(lab, 0) + 1
    else:
        for i in store.incident_before(int(key), t):  # type: ignore[arg-type]
            lab = int(store.label[i])
            counts[lab] = counts.get(lab, 0) + 1
    return EdgeLabelDistribution(scope=scope, counts=counts)


def pair_evidence(
    store: DyTagStore, u: int, v: int, t: float, include_edge_text: bool = False
) -> PairEvidence:
    """Full evidence bundle for one query via the indexed path."""
    edge_text = None
    if include_edge_text:
        i = store.find_edge_at(u, v, t)
        if i is not None:
            edge_text = store.edge_text(i)
    return PairEvidence(
        src=u,
        dst=v,
        t=t,
        hi=historical_interaction_count(store, u, v, t),
        cn=common_neighbor_count(store, u, v, t),
        src_activity=node_activity(store, u, t),
        dst_activity=node_activity(store, v, t),
        eld_src=edge_label_distribution(store, u, t, SCOPE_SOURCE),
        eld_dst=edge_label_distribution(store, v, t, SCOPE_DESTINATION),
        eld_pair=edge_label_distribution(store, (u, v), t, SCOPE_PAIR),
        src_text=store.node_texts.get(u, ""),
        dst_text=store.node_texts.get(v, ""),
        edge_text=edge_text,
    )


# ----------------------------------------------------------------------
# batched evaluation path


def _evidence_from_cursor(
    store: DyTagStore, cursor, u: int, v: int, t: float, include_edge_text: bool
) -> PairEvidence:
    fu, su, du, au = cursor.activity(u)
    fv, sv, dv, av = cursor.activity(v)
    edge_text = None
    if include_edge_text:
        i = store.find_edge_at(u, v, t)
        if i is not None:
            edge_text = store.edge_text(i)
    return PairEvidence(
        src=u,
        dst=v,
        t=t,
        hi=int(cursor.pair_count(u, v)),
        cn=int(cursor.common_neighbors(u, v)),
        src_activity=NodeActivity(u, int(fu), int(su), int(du), float(au)),
        dst_activity=NodeActivity(v, int(fv), int(sv), int(dv), float(av)),
        eld_src=EdgeLabelDistribution(SCOPE_SOURCE, cursor.node_label_counts(u)),
        eld_dst=EdgeLabelDistribution(SCOPE_DESTINATION, cursor.node_label_counts(v)),
        eld_pair=EdgeLabelDistribution(SCOPE_PAIR, cursor.pair_label_counts(u, v)),
        src_text=store.node_texts.get(u, ""),
        dst_text=store.node_texts.get(v, ""),
        edge_text=edge_text,
    )


def batch_evidence(
    store: DyTagStore,
    queries: Sequence[tuple[int, int, float]],
    include_edge_text: bool = False,
    directed: bool = False,
    force_python: bool = False,
) -> list[PairEvidence]:
    """Evidence for a stream of (u, v, t) queries sorted by non-decreasing t.

    The incremental cursor folds each edge exactly once across the whole
    stream, so total cost is O(|E| + per-query reads). Passing unsorted
    queries is a hard error: a silently reset cursor would be quadratic,
    and reordering here would hide caller bugs.

    The directed sensitivity variant has no cursor; it routes through the
    indexed per-query path.
    """
    last = None
    for q in queries:
        if last is not None and q[2] < last:
            raise ValueError(
                f"batch_evidence queries must be sorted by timestamp; "
                f"saw {q[2]} after {last}"
            )
        last = q[2]
    if directed:
        out = []
        for u, v, t in queries:
            ev = pair_evidence(store, u, v, t, include_edge_text=include_edge_text)
            hi = historical_interaction_count(store, u, v, t, directed=True)
            eld_p = edge_label_distribution(store, (u, v), t, SCOPE_PAIR, directed=True)
            out.append(
                PairEvidence(
                    src=ev.src, dst=ev.dst, t=ev.t, hi=hi, cn=ev.cn,
                    src_activity=ev.src_activity, dst_activity=ev.dst_activity,
                    eld_src=ev.eld_src, eld_dst=ev.eld_dst, eld_pair=eld_p,
                    src_text=ev.src_text, dst_text=ev.dst_text, edge_text=ev.edge_text,
                )
            )
        return out

    from . import make_cursor

    cursor = make_cursor(store, force_python=force_python)
    out = []
    for u, v, t in queries:
        cursor.advance(t)
        out.append(_evidence_from_cursor(store, cursor, u, v, t, include_edge_text))
    return out
