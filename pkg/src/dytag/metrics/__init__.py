"""Temporal structural metrics: historical interaction counts, common
neighbors, node activity and edge-label distributions.

The batch path runs on an incremental cursor. A compiled cursor is used
when the extension built and the node-id range fits its key layout;
otherwise (or with DYTAG_PURE_PYTHON=1) the pure-Python twin takes over.
Both are verified against the brute-force oracle in the test suite.
"""

from __future__ import annotations

import os

from ._cursor_py import PurePythonCursor

try:  # pragma: no cover - depends on the build environment
    from ._cursor_cy import CompiledCursor
except ImportError:  # pragma: no cover
    CompiledCursor = None

from .queries import (
    SCOPE_DESTINATION,
    SCOPE_PAIR,
    SCOPE_SOURCE,
    EdgeLabelDistribution,
    NodeActivity,
    PairEvidence,
    batch_evidence,
    common_neighbor_count,
    edge_label_distribution,
    historical_interaction_count,
    node_activity,
    node_frequency,
    pair_evidence,
)

__all__ = [
    "NodeActivity",
    "EdgeLabelDistribution",
    "PairEvidence",
    "historical_interaction_count",
    "common_neighbor_count",
    "node_activity",
    "node_frequency",
    "edge_label_distribution",
    "pair_evidence",
    "batch_evidence",
    "make_cursor",
    "cursor_backend",
    "SCOPE_SOURCE",
    "SCOPE_DESTINATION",
    "SCOPE_PAIR",
]

_MAX_COMPILED_ID = 2**31 - 1


def _compiled_allowed() -> bool:
    if CompiledCursor is None:
        return False
    return os.environ.get("DYTAG_PURE_PYTHON", "") not in ("1", "true", "yes")


def make_cursor(store, force_python: bool = False):
    """Fresh cursor over a store's edge columns, fastest backend first."""
    n_slots = 0
    if store.num_edges:
        n_slots = int(max(store.src.max(), store.dst.max())) + 1
    if store.node_texts:
        n_slots = max(n_slots, max(store.node_texts) + 1)
    use_compiled = (
        not force_python
        and _compiled_allowed()
        and 0 < n_slots <= _MAX_COMPILED_ID
    )
    cls = CompiledCursor if use_compiled else PurePythonCursor
    return cls(store.src, store.dst, store.ts, store.label, n_slots)


def cursor_backend() -> str:
    """Name of the backend make_cursor would pick for ordinary stores."""
    return "cython" if _compiled_allowed() else "python"
