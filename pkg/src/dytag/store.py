"""Columnar store for timestamped, text-attributed interaction streams.

A dataset is four UTF-8 CSV files (RFC 4180):

* ``edges.csv``       header ``src,dst,ts,label,text_id`` (text_id may be empty)
* ``node_texts.csv``  header ``node_id,text``
* ``edge_texts.csv``  header ``text_id,text``
* ``labels.csv``      header ``label_id,text``

After ingestion the store is read-only: edges are held as numpy columns
sorted stably by timestamp (ties keep ingestion order), with per-node
time-ordered incidence indexes for fast history queries.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

STORE_FORMAT_VERSION = 1

EDGE_HEADER = ["src", "dst", "ts", "label", "text_id"]
NODE_TEXT_HEADER = ["node_id", "text"]
EDGE_TEXT_HEADER = ["text_id", "text"]
LABEL_HEADER = ["label_id", "text"]


class IngestError(ValueError):
    """Raised for malformed dataset files (bad rows, dangling references)."""


@dataclass(frozen=True)
class TemporalEdge:
    """One timestamped interaction ``src -> dst`` with optional edge text."""

    src: int
    dst: int
    ts: float
    label: int
    text_id: int | None = None


class DyTagStore:
    r"""Immutable timestamped edge stream plus node/edge text tables.

    Parameters
    ----------
    edges : sequence of (src, dst, ts, label, text_id or None)
    node_texts : mapping node id -> text (every edge endpoint must appear)
    edge_texts : mapping text id -> text
    labels : mapping label id -> label text
    bipartite : whether sources and destinations form disjoint partitions

    Edges are re-sorted stably by timestamp, so equal-timestamp edges keep
    their ingestion order. Do not mutate the arrays after construction;
    every derived index assumes they are frozen.
    """

    def __init__(
        self,
        edges: Sequence[tuple],
        node_texts: dict[int, str],
        edge_texts: dict[int, str],
        labels: dict[int, str],
        bipartite: bool = False,
    ):
        n = len(edges)
        src = np.empty(n, dtype=np.int64)
        dst = np.empty(n, dtype=np.int64)
        ts = np.empty(n, dtype=np.float64)
        label = np.empty(n, dtype=np.int64)
        text_id = np.empty(n, dtype=np.int64)
        for i, e in enumerate(edges):
            src[i], dst[i], ts[i], label[i] = e[0], e[1], e[2], e[3]
            tid = e[4] if len(e) > 4 else None
            text_id[i] = -1 if tid is None else tid

        order = np.argsort(ts, kind="stable")
        self.src = src[order]
        self.dst = dst[order]
        self.ts = ts[order]
        self.label = label[order]
        self.text_id = text_id[order]

        self.node_texts = dict(node_texts)
        self.edge_texts = dict(edge_texts)
        self.labels = dict(labels)
        self.bipartite = bool(bipartite)

        self._validate()
        self._build_indexes()

    # ------------------------------------------------------------------
    # construction helpers

    def _validate(self) -> None:
        if len(self.src) == 0:
            raise IngestError("edge stream is empty")
        nodes = self.node_texts.keys()
        for i in range(len(self.src)):
            if int(self.src[i]) not in nodes or int(self.dst[i]) not in nodes:
                raise IngestError(
                    f"edge {i} references node without a node_texts entry: "
                    f"({int(self.src[i])}, {int(self.dst[i])})"
                )
            if int(self.label[i]) not in self.labels:
                raise IngestError(f"edge {i} references unknown label {int(self.label[i])}")
            tid = int(self.text_id[i])
            if tid != -1 and tid not in self.edge_texts:
                raise IngestError(f"edge {i} references unknown edge text {tid}")
        if self.bipartite:
            overlap = set(map(int, self.src)) & set(map(int, self.dst))
            if overlap:
                raise IngestError(
                    f"store declared bipartite but {len(overlap)} node(s) appear "
                    f"on both sides, e.g. {sorted(overlap)[:3]}"
                )

    def _build_indexes(self) -> None:
        out_lists: dict[int, list[int]] = {}
        in_lists: dict[int, list[int]] = {}
        for i in range(len(self.src)):
            out_lists.setdefault(int(self.src[i]), []).append(i)
            in_lists.setdefault(int(self.dst[i]), []).append(i)
        self._out = {n: np.asarray(ix, dtype=np.int64) for n, ix in out_lists.items()}
        self._in = {n: np.asarray(ix, dtype=np.int64) for n, ix in in_lists.items()}
        self._out_ts = {n: self.ts[ix] for n, ix in self._out.items()}
        self._in_ts = {n: self.ts[ix] for n, ix in self._in.items()}

    # ------------------------------------------------------------------
    # basic accessors

    @property
    def num_edges(self) -> int:
        return len(self.src)

    @property
    def num_nodes(self) -> int:
        return len(self.node_texts)

    def edge(self, i: int) -> TemporalEdge:
        tid = int(self.text_id[i])
        return TemporalEdge(
            int(self.src[i]),
            int(self.dst[i]),
            float(self.ts[i]),
            int(self.label[i]),
            None if tid == -1 else tid,
        )

    def iter_edges(self, start: int = 0, stop: int | None = None) -> Iterator[TemporalEdge]:
        stop = self.num_edges if stop is None else stop
        for i in range(start, stop):
            yield self.edge(i)

    def edge_text(self, i: int) -> str | None:
        tid = int(self.text_id[i])
        return None if tid == -1 else self.edge_texts[tid]

    def node_text(self, node: int) -> str:
        return self.node_texts[node]

    def label_text(self, label: int) -> str:
        return self.labels[label]

    def all_node_ids(self) -> list[int]:
        return sorted(self.node_texts)

    def destination_partition(self) -> list[int]:
        """Distinct destination node ids, sorted."""
        return sorted(set(map(int, self.dst)))

    def eligible_destinations(self) -> list[int]:
        """Candidate destinations for negative sampling.

        Bipartite stores restrict to the destination partition; otherwise
        every registered node is eligible.
        """
        if self.bipartite:
            return self.destination_partition()
        return self.all_node_ids()

    # ------------------------------------------------------------------
    # history queries

    def out_edges_before(self, node: int, t: float) -> np.ndarray:
        idx = self._out.get(node)
        if idx is None:
            return np.empty(0, dtype=np.int64)
        cut = np.searchsorted(self._out_ts[node], t, side="left")
        return idx[:cut]

    def in_edges_before(self, node: int, t: float) -> np.ndarray:
        idx = self._in.get(node)
        if idx is None:
            return np.empty(0, dtype=np.int64)
        cut = np.searchsorted(self._in_ts[node], t, side="left")
        return idx[:cut]

    def incident_before(self, node: int, t: float) -> np.ndarray:
        """Edge indices incident to ``node`` with ts strictly before ``t``,
        in chronological (index) order."""
        out = self.out_edges_before(node, t)
        inn = self.in_edges_before(node, t)
        if len(out) == 0:
            return inn
        if len(inn) == 0:
            return out
        merged = np.concatenate([out, inn])
        merged.sort()
        return merged

    def neighbors_before(self, node: int, t: float, directed: bool = False) -> set[int]:
        """Historical neighbor set of ``node`` at time ``t`` (ts strictly < t).

        The default reading is undirected: counterparts of both outgoing and
        incoming interactions. ``directed=True`` restricts to destinations of
        outgoing edges (sensitivity variant). Unregistered nodes yield an
        empty set with a warning rather than an error.
        """
        if node not in self.node_texts:
            logger.warning("neighbors_before: node %s is not registered; returning empty set", node)
            return set()
        out = self.out_edges_before(node, t)
        nbrs = {int(self.dst[i]) for i in out}
        if not directed:
            inn = self.in_edges_before(node, t)
            nbrs.update(int(self.src[i]) for i in inn)
        return nbrs

    def find_edge_at(self, src: int, dst: int, t: float) -> int | None:
        """Index of an edge matching (src, dst, t) exactly; directed match
        preferred, otherwise the reversed orientation. None when absent."""
        for u, v in ((src, dst), (dst, src)):
            idx = self._out.get(u)
            if idx is None:
                continue
            lo = np.searchsorted(self._out_ts[u], t, side="left")
            hi = np.searchsorted(self._out_ts[u], t, side="right")
            for i in idx[lo:hi]:
                if int(self.dst[i]) == v:
                    return int(i)
        return None


# ----------------------------------------------------------------------
# splits and evaluation windows


@dataclass(frozen=True)
class SplitView:
    """Chronological train/validation/test partition of a store.

    ``train_end`` and ``valid_end`` are edge-index boundaries: train is
    ``[0, train_end)``, validation ``[train_end, valid_end)`` and test
    ``[valid_end, num_edges)``.
    """

    store: DyTagStore
    train_end: int
    valid_end: int

    @property
    def train_indices(self) -> range:
        return range(0, self.train_end)

    @property
    def valid_indices(self) -> range:
        return range(self.train_end, self.valid_end)

    @property
    def test_indices(self) -> range:
        return range(self.valid_end, self.store.num_edges)


def chronological_split(store: DyTagStore, train_frac: float = 0.70, valid_frac: float = 0.15) -> SplitView:
    """Split the (already time-sorted) edge stream at floor-rounded boundaries.

    ``train_end = floor(train_frac * E)`` and
    ``valid_end = floor((train_frac + valid_frac) * E)``.
    """
    e = store.num_edges
    if e < 3:
        raise IngestError(f"cannot split a stream of {e} edge(s) into three parts")
    if not (0 < train_frac < 1) or not (0 < valid_frac < 1) or train_frac + valid_frac >= 1:
        raise ValueError(f"invalid split fractions ({train_frac}, {valid_frac})")
    train_end = math.floor(train_frac * e)
    valid_end = math.floor((train_frac + valid_frac) * e)
    return SplitView(store=store, train_end=train_end, valid_end=valid_end)


def select_eval_window(split: SplitView, sample_count: int = 10240, batch_size: int = 256) -> list[list[int]]:
    """Chronologically earliest ``sample_count`` test edges, batched.

    The window is clamped (with a log line) when the test partition is
    smaller than requested; the last batch may be short.
    """
    test = list(split.test_indices)
    if sample_count > len(test):
        logger.info(
            "eval window clamped from %d to %d available test edges", sample_count, len(test)
        )
        sample_count = len(test)
    window = test[:sample_count]
    return [window[i : i + batch_size] for i in range(0, len(window), batch_size)]


# ----------------------------------------------------------------------
# CSV ingestion / export


def _read_rows(path: str, header: list[str]) -> Iterator[tuple[int, list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: file is empty") from None
        if got != header:
            raise IngestError(f"{path}: expected header {header}, got {got}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, row


def _parse_int(path: str, lineno: int, field: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise IngestError(f"{path}:{lineno}: field {field!r} is not an integer: {raw!r}") from None


def _parse_ts(path: str, lineno: int, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise IngestError(f"{path}:{lineno}: field 'ts' is not numeric: {raw!r}") from None
    if value < 0 or not math.isfinite(value):
        raise IngestError(f"{path}:{lineno}: field 'ts' must be finite and non-negative: {raw!r}")
    return value


def ingest_dataset(
    edge_file: str,
    node_text_file: str,
    edge_text_file: str,
    label_file: str,
    bipartite: bool = False,
) -> DyTagStore:
    """Load the four canonical CSV files into a store.

    Malformed rows and dangling references are hard errors naming the file
    and line; silent skipping would bias every downstream statistic.
    """
    node_texts: dict[int, str] = {}
    for lineno, row in _read_rows(node_text_file, NODE_TEXT_HEADER):
        node_texts[_parse_int(node_text_file, lineno, "node_id", row[0])] = row[1]

    edge_texts: dict[int, str] = {}
    for lineno, row in _read_rows(edge_text_file, EDGE_TEXT_HEADER):
        edge_texts[_parse_int(edge_text_file, lineno, "text_id", row[0])] = row[1]

    labels: dict[int, str] = {}
    for lineno, row in _read_rows(label_file, LABEL_HEADER):
        labels[_parse_int(label_file, lineno, "label_id", row[0])] = row[1]

    edges: list[tuple] = []
    for lineno, row in _read_rows(edge_file, EDGE_HEADER):
        src = _parse_int(edge_file, lineno, "src", row[0])
        dst = _parse_int(edge_file, lineno, "dst", row[1])
        ts = _parse_ts(edge_file, lineno, row[2])
        label = _parse_int(edge_file, lineno, "label", row[3])
        text_id = None if row[4] == "" else _parse_int(edge_file, lineno, "text_id", row[4])
        if src not in node_texts:
            raise IngestError(f"{edge_file}:{lineno}: src node {src} missing from {node_text_file}")
        if dst not in node_texts:
            raise IngestError(f"{edge_file}:{lineno}: dst node {dst} missing from {node_text_file}")
        if label not in labels:
            raise IngestError(f"{edge_file}:{lineno}: label {label} missing from {label_file}")
        if text_id is not None and text_id not in edge_texts:
            raise IngestError(f"{edge_file}:{lineno}: text_id {text_id} missing from {edge_text_file}")
        edges.append((src, dst, ts, label, text_id))

    if not edges:
        raise IngestError(f"{edge_file}: no edges")

    store = DyTagStore(edges, node_texts, edge_texts, labels, bipartite=bipartite)
    logger.info(
        "ingested %d edges, %d nodes, %d labels, %d edge texts (bipartite=%s)",
        store.num_edges, store.num_nodes, len(labels), len(edge_texts), bipartite,
    )
    return store


def _format_ts(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def export_dataset(store: DyTagStore, out_dir: str) -> dict[str, str]:
    """Write the store back out as the four canonical CSVs.

    Exported edges are in store order (stable timestamp sort), so
    ingest(export(ingest(X))) is a fixed point.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "edges": os.path.join(out_dir, "edges.csv"),
        "node_texts": os.path.join(out_dir, "node_texts.csv"),
        "edge_texts": os.path.join(out_dir, "edge_texts.csv"),
        "labels": os.path.join(out_dir, "labels.csv"),
    }
    with open(paths["edges"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EDGE_HEADER)
        for e in store.iter_edges():
            w.writerow([e.src, e.dst, _format_ts(e.ts), e.label, "" if e.text_id is None else e.text_id])
    with open(paths["node_texts"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(NODE_TEXT_HEADER)
        for node in sorted(store.node_texts):
            w.writerow([node, store.node_texts[node]])
    with open(paths["edge_texts"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EDGE_TEXT_HEADER)
        for tid in sorted(store.edge_texts):
            w.writerow([tid, store.edge_texts[tid]])
    with open(paths["labels"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LABEL_HEADER)
        for lid in sorted(store.labels):
            w.writerow([lid, store.labels[lid]])
    return paths


# ----------------------------------------------------------------------
# binary cache


def save_store(store: DyTagStore, path: str) -> None:
    """Persist the store as a single .npz cache with an embedded format version."""
    meta = {
        "format_version": STORE_FORMAT_VERSION,
        "bipartite": store.bipartite,
        "node_texts": {str(k): v for k, v in store.node_texts.items()},
        "edge_texts": {str(k): v for k, v in store.edge_texts.items()},
        "labels": {str(k): v for k, v in store.labels.items()},
    }
    buf = io.BytesIO()
    np.savez_compressed(
        buf,
        src=store.src,
        dst=store.dst,
        ts=store.ts,
        label=store.label,
        text_id=store.text_id,
        meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8),
    )
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_store(path: str) -> DyTagStore:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        version = meta.get("format_version")
        if version != STORE_FORMAT_VERSION:
            raise IngestError(
                f"{path}: store format version {version} is not supported "
                f"(expected {STORE_FORMAT_VERSION})"
            )
        edges = list(
            zip(
                data["src"].tolist(),
                data["dst"].tolist(),
                data["ts"].tolist(),
                data["label"].tolist(),
                [None if t == -1 else int(t) for t in data["text_id"].tolist()],
            )
        )
    return DyTagStore(
        edges,
        {int(k): v for k, v in meta["node_texts"].items()},
        {int(k): v for k, v in meta["edge_texts"].items()},
        {int(k): v for k, v in meta["labels"].items()},
        bipartite=meta["bipartite"],
    )


# ----------------------------------------------------------------------
# import adapter for the published benchmark layout


def import_dtgb(dataset_dir: str, bipartite: bool = False) -> DyTagStore:
    """Adapter for the published dynamic text-graph benchmark layout.

    Expects ``edge_list.csv`` with columns (u, i, ts, label, idx), where u/i
    are node ids, idx is the edge-text id; ``entity_text.csv`` with (i, text)
    node texts and ``relation_text.csv`` with (i, text) edge texts. A leading
    unnamed index column is tolerated. When no ``labels.csv`` is present the
    label table is synthesized as ``str(label_id)``.
    """

    def read_table(name: str, required: list[str]) -> list[dict[str, str]]:
        path = os.path.join(dataset_dir, name)
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            missing = [c for c in required if c not in fields]
            if missing:
                raise IngestError(f"{path}: missing column(s) {missing} (found {fields})")
            return list(reader)

    edges = []
    label_ids: set[int] = set()
    for lineno, row in enumerate(read_table("edge_list.csv", ["u", "i", "ts", "label", "idx"]), start=2):
        path = os.path.join(dataset_dir, "edge_list.csv")
        src = _parse_int(path, lineno, "u", row["u"])
        dst = _parse_int(path, lineno, "i", row["i"])
        ts = _parse_ts(path, lineno, row["ts"])
        label = _parse_int(path, lineno, "label", row["label"])
        tid = _parse_int(path, lineno, "idx", row["idx"])
        label_ids.add(label)
        edges.append((src, dst, ts, label, tid))

    node_texts = {}
    for lineno, row in enumerate(read_table("entity_text.csv", ["i", "text"]), start=2):
        path = os.path.join(dataset_dir, "entity_text.csv")
        node_texts[_parse_int(path, lineno, "i", row["i"])] = row["text"]
    edge_texts = {}
    for lineno, row in enumerate(read_table("relation_text.csv", ["i", "text"]), start=2):
        path = os.path.join(dataset_dir, "relation_text.csv")
        edge_texts[_parse_int(path, lineno, "i", row["i"])] = row["text"]

    labels_path = os.path.join(dataset_dir, "labels.csv")
    if os.path.exists(labels_path):
        labels = {}
        for lineno, row in _read_rows(labels_path, LABEL_HEADER):
            labels[_parse_int(labels_path, lineno, "label_id", row[0])] = row[1]
    else:
        labels = {lid: str(lid) for lid in sorted(label_ids)}
        logger.info("no labels.csv in %s; synthesized %d label texts", dataset_dir, len(labels))

    # some edges may reference nodes absent from entity_text; that is a real
    # data defect and should fail loudly, same as canonical ingestion
    return DyTagStore(edges, node_texts, edge_texts, labels, bipartite=bipartite)
