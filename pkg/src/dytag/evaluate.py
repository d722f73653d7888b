"""Scoring and dataset analytics.

Reports keep metrics as fractions and render percentages only at the
edge, so nothing accumulates rounding. The weighted classification
scores are computed from first principles here; the test suite holds
them against an independent reference implementation.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .store import DyTagStore, SplitView
from .tasks.types import TASK_EC, TASK_LP, TASK_NR, PredictionRecord

REPORT_SCHEMA_VERSION = 1
DEFAULT_HITS_KS = (1, 3, 10)
MIN_FRACTION_REPEATED = 0.10


def config_digest(dataset: str, task: str, mode: str, seed: int, window: int,
                  batch_size: int, temperature: float, model: str) -> str:
    """Stable hash of the settings that determine a run's outputs.

    Deliberately limited to inputs that change predictions; where the
    run executes (backend wiring, file locations) is excluded so the
    same logical run matches across machines.
    """
    payload = {
        "batch_size": batch_size,
        "dataset": dataset,
        "mode": mode,
        "model": model,
        "seed": seed,
        "task": task,
        "temperature": temperature,
        "window": window,
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class EvalReport:
    """One task's scores; values are fractions in [0, 1]."""

    task: str
    mode: str
    dataset: str
    n_samples: int
    metrics: Dict[str, float]
    config_digest: str = ""
    fallback_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.n_samples <= 0:
            raise ValueError("report needs at least one sample")
        for name, value in self.metrics.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"metric {name} out of [0, 1]: {value}")
        hits = sorted(
            (int(k.split("@")[1]), v) for k, v in self.metrics.items()
            if k.startswith("hits@"))
        for (_, lo), (_, hi) in zip(hits, hits[1:]):
            if lo > hi + 1e-12:
                raise ValueError("hits@k must be monotone in k")

    def percent(self, name: str) -> str:
        return f"{100.0 * self.metrics[name]:.2f}"

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "task": self.task,
            "mode": self.mode,
            "dataset": self.dataset,
            "n_samples": self.n_samples,
            "metrics": {k: self.metrics[k] for k in sorted(self.metrics)},
            "config_digest": self.config_digest,
            "fallback_fraction": self.fallback_fraction,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "EvalReport":
        version = payload.get("schema_version")
        if version != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {version!r}")
        return cls(
            task=payload["task"],
            mode=payload["mode"],
            dataset=payload["dataset"],
            n_samples=int(payload["n_samples"]),
            metrics={k: float(v) for k, v in payload["metrics"].items()},
            config_digest=payload.get("config_digest", ""),
            fallback_fraction=float(payload.get("fallback_fraction", 0.0)),
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(self.to_json(), indent=2, sort_keys=True,
                       ensure_ascii=True) + "\n",
            encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _require(records: Sequence[PredictionRecord], task: str) -> None:
    if not records:
        raise ValueError("cannot score an empty record list")
    bad = {r.query.task for r in records} - {task}
    if bad:
        raise ValueError(f"expected only {task} records, found {sorted(bad)}")


def _fallback_fraction(records: Sequence[PredictionRecord]) -> float:
    return sum(r.fallback_used for r in records) / len(records)


def score_lp(records: Sequence[PredictionRecord], dataset: str = "",
             config_digest: str = "") -> EvalReport:
    """Accuracy over positives and their paired negatives."""
    _require(records, TASK_LP)
    correct = sum(r.answer == r.query.truth for r in records)
    return EvalReport(
        task=TASK_LP,
        mode=records[0].mode,
        dataset=dataset,
        n_samples=len(records),
        metrics={"accuracy": correct / len(records)},
        config_digest=config_digest,
        fallback_fraction=_fallback_fraction(records),
    )


def score_nr(records: Sequence[PredictionRecord],
             ks: Sequence[int] = DEFAULT_HITS_KS, dataset: str = "",
             config_digest: str = "") -> EvalReport:
    """hits@k = fraction of queries whose positive rank is within k."""
    _require(records, TASK_NR)
    ranks = []
    for r in records:
        if r.positive_rank is None:
            raise ValueError(f"nr record {r.query.index} lacks a positive rank")
        ranks.append(r.positive_rank)
    metrics = {
        f"hits@{k}": sum(rank <= k for rank in ranks) / len(ranks)
        for k in sorted(ks)
    }
    return EvalReport(
        task=TASK_NR,
        mode=records[0].mode,
        dataset=dataset,
        n_samples=len(records),
        metrics=metrics,
        config_digest=config_digest,
        fallback_fraction=_fallback_fraction(records),
    )


def weighted_prf(truths: Sequence[int], answers: Sequence[int]
                 ) -> Dict[str, float]:
    """Support-weighted precision/recall/F1 with zero division giving 0."""
    if len(truths) != len(answers) or not truths:
        raise ValueError("need equal, nonempty truth and answer lists")
    support = Counter(truths)
    predicted = Counter(answers)
    tp = Counter(t for t, a in zip(truths, answers) if t == a)
    total = len(truths)
    precision = recall = f1 = 0.0
    for label, n in support.items():
        tp_l = tp.get(label, 0)
        p_den = predicted.get(label, 0)
        p = tp_l / p_den if p_den else 0.0
        r = tp_l / n
        f = 2 * p * r / (p + r) if (p + r) else 0.0
        weight = n / total
        precision += weight * p
        recall += weight * r
        f1 += weight * f
    return {"precision": precision, "recall": recall, "f1": f1}


def score_ec(records: Sequence[PredictionRecord], label_count: int,
             dataset: str = "", config_digest: str = "") -> EvalReport:
    _require(records, TASK_EC)
    truths = [r.query.truth for r in records]
    answers = [int(r.answer) for r in records]
    for value in (*truths, *answers):
        if not 0 <= value < label_count:
            raise ValueError(f"label id {value} outside the {label_count} classes")
    return EvalReport(
        task=TASK_EC,
        mode=records[0].mode,
        dataset=dataset,
        n_samples=len(records),
        metrics=weighted_prf(truths, answers),
        config_digest=config_digest,
        fallback_fraction=_fallback_fraction(records),
    )


# --- dataset analytics -------------------------------------------------------


@dataclass(frozen=True)
class GroupingConsistency:
    """Label agreement within repeated groups under one grouping key."""

    grouping: str
    consistency: Optional[float]
    qualifying_groups: int
    repeated_fraction: float
    total_interactions: int

    def to_json(self) -> dict:
        return {
            "grouping": self.grouping,
            "consistency": self.consistency,
            "qualifying_groups": self.qualifying_groups,
            "repeated_fraction": self.repeated_fraction,
            "total_interactions": self.total_interactions,
        }


@dataclass(frozen=True)
class ConsistencyReport:
    pair: GroupingConsistency
    edge_text: GroupingConsistency
    directed: bool = False

    @property
    def pair_consistency(self) -> Optional[float]:
        return self.pair.consistency

    @property
    def text_consistency(self) -> Optional[float]:
        return self.edge_text.consistency

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "pair": self.pair.to_json(),
            "edge_text": self.edge_text.to_json(),
            "directed": self.directed,
        }


def _group_labels(store: DyTagStore, grouping: str, directed: bool,
                  end: Optional[int]) -> Iterable[List[int]]:
    n = store.num_edges if end is None else end
    groups: Dict[object, List[int]] = {}
    if grouping == "pair":
        for i in range(n):
            u, v = int(store.src[i]), int(store.dst[i])
            key = (u, v) if directed else (min(u, v), max(u, v))
            groups.setdefault(key, []).append(int(store.label[i]))
    elif grouping == "edge-text":
        for i in range(n):
            tid = int(store.text_id[i])
            if tid == -1:
                continue
            groups.setdefault(store.edge_texts[tid], []).append(int(store.label[i]))
    else:
        raise ValueError(f"unknown grouping {grouping!r}")
    return groups.values()


def label_consistency(store: DyTagStore, grouping: str,
                      min_fraction_repeated: float = MIN_FRACTION_REPEATED,
                      directed: bool = False,
                      end: Optional[int] = None) -> GroupingConsistency:
    """Fraction of repeated-group interactions matching their group's
    modal label; modal ties go to the label seen earliest in the group.

    The consistency value is withheld (None) when repeated groups cover
    less than ``min_fraction_repeated`` of the interactions, mirroring
    how sparse cells are usually omitted from such tables.
    """
    total = 0
    matches = 0
    repeated_interactions = 0
    qualifying = 0
    considered = 0
    for labels in _group_labels(store, grouping, directed, end):
        considered += len(labels)
        if len(labels) < 2:
            continue
        qualifying += 1
        repeated_interactions += len(labels)
        counts: Dict[int, int] = {}
        for lab in labels:
            counts[lab] = counts.get(lab, 0) + 1
        modal = max(counts, key=lambda lab: counts[lab])  # insertion order ties
        matches += counts[modal]
        total += len(labels)
    repeated_fraction = (repeated_interactions / considered) if considered else 0.0
    consistency: Optional[float]
    if total == 0 or repeated_fraction < min_fraction_repeated:
        consistency = None
    else:
        consistency = matches / total
    return GroupingConsistency(
        grouping=grouping,
        consistency=consistency,
        qualifying_groups=qualifying,
        repeated_fraction=repeated_fraction,
        total_interactions=considered,
    )


def analyze_consistency(store: DyTagStore,
                        min_fraction_repeated: float = MIN_FRACTION_REPEATED,
                        directed: bool = False,
                        end: Optional[int] = None) -> ConsistencyReport:
    return ConsistencyReport(
        pair=label_consistency(store, "pair", min_fraction_repeated, directed, end),
        edge_text=label_consistency(
            store, "edge-text", min_fraction_repeated, directed, end),
        directed=directed,
    )


@dataclass(frozen=True)
class ParetoReport:
    fraction: float
    selected_nodes: int
    active_nodes: int
    coverage_all: float
    coverage_test: Optional[float]

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "fraction": self.fraction,
            "selected_nodes": self.selected_nodes,
            "active_nodes": self.active_nodes,
            "coverage_all": self.coverage_all,
            "coverage_test": self.coverage_test,
        }


def pareto_coverage(split: SplitView, fraction: float = 0.10) -> ParetoReport:
    """Interaction share touched by the most active train+validation nodes."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    store = split.store
    window = np.concatenate(
        [store.src[: split.valid_end], store.dst[: split.valid_end]])
    if window.size == 0:
        raise ValueError("train+validation window is empty")
    ids, counts = np.unique(window, return_counts=True)
    order = np.lexsort((ids, -counts))
    take = math.ceil(fraction * len(ids))
    selected = np.sort(ids[order[:take]])

    hit = np.isin(store.src, selected) | np.isin(store.dst, selected)
    coverage_all = float(hit.mean()) if store.num_edges else 0.0
    test = list(split.test_indices)
    coverage_test = float(hit[test].mean()) if test else None
    return ParetoReport(
        fraction=fraction,
        selected_nodes=take,
        active_nodes=int(len(ids)),
        coverage_all=coverage_all,
        coverage_test=coverage_test,
    )


# --- plain-text rendering ----------------------------------------------------


def render_report_table(reports: Sequence[EvalReport]) -> str:
    """Metric table, one row per report, percentages at two decimals."""
    if not reports:
        return "(no reports)"

    def order(name: str) -> tuple:
        if name.startswith("hits@"):
            return ("hits@", int(name.split("@")[1]))
        return (name, 0)

    metric_names: List[str] = []
    for report in reports:
        for name in sorted(report.metrics, key=order):
            if name not in metric_names:
                metric_names.append(name)
    headers = ["dataset", "task", "mode", "n"] + metric_names
    rows = []
    for report in reports:
        row = [report.dataset or "-", report.task, report.mode,
               str(report.n_samples)]
        for name in metric_names:
            row.append(report.percent(name) if name in report.metrics else "-")
        rows.append(row)
    widths = [max(len(headers[c]), *(len(r[c]) for r in rows))
              for c in range(len(headers))]
    def fmt(cells: Sequence[str]) -> str:
        return "  ".join(cell.ljust(w) for cell, w in zip(cells, widths)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def render_consistency_table(reports: Mapping[str, ConsistencyReport]) -> str:
    """Rows = datasets, columns = the two grouping conventions."""
    headers = ["dataset", "pair", "edge-text", "repeated(pair)", "groups(pair)"]
    rows = []
    for name, report in reports.items():
        def cell(value: Optional[float]) -> str:
            return f"{100.0 * value:.2f}" if value is not None else "-"
        rows.append([
            name,
            cell(report.pair.consistency),
            cell(report.edge_text.consistency),
            f"{100.0 * report.pair.repeated_fraction:.2f}",
            str(report.pair.qualifying_groups),
        ])
    widths = [max(len(headers[c]), *(len(r[c]) for r in rows)) if rows
              else len(headers[c]) for c in range(len(headers))]
    def fmt(cells: Sequence[str]) -> str:
        return "  ".join(cell.ljust(w) for cell, w in zip(cells, widths)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)
