"""Statistical summaries fed to the knowledge agents.

Turns validation-split evidence into the three payload kinds the agents
consume: bucketed metric distributions for positive vs negative samples,
frequency-preference dictionaries for historical edge labels, and small
truncated text samples.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .metrics import PairEvidence, batch_evidence
from .seeding import rng_for
from .store import SplitView

logger = logging.getLogger(__name__)

BUCKET_KEYS = ("=0", ">0", ">1", ">2", ">3", ">4", ">5")
PREP_SCHEMA_VERSION = 1

POSITIVE = "positive"
NEGATIVE = "negative"

METRICS = ("HI", "CN", "DNF")
SCOPES = ("source-node", "destination-node", "pair")


@dataclass(frozen=True)
class DistributionDict:
    """Fraction of samples in each threshold bucket, for one polarity.

    Buckets are exactly the seven conditions ``=0, >0, >1, ..., >5``;
    ``=0`` and ``>0`` partition the samples and the ``>k`` series is
    non-increasing by construction.
    """

    buckets: dict[str, float]
    sample_count: int

    def validate(self) -> None:
        if tuple(self.buckets) != BUCKET_KEYS:
            raise ValueError(f"bucket keys must be {BUCKET_KEYS}, got {tuple(self.buckets)}")
        if abs(self.buckets["=0"] + self.buckets[">0"] - 1.0) > 1e-9:
            raise ValueError("'=0' and '>0' must partition the samples")
        series = [self.buckets[f">{k}"] for k in range(6)]
        for a, b in zip(series, series[1:]):
            if b > a + 1e-12:
                raise ValueError("'>k' buckets must be non-increasing")

    def to_json(self) -> dict:
        return {"buckets": dict(self.buckets), "sample_count": self.sample_count}


@dataclass(frozen=True)
class PreferenceDict:
    """How often the true label was the top-1/2/3 historical label.

    Values are percentages over ``counted_samples`` (samples whose history
    in scope was nonempty); they sum to 100 unless nothing was counted.
    """

    top1: float
    top2: float
    top3: float
    others: float
    counted_samples: int

    def validate(self) -> None:
        total = self.top1 + self.top2 + self.top3 + self.others
        if self.counted_samples > 0 and abs(total - 100.0) > 1e-6:
            raise ValueError(f"percentages must sum to 100, got {total}")
        if self.counted_samples == 0 and total != 0.0:
            raise ValueError("zero counted samples must yield the zero dictionary")

    def to_json(self) -> dict:
        return {
            "top1": self.top1,
            "top2": self.top2,
            "top3": self.top3,
            "others": self.others,
            "counted_samples": self.counted_samples,
        }


@dataclass(frozen=True)
class TextSample:
    src_text: str
    dst_text: str
    edge_text: str | None
    label_text: str

    def to_json(self) -> dict:
        return {
            "src_text": self.src_text,
            "dst_text": self.dst_text,
            "edge_text": self.edge_text,
            "label_text": self.label_text,
        }


@dataclass(frozen=True)
class TextSampleSet:
    samples: list[TextSample]
    truncation: int

    def to_json(self) -> dict:
        return {"truncation": self.truncation, "samples": [s.to_json() for s in self.samples]}


# ----------------------------------------------------------------------
# distributions


def bucket_distribution(values: Sequence[float]) -> DistributionDict:
    """Bucketed distribution of raw metric values."""
    if not values:
        raise ValueError("cannot bucket an empty value list")
    n = len(values)
    buckets = {"=0": sum(1 for v in values if v == 0) / n}
    for k in range(6):
        buckets[f">{k}"] = sum(1 for v in values if v > k) / n
    return DistributionDict(buckets=buckets, sample_count=n)


def metric_distribution(
    samples: Iterable[tuple[PairEvidence, str]], metric: str
) -> tuple[DistributionDict, DistributionDict]:
    """Positive and negative bucket distributions for one metric.

    ``samples`` pairs each evidence bundle with its polarity ("positive"
    or "negative"). Either polarity being empty is a hard error: the
    agents need both sides to compare.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    pos: list[float] = []
    neg: list[float] = []
    for evidence, polarity in samples:
        value = evidence.metric(metric)
        if polarity == POSITIVE:
            pos.append(value)
        elif polarity == NEGATIVE:
            neg.append(value)
        else:
            raise ValueError(f"unknown polarity {polarity!r}")
    if not pos or not neg:
        raise ValueError(
            f"metric_distribution needs samples of both polarities "
            f"(got {len(pos)} positive, {len(neg)} negative)"
        )
    return bucket_distribution(pos), bucket_distribution(neg)


# ----------------------------------------------------------------------
# label preferences


def _scope_counts(evidence: PairEvidence, scope: str) -> dict[int, int]:
    if scope == "source-node":
        return evidence.eld_src.counts
    if scope == "destination-node":
        return evidence.eld_dst.counts
    if scope == "pair":
        return evidence.eld_pair.counts
    raise ValueError(f"unknown scope {scope!r}; expected one of {SCOPES}")


def eld_preference(samples: Iterable[tuple[PairEvidence, int]], scope: str) -> PreferenceDict:
    """Rank position of the true label within the historical label counts.

    Labels are ranked by descending count with ties broken by earlier
    first occurrence (the count dicts iterate in first-occurrence order).
    Samples with empty history in scope are skipped; counted_samples
    reports how many contributed.
    """
    slots = {"top1": 0, "top2": 0, "top3": 0, "others": 0}
    counted = 0
    for evidence, true_label in samples:
        counts = _scope_counts(evidence, scope)
        if not counts:
            continue
        counted += 1
        ranked = [lab for lab, _ in sorted(counts.items(), key=lambda kv: -kv[1])]
        if true_label in ranked[:3]:
            slots[f"top{ranked.index(true_label) + 1}"] += 1
        else:
            slots["others"] += 1
    if counted == 0:
        return PreferenceDict(0.0, 0.0, 0.0, 0.0, counted_samples=0)
    return PreferenceDict(
        top1=100.0 * slots["top1"] / counted,
        top2=100.0 * slots["top2"] / counted,
        top3=100.0 * slots["top3"] / counted,
        others=100.0 * slots["others"] / counted,
        counted_samples=counted,
    )


# ----------------------------------------------------------------------
# text sampling


def _truncate(text: str | None, limit: int) -> str | None:
    if text is None:
        return None
    return text[:limit]


def sample_texts(split: SplitView, count: int = 30, truncation: int = 50) -> TextSampleSet:
    """Texts of validation edges at uniform interval positions.

    Index i of count maps to validation offset floor(i * N / count); a
    validation split smaller than count is taken whole (logged).
    """
    store = split.store
    n = split.valid_end - split.train_end
    if n == 0:
        raise ValueError("validation split is empty; cannot sample texts")
    if n < count:
        logger.info("text sample clamped from %d to %d validation edges", count, n)
        offsets = list(range(n))
    else:
        offsets = [math.floor(i * n / count) for i in range(count)]
    samples = []
    for off in offsets:
        e = store.edge(split.train_end + off)
        samples.append(
            TextSample(
                src_text=_truncate(store.node_texts[e.src], truncation),
                dst_text=_truncate(store.node_texts[e.dst], truncation),
                edge_text=_truncate(None if e.text_id is None else store.edge_texts[e.text_id], truncation),
                label_text=_truncate(store.labels[e.label], truncation),
            )
        )
    return TextSampleSet(samples=samples, truncation=truncation)


def sample_negative_pair_texts(
    store, negatives: Sequence[tuple[int, int, float]], count: int = 30, truncation: int = 50
) -> list[dict]:
    """Node texts of sampled negative pairs, spaced like sample_texts.

    Negatives carry no edge text or label; the link-text agent only
    compares the pair's node texts against the positive pairs'.
    """
    n = len(negatives)
    if n == 0:
        return []
    if n < count:
        offsets = list(range(n))
    else:
        offsets = [math.floor(i * n / count) for i in range(count)]
    out = []
    for off in offsets:
        u, v, _ = negatives[off]
        out.append(
            {
                "src_text": _truncate(store.node_texts[u], truncation),
                "dst_text": _truncate(store.node_texts[v], truncation),
            }
        )
    return out


# ----------------------------------------------------------------------
# negative sampling


def _position(eligible: Sequence[int], true_dst: int, pos: int | None) -> int:
    """Index of true_dst in eligible, or len(eligible) when absent."""
    if pos is not None:
        return pos
    try:
        return eligible.index(true_dst)  # type: ignore[union-attr]
    except ValueError:
        return len(eligible)


def draw_negative(
    eligible: Sequence[int], true_dst: int, rng: np.random.Generator, pos: int | None = None
) -> int:
    """One destination uniform over ``eligible`` minus the true destination.

    Single draw over a shifted index range, so the result is exactly
    uniform and reproducible from the generator state. Callers with a
    precomputed position map pass ``pos`` to skip the linear lookup.
    """
    n = len(eligible)
    pos = _position(eligible, true_dst, pos)
    if n - (1 if pos < n else 0) < 1:
        raise ValueError("need at least one eligible destination besides the true one")
    k = int(rng.integers(0, n - 1 if pos < n else n))
    if pos < n and k >= pos:
        k += 1
    return int(eligible[k])


def draw_negative_pool(
    eligible: Sequence[int],
    true_dst: int,
    k: int,
    rng: np.random.Generator,
    pos: int | None = None,
) -> list[int]:
    """``k`` distinct negatives, uniform without replacement.

    Rejection sampling over the shifted index range: O(k) expected draws
    when k is small against the eligible set, which it is for retrieval
    pools (100 of up to hundreds of thousands).
    """
    n = len(eligible)
    pos = _position(eligible, true_dst, pos)
    avail = n - (1 if pos < n else 0)
    take = min(k, avail)
    if take < k:
        logger.info("negative pool clamped from %d to %d eligible destinations", k, take)
    if take == avail:
        return [int(x) for i, x in enumerate(eligible) if i != pos]
    seen: set[int] = set()
    out: list[int] = []
    while len(out) < take:
        d = int(rng.integers(0, avail))
        if d in seen:
            continue
        seen.add(d)
        if d >= pos:
            d += 1
        out.append(int(eligible[d]))
    return out


def build_negative_validation_samples(split: SplitView, seed: int) -> list[tuple[int, int, float]]:
    """One negative (u, v_neg, t) per positive validation edge.

    Negatives keep the positive's source and timestamp; the destination
    is uniform over eligible destinations (destination partition for
    bipartite stores, all registered nodes otherwise) excluding the true
    destination.
    """
    store = split.store
    eligible = store.eligible_destinations()
    if len(eligible) < 2:
        raise ValueError("need at least two eligible destinations to sample negatives")
    where = {node: i for i, node in enumerate(eligible)}
    rng = rng_for(seed, "validation-negatives")
    out = []
    for i in split.valid_indices:
        e = store.edge(i)
        out.append(
            (e.src, draw_negative(eligible, e.dst, rng, pos=where.get(e.dst, len(eligible))), e.ts)
        )
    return out


# ----------------------------------------------------------------------
# the assembled payload handed to the agents


def prepare_knowledge_inputs(
    split: SplitView,
    seed: int,
    text_count: int = 30,
    truncation: int = 50,
) -> dict:
    """All agent-facing statistics as one versioned JSON document."""
    store = split.store
    positives = [(store.edge(i), POSITIVE) for i in split.valid_indices]
    negatives = [(q, NEGATIVE) for q in build_negative_validation_samples(split, seed)]

    tagged: list[tuple[float, int, int, int, str, int | None]] = []
    for e, pol in positives:
        tagged.append((e.ts, e.src, e.dst, 0, pol, e.label))
    for (u, v, t), pol in negatives:
        tagged.append((t, u, v, 1, pol, None))
    # stable ordering: by time, positives before their negatives
    tagged.sort(key=lambda r: (r[0], r[3]))

    queries = [(r[1], r[2], r[0]) for r in tagged]
    evidences = batch_evidence(store, queries)

    samples = [(ev, r[4]) for ev, r in zip(evidences, tagged)]
    distributions = {}
    for metric in METRICS:
        pos_dist, neg_dist = metric_distribution(samples, metric)
        pos_dist.validate()
        neg_dist.validate()
        distributions[metric] = {POSITIVE: pos_dist.to_json(), NEGATIVE: neg_dist.to_json()}

    positive_pairs = [
        (ev, r[5]) for ev, r in zip(evidences, tagged) if r[4] == POSITIVE
    ]
    preferences = {}
    for scope in SCOPES:
        pref = eld_preference(positive_pairs, scope)
        pref.validate()
        preferences[scope] = pref.to_json()

    texts = sample_texts(split, count=text_count, truncation=truncation)
    negative_texts = sample_negative_pair_texts(
        store, [q for q, _ in negatives], count=text_count, truncation=truncation
    )
    return {
        "schema_version": PREP_SCHEMA_VERSION,
        "distributions": distributions,
        "preferences": preferences,
        "text_samples": texts.to_json(),
        "negative_text_samples": {"truncation": truncation, "samples": negative_texts},
        "counts": {
            "validation_positives": len(positives),
            "validation_negatives": len(negatives),
        },
    }
