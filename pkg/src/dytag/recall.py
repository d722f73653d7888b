"""Candidate recall and ranking for node retrieval.

Filtering runs learned exclusion rules (or the built-in default) over
per-candidate metric evidence; ranking orders survivors by the metric
preferences recorded in global link knowledge and truncates to the cap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .knowledge.types import (
    Clause,
    GlobalLinkKnowledge,
    ThresholdRule,
    significance_rank,
)
from .metrics import PairEvidence, batch_evidence
from .store import DyTagStore

log = logging.getLogger("dytag.recall")

DEFAULT_CAP = 20

# Keep a candidate iff HI > 0 or CN > 0; as an exclusion rule over integer
# metrics that is exactly HI < 1 AND CN < 1.
DEFAULT_RULE = ThresholdRule(
    clauses=(Clause("HI", "<", 1.0), Clause("CN", "<", 1.0)),
    combinator="AND",
)


@dataclass(frozen=True)
class CandidateSet:
    """Survivors and exclusions for one retrieval query.

    ``candidates`` is ordered (recall order before ranking, comparator
    order after); ``capped`` records whether truncation has happened, so
    the cap invariant is only asserted once it applies.
    """

    source: int
    t: float
    candidates: tuple[tuple[int, PairEvidence], ...]
    excluded: tuple[tuple[int, ThresholdRule], ...] = ()
    cap: int = DEFAULT_CAP
    capped: bool = False

    def __post_init__(self) -> None:
        if self.cap <= 0:
            raise ValueError("cap must be positive")
        kept = {node for node, _ in self.candidates}
        if len(kept) != len(self.candidates):
            raise ValueError("duplicate candidate node")
        overlap = kept & {node for node, _ in self.excluded}
        if overlap:
            raise ValueError(f"nodes both kept and excluded: {sorted(overlap)}")
        if self.capped and len(self.candidates) > self.cap:
            raise ValueError("capped set exceeds its cap")

    @property
    def kept_nodes(self) -> list[int]:
        return [node for node, _ in self.candidates]

    @property
    def excluded_nodes(self) -> list[int]:
        return [node for node, _ in self.excluded]

    def rank_of(self, node: int) -> int | None:
        """1-based position among survivors, None if absent."""
        for i, (n, _) in enumerate(self.candidates, start=1):
            if n == node:
                return i
        return None


def _pool_evidence(
    source: int,
    pool: list[int],
    t: float,
    store: DyTagStore | None,
    evidences: list[PairEvidence] | None,
) -> list[PairEvidence]:
    if evidences is not None:
        if len(evidences) != len(pool):
            raise ValueError("evidences must align one-to-one with the pool")
        return list(evidences)
    if store is None:
        raise ValueError("need either a store or precomputed evidences")
    return batch_evidence(store, [(source, d, t) for d in pool])


def apply_thresholds(
    source: int,
    pool: list[int],
    t: float,
    rules: list[ThresholdRule] | tuple[ThresholdRule, ...],
    store: DyTagStore | None = None,
    evidences: list[PairEvidence] | None = None,
    cap: int = DEFAULT_CAP,
) -> CandidateSet:
    """Uncapped filter: any matching exclusion rule drops the candidate.

    An empty rule list falls back to the default recall rule, so a run
    whose knowledge produced no thresholds still recalls sensibly.
    """
    active = list(rules) if rules else [DEFAULT_RULE]
    evs = _pool_evidence(source, pool, t, store, evidences)
    kept: list[tuple[int, PairEvidence]] = []
    excluded: list[tuple[int, ThresholdRule]] = []
    for node, ev in zip(pool, evs):
        metrics = {"HI": ev.hi, "CN": ev.cn, "DNF": ev.dnf}
        matched = next((rule for rule in active if rule.matches(metrics)), None)
        if matched is None:
            kept.append((node, ev))
        else:
            excluded.append((node, matched))
    return CandidateSet(
        source=source, t=t, candidates=tuple(kept), excluded=tuple(excluded), cap=cap
    )


def default_recall(
    source: int,
    pool: list[int],
    t: float,
    store: DyTagStore | None = None,
    evidences: list[PairEvidence] | None = None,
    cap: int = DEFAULT_CAP,
) -> CandidateSet:
    """Keep candidates with HI > 0 or CN > 0; the no-knowledge recall rule."""
    return apply_thresholds(
        source, pool, t, [DEFAULT_RULE], store=store, evidences=evidences, cap=cap
    )


def sort_spec(knowledge: GlobalLinkKnowledge | None) -> list[tuple[str, str]]:
    """(metric, favors) pairs in ranking priority order.

    Numeric metrics only, strongest significance first; equal levels keep
    the canonical HI, CN, DNF order; "Not Relevant" metrics do not rank.
    An empty result means the HI-descending fallback applies.
    """
    if knowledge is None:
        return []
    usable = []
    for position, name in enumerate(("HI", "CN", "DNF")):
        entry = knowledge.metrics[name]
        if entry.significance == "Not Relevant":
            continue
        usable.append(((significance_rank(entry.significance), position), name, entry.favors))
    usable.sort(key=lambda item: item[0])
    return [(name, favors) for _, name, favors in usable]


def ranking_key(spec: list[tuple[str, str]]):
    """Comparator for (node, evidence) pairs as a plain sort key.

    Tuple keys give a total order for free; node id last makes it strict.
    """

    def key(item: tuple[int, PairEvidence]) -> tuple:
        node, ev = item
        parts: list[float | int] = []
        for metric, favors in spec:
            value = ev.metric(metric)
            parts.append(-value if favors == "high" else value)
        parts.append(node)
        return tuple(parts)

    return key


def rank_candidates(
    candidate_set: CandidateSet, knowledge: GlobalLinkKnowledge | None
) -> CandidateSet:
    """Order survivors by metric preference and truncate to the cap."""
    spec = sort_spec(knowledge)
    if not spec:
        if knowledge is not None:
            log.warning(
                "no usable metric in link knowledge; ranking by HI descending"
            )
        spec = [("HI", "high")]
    ordered = sorted(candidate_set.candidates, key=ranking_key(spec))
    return replace(
        candidate_set,
        candidates=tuple(ordered[: candidate_set.cap]),
        capped=True,
    )


def recall_and_rank(
    source: int,
    pool: list[int],
    t: float,
    rules: list[ThresholdRule] | tuple[ThresholdRule, ...],
    knowledge: GlobalLinkKnowledge | None,
    store: DyTagStore | None = None,
    evidences: list[PairEvidence] | None = None,
    cap: int = DEFAULT_CAP,
) -> CandidateSet:
    """The full retrieval front end: filter, order, cap."""
    uncapped = apply_thresholds(
        source, pool, t, rules, store=store, evidences=evidences, cap=cap
    )
    return rank_candidates(uncapped, knowledge)
