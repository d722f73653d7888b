"""The summary and reflection agent roles.

Each run_* function renders its externalized template, completes through
the gateway (with the standard one-re-ask policy), validates the reply
against the agent's schema, and returns typed knowledge plus the
transcript digests that produced it.
"""

import json
import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from string import Template
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import rendering
from ..gateway import Gateway, StructuredParseError, system_user_request
from ..seeding import rng_for
from ..store import SplitView
from . import schemas
from .types import (
    DatasetCard,
    GlobalEdgeLabelKnowledge,
    GlobalLinkKnowledge,
    GuidanceEntry,
    Indicator,
    MetricKnowledge,
    NodeProfile,
    ReflectionOutcome,
    ThresholdRule,
)

log = logging.getLogger("dytag.knowledge")

DEFAULT_ACTIVE_FRACTION = 0.10
DEFAULT_TRAJECTORY_COUNT = 50
RECENT_INTERACTION_CAP = 30
TEXT_TRUNCATION = 50
OWN_TEXT_TRUNCATION = 200
REFLECTION_ERROR_SAMPLE_CAP = 10

_TEMPLATE_CACHE: Dict[str, Template] = {}


def _template(name: str) -> Template:
    if name not in _TEMPLATE_CACHE:
        text = (resources.files(__package__) / "templates" / f"{name}.txt").read_text(
            encoding="utf-8")
        _TEMPLATE_CACHE[name] = Template(text)
    return _TEMPLATE_CACHE[name]


def render_template(name: str, **values: str) -> str:
    """Strict substitution: a missing placeholder is a template bug."""
    return _template(name).substitute(**values)


def render_global_description(card: DatasetCard) -> str:
    return render_template(
        "global_description",
        graph_type=card.graph_type,
        node_type=card.node_type,
        node_text_type=card.node_text_type,
        edge_type=card.edge_type,
        edge_text_type=card.edge_text_type,
    ).rstrip("\n")


@dataclass(frozen=True)
class AgentRuntime:
    """Gateway plus decoding settings shared by every agent call."""

    gateway: Gateway
    model: str
    temperature: float = 0.0
    max_tokens: int = 1024

    def ask(self, system: str, user: str, schema):
        request = system_user_request(
            self.model, system, user,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            expect_structured=True,
        )
        return self.gateway.complete_structured(request, schema)


# --- initial agent ---------------------------------------------------------


def run_initial_agent(runtime: AgentRuntime, description: str,
                      task_name: str) -> Tuple[DatasetCard, Tuple[str, ...]]:
    if not description.strip():
        raise ValueError("dataset description must be nonempty")
    system = render_template("initial_system")
    user = render_template("initial_input", task_name=task_name,
                           description=description)
    result = runtime.ask(system, user, schemas.DATASET_CARD)
    card = DatasetCard(
        task_type=result.value["task_type"],
        graph_type=result.value["graph_type"],
        node_type=result.value["node_type"],
        node_text_type=result.value["node_text_type"],
        edge_type=result.value["edge_type"],
        edge_text_type=result.value["edge_text_type"],
    )
    return card, result.digests


# --- global link summary ----------------------------------------------------

_METRIC_KEYS = (
    ("HI", "Historical Interaction Count"),
    ("CN", "Common Neighbor Count"),
    ("DNF", "Destination Node Frequency"),
)


def _distribution_block(header: str, dists: dict, polarity: str) -> str:
    lines = [header]
    by_metric = {
        "HI": rendering.DIST_HI_LINE,
        "CN": rendering.DIST_CN_LINE,
        "DNF": rendering.DIST_DNF_LINE,
    }
    for metric in ("HI", "CN", "DNF"):
        payload = rendering.render_distribution_json(dists[metric][polarity]["buckets"])
        lines.append(by_metric[metric].format(payload=payload))
    return "\n".join(lines)


def _pair_text_block(prep: dict) -> str:
    lines = ["Positive pairs:"]
    for i, s in enumerate(prep["text_samples"]["samples"], start=1):
        lines.append(
            f'{i}. Source text: "{s["src_text"]}" | Destination text: "{s["dst_text"]}"')
    lines.append("")
    lines.append("Negative pairs:")
    for i, s in enumerate(prep["negative_text_samples"]["samples"], start=1):
        lines.append(
            f'{i}. Source text: "{s["src_text"]}" | Destination text: "{s["dst_text"]}"')
    return "\n".join(lines)


def _indicator_from(payload: Optional[dict]) -> Optional[Indicator]:
    return Indicator.from_json(payload)


@dataclass(frozen=True)
class GlobalLinkResult:
    knowledge: GlobalLinkKnowledge
    thresholds: List[ThresholdRule]
    structural_digests: Tuple[str, ...]
    text_digests: Tuple[str, ...]


def run_global_link_summary(runtime: AgentRuntime, card: DatasetCard,
                            prep: dict) -> GlobalLinkResult:
    description = render_global_description(card)

    structural_system = render_template("structural_system",
                                        global_description=description)
    structural_input = render_template(
        "structural_input",
        positive_distributions=_distribution_block(
            rendering.POSITIVE_DIST_HEADER, prep["distributions"], "positive"),
        negative_distributions=_distribution_block(
            rendering.NEGATIVE_DIST_HEADER, prep["distributions"], "negative"),
    )
    structural = runtime.ask(structural_system, structural_input,
                             schemas.GLOBAL_STRUCTURAL)

    text_system = render_template("link_text_system", global_description=description)
    text_input = render_template("link_text_input",
                                 text_samples=_pair_text_block(prep))
    text = runtime.ask(text_system, text_input, schemas.LINK_TEXT)

    metrics: Dict[str, MetricKnowledge] = {
        "text": MetricKnowledge(
            significance=text.value["Significance"],
            explanation=f'{text.value["Reason"]} {text.value["Explanation"]}',
        ),
    }
    for short, heading in _METRIC_KEYS:
        entry = structural.value[heading]
        metrics[short] = MetricKnowledge(
            significance=entry["Significance"],
            explanation=entry["Explanation"],
            favors=entry["Favors"],
            positive_indicator=_indicator_from(entry.get("Positive Indicator")),
            negative_indicator=_indicator_from(entry.get("Negative Indicator")),
        )
    overall = structural.value["Overall"]
    knowledge = GlobalLinkKnowledge(
        metrics=metrics,
        overall_positive=_indicator_from(overall.get("Positive Indicator")),
        overall_negative=_indicator_from(overall.get("Negative Indicator")),
        overall_rules=overall["Rules"],
    )
    # Only the overall negative indicator becomes a recall threshold: it is
    # the one condition the agent asserts can exclude a sample outright.
    thresholds = []
    if knowledge.overall_negative is not None:
        thresholds.append(ThresholdRule.from_indicator(knowledge.overall_negative))
    return GlobalLinkResult(
        knowledge=knowledge,
        thresholds=thresholds,
        structural_digests=structural.digests,
        text_digests=text.digests,
    )


# --- global edge label summary ----------------------------------------------


def _labeled_text_block(prep: dict) -> str:
    lines = ["Labeled interaction samples:"]
    for i, s in enumerate(prep["text_samples"]["samples"], start=1):
        edge_text = s["edge_text"] if s["edge_text"] is not None else "(none)"
        lines.append(
            f'{i}. Source text: "{s["src_text"]}" | Destination text: '
            f'"{s["dst_text"]}" | Edge text: "{edge_text}" | Label: "{s["label_text"]}"')
    return "\n".join(lines)


def _preference_lines(prep: dict) -> str:
    def payload(scope: str) -> str:
        pref = dict(prep["preferences"][scope])
        counted = pref.pop("counted_samples")
        return rendering.render_preference_json(pref, counted)

    return "\n".join([
        rendering.SOURCE_PREF_DIST_LINE.format(payload=payload("source-node")),
        rendering.DESTINATION_PREF_DIST_LINE.format(payload=payload("destination-node")),
        rendering.PAIR_PREF_DIST_LINE.format(payload=payload("pair")),
    ])


@dataclass(frozen=True)
class GlobalEdgeLabelResult:
    knowledge: GlobalEdgeLabelKnowledge
    text_digests: Tuple[str, ...]
    eld_digests: Tuple[str, ...]


def run_global_edge_label_summary(runtime: AgentRuntime, card: DatasetCard,
                                  prep: dict) -> GlobalEdgeLabelResult:
    description = render_global_description(card)

    text_system = render_template("edge_text_system", global_description=description)
    text_input = render_template("edge_text_input",
                                 text_samples=_labeled_text_block(prep))
    text = runtime.ask(text_system, text_input, schemas.EDGE_TEXT)

    eld_system = render_template("eld_system", global_description=description)
    eld_input = render_template("eld_input", preference_lines=_preference_lines(prep))
    eld = runtime.ask(eld_system, eld_input, schemas.ELD_GUIDANCE)

    def entry(payload: dict) -> GuidanceEntry:
        return GuidanceEntry(
            significance=payload["Significance"],
            guidance=f'{payload["Reason"]} {payload["Explanation"]}',
        )

    knowledge = GlobalEdgeLabelKnowledge(
        node_text=entry(text.value["Node Text"]),
        edge_text=entry(text.value["Edge Text"]),
        eld_guidance=GuidanceEntry(
            significance=eld.value["Significance"],
            guidance=eld.value["Guidance"],
        ),
    )
    return GlobalEdgeLabelResult(
        knowledge=knowledge,
        text_digests=text.digests,
        eld_digests=eld.digests,
    )


# --- local summaries ----------------------------------------------------------


def select_active_nodes(split: SplitView,
                        fraction: float = DEFAULT_ACTIVE_FRACTION) -> List[int]:
    """Top ceil(fraction * active) nodes by train+validation frequency.

    Ranked by frequency descending, ties by node id ascending.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    if split.valid_end == 0:
        raise ValueError("train+validation window is empty")
    store = split.store
    window = np.concatenate([store.src[:split.valid_end], store.dst[:split.valid_end]])
    ids, counts = np.unique(window, return_counts=True)
    order = np.lexsort((ids, -counts))
    take = math.ceil(fraction * len(ids))
    return [int(ids[i]) for i in order[:take]]


@dataclass(frozen=True)
class LocalEvidence:
    node: int
    frequency: int
    as_source: int
    as_destination: int
    avg_neighbor_frequency: float
    label_counts: Dict[int, int]
    # (other node, edge text id or None, label id, direction) most recent last
    recent: List[Tuple[int, Optional[int], int, str]]


def window_evidence(split: SplitView, nodes: Sequence[int],
                    recent_cap: int = RECENT_INTERACTION_CAP) -> Dict[int, LocalEvidence]:
    """One pass over the train+validation window for the selected nodes.

    Folding matches the metric engine: a self loop counts twice toward
    frequency and label counts and makes the node its own neighbor.
    """
    store = split.store
    selected = set(int(n) for n in nodes)
    freq: Dict[int, int] = {}
    as_src: Dict[int, int] = {}
    as_dst: Dict[int, int] = {}
    nbrs: Dict[int, set] = {n: set() for n in selected}
    labels: Dict[int, Dict[int, int]] = {n: {} for n in selected}
    recent: Dict[int, deque] = {n: deque(maxlen=recent_cap) for n in selected}

    src, dst = store.src, store.dst
    label, text_id = store.label, store.text_id
    for i in range(split.valid_end):
        u, v, lab = int(src[i]), int(dst[i]), int(label[i])
        tid = int(text_id[i])
        freq[u] = freq.get(u, 0) + 1
        freq[v] = freq.get(v, 0) + 1
        as_src[u] = as_src.get(u, 0) + 1
        as_dst[v] = as_dst.get(v, 0) + 1
        if u in selected:
            nbrs[u].add(v)
            labels[u][lab] = labels[u].get(lab, 0) + 1
            recent[u].append((v, None if tid == -1 else tid, lab, "out"))
        if v in selected:
            nbrs[v].add(u)
            labels[v][lab] = labels[v].get(lab, 0) + 1
            recent[v].append((u, None if tid == -1 else tid, lab, "in"))

    out = {}
    for n in selected:
        neighbor_freqs = [freq[m] for m in nbrs[n]]
        out[n] = LocalEvidence(
            node=n,
            frequency=freq.get(n, 0),
            as_source=as_src.get(n, 0),
            as_destination=as_dst.get(n, 0),
            avg_neighbor_frequency=(
                sum(neighbor_freqs) / len(neighbor_freqs) if neighbor_freqs else 0.0),
            label_counts=labels[n],
            recent=list(recent[n]),
        )
    return out


def _truncate(text: Optional[str], limit: int) -> str:
    if not text:
        return ""
    return text[:limit]


def _profile_text_block(store, evidence: LocalEvidence) -> str:
    lines = [f'Node text: "{_truncate(store.node_texts.get(evidence.node), OWN_TEXT_TRUNCATION)}"']
    if evidence.recent:
        lines.append("Recent interactions (most recent last):")
        for i, (other, tid, lab, direction) in enumerate(evidence.recent, start=1):
            edge_text = _truncate(
                store.edge_texts.get(tid) if tid is not None else None, TEXT_TRUNCATION)
            lines.append(
                f'{i}. Neighbor text: "{_truncate(store.node_texts.get(other), TEXT_TRUNCATION)}"'
                f' | Edge text: "{edge_text or "(none)"}"'
                f' | Label: "{store.labels[lab]}" | Direction: {direction}')
    else:
        lines.append("Recent interactions: none.")
    return "\n".join(lines)


def _label_counts_as_text(store, label_counts: Dict[int, int]) -> Dict[str, int]:
    return {store.labels[lab]: count for lab, count in label_counts.items()}


def run_local_summary(runtime: AgentRuntime, store, card: DatasetCard,
                      evidence: LocalEvidence
                      ) -> Tuple[Optional[NodeProfile], Tuple[str, ...]]:
    """Two completions (text profile, structural preference) for one node.

    A parse failure after the re-ask drops the profile (logged) rather
    than aborting the stage; the digests of every attempt are still
    returned for the transcript trail.
    """
    description = render_global_description(card)
    eld_payload = rendering.render_label_counts(
        _label_counts_as_text(store, evidence.label_counts))
    profile_input = render_template(
        "local_profile_input",
        text_samples=_profile_text_block(store, evidence),
        edge_label_block=(
            rendering.ELD_LINE.format(payload=eld_payload)
            + "\nThe distribution maps each edge label to its historical count "
              "for this node."),
    )
    profile_system = render_template("local_profile_system",
                                     global_description=description)
    digests: Tuple[str, ...] = ()
    try:
        profile = runtime.ask(profile_system, profile_input, schemas.LOCAL_PROFILE)
        digests += profile.digests
    except StructuredParseError as exc:
        log.warning("node %d: profile reply malformed after re-ask; omitting "
                    "profile", evidence.node)
        return None, digests + exc.digests

    metric_block = rendering.render_node_activity(
        "", evidence.node, evidence.frequency, evidence.as_source,
        evidence.as_destination, evidence.avg_neighbor_frequency)
    structural_input = render_template("local_structural_input",
                                       metric_block=metric_block)
    structural_system = render_template("local_structural_system",
                                        global_description=description)
    try:
        structural = runtime.ask(structural_system, structural_input,
                                 schemas.STRUCTURAL_PREFERENCE)
        digests += structural.digests
    except StructuredParseError as exc:
        log.warning("node %d: structural preference reply malformed after "
                    "re-ask; omitting profile", evidence.node)
        return None, digests + exc.digests

    profile_value = profile.value
    return NodeProfile(
        node_description=profile_value["Node Description"],
        neighbor_preference=profile_value["Neighbor Preference"],
        edge_text_preference=profile_value["Edge Text Preference"],
        edge_label_preference=profile_value["Edge Label Preference"],
        structural_preference=structural.value["Structural Preference"],
        explanation=profile_value["Explanation"],
    ), digests


def run_local_summaries(runtime: AgentRuntime, split: SplitView, card: DatasetCard,
                        nodes: Sequence[int], max_workers: int = 8
                        ) -> Tuple[Dict[int, NodeProfile], Dict[int, Tuple[str, ...]]]:
    """Profiles for the given nodes, concurrently, in deterministic order."""
    store = split.store
    evidence = window_evidence(split, nodes)
    ordered = [int(n) for n in nodes]
    profiles: Dict[int, NodeProfile] = {}
    digest_map: Dict[int, Tuple[str, ...]] = {}

    def worker(node: int):
        return run_local_summary(runtime, store, card, evidence[node])

    if max_workers <= 1:
        results = [worker(n) for n in ordered]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(worker, ordered))
    for node, (profile, digests) in zip(ordered, results):
        digest_map[node] = digests
        if profile is not None:
            profiles[node] = profile
    return profiles, digest_map


# --- trajectories and reflection ---------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    src: int
    dst: int
    ts: float
    hi: int
    cn: int
    dnf: int
    prediction: int
    correct: bool


def collect_trajectories(split: SplitView,
                         predict: Callable[[int, int, float], int],
                         negatives: Sequence[Tuple[int, int, float]],
                         count: int = DEFAULT_TRAJECTORY_COUNT,
                         seed: int = 0) -> Tuple[List[Trajectory], float]:
    """Run the surrogate predictor on seeded negative samples.

    Returns (trajectories, accuracy); false positives are listed first
    since they are what reflection inspects. ``predict`` closes over
    whatever knowledge the surrogate uses.
    """
    from ..metrics import batch_evidence

    if not negatives:
        raise ValueError("no negative validation samples to collect trajectories on")
    take = min(count, len(negatives))
    if take < count:
        log.info("trajectory sample clamped from %d to %d negatives", count, take)
    rng = rng_for(seed, "trajectories")
    chosen = sorted(int(i) for i in rng.permutation(len(negatives))[:take])
    queries = [negatives[i] for i in chosen]
    queries.sort(key=lambda q: q[2])
    evidences = batch_evidence(split.store, queries)

    trajectories = []
    hits = 0
    for (u, v, t), ev in zip(queries, evidences):
        answer = int(predict(u, v, t))
        correct = answer == 0
        hits += int(correct)
        trajectories.append(Trajectory(
            src=u, dst=v, ts=t,
            hi=ev.hi, cn=ev.cn, dnf=ev.dst_activity.frequency,
            prediction=answer, correct=correct,
        ))
    accuracy = hits / len(trajectories)
    trajectories.sort(key=lambda tr: (tr.correct, tr.ts))
    return trajectories, accuracy


def _error_sample_block(trajectories: Sequence[Trajectory]) -> str:
    false_positives = [t for t in trajectories if not t.correct]
    if not false_positives:
        return "None."
    lines = []
    for t in false_positives[:REFLECTION_ERROR_SAMPLE_CAP]:
        lines.append(
            f"- Pair ({t.src}, {t.dst}) at time {t.ts:g}: HI={t.hi}, CN={t.cn}, "
            f"DNF={t.dnf}; predicted 1, actual negative")
    return "\n".join(lines)


def run_reflection(runtime: AgentRuntime, knowledge: GlobalLinkKnowledge,
                   trajectories: Sequence[Trajectory], accuracy: float
                   ) -> Tuple[ReflectionOutcome, Tuple[str, ...], bool]:
    """Returns (outcome, digests, fallback_used).

    A malformed reply after the re-ask degrades to "Not Significant":
    parse uncertainty must never mutate knowledge.
    """
    system = render_template("reflection_system")
    user = render_template(
        "reflection_input",
        global_knowledge=json.dumps(knowledge.to_json(), ensure_ascii=True),
        accuracy=f"{accuracy:.4f}",
        error_samples=_error_sample_block(trajectories),
    )
    try:
        result = runtime.ask(system, user, schemas.REFLECTION)
    except StructuredParseError as exc:
        log.warning("reflection reply malformed after re-ask; defaulting to "
                    "Not Significant")
        return ReflectionOutcome("Not Significant"), exc.digests, True
    outcome = ReflectionOutcome(
        significance=result.value["Significance"],
        supplementation=result.value.get("Supplementation", ""),
    )
    return outcome, result.digests, False
