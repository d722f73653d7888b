"""Knowledge artifacts produced by the summary and reflection agents.

Everything here serializes into knowledge.json (schema-versioned, with
provenance digests pointing at the transcript records that produced each
entry) and loads back to an identical document.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

from ..ops import COMPARATORS, compare

KNOWLEDGE_SCHEMA_VERSION = 1

# Closed significance vocabularies. Generation agents grade evidence on the
# four-level scale; local/reflection flags are binary.
GENERATION_LEVELS = ("Extremely Significant", "Helpful", "Maybe Related", "Not Relevant")
BINARY_LEVELS = ("Significant", "Not Significant")
NOT_SIGNIFICANT = "Not Significant"

THRESHOLD_METRICS = ("HI", "CN", "DNF")
FAVORS = ("high", "low")

# Metric keys of the global link record. "text" carries no indicators.
LINK_METRICS = ("text", "HI", "CN", "DNF")


def significance_rank(level: str) -> int:
    """Lower is stronger; unknown levels rejected upstream at parse time."""
    return GENERATION_LEVELS.index(level)


@dataclass(frozen=True)
class DatasetCard:
    task_type: str
    graph_type: str
    node_type: str
    node_text_type: str
    edge_type: str
    edge_text_type: str

    def __post_init__(self):
        for name in ("task_type", "graph_type", "node_type", "node_text_type",
                     "edge_type", "edge_text_type"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise ValueError(f"dataset card field {name} must be nonempty")

    def to_json(self) -> dict:
        return {
            "task_type": self.task_type,
            "graph_type": self.graph_type,
            "node_type": self.node_type,
            "node_text_type": self.node_text_type,
            "edge_type": self.edge_type,
            "edge_text_type": self.edge_text_type,
        }

    @staticmethod
    def from_json(payload: dict) -> "DatasetCard":
        return DatasetCard(**{k: payload[k] for k in (
            "task_type", "graph_type", "node_type", "node_text_type",
            "edge_type", "edge_text_type")})


@dataclass(frozen=True)
class Clause:
    metric: str
    op: str
    value: float

    def __post_init__(self):
        if self.metric not in THRESHOLD_METRICS:
            raise ValueError(
                f"clause metric must be one of {THRESHOLD_METRICS}, got {self.metric!r}")
        if self.op not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.op!r}")
        if not math.isfinite(self.value):
            raise ValueError("clause bound must be finite")

    def holds(self, metrics: Mapping[str, float]) -> bool:
        return compare(self.op, float(metrics[self.metric]), self.value)

    def to_json(self) -> dict:
        return {"metric": self.metric, "op": self.op, "value": self.value}

    @staticmethod
    def from_json(payload: dict) -> "Clause":
        return Clause(payload["metric"], payload["op"], float(payload["value"]))


@dataclass(frozen=True)
class Indicator:
    """A threshold condition in both prose and machine-readable form."""

    text: str
    clauses: Tuple[Clause, ...]
    combinator: str

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(self.clauses))
        if not self.clauses:
            raise ValueError("indicator needs at least one clause")
        if self.combinator not in ("AND", "OR"):
            raise ValueError("combinator must be AND or OR")

    def holds(self, metrics: Mapping[str, float]) -> bool:
        results = (c.holds(metrics) for c in self.clauses)
        return all(results) if self.combinator == "AND" else any(results)

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "clauses": [c.to_json() for c in self.clauses],
            "combinator": self.combinator,
        }

    @staticmethod
    def from_json(payload: Optional[dict]) -> Optional["Indicator"]:
        if payload is None:
            return None
        return Indicator(
            text=payload["text"],
            clauses=tuple(Clause.from_json(c) for c in payload["clauses"]),
            combinator=payload["combinator"],
        )


@dataclass(frozen=True)
class MetricKnowledge:
    significance: str
    explanation: str
    # Direction the metric favors for positives; None for the text record,
    # which never participates in metric-based ranking.
    favors: Optional[str] = None
    positive_indicator: Optional[Indicator] = None
    negative_indicator: Optional[Indicator] = None

    def __post_init__(self):
        if self.significance not in GENERATION_LEVELS:
            raise ValueError(f"unknown significance level {self.significance!r}")
        if self.favors is not None and self.favors not in FAVORS:
            raise ValueError("favors must be 'high' or 'low'")

    def to_json(self) -> dict:
        return {
            "significance": self.significance,
            "explanation": self.explanation,
            "favors": self.favors,
            "positive_indicator":
                None if self.positive_indicator is None else self.positive_indicator.to_json(),
            "negative_indicator":
                None if self.negative_indicator is None else self.negative_indicator.to_json(),
        }

    @staticmethod
    def from_json(payload: dict) -> "MetricKnowledge":
        return MetricKnowledge(
            significance=payload["significance"],
            explanation=payload["explanation"],
            favors=payload.get("favors"),
            positive_indicator=Indicator.from_json(payload.get("positive_indicator")),
            negative_indicator=Indicator.from_json(payload.get("negative_indicator")),
        )


@dataclass(frozen=True)
class GlobalLinkKnowledge:
    metrics: Dict[str, MetricKnowledge]
    overall_positive: Optional[Indicator]
    overall_negative: Optional[Indicator]
    overall_rules: str

    def __post_init__(self):
        present = tuple(self.metrics.keys())
        if sorted(present) != sorted(LINK_METRICS):
            raise ValueError(
                f"global link knowledge must cover exactly {LINK_METRICS}, got {present}")
        text = self.metrics["text"]
        if text.positive_indicator or text.negative_indicator or text.favors:
            raise ValueError("indicators and favors belong to numeric metrics only")
        for name in ("HI", "CN", "DNF"):
            if self.metrics[name].favors is None:
                raise ValueError(f"metric {name} needs a favors direction")

    def to_json(self) -> dict:
        return {
            "metrics": {k: v.to_json() for k, v in self.metrics.items()},
            "overall_positive":
                None if self.overall_positive is None else self.overall_positive.to_json(),
            "overall_negative":
                None if self.overall_negative is None else self.overall_negative.to_json(),
            "overall_rules": self.overall_rules,
        }

    @staticmethod
    def from_json(payload: dict) -> "GlobalLinkKnowledge":
        return GlobalLinkKnowledge(
            metrics={k: MetricKnowledge.from_json(v)
                     for k, v in payload["metrics"].items()},
            overall_positive=Indicator.from_json(payload.get("overall_positive")),
            overall_negative=Indicator.from_json(payload.get("overall_negative")),
            overall_rules=payload["overall_rules"],
        )


@dataclass(frozen=True)
class GuidanceEntry:
    significance: str
    guidance: str

    def __post_init__(self):
        if self.significance not in GENERATION_LEVELS:
            raise ValueError(f"unknown significance level {self.significance!r}")

    def to_json(self) -> dict:
        return {"significance": self.significance, "guidance": self.guidance}

    @staticmethod
    def from_json(payload: dict) -> "GuidanceEntry":
        return GuidanceEntry(payload["significance"], payload["guidance"])


@dataclass(frozen=True)
class GlobalEdgeLabelKnowledge:
    node_text: GuidanceEntry
    edge_text: GuidanceEntry
    eld_guidance: GuidanceEntry

    def to_json(self) -> dict:
        return {
            "node_text": self.node_text.to_json(),
            # Edge text is withheld from classification prompts unless the
            # raw-edge-text variant is explicitly enabled.
            "edge_text": dict(self.edge_text.to_json(),
                              usable_without_edge_text=False),
            "eld_guidance": self.eld_guidance.to_json(),
        }

    @staticmethod
    def from_json(payload: dict) -> "GlobalEdgeLabelKnowledge":
        edge_text = dict(payload["edge_text"])
        edge_text.pop("usable_without_edge_text", None)
        return GlobalEdgeLabelKnowledge(
            node_text=GuidanceEntry.from_json(payload["node_text"]),
            edge_text=GuidanceEntry.from_json(edge_text),
            eld_guidance=GuidanceEntry.from_json(payload["eld_guidance"]),
        )


@dataclass(frozen=True)
class ThresholdRule:
    clauses: Tuple[Clause, ...]
    combinator: str
    action: str = "exclude-as-negative"

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(self.clauses))
        if not self.clauses:
            raise ValueError("threshold rule needs at least one clause")
        if self.combinator not in ("AND", "OR"):
            raise ValueError("combinator must be AND or OR")
        if self.action != "exclude-as-negative":
            raise ValueError(f"unsupported action {self.action!r}")

    def matches(self, metrics: Mapping[str, float]) -> bool:
        results = (c.holds(metrics) for c in self.clauses)
        return all(results) if self.combinator == "AND" else any(results)

    def describe(self) -> str:
        joiner = " AND " if self.combinator == "AND" else " OR "
        return joiner.join(f"{c.metric} {c.op} {c.value:g}" for c in self.clauses)

    def to_json(self) -> dict:
        return {
            "clauses": [c.to_json() for c in self.clauses],
            "combinator": self.combinator,
            "action": self.action,
        }

    @staticmethod
    def from_json(payload: dict) -> "ThresholdRule":
        return ThresholdRule(
            clauses=tuple(Clause.from_json(c) for c in payload["clauses"]),
            combinator=payload["combinator"],
            action=payload.get("action", "exclude-as-negative"),
        )

    @staticmethod
    def from_indicator(indicator: Indicator) -> "ThresholdRule":
        return ThresholdRule(clauses=indicator.clauses, combinator=indicator.combinator)


@dataclass(frozen=True)
class NodeProfile:
    node_description: str
    neighbor_preference: str
    edge_text_preference: str
    edge_label_preference: str
    structural_preference: str
    explanation: str

    def __post_init__(self):
        if not self.node_description.strip():
            raise ValueError("node_description must be nonempty")

    def to_json(self) -> dict:
        return {
            "node_description": self.node_description,
            "neighbor_preference": self.neighbor_preference,
            "edge_text_preference": self.edge_text_preference,
            "edge_label_preference": self.edge_label_preference,
            "structural_preference": self.structural_preference,
            "explanation": self.explanation,
        }

    @staticmethod
    def from_json(payload: dict) -> "NodeProfile":
        return NodeProfile(**{k: payload[k] for k in (
            "node_description", "neighbor_preference", "edge_text_preference",
            "edge_label_preference", "structural_preference", "explanation")})


@dataclass(frozen=True)
class ReflectionOutcome:
    significance: str
    supplementation: str = ""

    def __post_init__(self):
        if self.significance not in BINARY_LEVELS:
            raise ValueError(f"reflection significance must be one of {BINARY_LEVELS}")
        significant = self.significance == "Significant"
        if significant != bool(self.supplementation.strip()):
            raise ValueError("supplementation must be nonempty exactly when Significant")

    @property
    def significant(self) -> bool:
        return self.significance == "Significant"

    def to_json(self) -> dict:
        return {"significance": self.significance, "supplementation": self.supplementation}

    @staticmethod
    def from_json(payload: dict) -> "ReflectionOutcome":
        return ReflectionOutcome(
            significance=payload["significance"],
            supplementation=payload.get("supplementation", ""),
        )


@dataclass
class KnowledgeStore:
    dataset_card: Optional[DatasetCard] = None
    global_link: Optional[GlobalLinkKnowledge] = None
    global_edge_label: Optional[GlobalEdgeLabelKnowledge] = None
    thresholds: Dict[str, List[ThresholdRule]] = field(default_factory=dict)
    local_profiles: Dict[int, NodeProfile] = field(default_factory=dict)
    reflection: Dict[str, ReflectionOutcome] = field(default_factory=dict)
    provenance: Dict[str, List[str]] = field(default_factory=dict)

    def profile_for(self, node: int) -> Optional[NodeProfile]:
        return self.local_profiles.get(node)

    def record_provenance(self, entry: str, digests) -> None:
        if not digests:
            raise ValueError(f"knowledge entry {entry} produced without transcript digests")
        self.provenance.setdefault(entry, []).extend(digests)

    def validate(self) -> None:
        """Every populated entry must carry provenance digests."""
        def need(entry: str, populated: bool) -> None:
            if populated and not self.provenance.get(entry):
                raise ValueError(f"knowledge entry {entry} lacks provenance digests")

        need("dataset_card", self.dataset_card is not None)
        need("global_link", self.global_link is not None)
        need("global_edge_label", self.global_edge_label is not None)
        for task, rules in self.thresholds.items():
            need(f"thresholds.{task}", bool(rules))
        for node in self.local_profiles:
            need(f"local_profiles.{node}", True)
        for task in self.reflection:
            need(f"reflection.{task}", True)

    def to_json(self) -> dict:
        return {
            "version": KNOWLEDGE_SCHEMA_VERSION,
            "dataset_card": None if self.dataset_card is None else self.dataset_card.to_json(),
            "global_link": None if self.global_link is None else self.global_link.to_json(),
            "global_edge_label":
                None if self.global_edge_label is None else self.global_edge_label.to_json(),
            "thresholds": {
                task: [r.to_json() for r in rules]
                for task, rules in sorted(self.thresholds.items())
            },
            "local_profiles": {
                str(node): profile.to_json()
                for node, profile in sorted(self.local_profiles.items())
            },
            "reflection": {
                task: outcome.to_json()
                for task, outcome in sorted(self.reflection.items())
            },
            "provenance": {k: list(v) for k, v in sorted(self.provenance.items())},
        }

    def save(self, path) -> None:
        self.validate()
        blob = json.dumps(self.to_json(), indent=2, sort_keys=True, ensure_ascii=True)
        Path(path).write_text(blob + "\n", encoding="utf-8")

    @staticmethod
    def load(path) -> "KnowledgeStore":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        version = payload.get("version")
        if version != KNOWLEDGE_SCHEMA_VERSION:
            raise ValueError(
                f"{path}: knowledge schema version {version} unsupported "
                f"(expected {KNOWLEDGE_SCHEMA_VERSION})")
        card = payload.get("dataset_card")
        link = payload.get("global_link")
        edge_label = payload.get("global_edge_label")
        return KnowledgeStore(
            dataset_card=None if card is None else DatasetCard.from_json(card),
            global_link=None if link is None else GlobalLinkKnowledge.from_json(link),
            global_edge_label=
                None if edge_label is None else GlobalEdgeLabelKnowledge.from_json(edge_label),
            thresholds={
                task: [ThresholdRule.from_json(r) for r in rules]
                for task, rules in payload.get("thresholds", {}).items()
            },
            local_profiles={
                int(node): NodeProfile.from_json(profile)
                for node, profile in payload.get("local_profiles", {}).items()
            },
            reflection={
                task: ReflectionOutcome.from_json(outcome)
                for task, outcome in payload.get("reflection", {}).items()
            },
            provenance={k: list(v) for k, v in payload.get("provenance", {}).items()},
        )
