"""Expected shapes of agent replies, as gateway parsing schemas."""

from typing import Any, Optional

from ..gateway.parsing import is_text, json_object_schema, one_of
from ..ops import COMPARATORS
from .types import BINARY_LEVELS, FAVORS, GENERATION_LEVELS, THRESHOLD_METRICS

_CARD_FIELDS = ("task_type", "graph_type", "node_type", "node_text_type",
                "edge_type", "edge_text_type")

DATASET_CARD = json_object_schema(
    "dataset-card", {field: is_text for field in _CARD_FIELDS})


def _is_clause(value: Any) -> bool:
    return (
        isinstance(value, dict)
        and value.get("metric") in THRESHOLD_METRICS
        and value.get("op") in COMPARATORS
        and isinstance(value.get("value"), (int, float))
        and not isinstance(value.get("value"), bool)
    )


def _is_indicator(value: Any) -> bool:
    if value is None:
        return True
    return (
        isinstance(value, dict)
        and is_text(value.get("text"))
        and isinstance(value.get("clauses"), list)
        and len(value["clauses"]) > 0
        and all(_is_clause(c) for c in value["clauses"])
        and value.get("combinator") in ("AND", "OR")
    )


def _is_metric_entry(value: Any) -> bool:
    return (
        isinstance(value, dict)
        and value.get("Significance") in GENERATION_LEVELS
        and is_text(value.get("Explanation"))
        and value.get("Favors") in FAVORS
        and _is_indicator(value.get("Positive Indicator"))
        and _is_indicator(value.get("Negative Indicator"))
    )


def _is_overall_entry(value: Any) -> bool:
    return (
        isinstance(value, dict)
        and _is_indicator(value.get("Positive Indicator"))
        and _is_indicator(value.get("Negative Indicator"))
        and is_text(value.get("Rules"))
    )


GLOBAL_STRUCTURAL = json_object_schema(
    "global-structural",
    {
        "Historical Interaction Count": _is_metric_entry,
        "Common Neighbor Count": _is_metric_entry,
        "Destination Node Frequency": _is_metric_entry,
        "Overall": _is_overall_entry,
    },
)

LINK_TEXT = json_object_schema(
    "link-text",
    {
        "Significance": one_of(*GENERATION_LEVELS),
        "Reason": is_text,
        "Explanation": is_text,
    },
)


def _is_guidance_entry(value: Any) -> bool:
    return (
        isinstance(value, dict)
        and value.get("Significance") in GENERATION_LEVELS
        and is_text(value.get("Reason"))
        and is_text(value.get("Explanation"))
    )


EDGE_TEXT = json_object_schema(
    "edge-text",
    {"Node Text": _is_guidance_entry, "Edge Text": _is_guidance_entry},
)

ELD_GUIDANCE = json_object_schema(
    "eld-guidance",
    {"Significance": one_of(*GENERATION_LEVELS), "Guidance": is_text},
)

LOCAL_PROFILE = json_object_schema(
    "local-profile",
    {
        "Node Description": is_text,
        "Neighbor Preference": is_text,
        "Edge Text Preference": is_text,
        "Edge Label Preference": is_text,
        "Explanation": is_text,
    },
)

STRUCTURAL_PREFERENCE = json_object_schema(
    "structural-preference", {"Structural Preference": is_text})


def _check_reflection(obj: dict) -> Optional[str]:
    significant = obj["Significance"] == "Significant"
    has_supplement = is_text(obj.get("Supplementation"))
    if significant and not has_supplement:
        return "Significant outcome requires a Supplementation sentence"
    if not significant and has_supplement:
        return "Not Significant outcome must not carry a Supplementation"
    return None


REFLECTION = json_object_schema(
    "reflection", {"Significance": one_of(*BINARY_LEVELS)}, post=_check_reflection)
