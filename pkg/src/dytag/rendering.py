"""Prompt text fragments shared by prompt assembly and the scripted mock.

The scripted mock backend answers by parsing metric values back out of the
rendered prompt, so every value-carrying line format lives here right next
to the regex that reads it. Change a format and its regex together or the
mock goes blind.

All JSON payloads embedded in prompts are rendered on a single line so the
parse-back regexes can stay line-oriented.
"""

import json
import re
from typing import Dict, List, Mapping, Optional, Sequence

# --- structural markers -------------------------------------------------

# Few-shot examples precede the current sample; answers may only appear
# before this marker. The hygiene audit greps for ANSWER_PREFIX after the
# last marker occurrence.
CURRENT_SAMPLE_MARKER = "Current Sample:"
CANDIDATES_MARKER = "Candidate Destinations:"
EXAMPLE_HEADER = "Example {index}:"
ANSWER_PREFIX = "Answer:"

# --- pair metric lines ---------------------------------------------------

HI_HEADER = "Historical Interaction Count:"
HI_VALUE_LINE = (
    "The total number of past interactions between "
    "Source ID {src} and Destination ID {dst}: {value}"
)
HI_VALUE_RE = re.compile(
    r"The total number of past interactions between "
    r"Source ID (\d+) and Destination ID (\d+): (\d+)"
)

CN_HEADER = "Common Neighbor Count:"
CN_VALUE_LINE = (
    "The number of shared neighbors between "
    "Source ID {src} and Destination ID {dst}: {value}"
)
CN_VALUE_RE = re.compile(
    r"The number of shared neighbors between "
    r"Source ID (\d+) and Destination ID (\d+): (\d+)"
)

NODE_METRICS_HEADER = "Node-Specific Metrics:"
NODE_METRICS_ROLE_LINE = "For {role} Node ({node}):"
FREQUENCY_RE = re.compile(r"^- Frequency: (\d+)$", re.MULTILINE)

CANDIDATE_ID_LINE = "Destination Node ID: {node}"
CANDIDATE_ID_RE = re.compile(r"^Destination Node ID: (\d+)$", re.MULTILINE)

NODE_TEXT_HEADER = "Node Text:"
SOURCE_TEXT_LINE = "Source Node text: {text}"
DESTINATION_TEXT_LINE = "Destination Node text: {text}"


def render_node_activity(role: str, node: int, frequency: int, as_source: int,
                         as_destination: int, avg_neighbor_frequency: float) -> str:
    # Empty role yields the bare "For Node (n):" heading used when the
    # block describes a single node rather than one side of a pair.
    heading = (NODE_METRICS_ROLE_LINE.format(role=role, node=node) if role
               else f"For Node ({node}):")
    lines = [
        heading,
        f"- Frequency: {frequency}",
        f"- Times as Source: {as_source}",
        f"- Times as Destination: {as_destination}",
        f"- Average Frequency of Neighbors: {avg_neighbor_frequency:.2f}",
    ]
    return "\n".join(lines)


def render_hi_block(src: int, dst: int, value: int) -> str:
    return HI_HEADER + "\n" + HI_VALUE_LINE.format(src=src, dst=dst, value=value)


def render_cn_block(src: int, dst: int, value: int) -> str:
    return CN_HEADER + "\n" + CN_VALUE_LINE.format(src=src, dst=dst, value=value)


# --- edge label distributions -------------------------------------------

ELD_LINE = "Edge Label Distribution: {payload}"
ELD_LINE_RE = re.compile(r"^Edge Label Distribution: (\{.*\})$", re.MULTILINE)

EDGE_CLASSES_LINE = "Edge Classes : {payload}."
EDGE_CLASSES_RE = re.compile(r"^Edge Classes : (\[.*\])\.$", re.MULTILINE)

NODE_PREFERENCES_HEADER = "Node Preferences:"
SOURCE_PREF_LINE = "- Source Node ({node}): {payload}"
SOURCE_PREF_RE = re.compile(r"^- Source Node \((\d+)\): (\{.*\})$", re.MULTILINE)
DESTINATION_PREF_LINE = "- Destination Node ({node}): {payload}"
DESTINATION_PREF_RE = re.compile(r"^- Destination Node \((\d+)\): (\{.*\})$", re.MULTILINE)

PAIR_PREFERENCES_HEADER = "Pair Preferences:"
PAIR_PREF_LINE = "- Between Source Node ({src}) and Destination Node ({dst}): {payload}"
PAIR_PREF_RE = re.compile(
    r"^- Between Source Node \((\d+)\) and Destination Node \((\d+)\): (\{.*\})$",
    re.MULTILINE,
)


def render_label_counts(counts: Mapping[str, int]) -> str:
    """Label-text -> count map as single-line JSON, preserving first-seen order."""
    return json.dumps(dict(counts), ensure_ascii=True)


def render_class_list(labels: Sequence[str]) -> str:
    return json.dumps(list(labels), ensure_ascii=True)


# --- knowledge-agent input lines ----------------------------------------

POSITIVE_DIST_HEADER = "Positive sample distribution:"
NEGATIVE_DIST_HEADER = "Negative sample distribution:"
DIST_HI_LINE = "  - Historical interaction count: {payload}"
DIST_CN_LINE = "  - Common neighbors: {payload}"
DIST_DNF_LINE = "  - Destination Node Frequency: {payload}"

SOURCE_PREF_DIST_LINE = (
    "Source node historical edge label reoccurrence distribution: {payload}"
)
DESTINATION_PREF_DIST_LINE = (
    "Destination node historical edge label reoccurrence distribution: {payload}"
)
PAIR_PREF_DIST_LINE = (
    "Pair node historical edge label reoccurrence distribution: {payload}"
)
PREF_DIST_RE = re.compile(
    r"^(?:Source|Destination|Pair) node historical edge label reoccurrence "
    r"distribution: (\{.*\})$",
    re.MULTILINE,
)

ACCURACY_LINE = "Accuracy: {value:.4f}"
ACCURACY_RE = re.compile(r"^Accuracy: ([0-9.]+)$", re.MULTILINE)
FALSE_POSITIVES_HEADER = "False Positive Samples:"


def render_distribution_json(buckets: Mapping[str, float]) -> str:
    """Bucket -> fraction map, fractions rounded to 4 places."""
    return json.dumps({k: round(float(v), 4) for k, v in buckets.items()},
                      ensure_ascii=True)


def render_preference_json(pref: Mapping[str, float], counted_samples: int) -> str:
    payload = {k: round(float(v), 2) for k, v in pref.items()}
    payload["counted_samples"] = int(counted_samples)
    return json.dumps(payload, ensure_ascii=True)


# --- parse-back helpers (used by the scripted mock) ----------------------


def query_section(text: str) -> str:
    """Portion of the prompt after the last sample/candidate marker.

    Few-shot examples repeat the metric line formats; the mock must answer
    for the current query only, so it reads values from this tail.
    """
    cut = 0
    for marker in (CURRENT_SAMPLE_MARKER, CANDIDATES_MARKER):
        idx = text.rfind(marker)
        if idx >= 0:
            cut = max(cut, idx)
    return text[cut:]


def parse_hi_values(text: str) -> List[int]:
    return [int(m.group(3)) for m in HI_VALUE_RE.finditer(text)]


def parse_cn_values(text: str) -> List[int]:
    return [int(m.group(3)) for m in CN_VALUE_RE.finditer(text)]


def parse_first_frequency(text: str) -> Optional[int]:
    m = FREQUENCY_RE.search(text)
    return int(m.group(1)) if m else None


def parse_candidate_hi(text: str) -> Dict[str, int]:
    """Map of candidate destination id -> HI value, in candidate order."""
    ids = [(m.group(1), m.start()) for m in CANDIDATE_ID_RE.finditer(text)]
    out: Dict[str, int] = {}
    for i, (node, start) in enumerate(ids):
        end = ids[i + 1][1] if i + 1 < len(ids) else len(text)
        values = parse_hi_values(text[start:end])
        out[node] = values[0] if values else 0
    return out


def _load_json(payload: str):
    try:
        return json.loads(payload)
    except json.JSONDecodeError:
        return None


def parse_pair_preferences(text: str) -> Optional[Dict[str, int]]:
    m = PAIR_PREF_RE.search(text)
    return _load_json(m.group(3)) if m else None


def parse_source_preferences(text: str) -> Optional[Dict[str, int]]:
    m = SOURCE_PREF_RE.search(text)
    return _load_json(m.group(2)) if m else None


def parse_edge_classes(text: str) -> Optional[List[str]]:
    m = EDGE_CLASSES_RE.search(text)
    return _load_json(m.group(1)) if m else None


def parse_eld_line(text: str) -> Optional[Dict[str, int]]:
    m = ELD_LINE_RE.search(text)
    return _load_json(m.group(1)) if m else None


def parse_accuracy(text: str) -> Optional[float]:
    m = ACCURACY_RE.search(text)
    if not m:
        return None
    try:
        return float(m.group(1))
    except ValueError:
        return None


def parse_preference_dists(text: str) -> List[dict]:
    out = []
    for m in PREF_DIST_RE.finditer(text):
        payload = _load_json(m.group(1))
        if isinstance(payload, dict):
            out.append(payload)
    return out


def modal_key(counts: Mapping[str, int]) -> Optional[str]:
    """Highest-count key; ties resolved by map order (first occurrence wins)."""
    best = None
    best_count = None
    for key, count in counts.items():
        if best_count is None or count > best_count:
            best, best_count = key, count
    return best
