"""The three interchangeable chat-completion backends.

* HttpBackend: POSTs to a chat-completions endpoint with bounded retries
  on transient failures (timeouts, 429, 5xx). Credential comes from the
  LLM_API_KEY environment variable, never from config files.
* MockBackend: ordered rule list, first match wins. The shipped
  "heuristic" rule set answers every pipeline prompt deterministically by
  parsing metric values back out of the rendered prompt text.
* ReplayBackend: serves recorded responses keyed by request digest.
"""

import json
import logging
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import requests

from .. import rendering
from ..ops import compare
from .types import ChatRequest, ChatResponse, TranscriptRecord, request_digest

log = logging.getLogger("dytag.gateway")


class GatewayError(RuntimeError):
    pass


class TransportError(GatewayError):
    pass


class CredentialError(GatewayError):
    pass


class MockMissError(GatewayError):
    pass


class ReplayMissError(GatewayError):
    def __init__(self, digest: str):
        super().__init__(f"no recorded response for request digest {digest}")
        self.digest = digest


# --- http -----------------------------------------------------------------

_TRANSIENT_STATUSES = frozenset({429})


class HttpBackend:
    """Live endpoint client with capped exponential backoff.

    `sleeper` is injectable so retry tests can run without real delays.
    """

    kind = "http"

    def __init__(self, endpoint: str, api_key: Optional[str] = None,
                 max_attempts: int = 3, timeout: float = 30.0,
                 backoff_base: float = 0.5, backoff_cap: float = 8.0,
                 sleeper: Callable[[float], None] = time.sleep):
        if api_key is None:
            api_key = os.environ.get("LLM_API_KEY")
        if not api_key:
            raise CredentialError(
                "the http backend requires the LLM_API_KEY environment variable")
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self._endpoint = endpoint.rstrip("/")
        if not self._endpoint.endswith("/chat/completions"):
            self._endpoint += "/v1/chat/completions"
        self._api_key = api_key
        self._max_attempts = max_attempts
        self._timeout = timeout
        self._backoff_base = backoff_base
        self._backoff_cap = backoff_cap
        self._sleep = sleeper

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model,
            "messages": [m.to_json() for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self._api_key}"}
        last_problem = "unknown"
        start = time.monotonic()
        for attempt in range(1, self._max_attempts + 1):
            try:
                reply = requests.post(self._endpoint, json=payload,
                                      headers=headers, timeout=self._timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_problem = f"{type(exc).__name__}: {exc}"
            else:
                if reply.status_code == 200:
                    content = self._extract_content(reply)
                    latency = int((time.monotonic() - start) * 1000)
                    return ChatResponse(content=content, latency_ms=latency,
                                        backend="http")
                body_head = reply.text[:200]
                last_problem = f"status {reply.status_code}: {body_head}"
                if (reply.status_code not in _TRANSIENT_STATUSES
                        and reply.status_code < 500):
                    raise TransportError(
                        f"endpoint rejected request ({last_problem})")
            if attempt < self._max_attempts:
                delay = min(self._backoff_cap,
                            self._backoff_base * (2 ** (attempt - 1)))
                log.warning("transient failure (%s); retrying in %.1fs "
                            "(attempt %d/%d)", last_problem, delay, attempt,
                            self._max_attempts)
                self._sleep(delay)
        raise TransportError(
            f"exhausted {self._max_attempts} attempts; last failure: {last_problem}")

    @staticmethod
    def _extract_content(reply) -> str:
        try:
            data = reply.json()
            return data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(
                f"malformed completion payload: {type(exc).__name__}: {exc}")


# --- mock -----------------------------------------------------------------


@dataclass(frozen=True)
class MockRule:
    name: str
    matches: Callable[[ChatRequest, str], bool]
    respond: Callable[[ChatRequest, str], str]


class MockBackend:
    kind = "mock"

    def __init__(self, rules: Sequence[MockRule]):
        if not rules:
            raise ValueError("mock backend needs at least one rule")
        self._rules = list(rules)

    def complete(self, request: ChatRequest) -> ChatResponse:
        text = request.full_text()
        for rule in self._rules:
            if rule.matches(request, text):
                content = rule.respond(request, text)
                return ChatResponse(content=content, latency_ms=0, backend="mock")
        head = " ".join(text.split())[:160]
        raise MockMissError(f"no mock rule matched prompt starting {head!r}")


def _substring_matcher(needle: str) -> Callable[[ChatRequest, str], bool]:
    def matches(request: ChatRequest, text: str) -> bool:
        return needle in text

    return matches


def _regex_matcher(pattern: str) -> Callable[[ChatRequest, str], bool]:
    compiled = re.compile(pattern, re.MULTILINE)

    def matches(request: ChatRequest, text: str) -> bool:
        return compiled.search(text) is not None

    return matches


def _metric_matcher(name: str, op: str, value: float) -> Callable[[ChatRequest, str], bool]:
    name = name.upper()
    if name not in ("HI", "CN"):
        raise ValueError(f"metric matcher supports HI and CN, got {name!r}")

    def matches(request: ChatRequest, text: str) -> bool:
        section = rendering.query_section(text)
        if name == "HI":
            values = rendering.parse_hi_values(section)
        else:
            values = rendering.parse_cn_values(section)
        if not values:
            return False
        return compare(op, values[0], value)

    return matches


def load_mock_rules(path) -> List[MockRule]:
    """Mock rule file: JSON list of {match: {...}, respond: text}.

    Matchers: {"substring": s} | {"regex": pattern} |
    {"metric": {"name": "HI"|"CN", "op": comparator, "value": number}}.
    Responses are returned verbatim (they are frequently JSON themselves).
    """
    entries = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(entries, list) or not entries:
        raise ValueError(f"{path}: expected a nonempty JSON list of rules")
    rules = []
    for i, entry in enumerate(entries):
        try:
            match_spec = entry["match"]
            respond_text = entry["respond"]
        except (TypeError, KeyError):
            raise ValueError(f"{path}: rule {i} must have 'match' and 'respond'")
        if "substring" in match_spec:
            matcher = _substring_matcher(match_spec["substring"])
        elif "regex" in match_spec:
            matcher = _regex_matcher(match_spec["regex"])
        elif "metric" in match_spec:
            spec = match_spec["metric"]
            matcher = _metric_matcher(spec["name"], spec["op"], spec["value"])
        else:
            raise ValueError(
                f"{path}: rule {i} matcher must be substring, regex, or metric")
        rules.append(MockRule(
            name=f"rule-{i}",
            matches=matcher,
            respond=lambda request, text, out=respond_text: out,
        ))
    return rules


# --- the shipped heuristic rule set ----------------------------------------

# Distinctive phrases from each prompt template, used to route mock answers.
_INITIAL_CUE = "expert agent specialized in processing dynamic graph datasets"
_LINK_TEXT_CUE = "analyze the raw textual content of positive and negative pairs"
_STRUCTURAL_CUE = "distributions of structural statistics for positive and negative samples"
_EDGE_TEXT_CUE = "evaluate the effectiveness of using node and edge textual content"
_ELD_CUE = "reoccurrence distributions of edge label preferences"
_PROFILE_CUE = "generate a comprehensive profile for a node"
_STRUCT_PREF_CUE = "generate a comprehensive structural preference summary"
_REFLECTION_CUE = "You are a reflection agent"
_LP_CUE = "Respond with '1' (int) for yes or '0' (int) for no"
_NR_CUE = "assign a probability between 0 and 1 to each Destination Node ID"
_EC_CUE = "Predict the class label for the edge"

_TASK_NAME_RE = re.compile(r"Please solve the (.+?) task\.")

# A node needs at least this many historical interactions before the mock
# will claim a structural preference for it.
_MIN_PROFILE_FREQUENCY = 3
# Surrogate accuracy at or above this is "already high": reflection abstains.
_HIGH_ACCURACY = 0.9


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=True)


def _respond_initial(request: ChatRequest, text: str) -> str:
    m = _TASK_NAME_RE.search(text)
    task_name = m.group(1) if m else "link prediction"
    return _dumps({
        "thought": "Summarized the dataset description into the card fields.",
        "speak": "Here is the dataset card.",
        "task_type": task_name,
        "graph_type": "interaction network",
        "node_type": "entity",
        "node_text_type": "a short textual identifier or description of the entity",
        "edge_type": "timestamped interaction",
        "edge_text_type": "a short description of the interaction content",
    })


def _indicator(text: str, clauses, combinator: str) -> dict:
    return {"text": text, "clauses": clauses, "combinator": combinator}


def _respond_structural(request: ChatRequest, text: str) -> str:
    return _dumps({
        "Historical Interaction Count": {
            "Significance": "Extremely Significant",
            "Favors": "high",
            "Explanation": ("Positive pairs usually interacted before; "
                            "negative pairs almost never did."),
            "Positive Indicator": _indicator(
                "Historical interaction count > 3",
                [{"metric": "HI", "op": ">", "value": 3}], "AND"),
            "Negative Indicator": _indicator(
                "Historical interaction count < 1",
                [{"metric": "HI", "op": "<", "value": 1}], "AND"),
        },
        "Common Neighbor Count": {
            "Significance": "Extremely Significant",
            "Favors": "high",
            "Explanation": ("Positive pairs tend to share neighbors; negative "
                            "pairs rarely share any."),
            "Positive Indicator": _indicator(
                "Common neighbors > 5",
                [{"metric": "CN", "op": ">", "value": 5}], "AND"),
            "Negative Indicator": _indicator(
                "Common neighbors < 1",
                [{"metric": "CN", "op": "<", "value": 1}], "AND"),
        },
        "Destination Node Frequency": {
            "Significance": "Maybe Related",
            "Favors": "high",
            "Explanation": ("Active destinations are somewhat more likely to "
                            "receive new links, with heavy class overlap."),
            "Positive Indicator": None,
            "Negative Indicator": None,
        },
        "Overall": {
            "Positive Indicator": _indicator(
                "Historical interaction count > 3 or common neighbors > 5",
                [{"metric": "HI", "op": ">", "value": 3},
                 {"metric": "CN", "op": ">", "value": 5}], "OR"),
            "Negative Indicator": _indicator(
                "Historical interaction count < 1 and common neighbors < 1",
                [{"metric": "HI", "op": "<", "value": 1},
                 {"metric": "CN", "op": "<", "value": 1}], "AND"),
            "Rules": ("Pairs with no past interaction and no shared neighbor "
                      "are almost never positive; repeated contact is the "
                      "strongest positive signal."),
        },
    })


def _respond_link_text(request: ChatRequest, text: str) -> str:
    return _dumps({
        "Significance": "Not Relevant",
        "Reason": ("The node texts are short identifiers without semantic "
                   "content that separates positive from negative pairs."),
        "Explanation": ("Identifier-like texts carry no relational signal, so "
                        "text alone cannot distinguish the two classes."),
    })


def _respond_edge_text(request: ChatRequest, text: str) -> str:
    return _dumps({
        "Node Text": {
            "Significance": "Maybe Related",
            "Reason": ("Node texts hint at the participants' roles but do not "
                       "determine the interaction class."),
            "Explanation": ("Role hints narrow the plausible classes without "
                            "deciding among them."),
        },
        "Edge Text": {
            "Significance": "Helpful",
            "Reason": ("Edge texts describe the interaction itself and often "
                       "echo the wording typical of one class."),
            "Explanation": ("Matching the tone and topic of the edge text "
                            "against past interactions aids classification."),
        },
    })


def _respond_eld(request: ChatRequest, text: str) -> str:
    dists = rendering.parse_preference_dists(text)
    counted = [d.get("counted_samples", 0) for d in dists]
    top1 = max((d.get("top1", 0.0) for d in dists), default=0.0)
    if not dists or all(c == 0 for c in counted):
        return _dumps({
            "Significance": "Not Relevant",
            "Guidance": ("No pair or node has enough labeled history to "
                         "support label reuse."),
        })
    if top1 >= 50.0:
        level = "Extremely Significant"
    elif top1 >= 30.0:
        level = "Helpful"
    else:
        level = "Maybe Related"
    return _dumps({
        "Significance": level,
        "Guidance": ("Use the most frequent historical edge label when "
                     "predicting future edge labels."),
    })


def _respond_profile(request: ChatRequest, text: str) -> str:
    eld = rendering.parse_eld_line(text)
    if eld:
        total = sum(eld.values())
        modal = rendering.modal_key(eld)
        share = 100.0 * eld[modal] / total if total else 0.0
        label_pref = (f"The node prefers edges with label '{modal}' "
                      f"({share:.2f}% of its history).")
    else:
        label_pref = "Not Significant"
    return _dumps({
        "Node Description": ("An active participant with recurring "
                             "interactions in this network."),
        "Neighbor Preference": ("Prefers neighbors it has already interacted "
                                "with over new contacts."),
        "Edge Text Preference": "Not Significant",
        "Edge Label Preference": label_pref,
        "Explanation": ("The node's history is dominated by repeat "
                        "interactions, so its past neighbors and labels are "
                        "the best guide to its future behavior."),
    })


def _respond_struct_pref(request: ChatRequest, text: str) -> str:
    freq = rendering.parse_first_frequency(text)
    if freq is None or freq < _MIN_PROFILE_FREQUENCY:
        return _dumps({"Structural Preference": "Not Significant"})
    return _dumps({
        "Structural Preference": ("Prefers well-established, highly connected "
                                  "neighbors with frequent past activity."),
    })


def _respond_reflection(request: ChatRequest, text: str) -> str:
    accuracy = rendering.parse_accuracy(text)
    if accuracy is not None and accuracy >= _HIGH_ACCURACY:
        return _dumps({"Significance": "Not Significant"})
    return _dumps({
        "Significance": "Significant",
        "Supplementation": ("When historical interaction count is 0 and "
                            "common neighbors are 0, then answer 0 unless "
                            "the node texts are strongly related."),
    })


def _respond_link(request: ChatRequest, text: str) -> str:
    section = rendering.query_section(text)
    hi = rendering.parse_hi_values(section)
    cn = rendering.parse_cn_values(section)
    positive = (hi and hi[0] > 0) or (cn and cn[0] > 0)
    return "1" if positive else "0"


def _respond_retrieval(request: ChatRequest, text: str) -> str:
    section = rendering.query_section(text)
    by_candidate = rendering.parse_candidate_hi(section)
    if not by_candidate:
        raise MockMissError("retrieval prompt carried no candidate blocks")
    peak = max(by_candidate.values())
    likelihoods = {
        node: round(hi / peak, 6) if peak > 0 else 0.0
        for node, hi in by_candidate.items()
    }
    return _dumps(likelihoods)


def _respond_classification(request: ChatRequest, text: str) -> str:
    section = rendering.query_section(text)
    pair = rendering.parse_pair_preferences(section) or {}
    label = rendering.modal_key(pair)
    if label is None:
        source = rendering.parse_source_preferences(section) or {}
        label = rendering.modal_key(source)
    if label is None:
        classes = rendering.parse_edge_classes(text)
        if not classes:
            raise MockMissError("classification prompt carried no classes")
        label = classes[0]
    return _dumps({"Prediction": label})


def heuristic_rules() -> List[MockRule]:
    """The default scripted behavior covering every pipeline prompt.

    Link answers are 1 iff HI > 0 or CN > 0; classification answers the
    modal pair label, then the modal source label, then the first listed
    class; retrieval likelihoods are HI scaled by the pool maximum.
    """
    cues = [
        ("initial", _INITIAL_CUE, _respond_initial),
        ("global-structural", _STRUCTURAL_CUE, _respond_structural),
        ("global-link-text", _LINK_TEXT_CUE, _respond_link_text),
        ("global-edge-text", _EDGE_TEXT_CUE, _respond_edge_text),
        ("global-eld", _ELD_CUE, _respond_eld),
        ("local-profile", _PROFILE_CUE, _respond_profile),
        ("local-structural", _STRUCT_PREF_CUE, _respond_struct_pref),
        ("reflection", _REFLECTION_CUE, _respond_reflection),
        ("link-prediction", _LP_CUE, _respond_link),
        ("node-retrieval", _NR_CUE, _respond_retrieval),
        ("edge-classification", _EC_CUE, _respond_classification),
    ]
    return [MockRule(name=name, matches=_substring_matcher(cue), respond=fn)
            for name, cue, fn in cues]


def heuristic_mock() -> MockBackend:
    return MockBackend(heuristic_rules())


# --- replay -----------------------------------------------------------------


class ReplayBackend:
    kind = "replay"

    def __init__(self, transcript_path):
        self._responses: Dict[str, str] = {}
        path = Path(transcript_path)
        with path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                record = TranscriptRecord.from_json(json.loads(line))
                digest = record.request_digest
                content = record.response.content
                if digest in self._responses:
                    if self._responses[digest] != content:
                        log.warning(
                            "%s:%d: digest %s recorded twice with different "
                            "content; keeping the first", path, line_no, digest)
                    continue
                self._responses[digest] = content
        if not self._responses:
            raise ValueError(f"{path}: transcript holds no records")

    def complete(self, request: ChatRequest) -> ChatResponse:
        digest = request_digest(request)
        try:
            content = self._responses[digest]
        except KeyError:
            raise ReplayMissError(digest)
        return ChatResponse(content=content, latency_ms=0, backend="replay")
