"""Structured-output extraction and schema validation for agent replies.

Agents are asked for JSON but often wrap it in prose or code fences; the
extractor takes the first syntactically valid JSON object in the reply.
Schemas describe the expected shape and produce typed values.
"""

import json
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n?|```")


class StructuredParseError(ValueError):
    """Reply did not yield a value matching the expected shape.

    Carries the raw content (and, when raised by the gateway after the
    re-ask, the digests of every attempt) for diagnosis.
    """

    def __init__(self, message: str, content: str, digests: Tuple[str, ...] = ()):
        super().__init__(message)
        self.content = content
        self.digests = tuple(digests)


def strip_fences(content: str) -> str:
    return _FENCE_RE.sub("", content)


def extract_json_object(content: str) -> dict:
    """First syntactically valid JSON object in content, fences stripped."""
    text = strip_fences(content)
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            value, _ = decoder.raw_decode(text, idx)
        except json.JSONDecodeError:
            value = None
        if isinstance(value, dict):
            return value
        idx = text.find("{", idx + 1)
    raise StructuredParseError("no JSON object found in reply", content)


# --- value checkers -------------------------------------------------------


def is_text(value: Any) -> bool:
    return isinstance(value, str) and value.strip() != ""


def is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def is_unit_interval(value: Any) -> bool:
    return is_number(value) and 0.0 <= float(value) <= 1.0


def one_of(*choices: str) -> Callable[[Any], bool]:
    allowed = set(choices)

    def check(value: Any) -> bool:
        return isinstance(value, str) and value in allowed

    return check


@dataclass(frozen=True)
class Schema:
    """Expected-shape descriptor.

    `parse` receives the raw reply text and returns the typed value or
    raises StructuredParseError. JSON-object schemas are built with
    `json_object_schema`; answer formats that are not JSON objects (the
    0/1 link answer) supply a custom parser.
    """

    name: str
    parse: Callable[[str], Any] = field(compare=False)


def json_object_schema(
    name: str,
    required: Mapping[str, Callable[[Any], bool]],
    post: Optional[Callable[[dict], Optional[str]]] = None,
) -> Schema:
    """Schema for a JSON object with required keys and per-key value checks.

    `post` may inspect the whole object and return an error string.
    Extra keys are tolerated; agents tend to add commentary fields.
    """

    def parse(content: str) -> dict:
        obj = extract_json_object(content)
        for key, check in required.items():
            if key not in obj:
                raise StructuredParseError(
                    f"{name}: missing required key {key!r}", content)
            if not check(obj[key]):
                raise StructuredParseError(
                    f"{name}: key {key!r} has wrong kind or value", content)
        if post is not None:
            problem = post(obj)
            if problem:
                raise StructuredParseError(f"{name}: {problem}", content)
        return obj

    return Schema(name=name, parse=parse)


# --- task answer schemas ---------------------------------------------------


def _parse_link_answer(content: str) -> int:
    text = strip_fences(content).strip()
    if text in ("0", "1"):
        return int(text)
    # tolerate a bare JSON int or a quoted digit, nothing looser
    if text in ('"0"', '"1"', "'0'", "'1'"):
        return int(text[1])
    raise StructuredParseError(
        f"link answer must be exactly '0' or '1', got {text[:80]!r}", content)


LINK_ANSWER = Schema(name="link-answer", parse=_parse_link_answer)


def _parse_likelihoods(content: str) -> Dict[str, float]:
    obj = extract_json_object(content)
    out: Dict[str, float] = {}
    for key, value in obj.items():
        if not isinstance(key, str) or not key.isdigit():
            raise StructuredParseError(
                f"likelihood key must be a node id string, got {key!r}", content)
        if not is_unit_interval(value):
            raise StructuredParseError(
                f"likelihood for {key} must be a number in [0, 1]", content)
        out[key] = float(value)
    if not out:
        raise StructuredParseError("likelihood map is empty", content)
    return out


RETRIEVAL_LIKELIHOODS = Schema(name="retrieval-likelihoods", parse=_parse_likelihoods)

CLASS_PREDICTION = json_object_schema("class-prediction", {"Prediction": is_text})
