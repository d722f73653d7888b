"""Uniform chat-completion access: http, scripted mock, and replay backends."""

from .backends import (
    CredentialError,
    GatewayError,
    HttpBackend,
    MockBackend,
    MockMissError,
    MockRule,
    ReplayBackend,
    ReplayMissError,
    TransportError,
    heuristic_mock,
    heuristic_rules,
    load_mock_rules,
)
from .core import DEFAULT_MAX_IN_FLIGHT, REASK_MESSAGE, Gateway, StructuredResult, system_user_request
from .parsing import (
    CLASS_PREDICTION,
    LINK_ANSWER,
    RETRIEVAL_LIKELIHOODS,
    Schema,
    StructuredParseError,
    extract_json_object,
    is_number,
    is_text,
    is_unit_interval,
    json_object_schema,
    one_of,
    strip_fences,
)
from .types import (
    ChatMessage,
    ChatRequest,
    ChatResponse,
    TranscriptRecord,
    canonical_request_payload,
    request_digest,
)

__all__ = [
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "TranscriptRecord",
    "canonical_request_payload",
    "request_digest",
    "Schema",
    "StructuredParseError",
    "extract_json_object",
    "strip_fences",
    "json_object_schema",
    "is_text",
    "is_number",
    "is_unit_interval",
    "one_of",
    "LINK_ANSWER",
    "RETRIEVAL_LIKELIHOODS",
    "CLASS_PREDICTION",
    "Gateway",
    "StructuredResult",
    "REASK_MESSAGE",
    "DEFAULT_MAX_IN_FLIGHT",
    "system_user_request",
    "GatewayError",
    "TransportError",
    "CredentialError",
    "MockMissError",
    "ReplayMissError",
    "HttpBackend",
    "MockBackend",
    "MockRule",
    "ReplayBackend",
    "heuristic_mock",
    "heuristic_rules",
    "load_mock_rules",
]
