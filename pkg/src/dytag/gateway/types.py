"""Chat-completion request/response carriers and the canonical request digest.

The digest is a pure function of (model, messages, temperature, max_tokens)
after whitespace canonicalization, so equal requests hash equally across
platforms and the replay backend can key recorded responses by it.
"""

import hashlib
import json
from dataclasses import dataclass, field
from typing import Tuple

ROLE_SYSTEM = "system"
ROLE_USER = "user"
_ROLES = (ROLE_SYSTEM, ROLE_USER)

BACKEND_KINDS = ("http", "mock", "replay")


def _normalize_text(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"message role must be one of {_ROLES}, got {self.role!r}")
        if not isinstance(self.content, str):
            raise TypeError("message content must be a string")

    def to_json(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: Tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    expect_structured: bool = False

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("request must carry at least one message")
        # A system message is only legal as the leading message.
        for msg in self.messages[1:]:
            if msg.role == ROLE_SYSTEM:
                raise ValueError("system message must be the first message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def with_user_message(self, content: str) -> "ChatRequest":
        return ChatRequest(
            model=self.model,
            messages=self.messages + (ChatMessage(ROLE_USER, content),),
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            expect_structured=self.expect_structured,
        )

    def full_text(self) -> str:
        """All message contents joined; what mock matchers scan."""
        return "\n\n".join(m.content for m in self.messages)

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "messages": [m.to_json() for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "expect_structured": self.expect_structured,
        }

    @staticmethod
    def from_json(payload: dict) -> "ChatRequest":
        return ChatRequest(
            model=payload["model"],
            messages=tuple(
                ChatMessage(m["role"], m["content"]) for m in payload["messages"]
            ),
            temperature=payload.get("temperature", 0.0),
            max_tokens=payload.get("max_tokens", 1024),
            expect_structured=payload.get("expect_structured", False),
        )


def canonical_request_payload(request: ChatRequest) -> dict:
    """The digest's input; excludes expect_structured (a client-side hint)."""
    return {
        "model": request.model,
        "messages": [
            {"role": m.role, "content": _normalize_text(m.content)}
            for m in request.messages
        ],
        "temperature": float(request.temperature),
        "max_tokens": int(request.max_tokens),
    }


def request_digest(request: ChatRequest) -> str:
    blob = json.dumps(
        canonical_request_payload(request),
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=True,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    content: str
    latency_ms: int
    backend: str

    def __post_init__(self):
        if self.backend not in BACKEND_KINDS:
            raise ValueError(f"backend must be one of {BACKEND_KINDS}, got {self.backend!r}")

    def to_json(self) -> dict:
        return {
            "content": self.content,
            "latency_ms": self.latency_ms,
            "backend": self.backend,
        }

    @staticmethod
    def from_json(payload: dict) -> "ChatResponse":
        return ChatResponse(
            content=payload["content"],
            latency_ms=payload["latency_ms"],
            backend=payload["backend"],
        )


@dataclass(frozen=True)
class TranscriptRecord:
    request_digest: str
    request: ChatRequest
    response: ChatResponse
    wall_time: str = field(compare=False)

    def to_json(self) -> dict:
        return {
            "request_digest": self.request_digest,
            "request": self.request.to_json(),
            "response": self.response.to_json(),
            "wall_time": self.wall_time,
        }

    @staticmethod
    def from_json(payload: dict) -> "TranscriptRecord":
        return TranscriptRecord(
            request_digest=payload["request_digest"],
            request=ChatRequest.from_json(payload["request"]),
            response=ChatResponse.from_json(payload["response"]),
            wall_time=payload.get("wall_time", ""),
        )
