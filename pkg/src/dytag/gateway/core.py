"""The Gateway: one front door for every agent call.

Appends every completed call to the active transcript (JSON Lines, one
record per line, single serialized writer) and bounds in-flight requests
with a semaphore so concurrent task batches respect endpoint limits.
"""

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Tuple

from .parsing import Schema, StructuredParseError
from .types import ChatMessage, ChatRequest, ChatResponse, TranscriptRecord, request_digest

REASK_MESSAGE = "Respond with only the JSON object."

DEFAULT_MAX_IN_FLIGHT = 8


@dataclass(frozen=True)
class StructuredResult:
    value: Any
    response: ChatResponse
    digests: Tuple[str, ...]
    reasked: bool


class Gateway:
    def __init__(self, backend, transcript_path=None,
                 max_in_flight: int = DEFAULT_MAX_IN_FLIGHT):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self._backend = backend
        self._transcript_path = Path(transcript_path) if transcript_path else None
        self._throttle = threading.Semaphore(max_in_flight)
        self._write_lock = threading.Lock()

    @property
    def backend_kind(self) -> str:
        return self._backend.kind

    @property
    def transcript_path(self) -> Optional[Path]:
        return self._transcript_path

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._throttle:
            response = self._backend.complete(request)
        self._record(request, response)
        return response

    def complete_structured(self, request: ChatRequest,
                            schema: Schema) -> StructuredResult:
        """Complete and parse; on a malformed reply, re-ask exactly once.

        The second failure surfaces as a StructuredParseError carrying the
        raw content and the digests of both attempts, so callers can apply
        their own deterministic fallbacks.
        """
        first = self.complete(request)
        first_digest = request_digest(request)
        try:
            value = schema.parse(first.content)
            return StructuredResult(value=value, response=first,
                                    digests=(first_digest,), reasked=False)
        except StructuredParseError:
            pass
        retry_request = request.with_user_message(REASK_MESSAGE)
        second = self.complete(retry_request)
        digests = (first_digest, request_digest(retry_request))
        try:
            value = schema.parse(second.content)
        except StructuredParseError as exc:
            raise StructuredParseError(
                f"{schema.name}: reply malformed after re-ask: {exc}",
                second.content, digests)
        return StructuredResult(value=value, response=second,
                                digests=digests, reasked=True)

    def _record(self, request: ChatRequest, response: ChatResponse) -> None:
        if self._transcript_path is None:
            return
        record = TranscriptRecord(
            request_digest=request_digest(request),
            request=request,
            response=response,
            wall_time=datetime.now(timezone.utc).isoformat(),
        )
        line = json.dumps(record.to_json(), ensure_ascii=True)
        with self._write_lock:
            self._transcript_path.parent.mkdir(parents=True, exist_ok=True)
            with self._transcript_path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def system_user_request(model: str, system: str, user: str,
                        temperature: float = 0.0, max_tokens: int = 1024,
                        expect_structured: bool = False) -> ChatRequest:
    return ChatRequest(
        model=model,
        messages=(ChatMessage("system", system), ChatMessage("user", user)),
        temperature=temperature,
        max_tokens=max_tokens,
        expect_structured=expect_structured,
    )
