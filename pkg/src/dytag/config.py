"""Run configuration: one JSON document describing a whole run.

Credentials never appear here; the http backend reads LLM_API_KEY from
the environment so config files stay safe to commit. Validation reports
every problem at once instead of stopping at the first.
"""

from __future__ import annotations

import difflib
import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional, Tuple

from .tasks.runner import DEFAULT_BATCH_SIZE, DEFAULT_WINDOW
from .tasks.types import MODES, TASKS

BACKENDS = ("mock", "http", "replay")
FORMATS = ("canonical", "dtgb")
DEFAULT_LOCAL_FRACTION = 0.10
API_KEY_ENV = "LLM_API_KEY"


class ConfigError(Exception):
    """Invalid configuration; carries the full list of problems."""

    def __init__(self, errors: List[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass(frozen=True)
class RunConfig:
    dataset_name: str
    dataset_dir: str
    dataset_format: str = "canonical"
    backend: str = "mock"
    endpoint: Optional[str] = None
    model: str = "heuristic-mock"
    temperature: float = 0.0
    seed: int = 7
    window: int = DEFAULT_WINDOW
    batch_size: int = DEFAULT_BATCH_SIZE
    mode: str = "gad"
    tasks: Tuple[str, ...] = TASKS
    out_dir: str = ""
    knowledge_path: str = ""
    transcript_path: str = ""
    bipartite: bool = False
    use_edge_text: bool = False
    force_regenerate: bool = False
    local_fraction: float = DEFAULT_LOCAL_FRACTION

    def resolved(self) -> "RunConfig":
        """Fill the path defaults that hang off out_dir."""
        out = self.out_dir or os.path.join("runs", self.dataset_name)
        return replace(
            self,
            out_dir=out,
            knowledge_path=self.knowledge_path or os.path.join(out, "knowledge.json"),
            transcript_path=self.transcript_path or os.path.join(out, "transcript.jsonl"),
        )

    def dataset_files(self) -> List[str]:
        """The raw files the ingest stage depends on, in a fixed order."""
        d = self.dataset_dir
        if self.dataset_format == "canonical":
            names = ["edges.csv", "node_texts.csv", "edge_texts.csv", "labels.csv"]
        else:
            names = ["edge_list.csv", "entity_text.csv", "relation_text.csv"]
            if os.path.exists(os.path.join(d, "labels.csv")):
                names.append("labels.csv")
        return [os.path.join(d, n) for n in names]


_FIELD_TYPES = {
    "dataset_name": str,
    "dataset_dir": str,
    "dataset_format": str,
    "backend": str,
    "endpoint": str,
    "model": str,
    "temperature": (int, float),
    "seed": int,
    "window": int,
    "batch_size": int,
    "mode": str,
    "tasks": list,
    "out_dir": str,
    "knowledge_path": str,
    "transcript_path": str,
    "bipartite": bool,
    "use_edge_text": bool,
    "force_regenerate": bool,
    "local_fraction": (int, float),
}

_REQUIRED = ("dataset_name", "dataset_dir")


def validate_payload(payload: dict) -> RunConfig:
    """Turn a parsed JSON document into a RunConfig, or raise ConfigError
    listing every problem found."""
    errors: List[str] = []
    if not isinstance(payload, dict):
        raise ConfigError(["config root must be a JSON object"])

    known = list(_FIELD_TYPES)
    for key in payload:
        if key in known:
            continue
        hint = difflib.get_close_matches(key, known, n=1)
        suggestion = f" (did you mean {hint[0]!r}?)" if hint else ""
        errors.append(f"unknown key {key!r}{suggestion}")

    for key in _REQUIRED:
        if key not in payload:
            errors.append(f"missing required key {key!r}")

    values = {}
    for key, expect in _FIELD_TYPES.items():
        if key not in payload:
            continue
        value = payload[key]
        if isinstance(value, bool) and expect is not bool:
            errors.append(f"key {key!r} must be {getattr(expect, '__name__', 'number')}, got bool")
            continue
        if not isinstance(value, expect):
            name = expect.__name__ if isinstance(expect, type) else "number"
            errors.append(f"key {key!r} must be {name}, got {type(value).__name__}")
            continue
        values[key] = value

    def check(ok: bool, message: str) -> None:
        if not ok:
            errors.append(message)

    if "seed" in values:
        check(values["seed"] >= 0, "seed must be a non-negative integer")
    if "window" in values:
        check(values["window"] > 0, "window must be a positive integer")
    if "batch_size" in values:
        check(values["batch_size"] > 0, "batch_size must be a positive integer")
    if "temperature" in values:
        check(values["temperature"] >= 0, "temperature must be non-negative")
    if "local_fraction" in values:
        check(0 < values["local_fraction"] <= 1,
              "local_fraction must be in (0, 1]")
    if "dataset_format" in values:
        check(values["dataset_format"] in FORMATS,
              f"dataset_format must be one of {list(FORMATS)}")
    if "backend" in values:
        check(values["backend"] in BACKENDS,
              f"backend must be one of {list(BACKENDS)}")
    if "mode" in values:
        check(values["mode"] in MODES, f"mode must be one of {list(MODES)}")
    if "tasks" in values:
        bad = [t for t in values["tasks"] if t not in TASKS]
        check(not bad, f"tasks contains unknown entries {bad}; valid: {list(TASKS)}")
        check(len(values["tasks"]) > 0, "tasks must not be empty")
        values["tasks"] = tuple(values["tasks"])

    backend = values.get("backend", "mock")
    if backend == "http":
        if not values.get("endpoint"):
            errors.append("http backend requires 'endpoint'")
        if not os.environ.get(API_KEY_ENV):
            errors.append(
                f"http backend requires the {API_KEY_ENV} environment variable "
                "(credentials never go in config files)")

    if errors:
        raise ConfigError(errors)
    return RunConfig(**values).resolved()


def validate_config(path: str | Path) -> RunConfig:
    """Load and validate a config file.

    An unreadable file is a hard error (OSError propagates); malformed
    JSON or invalid content is a ConfigError.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON: {exc}"]) from None
    return validate_payload(payload)
