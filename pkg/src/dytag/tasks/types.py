"""Query and prediction record types for the three prediction tasks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

TASK_LP = "lp"
TASK_NR = "nr"
TASK_EC = "ec"
TASKS = (TASK_LP, TASK_NR, TASK_EC)

MODE_TEXT = "text"
MODE_TEXT_FEWSHOT = "text-fewshot"
MODE_STRUCTURE = "structure"
MODE_STRUCTURE_FEWSHOT = "structure-fewshot"
MODE_GAD = "gad"
MODES = (MODE_TEXT, MODE_TEXT_FEWSHOT, MODE_STRUCTURE, MODE_STRUCTURE_FEWSHOT, MODE_GAD)

FEWSHOT_MODES = (MODE_TEXT_FEWSHOT, MODE_STRUCTURE_FEWSHOT)


@dataclass(frozen=True)
class TaskQuery:
    """One scoring unit. ``truth`` never reaches a prompt.

    destination is a single node for lp/ec and the full candidate pool
    (positive included, order already shuffled) for nr.
    """

    index: int
    task: str
    source: int
    destination: int | tuple[int, ...]
    t: float
    truth: int

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.index < 0:
            raise ValueError("index must be nonnegative")
        if self.task == TASK_NR:
            if not isinstance(self.destination, tuple) or not self.destination:
                raise ValueError("nr query needs a candidate pool")
            if self.truth not in self.destination:
                raise ValueError("nr pool must contain the true destination")
        else:
            if not isinstance(self.destination, int):
                raise ValueError(f"{self.task} query needs a single destination")

    @property
    def pool(self) -> tuple[int, ...]:
        if self.task != TASK_NR:
            raise ValueError("only nr queries have pools")
        return self.destination  # type: ignore[return-value]


@dataclass(frozen=True)
class PredictionRecord:
    """One answered query, as persisted to predictions.jsonl.

    answer: 0/1 for lp, {node-id-str: likelihood} for nr, label id for ec.
    positive_rank (nr only): 1-based pessimistic rank of the true
    destination, |pool|+1 when it never reached the prompt.
    """

    query: TaskQuery
    mode: str
    answer: int | dict[str, float]
    fallback_used: bool
    digests: tuple[str, ...] = ()
    positive_rank: int | None = None
    ranked_nodes: tuple[int, ...] | None = None
    answer_text: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        task = self.query.task
        if task == TASK_NR:
            if not isinstance(self.answer, dict):
                raise ValueError("nr answer must be a likelihood map")
            for key, value in self.answer.items():
                if not 0.0 <= float(value) <= 1.0:
                    raise ValueError(f"likelihood out of range for {key}: {value}")
            if self.positive_rank is None or self.positive_rank < 1:
                raise ValueError("nr record needs a positive rank >= 1")
        else:
            if not isinstance(self.answer, int) or isinstance(self.answer, bool):
                raise ValueError(f"{task} answer must be an int")
            if task == TASK_LP and self.answer not in (0, 1):
                raise ValueError("lp answer must be 0 or 1")

    @property
    def correct(self) -> bool:
        if self.query.task == TASK_NR:
            raise ValueError("nr correctness is rank-based; use positive_rank")
        return self.answer == self.query.truth

    def to_json(self) -> dict:
        q = self.query
        out = {
            "index": q.index,
            "task": q.task,
            "mode": self.mode,
            "source": q.source,
            "destination": list(q.destination) if q.task == TASK_NR else q.destination,
            "t": q.t,
            "truth": q.truth,
            "answer": self.answer,
            "fallback_used": self.fallback_used,
            "digests": list(self.digests),
        }
        if self.positive_rank is not None:
            out["positive_rank"] = self.positive_rank
        if self.ranked_nodes is not None:
            out["ranked_nodes"] = list(self.ranked_nodes)
        if self.answer_text is not None:
            out["answer_text"] = self.answer_text
        return out

    @classmethod
    def from_json(cls, payload: dict) -> "PredictionRecord":
        task = payload["task"]
        destination = payload["destination"]
        if task == TASK_NR:
            destination = tuple(int(d) for d in destination)
        query = TaskQuery(
            index=int(payload["index"]),
            task=task,
            source=int(payload["source"]),
            destination=destination,
            t=float(payload["t"]),
            truth=int(payload["truth"]),
        )
        answer = payload["answer"]
        if task == TASK_NR:
            answer = {str(k): float(v) for k, v in answer.items()}
        else:
            answer = int(answer)
        ranked = payload.get("ranked_nodes")
        return cls(
            query=query,
            mode=payload["mode"],
            answer=answer,
            fallback_used=bool(payload["fallback_used"]),
            digests=tuple(payload["digests"]),
            positive_rank=payload.get("positive_rank"),
            ranked_nodes=tuple(int(n) for n in ranked) if ranked is not None else None,
            answer_text=payload.get("answer_text"),
        )


def dump_records(records: Sequence[PredictionRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), ensure_ascii=True, sort_keys=True))
            fh.write("\n")


def append_records(records: Sequence[PredictionRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), ensure_ascii=True, sort_keys=True))
            fh.write("\n")


def load_records(path: str | Path, tolerate_partial: bool = False) -> list[PredictionRecord]:
    """Read a predictions file; with tolerate_partial, a truncated final
    line (crash mid-write) is dropped and the file trimmed to the valid
    prefix so appends resume cleanly."""
    path = Path(path)
    records: list[PredictionRecord] = []
    valid_bytes = 0
    with path.open("rb") as fh:
        for raw in fh:
            try:
                if not raw.endswith(b"\n"):
                    raise ValueError("unterminated line")
                records.append(PredictionRecord.from_json(json.loads(raw)))
            except (ValueError, KeyError, json.JSONDecodeError):
                if tolerate_partial:
                    break
                raise
            valid_bytes += len(raw)
    if tolerate_partial:
        size = path.stat().st_size
        if valid_bytes < size:
            with path.open("rb+") as fh:
                fh.truncate(valid_bytes)
    return records
