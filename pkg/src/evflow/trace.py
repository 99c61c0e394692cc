"""Append-only run trace: every pipeline stage emits one JSON event.

Traces are JSONL files, one event per line. Two runs of the same
scripted configuration produce identical traces except for wall_time,
which is excluded from comparisons.
"""

import json
import time
from dataclasses import dataclass
from typing import Any

from .errors import EvflowError, TraceError

STAGES = frozenset(
    {
        "plan",
        "scout.scores",
        "scout.windows",
        "scout.patch_scores",
        "scout.selected",
        "arbitration",
        "board.update",
        "board.drop",
        "refine",
        "synthesis",
        "answer",
        "warning",
    }
)


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    stage: str
    payload: Any
    wall_time: float

    def __post_init__(self):
        if self.seq < 0:
            raise TraceError(f"negative trace seq {self.seq}")
        if self.stage not in STAGES:
            raise TraceError(f"unknown trace stage {self.stage!r}")

    def to_dict(self) -> dict:
        return {"seq": self.seq, "stage": self.stage, "payload": self.payload, "wall_time": self.wall_time}


class TraceRecorder:
    """Collects events for one question run; not shared across questions."""

    def __init__(self):
        self.events: list[TraceEvent] = []

    def emit(self, stage: str, payload: Any) -> TraceEvent:
        event = TraceEvent(seq=len(self.events), stage=stage, payload=payload, wall_time=time.time())
        self.events.append(event)
        return event


def write_trace(events: list[TraceEvent], path: str):
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")


def read_trace(path: str) -> list[TraceEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                events.append(
                    TraceEvent(
                        seq=data["seq"],
                        stage=data["stage"],
                        payload=data["payload"],
                        wall_time=data["wall_time"],
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, EvflowError) as exc:
                raise TraceError(f"{path}:{lineno}: bad trace line: {exc}") from exc
    return events


def without_wall_time(events: list[TraceEvent]) -> list[dict]:
    """Comparable view of a trace: everything except timestamps."""
    return [{"seq": e.seq, "stage": e.stage, "payload": e.payload} for e in events]
