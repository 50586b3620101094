"""Append-only event log of a run.

Every record is ``{"ts", "seq", "agent", "event", "detail"}``. ``seq`` is
global and strictly increasing, so the file order is the order in which the
runtime observed the events. The log is the substrate of offline replay.
"""
import logging
import threading
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

from enum_tools import document_enum
from typing_extensions import TypedDict

from ..enum import MegaAgentEnum
from ..internal import JsonlWriter, rfc3339_timestamp, utc_now

logger = logging.getLogger(__name__)


@document_enum
class EventKind(MegaAgentEnum):
    """Event types of the log."""

    State = "state"
    """Agent state transition ``{from, to}``."""
    Enqueue = "enqueue"
    """Message queued ``{seq, sender, recipient}``."""
    Batch = "batch"
    """Queue drained at Processing entry ``{seqs}``."""
    Requeue = "requeue"
    """Batch put back after a backend outage ``{seqs}``."""
    Dispatch = "dispatch"
    """Outgoing message handed to routing ``{recipient, seq}``."""
    Tool = "tool"
    """Tool invocation ``{tool, success, error}``."""
    Complete = "complete"
    """Model call ``{stage, input_tokens, output_tokens, started, duration}``."""
    Verdict = "verdict"
    """Format verification of a cycle ``{ok, kind}``."""
    Failure = "failure"
    """Detected failure ``{kind, detail}``."""
    Remediation = "remediation"
    """Supervisor action ``{action, kind, attempts_remaining, target}``."""
    Validation = "validation"
    """Group review round ``{round, verdict, targets}``."""
    Spawn = "spawn"
    """Agent registered ``{name, parent, role, level, group}``."""
    Commit = "commit"
    """Workspace commit ``{path, hash, parent}``."""
    Conflict = "conflict"
    """Rejected write ``{path, base_hash, head_hash}``."""
    Stage = "stage"
    """Stage window boundary ``{stage, action, at}``."""
    Terminate = "terminate"
    """TERMINATE handled ``{accepted}``."""
    Run = "run"
    """Run boundary ``{action}``."""


class EventRecord(TypedDict):
    ts: str
    seq: int
    agent: str
    event: str
    detail: Dict[str, Any]


EventListener = Callable[[EventRecord], None]


class EventLog:
    """Thread-safe event sink.

    Records are kept in memory and, when ``path`` is given, appended to a
    JSONL file as they arrive.

    Args:
        path: JSONL file to append to.
    """

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self._lock = threading.Lock()
        self._records: List[EventRecord] = []
        self._seq = 0
        self._writer = JsonlWriter(Path(path)) if path is not None else None
        self._listeners: List[EventListener] = []
        self._last_activity = time.monotonic()

    @property
    def path(self) -> Optional[Path]:
        return self._writer.path if self._writer is not None else None

    @property
    def last_activity(self) -> float:
        """Monotonic time of the latest record."""
        return self._last_activity

    def subscribe(self, listener: EventListener) -> None:
        with self._lock:
            self._listeners.append(listener)

    def emit(
        self,
        agent: str,
        event: Union[str, EventKind],
        detail: Optional[Dict[str, Any]] = None,
    ) -> EventRecord:
        """Append one record."""
        with self._lock:
            record: EventRecord = {
                "ts": rfc3339_timestamp(utc_now()),
                "seq": self._seq,
                "agent": agent,
                "event": str(event),
                "detail": dict(detail or {}),
            }
            self._seq += 1
            self._records.append(record)
            if self._writer is not None:
                self._writer.append(dict(record))
            self._last_activity = time.monotonic()
            listeners = list(self._listeners)
        for listener in listeners:
            listener(record)
        return record

    def records(
        self,
        event: Optional[Union[str, EventKind]] = None,
        *,
        agent: Optional[str] = None,
    ) -> List[EventRecord]:
        """Snapshot of records, optionally filtered."""
        with self._lock:
            selected = list(self._records)
        if event is not None:
            selected = [r for r in selected if r["event"] == str(event)]
        if agent is not None:
            selected = [r for r in selected if r["agent"] == agent]
        return selected

    def count(
        self, event: Union[str, EventKind], *, agent: Optional[str] = None
    ) -> int:
        return len(self.records(event, agent=agent))

    def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
