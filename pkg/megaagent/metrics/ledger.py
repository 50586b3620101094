"""Stage-labelled token and wall-time accounting.

A run has three stages: Planning (bootstrap until the kickoff messages are
queued), TaskSolving (until quiescence) and Merging (aggregation). Every model
call is recorded against the stage that was open when the call started.
"""
import threading
import time
from typing import Callable, Dict, List, Optional, Tuple

from enum_tools import document_enum

from ..enum import MegaAgentEnum
from ..error import StageClosedError
from ..gateway.types import TokenUsage
from ..internal import JsonObject, JsonObjectForm


@document_enum
class StageLabel(MegaAgentEnum):
    """Cost-accounting stage of a run."""

    Planning = "Planning"
    """Boss decomposition and hierarchy bootstrap."""
    TaskSolving = "TaskSolving"
    """Agents working until quiescence."""
    Merging = "Merging"
    """Aggregation of the deliverable."""


class LedgerEntry:
    """One model call. Immutable once recorded."""

    __slots__ = ("agent", "stage", "usage", "timestamp", "duration")

    def __init__(
        self,
        agent: str,
        stage: StageLabel,
        usage: TokenUsage,
        timestamp: float,
        duration: float,
    ):
        object.__setattr__(self, "agent", agent)
        object.__setattr__(self, "stage", stage)
        object.__setattr__(self, "usage", usage)
        object.__setattr__(self, "timestamp", timestamp)
        object.__setattr__(self, "duration", duration)

    def __setattr__(self, key, value):
        raise AttributeError("ledger entries are immutable")

    def __repr__(self) -> str:
        return (
            f"LedgerEntry(agent={self.agent!r}, stage={self.stage.value}, "
            f"in={self.usage.input_tokens}, out={self.usage.output_tokens})"
        )


class UsageLedger:
    """Append-only usage ledger with stage windows.

    Times are seconds since the ledger was created, measured with a
    monotonic clock.

    Args:
        clock: Monotonic clock, replaceable in tests.
    """

    def __init__(self, clock: Callable[[], float] = time.perf_counter):
        self._clock = clock
        self._origin = clock()
        self._lock = threading.Lock()
        self._entries: List[LedgerEntry] = []
        self._windows: Dict[StageLabel, Tuple[float, Optional[float]]] = {}
        self._current: Optional[StageLabel] = None

    def now(self) -> float:
        """Seconds since ledger creation."""
        return self._clock() - self._origin

    @property
    def current_stage(self) -> Optional[StageLabel]:
        """Open stage, if any."""
        return self._current

    @property
    def entries(self) -> List[LedgerEntry]:
        with self._lock:
            return list(self._entries)

    @property
    def stage_windows(self) -> Dict[StageLabel, Tuple[float, Optional[float]]]:
        with self._lock:
            return dict(self._windows)

    def open_stage(self, stage: StageLabel) -> float:
        """Open a stage window, closing the current one at the same instant.

        Return:
            Window start.
        """
        with self._lock:
            if stage in self._windows:
                raise StageClosedError(f"stage {stage.value} was already opened")
            at = self.now()
            if self._current is not None:
                start, _ = self._windows[self._current]
                self._windows[self._current] = (start, at)
            self._windows[stage] = (at, None)
            self._current = stage
            return at

    def close_stage(self) -> Optional[float]:
        """Close the current stage window.

        Return:
            Window end, or :data:`None` if no stage was open.
        """
        with self._lock:
            if self._current is None:
                return None
            at = self.now()
            start, _ = self._windows[self._current]
            self._windows[self._current] = (start, at)
            self._current = None
            return at

    def record(
        self,
        agent: str,
        stage: StageLabel,
        usage: TokenUsage,
        duration: float,
        *,
        started_at: Optional[float] = None,
    ) -> LedgerEntry:
        """Append one model call.

        Args:
            agent: Calling agent.
            stage: Stage open when the call started.
            usage: Token usage of the call.
            duration: Call wall time in seconds.
            started_at: Call start (ledger seconds). Defaults to now minus duration.
        Raises:
            :class:`~megaagent.error.StageClosedError`: Stage never opened,
                or it closed before the call started.
        """
        with self._lock:
            start = started_at if started_at is not None else self.now() - duration
            window = self._windows.get(stage)
            if window is None:
                raise StageClosedError(f"stage {stage.value} is not open")
            _, end = window
            if end is not None and start > end:
                raise StageClosedError(f"stage {stage.value} is closed")
            entry = LedgerEntry(agent, stage, usage, start, duration)
            self._entries.append(entry)
            return entry

    def totals(self) -> TokenUsage:
        """Grand total over all entries."""
        with self._lock:
            return _sum_usage(e.usage for e in self._entries)

    def report(self, *, agent_count: int = 0) -> "StageReport":
        """Build the stage report. See :func:`report`."""
        return report(self, agent_count=agent_count)


class StageRow:
    """Usage of one stage."""

    def __init__(
        self,
        stage: StageLabel,
        usage: TokenUsage,
        start: Optional[float],
        end: Optional[float],
    ):
        self.stage = stage
        self.usage = usage
        self.start = start
        self.end = end

    @property
    def time(self) -> float:
        if self.start is None or self.end is None:
            return 0.0
        return self.end - self.start


class StageReport(JsonObjectForm):
    """Per-stage input, output and total tokens with time windows.

    Args:
        rows: One row per stage, in stage order.
        agent_count: Spawned agents, used for the time-per-agent figure.
    """

    def __init__(self, rows: List[StageRow], *, agent_count: int):
        self.rows = rows
        self.total = _sum_usage(row.usage for row in rows)
        starts = [row.start for row in rows if row.start is not None]
        ends = [row.end for row in rows if row.end is not None]
        self.wall_time = (max(ends) - min(starts)) if starts and ends else 0.0
        self.agent_count = agent_count
        super().__init__(self._build())

    @property
    def ratio(self) -> Optional[str]:
        """Input to output token ratio, like ``25:1``."""
        if self.total.output_tokens == 0:
            return None
        value = self.total.input_tokens / self.total.output_tokens
        return f"{round(value, 1):g}:1"

    @property
    def time_per_agent(self) -> float:
        return self.wall_time / self.agent_count if self.agent_count else 0.0

    def row(self, stage: StageLabel) -> StageRow:
        for row in self.rows:
            if row.stage == stage:
                return row
        raise KeyError(stage.value)

    def _build(self) -> JsonObject:
        return {
            "stages": [
                {
                    "stage": row.stage.value,
                    "input_tokens": row.usage.input_tokens,
                    "output_tokens": row.usage.output_tokens,
                    "total_tokens": row.usage.total,
                    "start": row.start,
                    "end": row.end,
                    "time": row.time,
                }
                for row in self.rows
            ],
            "total": {
                "input_tokens": self.total.input_tokens,
                "output_tokens": self.total.output_tokens,
                "total_tokens": self.total.total,
                "time": self.wall_time,
            },
            "ratio": self.ratio,
            "agents": self.agent_count,
            "time_per_agent": self.time_per_agent,
        }

    def table(self) -> str:
        """Aligned plain-text table: Stage, Input, Output, Total, Time."""
        header = ("Stage", "Input Tokens", "Output Tokens", "Total Tokens", "Time (s)")
        body = [
            (
                row.stage.value,
                str(row.usage.input_tokens),
                str(row.usage.output_tokens),
                str(row.usage.total),
                _format_window(row.start, row.end),
            )
            for row in self.rows
        ]
        body.append(
            (
                "Total",
                str(self.total.input_tokens),
                str(self.total.output_tokens),
                str(self.total.total),
                f"{self.wall_time:.2f}",
            )
        )
        widths = [max(len(line[i]) for line in [header] + body) for i in range(5)]
        lines = [_format_line(header, widths), "  ".join("-" * w for w in widths)]
        lines.extend(_format_line(line, widths) for line in body)
        lines.append("")
        lines.append(f"input:output ratio: {self.ratio or 'n/a'}")
        lines.append(f"agents: {self.agent_count}")
        lines.append(f"time/agent (s): {self.time_per_agent:.3f}")
        return "\n".join(lines) + "\n"


def report(ledger: UsageLedger, *, agent_count: int = 0) -> StageReport:
    """Fold ledger entries into a :class:`StageReport`."""
    windows = ledger.stage_windows
    entries = ledger.entries
    rows = []
    for stage in StageLabel:
        start, end = windows.get(stage, (None, None))
        usage = _sum_usage(e.usage for e in entries if e.stage == stage)
        rows.append(StageRow(stage, usage, start, end))
    return StageReport(rows, agent_count=agent_count)


def _sum_usage(usages) -> TokenUsage:
    input_tokens = output_tokens = 0
    for usage in usages:
        input_tokens += usage.input_tokens
        output_tokens += usage.output_tokens
    return TokenUsage(input_tokens, output_tokens)


def _format_window(start: Optional[float], end: Optional[float]) -> str:
    if start is None:
        return "-"
    if end is None:
        return f"{start:.2f}-"
    return f"{start:.2f}-{end:.2f}"


def _format_line(cells, widths) -> str:
    first = cells[0].ljust(widths[0])
    rest = [cell.rjust(width) for cell, width in zip(cells[1:], widths[1:])]
    return "  ".join([first] + rest)
