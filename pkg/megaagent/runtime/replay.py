"""Offline checks over an event log.

:func:`replay` walks the records of a finished run and reports every broken
runtime invariant with the line it was found on: illegal state edges, lost
or duplicated messages, messages along edges the routing policy forbids,
model calls outside Processing, cycles without a verdict, a malformed spawn
tree and forked commit chains. The same walk
rebuilds the hierarchy summary and the stage report.
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Tuple, Union

from ..config import RuntimeConfig
from ..error import (
    InvariantViolation,
    MegaAgentError,
    RoutingError,
    SpawnRefusedError,
)
from ..gateway.types import TokenUsage
from ..internal import TruncatedLogError, iter_jsonl
from ..metrics.ledger import StageLabel, StageReport, StageRow
from .agent import LEGAL_TRANSITIONS, AgentState
from .directory import AgentDirectory, HierarchySummary
from .events import EventRecord

NumberedRecord = Tuple[int, EventRecord]

_UNBOUNDED = 1_000_000


def load_log(
    path: Union[str, Path]
) -> Tuple[List[NumberedRecord], Optional[InvariantViolation]]:
    """Read a log, tolerating a truncated tail.

    Return:
        Complete records with their line numbers, and the truncation
        violation if the last line was cut short.
    Raises:
        :class:`~megaagent.error.MegaAgentError`: Unreadable or malformed log.
    """
    records: List[NumberedRecord] = []
    try:
        for line, record in iter_jsonl(Path(path)):
            records.append((line, record))
    except TruncatedLogError as exp:
        return records, InvariantViolation(exp.line, "unexpected end of log")
    except OSError as exp:
        raise MegaAgentError(f"can't read {path}", exp) from None
    return records, None


class ReplayResult:
    """Outcome of :func:`replay`."""

    def __init__(self, records: List[NumberedRecord]):
        self.records = records
        self.violations: List[InvariantViolation] = []
        self.transitions: List[str] = []
        self.levels: Dict[str, int] = {}
        self.status: Optional[str] = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> HierarchySummary:
        counts: Dict[int, int] = {}
        for level in self.levels.values():
            counts[level] = counts.get(level, 0) + 1
        return HierarchySummary(counts)

    def stage_report(self) -> StageReport:
        return stage_report([record for _, record in self.records], len(self.levels))


class _Checker:
    def __init__(self, result: ReplayResult):
        self.result = result
        self.states: Dict[str, AgentState] = {}
        self.processing: Dict[str, int] = {}
        self.verdicts: Dict[str, int] = {}
        self.parents: Dict[str, Optional[str]] = {}
        self.levels: Dict[str, int] = {}
        self.enqueued: Dict[int, int] = {}
        self.pending: Set[int] = set()
        self.heads: Dict[str, str] = {}
        self.directory = AgentDirectory(
            RuntimeConfig(max_agents=_UNBOUNDED, max_hierarchy_depth=_UNBOUNDED)
        )
        self.started = False
        self.ended = False
        self.last_seq = -1

    def fail(self, line: int, message: str) -> None:
        self.result.violations.append(InvariantViolation(line, message))

    def visit(self, line: int, record: EventRecord) -> None:
        seq = record.get("seq")
        if not isinstance(seq, int) or seq <= self.last_seq:
            self.fail(line, f"event sequence {seq} is not increasing")
        else:
            self.last_seq = seq
        agent = record.get("agent", "")
        detail: Dict[str, Any] = record.get("detail") or {}
        handler = getattr(self, "on_" + str(record.get("event")), None)
        if handler is not None:
            handler(line, agent, detail)

    def on_run(self, line, agent, detail):
        if detail.get("action") == "start":
            self.started = True
        elif detail.get("action") == "end":
            self.ended = True
            self.result.status = detail.get("status")

    def on_spawn(self, line, agent, detail):
        name, parent = detail.get("name", agent), detail.get("parent")
        replaces = detail.get("replaces")
        known = len(self.result.violations)
        if name in self.parents:
            self.fail(line, f"agent {name} spawned twice")
            return
        if parent is None:
            if any(p is None for p in self.parents.values()) and replaces is None:
                self.fail(line, f"second root agent {name}")
            level = 0
        elif parent not in self.parents:
            self.fail(line, f"{name} spawned under unknown parent {parent}")
            return
        else:
            level = self.levels[parent] + 1
        if replaces is not None:
            if self.parents.get(replaces, parent) != parent:
                self.fail(line, f"{name} does not keep the parent of {replaces}")
            self.result.levels.pop(replaces, None)
            for child, owner in self.parents.items():
                if owner == replaces:
                    self.parents[child] = name
        if detail.get("level", level) != level:
            self.fail(line, f"{name} has level {detail.get('level')}, expected {level}")
        self.parents[name] = parent
        self.levels[name] = level
        self.result.levels[name] = level
        self.states[name] = AgentState.Idle
        if len(self.result.violations) == known:
            self._mirror(line, name, parent, replaces)

    def _mirror(self, line, name, parent, replaces):
        try:
            if replaces is not None:
                self.directory.replace(self.directory.get(replaces), name)
            else:
                self.directory.spawn(name, "", parent=parent)
        except (KeyError, RoutingError, SpawnRefusedError) as exp:
            self.fail(line, f"{name} cannot join the hierarchy: {exp}")

    def on_state(self, line, agent, detail):
        try:
            old = AgentState.from_string(str(detail.get("from")))
            new = AgentState.from_string(str(detail.get("to")))
        except ValueError:
            self.fail(line, f"unknown state in {detail}")
            return
        current = self.states.get(agent, AgentState.Idle)
        if old != current:
            self.fail(line, f"{agent} leaves {old.value} while in {current.value}")
        if (old, new) not in LEGAL_TRANSITIONS:
            self.fail(line, f"illegal transition {old.value} -> {new.value} of {agent}")
        self.states[agent] = new
        if new == AgentState.Processing:
            self.processing[agent] = self.processing.get(agent, 0) + 1
        self.result.transitions.append(f"{agent}: {old.value} -> {new.value}")

    def on_enqueue(self, line, agent, detail):
        seq = detail.get("seq")
        if seq in self.enqueued:
            self.fail(line, f"message {seq} enqueued twice")
        self.enqueued[seq] = line
        self.pending.add(seq)
        sender = str(detail.get("sender", agent))
        recipient = detail.get("recipient")
        try:
            target = self.directory.check_route(
                sender, str(detail.get("addressed", recipient))
            )
        except RoutingError as exp:
            self.fail(line, f"message {seq} breaks the routing policy: {exp}")
            return
        if target.name != recipient:
            self.fail(line, f"message {seq} reached {recipient}, not {target.name}")

    def on_batch(self, line, agent, detail):
        if self.states.get(agent) != AgentState.Processing:
            self.fail(line, f"{agent} drains its queue outside Processing")
        for seq in detail.get("seqs", []):
            if seq not in self.enqueued:
                self.fail(line, f"message {seq} batched before it was enqueued")
            elif seq not in self.pending:
                self.fail(line, f"message {seq} batched twice")
            self.pending.discard(seq)

    def on_requeue(self, line, agent, detail):
        self.pending.update(detail.get("seqs", []))

    def on_complete(self, line, agent, detail):
        if self.states.get(agent) != AgentState.Processing:
            state = self.states.get(agent)
            self.fail(
                line,
                f"model call by {agent} in {state.value if state else 'no'} state",
            )

    def on_verdict(self, line, agent, detail):
        self.verdicts[agent] = self.verdicts.get(agent, 0) + 1

    def on_commit(self, line, agent, detail):
        path = detail.get("path")
        if detail.get("parent") != self.heads.get(path):
            self.fail(line, f"commit {detail.get('hash')} forks the history of {path}")
        self.heads[path] = detail.get("hash")

    def finish(self, last_line: int) -> None:
        if not self.started or not self.ended:
            self.fail(last_line, "unexpected end of log")
        for agent, entered in sorted(self.processing.items()):
            verdicts = self.verdicts.get(agent, 0)
            if verdicts != entered:
                self.fail(
                    last_line,
                    f"{agent} entered Processing {entered} times "
                    f"but has {verdicts} verdicts",
                )
        if self.result.status == "complete":
            for seq in sorted(self.pending):
                self.fail(self.enqueued[seq], f"message {seq} was never processed")
        for agent, state in sorted(self.states.items()):
            if self.ended and state == AgentState.Processing:
                self.fail(last_line, f"{agent} still in Processing at the end")


def replay(
    records: List[NumberedRecord], truncated: Optional[InvariantViolation] = None
) -> ReplayResult:
    """Check every runtime invariant over ``records``."""
    result = ReplayResult(records)
    checker = _Checker(result)
    for line, record in records:
        checker.visit(line, record)
    if truncated is not None:
        result.violations.append(truncated)
    elif records:
        checker.finish(records[-1][0])
    return result


def stage_report(records: List[EventRecord], agent_count: int) -> StageReport:
    """Stage report folded from ``complete`` and ``stage`` events."""
    usage: Dict[str, TokenUsage] = {
        value: TokenUsage() for value in StageLabel.values()
    }
    starts: Dict[str, float] = {}
    ends: Dict[str, float] = {}
    for record in records:
        detail = record.get("detail") or {}
        if record["event"] == "complete" and detail.get("stage") in usage:
            usage[detail["stage"]] = usage[detail["stage"]] + TokenUsage(
                detail.get("input_tokens", 0), detail.get("output_tokens", 0)
            )
        elif record["event"] == "stage":
            if detail.get("action") == "open":
                starts[detail["stage"]] = detail["at"]
            elif detail.get("action") == "close":
                ends[detail["stage"]] = detail["at"]
    rows = [
        StageRow(
            stage, usage[stage.value], starts.get(stage.value), ends.get(stage.value)
        )
        for stage in StageLabel
    ]
    return StageReport(rows, agent_count=agent_count)
