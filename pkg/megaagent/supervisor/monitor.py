"""Hierarchical monitoring.

The supervisor owns the checklists, verifies every cycle, detects the three
failure scenarios (premature termination, repetition, refusal) and reacts:
a retry prompt while the per-kind budget lasts, then escalation to the
parent; a refusal replaces the agent at once. Escalation past the Boss
aborts the run.

Group reviews ask an admin to judge its subtree's outputs; the verdict
starts with ``ACCEPT`` or ``REVISE:`` followed by ``Name: text`` lines.
"""
import logging
import threading
from collections import deque
from typing import TYPE_CHECKING, Deque, Dict, List, NamedTuple, Optional, Set, Tuple

from ..config import SupervisorConfig
from ..error import (
    OrchestrationError,
    OrchestrationErrorCodes,
    WorkspaceError,
    WorkspaceErrorCodes,
)
from ..gateway.types import ChatRequest
from ..tools.schemas import TERMINATE
from ..workspace import ConflictReport
from .checklist import (
    Checklist,
    ChecklistItem,
    checklist_owner,
    checklist_path,
    parse_checklist,
    render_items,
)
from .failures import (
    SUPERVISOR,
    Failure,
    FailureKind,
    RemediationAction,
    RemediationKind,
    supervisor_message,
)

if TYPE_CHECKING:
    from ..runtime.agent import Agent
    from ..runtime.context import RuntimeContext
    from ..runtime.cycle import CycleRecord

logger = logging.getLogger(__name__)

ACCEPTED = "accepted"
REVISE = "revise"
INCONCLUSIVE = "inconclusive"

_REVIEW_PROMPT = """\
Review the work of your group against your task.

Task requirements:
{requirements}

Group outputs:
{outputs}

Answer ACCEPT if the requirements are met. Otherwise answer REVISE: followed
by one line per agent that must revise, formatted "Name: what to fix"."""

_REVIEW_NUDGE = (
    "Your answer could not be understood. Start it with ACCEPT, or with "
    'REVISE: followed by "Name: what to fix" lines.'
)


class ReviewOutcome(NamedTuple):
    verdict: str
    revisions: List[Tuple[str, str]]
    round: int


class Supervisor:
    """Monitors every agent of a runtime context.

    Args:
        ctx: Runtime the supervisor watches.
        config: Thresholds; taken from the context's configuration by default.
    """

    def __init__(
        self, ctx: "RuntimeContext", config: Optional[SupervisorConfig] = None
    ):
        self._ctx = ctx
        self._config = config or ctx.config.supervisor
        self._lock = threading.RLock()
        self._checklists: Dict[str, Checklist] = {}
        self._retries: Dict[Tuple[str, FailureKind], int] = {}
        self._calls: Dict[str, Deque[List[tuple]]] = {}
        self._texts: Dict[str, Deque[List[str]]] = {}
        self._rounds: Dict[str, int] = {}
        self._authored: Dict[str, Set[str]] = {}
        self._patterns = [p.lower() for p in self._config.refusal_patterns]
        ctx.workspace.subscribe(self._on_commit)

    # Checklists.

    def checklist(self, owner: str) -> Checklist:
        with self._lock:
            return self._checklists.get(owner) or Checklist(owner)

    def create_checklist(self, owner: str, content: str = "") -> None:
        """Create ``todo_<owner>.txt`` holding ``content``."""
        self._commit_as_supervisor(checklist_path(owner), lambda _: content)

    def add_checklist_item(self, owner: str, text: str) -> None:
        """Append an open item to the checklist of ``owner``."""

        def append(current: str) -> str:
            items = parse_checklist(owner, current).items
            items.append(ChecklistItem(text, False))
            return render_items(items)

        self._commit_as_supervisor(checklist_path(owner), append)

    def authored(self, agent: str) -> List[str]:
        """Paths ``agent`` committed, checklists excluded."""
        with self._lock:
            return sorted(self._authored.get(agent, ()))

    def _commit_as_supervisor(self, path: str, update) -> None:
        workspace = self._ctx.workspace
        while True:
            try:
                current, base = workspace.read(path)
            except WorkspaceError as exp:
                if exp.code != WorkspaceErrorCodes.NotFound:
                    raise
                current, base = "", None
            result = workspace.write(path, update(current), base, caller=SUPERVISOR)
            if not isinstance(result, ConflictReport):
                return

    def _on_commit(self, path: str, commit: str, caller: Optional[str]) -> None:
        owner = checklist_owner(path)
        if owner is not None:
            content = self._ctx.workspace.content_at(commit)
            with self._lock:
                self._checklists[owner] = parse_checklist(owner, content)
        elif caller is not None and caller != SUPERVISOR:
            with self._lock:
                self._authored.setdefault(caller, set()).add(path)

    # Cycle checks.

    def verify_format(self, agent: "Agent", cycle: "CycleRecord") -> Optional[Failure]:
        """Check one finished cycle; always writes one ``verdict`` event.

        Return:
            :data:`None` when the cycle is fine, the failure otherwise.
        """
        failure = self._verify(agent, cycle)
        self._ctx.events.emit(
            agent.name,
            "verdict",
            {
                "ok": failure is None,
                "kind": failure.kind.value if failure else None,
                "cause": failure.cause.value if failure and failure.cause else None,
                "detail": failure.detail if failure else None,
            },
        )
        return failure

    def _verify(self, agent: "Agent", cycle: "CycleRecord") -> Optional[Failure]:
        if cycle.backend_error is not None:
            return Failure(FailureKind.ExecError, f"backend: {cycle.backend_error}")
        if cycle.loop_exceeded:
            bound = self._ctx.config.runtime.max_function_call_iterations
            return Failure(
                FailureKind.IncompleteTodo,
                f"you kept calling functions for {bound} model calls; "
                "finish with a plain answer",
            )
        for filename, obs in cycle.last_exec_per_file().items():
            if not obs.success:
                return Failure(
                    FailureKind.FormatError,
                    f"{filename} does not run: {obs.render()}",
                    FailureKind.ExecError,
                )
        for talk in cycle.talks:
            if not self._ctx.directory.can_route(agent.name, talk.recipient):
                return Failure(
                    FailureKind.FormatError, f"you can't talk to {talk.recipient}"
                )
        if not cycle.final_text.strip() and not cycle.observations:
            return Failure(FailureKind.FormatError, "empty response")
        return None

    def detect_failures(self, agent: "Agent", cycle: "CycleRecord") -> List[Failure]:
        """Failures visible in the agent's recent cycles."""
        failures = []
        if cycle.terminate_requested and not self.checklist(agent.name).is_complete:
            open_items = self.checklist(agent.name).open_items()
            failures.append(
                Failure(
                    FailureKind.IncompleteTodo,
                    "your checklist {} still has open items:\n{}".format(
                        checklist_path(agent.name),
                        "\n".join(f"- {item.text}" for item in open_items),
                    ),
                )
            )
        if self._repeats(agent.name, cycle):
            failures.append(
                Failure(FailureKind.Repetition, "you are repeating the same action")
            )
        for text in cycle.texts():
            lowered = text.lower()
            if any(pattern in lowered for pattern in self._patterns):
                failures.append(Failure(FailureKind.Refusal, text.strip()))
                break
        return failures

    def _repeats(self, agent: str, cycle: "CycleRecord") -> bool:
        threshold = self._config.repetition_threshold
        window = self._config.repetition_window
        with self._lock:
            calls = self._calls.setdefault(agent, deque(maxlen=window))
            texts = self._texts.setdefault(agent, deque(maxlen=window))
            calls.append(
                [
                    (call.tool_name, tuple(sorted(call.arguments.items())))
                    for call in cycle.calls
                    if call.tool_name != TERMINATE
                ]
            )
            texts.append([r.prose for r in cycle.responses if r.prose])
            flat_calls = [call for chunk in calls for call in chunk][-threshold:]
            flat_texts = [text for chunk in texts for text in chunk][-threshold:]
            repeated = _all_same(flat_calls, threshold) or _all_same(
                flat_texts, threshold
            )
            if repeated:
                calls.clear()
                texts.clear()
            return repeated

    def settle_cycle(
        self, agent: "Agent", failures: List[Failure]
    ) -> List[RemediationAction]:
        """Accept or refuse a TERMINATE and remediate ``failures``.

        Raises:
            :class:`~megaagent.error.OrchestrationError`: Escalation past the Boss.
        """
        if agent.terminate_requested:
            agent.terminate_requested = False
            accepted = not failures and self.checklist(agent.name).is_complete
            self._ctx.events.emit(agent.name, "terminate", {"accepted": accepted})
            if accepted:
                self._ctx.finish_agent(agent)

        kinds = []
        unique = []
        for failure in failures:
            if failure.kind not in kinds:
                kinds.append(failure.kind)
                unique.append(failure)
        self._end_episodes(agent.name, kinds)
        refusal = [f for f in unique if f.kind == FailureKind.Refusal]
        if refusal:
            unique = refusal
        return [self.remediate(agent, failure) for failure in unique]

    def _end_episodes(self, agent: str, ongoing: List[FailureKind]) -> None:
        """Restore the retry budget of every kind absent from the last cycle."""
        with self._lock:
            for key in [k for k in self._retries if k[0] == agent]:
                if key[1] not in ongoing:
                    del self._retries[key]

    def remediate(self, agent: "Agent", failure: Failure) -> RemediationAction:
        """React to one failure.

        Raises:
            :class:`~megaagent.error.OrchestrationError`: Escalation past
                the Boss (:attr:`OrchestrationErrorCodes.EscalationAtRoot`).
        """
        self._ctx.events.emit(
            agent.name,
            "failure",
            {
                "kind": failure.kind.value,
                "detail": failure.detail,
                "cause": failure.cause.value if failure.cause else None,
            },
        )
        logger.info("%s: %s: %s", agent.name, failure.kind.value, failure.detail)

        if failure.kind == FailureKind.Refusal and not agent.is_boss:
            replacement = self._ctx.replace_agent(agent)
            with self._lock:
                for (name, kind), used in list(self._retries.items()):
                    if name == agent.name:
                        self._retries[(replacement.name, kind)] = used
            self._ctx.send(
                SUPERVISOR,
                replacement.name,
                supervisor_message(
                    FailureKind.Refusal.value,
                    f"You take over the work of {agent.name}. Your checklist "
                    f"{checklist_path(replacement.name)} holds its open items; "
                    "finish them.",
                ),
            )
            return self._action(
                agent, failure, RemediationKind.RecruitReplacement, 0, replacement.name
            )

        budget = self._config.retry_budget
        with self._lock:
            used = self._retries.get((agent.name, failure.kind), 0)
            if failure.kind != FailureKind.Refusal and used < budget:
                self._retries[(agent.name, failure.kind)] = used + 1
                retry = True
            else:
                retry = False
        if retry:
            self._ctx.send(
                SUPERVISOR,
                agent.name,
                supervisor_message(failure.kind.value, failure.detail),
            )
            return self._action(
                agent,
                failure,
                RemediationKind.RetryPrompt,
                budget - used - 1,
                agent.name,
            )
        return self.escalate(agent, failure)

    def escalate(self, agent: "Agent", failure: Failure) -> RemediationAction:
        """Hand a failure to the parent of ``agent``.

        Raises:
            :class:`~megaagent.error.OrchestrationError`: ``agent`` is the Boss.
        """
        if agent.parent is None:
            self._ctx.events.emit(
                agent.name,
                "remediation",
                {
                    "action": RemediationKind.EscalateToParent.value,
                    "kind": failure.kind.value,
                    "attempts_remaining": 0,
                    "target": None,
                },
            )
            raise OrchestrationError(
                OrchestrationErrorCodes.EscalationAtRoot,
                f"{agent.name}: {failure.kind.value}: {failure.detail}",
            )
        parent = self._ctx.directory.resolve(agent.parent)
        self._ctx.send(
            SUPERVISOR,
            parent.name,
            supervisor_message(
                failure.kind.value,
                f"{agent.name} keeps failing: {failure.detail}\n"
                "Help it, or take over its work.",
            ),
        )
        return self._action(
            agent, failure, RemediationKind.EscalateToParent, 0, parent.name
        )

    def _action(
        self,
        agent: "Agent",
        failure: Failure,
        kind: RemediationKind,
        remaining: int,
        target: str,
    ) -> RemediationAction:
        self._ctx.events.emit(
            agent.name,
            "remediation",
            {
                "action": kind.value,
                "kind": failure.kind.value,
                "attempts_remaining": remaining,
                "target": target,
            },
        )
        return RemediationAction(kind, remaining, target)

    def sweep(self) -> int:
        """Prompt idle agents whose checklist is open.

        Return:
            Number of prompts sent.
        """
        prompted = 0
        for agent in self._ctx.directory.agents(active_only=True):
            checklist = self.checklist(agent.name)
            queue = self._ctx.directory.queue(agent.name)
            if checklist.is_complete or not queue.is_empty():
                continue
            self.remediate(
                agent,
                Failure(
                    FailureKind.IncompleteTodo,
                    "no progress; your checklist {} still has open items".format(
                        checklist_path(agent.name)
                    ),
                ),
            )
            prompted += 1
        return prompted

    # Group reviews.

    def validate_result(
        self, admin: "Agent", group_outputs: str, task_requirements: str
    ) -> ReviewOutcome:
        """Ask ``admin`` to judge its group's outputs.

        Accepted outputs are forwarded to the parent's next review.
        Revisions become checklist items and supervisor messages to the
        named agents. An unparseable verdict is retried once, then escalated.

        Raises:
            :class:`~megaagent.error.OrchestrationError`: Inconclusive
                verdict of the Boss.
        """
        with self._lock:
            round_ = self._rounds.get(admin.name, 0) + 1
            self._rounds[admin.name] = round_
        members = {a.name for a in self._ctx.directory.subtree(admin.name)}
        members.add(admin.name)

        request = ChatRequest(
            admin.name,
            admin.system_prompt,
            [
                (
                    SUPERVISOR,
                    _REVIEW_PROMPT.format(
                        requirements=task_requirements, outputs=group_outputs
                    ),
                )
            ],
            temperature=self._ctx.config.temperature,
        )
        response = self._ctx.gateway.complete(request)
        verdict, revisions = parse_verdict(response.text, members, self._ctx)
        if verdict == INCONCLUSIVE:
            request.append("assistant", response.text)
            request.append(SUPERVISOR, _REVIEW_NUDGE)
            response = self._ctx.gateway.complete(request)
            verdict, revisions = parse_verdict(response.text, members, self._ctx)

        self._ctx.events.emit(
            admin.name,
            "verdict",
            {
                "ok": verdict != INCONCLUSIVE,
                "kind": (
                    FailureKind.FormatError.value if verdict == INCONCLUSIVE else None
                ),
                "cause": None,
                "detail": None,
                "review": True,
            },
        )
        self._ctx.events.emit(
            admin.name,
            "validation",
            {
                "round": round_,
                "verdict": verdict,
                "targets": [name for name, _ in revisions],
            },
        )

        if verdict == REVISE:
            for name, text in revisions:
                self.add_checklist_item(name, text)
                self._ctx.send(
                    SUPERVISOR,
                    name,
                    supervisor_message(
                        FailureKind.IncompleteTodo.value,
                        f"{admin.name} asks for a revision: {text}\n"
                        f"It was added to {checklist_path(name)}.",
                    ),
                )
        else:
            if verdict == INCONCLUSIVE:
                if admin.is_boss:
                    raise OrchestrationError(
                        OrchestrationErrorCodes.ValidationInconclusive,
                        f"{admin.name}: {response.text.strip()[:200]}",
                    )
                self.escalate(
                    admin,
                    Failure(FailureKind.FormatError, "group review was inconclusive"),
                )
            self._ctx.forward_review(admin, group_outputs)
        return ReviewOutcome(verdict, revisions, round_)


def parse_verdict(
    text: str, members: Set[str], ctx=None
) -> Tuple[str, List[Tuple[str, str]]]:
    """Split a review answer into its verdict and revision requests.

    Revision lines naming an agent outside ``members`` are ignored;
    replaced agents resolve to their replacement when ``ctx`` is given.
    """
    body = text.strip()
    if body.upper().startswith("ACCEPT"):
        return ACCEPTED, []
    if not body.upper().startswith("REVISE:"):
        return INCONCLUSIVE, []
    revisions = []
    for line in body[len("REVISE:") :].splitlines():
        name, sep, request = line.strip().lstrip("-* ").partition(":")
        name, request = name.strip(), request.strip()
        if not sep or not request or name not in members:
            continue
        if ctx is not None:
            name = ctx.directory.resolve(name).name
        revisions.append((name, request))
    if not revisions:
        return INCONCLUSIVE, []
    return REVISE, revisions


def _all_same(values: list, threshold: int) -> bool:
    return len(values) >= threshold and all(v == values[0] for v in values)
