from typing import NamedTuple, Optional

from enum_tools import document_enum

from ..enum import MegaAgentEnum

SUPERVISOR = "supervisor"
"""Reserved sender name of supervisor-injected messages."""


@document_enum
class FailureKind(MegaAgentEnum):
    """Failure detected by the supervisor."""

    IncompleteTodo = "IncompleteTodo"
    """TERMINATE with open checklist items, or the function-call bound hit."""
    Repetition = "Repetition"
    """Same action or text repeated consecutively."""
    Refusal = "Refusal"
    """Model refused the task."""
    FormatError = "FormatError"
    """Cycle output failed verification."""
    ExecError = "ExecError"
    """Backend outage or failing program."""


@document_enum
class RemediationKind(MegaAgentEnum):
    """Supervisor reaction to a failure."""

    RetryPrompt = "RetryPrompt"
    """Message to the agent quoting the deficiency."""
    RecruitReplacement = "RecruitReplacement"
    """Replace the agent with a clone inheriting its checklist."""
    EscalateToParent = "EscalateToParent"
    """Retry budget exhausted; the parent is told."""


class Failure(NamedTuple):
    kind: FailureKind
    detail: str
    cause: Optional[FailureKind] = None


class RemediationAction(NamedTuple):
    kind: RemediationKind
    attempts_remaining: int
    target: str
    """Agent that received the supervisor message."""


def supervisor_message(kind: str, text: str) -> str:
    """Supervisor message with its machine-readable header line."""
    return f"SUPERVISOR:{kind}\n{text}"


def message_kind(text: str) -> Optional[str]:
    """Header kind of a supervisor message, if ``text`` is one."""
    first = text.split("\n", 1)[0]
    if first.startswith("SUPERVISOR:"):
        return first[len("SUPERVISOR:") :].strip()
    return None
