"""This section documents exceptions the runtime can raise.

Those are exceptions a caller can expect if the library is used in correct way.

Each exception type is annotated if it makes sense to retry.

Some exceptions have ``code`` property. It allows to determine the concrete error.

Note:
    Tool failures are not raised to agents. The tool executor converts them
    into failed :class:`~megaagent.tools.ToolObservation` values carrying
    a :class:`ToolErrorCodes` member, so a misbehaving model never crashes
    the runtime.
"""
from typing import Optional

from enum_tools import document_enum

from .enum import MegaAgentEnum


class MegaAgentError(Exception):
    """Base exception used by the runtime. Sometimes can be retried.

    If it's not of one of subclasses (see below), means unexpected error.
    """

    def __init__(self, message: str, ex: Optional[Exception] = None):
        if ex and str(ex) != "":
            message = f"{message}: {ex}"
        super().__init__(message)
        self._ex = ex


class BackendUnavailableError(MegaAgentError):
    """Model backend could not be reached after bounded retries.

    Retry later. The agent's batch is put back into its queue.
    """


class RoutingError(MegaAgentError):
    """Message can't be delivered. Retry will never work."""

    def __init__(self, code: "RoutingErrorCodes", sender: str, recipient: str):
        self._code = code
        self.sender = sender
        self.recipient = recipient
        super().__init__(f"{code.value}: {sender} -> {recipient}")

    @property
    def code(self) -> "RoutingErrorCodes":
        """Error code."""
        return self._code


class StateTransitionError(MegaAgentError):
    """Illegal agent state transition. Indicates a runtime bug."""

    def __init__(self, agent: str, old: str, new: str):
        self.agent = agent
        super().__init__(f"illegal transition {old} -> {new} of agent {agent}")


class WorkspaceError(MegaAgentError):
    """Workspace operation failed. Retry will never work as is.

    :attr:`WorkspaceErrorCodes.StaleReport` is the exception:
    use :attr:`fresh_report` and merge again.
    """

    def __init__(self, code: "WorkspaceErrorCodes", message: str, fresh_report=None):
        self._code = code
        self.fresh_report = fresh_report
        super().__init__(f"{code.value}: {message}")

    @property
    def code(self) -> "WorkspaceErrorCodes":
        """Error code."""
        return self._code


class EmptyTextError(MegaAgentError):
    """Memory entry text is empty. Retry will never work."""


class FunctionLoopExceededError(MegaAgentError):
    """Agent kept calling functions past the per-cycle bound.

    Reported to the supervisor as an incomplete checklist.
    """

    def __init__(self, agent: str, bound: int):
        self.agent = agent
        self.bound = bound
        super().__init__(f"agent {agent} exceeded {bound} model calls in one cycle")


class SpawnRefusedError(MegaAgentError):
    """Agent can't be spawned: limits reached, name taken or invalid.

    Retry will never work with the same name and parent.
    """


class StageClosedError(MegaAgentError):
    """Usage was recorded for a stage whose window is not open."""


class OrchestrationError(MegaAgentError):
    """Run could not reach a clean deliverable."""

    def __init__(self, code: "OrchestrationErrorCodes", message: str):
        self._code = code
        super().__init__(f"{code.value}: {message}")

    @property
    def code(self) -> "OrchestrationErrorCodes":
        """Error code."""
        return self._code


class InvariantViolation(MegaAgentError):
    """Event log breaks a runtime invariant."""

    def __init__(self, line: int, message: str):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


@document_enum
class RoutingErrorCodes(MegaAgentEnum):
    """Possible error codes of :class:`RoutingError`."""

    UnknownRecipient = "UnknownRecipient"
    """Recipient is not a registered agent."""
    RoutingForbidden = "RoutingForbidden"
    """Sender's role may not address the recipient."""


@document_enum
class WorkspaceErrorCodes(MegaAgentEnum):
    """Possible error codes of :class:`WorkspaceError`."""

    NotFound = "NotFound"
    """Path was never written."""
    UnknownBaseHash = "UnknownBaseHash"
    """Base hash is not in the path's history."""
    StaleReport = "StaleReport"
    """HEAD moved after the conflict report was made."""
    InvalidPath = "InvalidPath"
    """Path is absolute or leaves the workspace."""


@document_enum
class OrchestrationErrorCodes(MegaAgentEnum):
    """Possible error codes of :class:`OrchestrationError`."""

    EmptyDecomposition = "EmptyDecomposition"
    """Boss produced no employee specs, even after a nudge."""
    DeadlockSuspected = "DeadlockSuspected"
    """No progress for the deadlock timeout while not quiescent."""
    EscalationAtRoot = "EscalationAtRoot"
    """Failure escalated past the Boss agent."""
    ValidationInconclusive = "ValidationInconclusive"
    """Review verdict could not be parsed, even after a retry."""


@document_enum
class ToolErrorCodes(MegaAgentEnum):
    """Error codes of failed tool observations."""

    UnknownTool = "UnknownTool"
    """Function name is not registered."""
    InvalidArguments = "InvalidArguments"
    """Required argument missing or of wrong type."""
    SandboxTimeout = "SandboxTimeout"
    """Program exceeded its wall-clock limit and was killed."""
    NoRunningProcess = "NoRunningProcess"
    """``input`` called without a live program of the caller."""
    SpawnRefused = "SpawnRefused"
    """Agent or depth limit reached, or the name is taken."""
    ForbiddenExtension = "ForbiddenExtension"
    """File type is not writable by agents."""
    PathEscape = "PathEscape"
    """Path is absolute or leaves the workspace."""
    NotFound = "NotFound"
    """File was never written."""
    Conflict = "Conflict"
    """File changed since the caller read it."""
    MissingTicket = "MissingTicket"
    """Existing file written without reading it first."""
    Forbidden = "Forbidden"
    """Caller may not touch this file."""
