import re
import threading
from typing import TYPE_CHECKING, List, Optional

from enum_tools import document_enum

from ..enum import MegaAgentEnum
from ..error import StateTransitionError

if TYPE_CHECKING:
    from .events import EventLog

ROOT_GROUP = "root"

_NAME = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.\-]*$")


@document_enum
class Role(MegaAgentEnum):
    """Agent role in the hierarchy."""

    Boss = "Boss"
    """Root agent: decomposes the meta-prompt and reviews all groups."""
    Admin = "Admin"
    """Group leader: recruits subordinates and talks to other admins."""
    Ordinary = "Ordinary"
    """Worker restricted to its own group."""


@document_enum
class AgentState(MegaAgentEnum):
    """Message-queue routine state."""

    Idle = "Idle"
    """Waiting for messages at no model cost."""
    Processing = "Processing"
    """Running inference and tools over a batch."""
    Response = "Response"
    """Dispatching the cycle's outgoing messages."""


LEGAL_TRANSITIONS = frozenset(
    {
        (AgentState.Idle, AgentState.Processing),
        (AgentState.Processing, AgentState.Response),
        (AgentState.Response, AgentState.Processing),
        (AgentState.Response, AgentState.Idle),
    }
)


def is_valid_name(name: str) -> bool:
    """Agent names are single words of letters, digits, ``_``, ``-`` and ``.``."""
    return bool(_NAME.match(name))


class Agent:
    """Schedulable unit of the runtime.

    Only the runtime mutates agents. ``cycle_lock`` is held for a whole
    Processing cycle, whether it is run by the agent's own thread or by a
    group review.
    """

    def __init__(
        self,
        name: str,
        role: Role,
        *,
        parent: Optional[str],
        group_id: str,
        system_prompt: str,
        level: int,
    ):
        self.name = name
        self.role = role
        self.parent = parent
        self.group_id = group_id
        self.system_prompt = system_prompt
        self.level = level
        self.state = AgentState.Idle
        self.call_counter = 0
        self.children: List[str] = []
        self.finished = False
        self.terminate_requested = False
        self.retired = False
        self.replaced_by: Optional[str] = None
        self.cycle_lock = threading.RLock()
        self.wake = threading.Event()

    @property
    def is_boss(self) -> bool:
        return self.role == Role.Boss

    @property
    def is_admin(self) -> bool:
        return self.role == Role.Admin

    @property
    def active(self) -> bool:
        """Registered and not replaced."""
        return not self.retired

    def transition(self, new: AgentState, events: Optional["EventLog"] = None) -> None:
        """Move to ``new``.

        Raises:
            :class:`~megaagent.error.StateTransitionError`: Illegal edge.
        """
        old = self.state
        if (old, new) not in LEGAL_TRANSITIONS:
            raise StateTransitionError(self.name, old.value, new.value)
        self.state = new
        if events is not None:
            events.emit(self.name, "state", {"from": old.value, "to": new.value})

    def __repr__(self) -> str:
        return f"Agent({self.name!r}, {self.role.value}, level={self.level})"
