"""Shared state of one run."""
import logging
import threading
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Set

from ..config import Config
from ..error import MegaAgentError, RoutingError
from ..gateway.backend import Backend
from ..gateway.gateway import ModelGateway
from ..memory.store import MemoryStore
from ..metrics.ledger import UsageLedger
from ..supervisor.checklist import checklist_path
from ..supervisor.failures import SUPERVISOR, supervisor_message
from ..supervisor.monitor import Supervisor
from ..tools.executor import ToolExecutor
from ..tools.sandbox import Sandbox
from ..workspace import ConflictReport, Workspace
from .agent import Agent, AgentState
from .directory import AgentDirectory
from .events import EventLog
from .messages import Message, SequenceCounter
from .scheduler import Scheduler

logger = logging.getLogger(__name__)


class RuntimeContext:
    """Wires the components of a run together.

    Every cross-agent effect goes through the context: message routing,
    spawning, replacement and the bookkeeping the orchestrator needs to
    decide when the system is still.

    Args:
        config: Run configuration.
        backend: Model backend; wrapped in a :class:`ModelGateway` that
            records into ``ledger`` and ``events``.
        workspace: Shared file store. In-memory by default.
        memory: Agent memory. In-memory by default.
        events: Event log. In-memory by default.
        ledger: Usage ledger.
    """

    def __init__(
        self,
        config: Config,
        backend: Backend,
        *,
        workspace: Optional[Workspace] = None,
        memory: Optional[MemoryStore] = None,
        events: Optional[EventLog] = None,
        ledger: Optional[UsageLedger] = None,
    ):
        self.config = config
        self.events = events if events is not None else EventLog()
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.gateway = ModelGateway(backend, ledger=self.ledger, events=self.events)
        self.workspace = (
            workspace if workspace is not None else Workspace(events=self.events)
        )
        self.memory = memory if memory is not None else MemoryStore()
        self.directory = AgentDirectory(config.runtime)
        self.sequence = SequenceCounter()
        self.sandbox = Sandbox(
            config.sandbox, self.workspace, on_timeout=self.notify_program_timeout
        )
        self.tools = ToolExecutor(self)
        self.supervisor = Supervisor(self)
        self.scheduler = Scheduler(self)
        self.serial_lock = threading.Lock()
        self._activity = threading.Condition()
        self._busy = 0
        self._dirty: Set[str] = set()
        self._review_inputs: Dict[str, List[str]] = {}
        self.failure: Optional[MegaAgentError] = None

    # Messaging.

    def send(self, sender: str, recipient: str, text: str) -> Message:
        """Route a message to ``recipient``, or to its replacement.

        Raises:
            :class:`~megaagent.error.RoutingError`: Unknown recipient or
                forbidden edge.
        """
        target = self.directory.check_route(sender, recipient)
        queue = self.directory.queue(target.name)
        with queue.lock:
            message = Message(sender, target.name, text, self.sequence.next())
            detail = {
                "seq": message.sequence,
                "sender": sender,
                "recipient": target.name,
            }
            if target.name != recipient:
                detail["addressed"] = recipient
            self.events.emit(sender, "enqueue", detail)
            queue.enqueue(message)
        target.wake.set()
        self.scheduler.revive(target)
        self.notify()
        return message

    def notify_conflict(self, caller: Agent, report: ConflictReport) -> None:
        self.send(
            SUPERVISOR, caller.name, supervisor_message("Conflict", report.render())
        )

    def notify_program_timeout(self, owner: str) -> None:
        seconds = self.config.sandbox.timeout_s
        text = supervisor_message(
            "ExecError",
            f"your program was killed after {seconds:g}s without finishing; "
            "check it for an endless loop",
        )
        self.events.emit(owner, "sandbox_timeout", {"timeout_s": seconds})
        try:
            self.send(SUPERVISOR, owner, text)
        except RoutingError as exp:
            logger.info("%s", exp)

    # Agents.

    def spawn_agent(
        self, name: str, prompt: str, *, parent: Optional[str] = None
    ) -> Agent:
        """Register an agent, create its checklist and start it.

        Raises:
            :class:`~megaagent.error.SpawnRefusedError`: Refused by the directory.
        """
        agent = self.directory.spawn(name, prompt, parent=parent)
        self._announce(agent)
        self.supervisor.create_checklist(agent.name)
        self.scheduler.add(agent)
        logger.debug("spawned %r", agent)
        return agent

    def replace_agent(self, old: Agent) -> Agent:
        """Retire ``old`` in favour of a clone.

        The clone inherits the checklist content and every message still
        queued for ``old``.
        """
        new = self.directory.replace(old, self.directory.replacement_name(old.name))
        self._announce(new, replaces=old.name)
        content, _ = self.workspace.read(checklist_path(old.name))
        self.supervisor.create_checklist(new.name, content)
        self.directory.queue(old.name).drain_into(self.directory.queue(new.name))
        self._release(old)
        old.wake.set()
        self.scheduler.add(new)
        logger.info("%s replaced by %s", old.name, new.name)
        return new

    def finish_agent(self, agent: Agent) -> None:
        """Mark ``agent`` finished after an accepted TERMINATE."""
        agent.finished = True
        self._release(agent)

    def _release(self, agent: Agent) -> None:
        self.workspace.clear_tickets(agent.name)
        self.tools.forget(agent.name)
        self.sandbox.stop(agent.name)

    def _announce(self, agent: Agent, **extra) -> None:
        detail = {
            "name": agent.name,
            "parent": agent.parent,
            "role": agent.role.value,
            "level": agent.level,
            "group": agent.group_id,
        }
        detail.update(extra)
        self.events.emit(agent.name, "spawn", detail)

    def transition(self, agent: Agent, state: AgentState) -> None:
        agent.transition(state, self.events)

    # Stillness.

    @contextmanager
    def busy(self) -> Iterator[None]:
        """Mark a cycle in progress; the system is not still meanwhile."""
        with self._activity:
            self._busy += 1
        try:
            yield
        finally:
            with self._activity:
                self._busy -= 1
                self._activity.notify_all()

    def is_still(self) -> bool:
        """No cycle running and every queue empty."""
        with self._activity:
            if self._busy:
                return False
        return self.directory.queues_empty()

    def notify(self) -> None:
        with self._activity:
            self._activity.notify_all()

    def wait_for_activity(self, timeout: float) -> None:
        with self._activity:
            self._activity.wait(timeout)

    def abort(self, error: MegaAgentError) -> None:
        """Record the first fatal error of the run."""
        with self._activity:
            if self.failure is None:
                self.failure = error
                logger.error("run aborted: %s", error)
            self._activity.notify_all()

    # Review bookkeeping.

    def mark_cycle(self, agent: Agent) -> None:
        """Flag ``agent`` and its ancestors for review."""
        with self._activity:
            self._dirty.add(agent.name)
            for ancestor in self.directory.ancestors(agent.name):
                self._dirty.add(ancestor.name)

    def is_dirty(self, name: str) -> bool:
        with self._activity:
            return name in self._dirty

    def clear_dirty(self, name: str) -> None:
        with self._activity:
            self._dirty.discard(name)

    def forward_review(self, admin: Agent, outputs: str) -> None:
        """Hand accepted group outputs to the parent's next review."""
        if admin.parent is None:
            return
        parent = self.directory.resolve(admin.parent)
        with self._activity:
            self._review_inputs.setdefault(parent.name, []).append(
                f"Accepted work of {admin.name}'s group:\n{outputs}"
            )

    def review_inputs(self, name: str) -> List[str]:
        with self._activity:
            return list(self._review_inputs.get(name, ()))

    def group_outputs(self, admin: Agent) -> str:
        """Checklists, authored files and forwarded reviews of a subtree."""
        lines = []
        for agent in [admin] + self.directory.subtree(admin.name):
            checklist = self.supervisor.checklist(agent.name)
            done = len(checklist.items) - len(checklist.open_items())
            files = ", ".join(self.supervisor.authored(agent.name)) or "none"
            lines.append(
                f"- {agent.name} ({agent.role.value}): {checklist_path(agent.name)} "
                f"{done}/{len(checklist.items)} done; files: {files}"
            )
        lines.extend(self.review_inputs(admin.name))
        return "\n".join(lines)

    def close(self) -> None:
        self.sandbox.shutdown()
        self.memory.close()
        self.workspace.close()
        self.events.close()
