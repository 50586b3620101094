import logging
import threading
from typing import TYPE_CHECKING, Dict

from .agent import Agent
from .loop import run_loop

if TYPE_CHECKING:
    from .context import RuntimeContext

logger = logging.getLogger(__name__)


class Scheduler:
    """One thread per agent.

    A thread exits when its agent is retired, or finished with an empty
    queue. A message to a finished agent revives it.
    """

    def __init__(self, ctx: "RuntimeContext"):
        self._ctx = ctx
        self._threads: Dict[str, threading.Thread] = {}
        self._lock = threading.Lock()
        self._running = False
        self.stopping = threading.Event()

    @property
    def running(self) -> bool:
        return self._running

    def start(self) -> None:
        with self._lock:
            self._running = True
            for agent in self._ctx.directory.agents(active_only=True):
                if not agent.finished:
                    self._launch(agent)

    def add(self, agent: Agent) -> None:
        with self._lock:
            if self._running and not self.stopping.is_set():
                self._launch(agent)

    def revive(self, agent: Agent) -> None:
        with self._lock:
            if agent.finished:
                agent.finished = False
                logger.debug("%s revived", agent.name)
            if (
                self._running
                and not self.stopping.is_set()
                and not agent.retired
                and agent.name not in self._threads
            ):
                self._launch(agent)

    def try_exit(self, agent: Agent) -> bool:
        """Unregister the thread of ``agent`` if it has nothing left to do."""
        with self._lock:
            if agent.retired or (
                agent.finished and self._ctx.directory.queue(agent.name).is_empty()
            ):
                self._threads.pop(agent.name, None)
                return True
            return False

    def live_threads(self) -> int:
        with self._lock:
            return sum(1 for thread in self._threads.values() if thread.is_alive())

    def shutdown(self, timeout: float = 5.0) -> None:
        self.stopping.set()
        with self._lock:
            threads = list(self._threads.values())
            self._threads.clear()
            self._running = False
        for agent in self._ctx.directory.agents():
            agent.wake.set()
        for thread in threads:
            thread.join(timeout)
            if thread.is_alive():
                logger.warning("thread %s did not stop", thread.name)

    def _launch(self, agent: Agent) -> None:
        thread = threading.Thread(
            target=run_loop,
            args=(agent, self._ctx),
            name=f"agent-{agent.name}",
            daemon=True,
        )
        self._threads[agent.name] = thread
        thread.start()
