import threading
import time
from typing import TYPE_CHECKING, Dict, Optional

from ..error import StageClosedError
from .backend import Backend
from .types import ChatRequest, ModelResponse

if TYPE_CHECKING:
    from ..metrics.ledger import StageLabel, UsageLedger
    from ..runtime.events import EventLog


def complete(
    request: ChatRequest,
    backend: Backend,
    *,
    ledger: Optional["UsageLedger"] = None,
    stage: Optional["StageLabel"] = None,
    events: Optional["EventLog"] = None,
) -> ModelResponse:
    """Run one model call.

    The usage is recorded in ``ledger`` against ``stage`` (the ledger's
    open stage by default) and a ``complete`` event is written.

    Raises:
        :class:`~megaagent.error.BackendUnavailableError`: Backend unreachable.
        :class:`~megaagent.error.StageClosedError`: No stage to record against.
    """
    label = stage
    if ledger is not None:
        label = stage or ledger.current_stage
        if label is None:
            raise StageClosedError("no stage is open")
    started = ledger.now() if ledger is not None else 0.0
    clock = time.perf_counter()
    text, usage = backend.infer(request)
    duration = time.perf_counter() - clock
    response = ModelResponse(text, usage)

    if ledger is not None and label is not None:
        ledger.record(request.agent_name, label, usage, duration, started_at=started)
    if events is not None:
        events.emit(
            request.agent_name,
            "complete",
            {
                "stage": label.value if label is not None else None,
                "input_tokens": usage.input_tokens,
                "output_tokens": usage.output_tokens,
                "started": started,
                "duration": duration,
                "calls": len(response.parsed_calls),
            },
        )
    return response


class ModelGateway:
    """Backend bound to the run's ledger and event log.

    Counts calls per agent, which the runtime checks against
    Processing entries.
    """

    def __init__(
        self,
        backend: Backend,
        *,
        ledger: Optional["UsageLedger"] = None,
        events: Optional["EventLog"] = None,
    ):
        self.backend = backend
        self.ledger = ledger
        self.events = events
        self._calls: Dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(
        self, request: ChatRequest, *, stage: Optional["StageLabel"] = None
    ) -> ModelResponse:
        response = complete(
            request, self.backend, ledger=self.ledger, stage=stage, events=self.events
        )
        with self._lock:
            self._calls[request.agent_name] = self._calls.get(request.agent_name, 0) + 1
        return response

    def calls(self, agent: Optional[str] = None) -> int:
        """Calls made by ``agent``, or by all agents."""
        with self._lock:
            if agent is None:
                return sum(self._calls.values())
            return self._calls.get(agent, 0)

    def close(self) -> None:
        self.backend.close()
