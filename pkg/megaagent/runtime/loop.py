"""The message-queue routine of an agent.

An agent idles at no model cost until its queue is non-empty, drains the
whole queue into one batch, runs an inference/tool loop over it and
dispatches what the cycle says to other agents.
"""
import logging
from typing import TYPE_CHECKING, Optional

from ..error import (
    BackendUnavailableError,
    FunctionLoopExceededError,
    MegaAgentError,
    OrchestrationError,
    RoutingError,
)
from ..gateway.types import ChatRequest
from ..tools.executor import ToolExecutor
from ..tools.schemas import registry_schemas
from .agent import Agent, AgentState
from .cycle import CycleRecord

if TYPE_CHECKING:
    from .context import RuntimeContext

logger = logging.getLogger(__name__)

MEMORY_SPEAKER = "memory"


def agent_step(agent: Agent, ctx: "RuntimeContext") -> Optional[CycleRecord]:
    """Run one Processing cycle of ``agent`` over its queued messages.

    Return:
        The cycle, or :data:`None` when the queue was empty.
    Raises:
        :class:`~megaagent.error.OrchestrationError`: A failure escalated
            past the Boss.
    """
    with ctx.busy(), agent.cycle_lock:
        queue = ctx.directory.queue(agent.name)
        batch = queue.dequeue_batch()
        if not batch:
            return None
        ctx.transition(agent, AgentState.Processing)
        ctx.events.emit(agent.name, "batch", {"seqs": [m.sequence for m in batch]})
        cycle = CycleRecord(agent.name, batch)
        try:
            _infer(agent, ctx, cycle)
        except FunctionLoopExceededError as exp:
            logger.info("%s", exp)
            cycle.loop_exceeded = True
        except BackendUnavailableError as exp:
            logger.warning("%s: backend unavailable: %s", agent.name, exp)
            queue.requeue_front(batch)
            ctx.events.emit(
                agent.name, "requeue", {"seqs": [m.sequence for m in batch]}
            )
            cycle.backend_error = exp
        ctx.transition(agent, AgentState.Response)

        try:
            _finish(agent, ctx, cycle)
        finally:
            ctx.mark_cycle(agent)
            if queue.is_empty():
                ctx.transition(agent, AgentState.Idle)
        return cycle


def _infer(agent: Agent, ctx: "RuntimeContext", cycle: CycleRecord) -> None:
    memory = ctx.memory.retrieve(agent.name, cycle.batch[-1].text, ctx.config.retrieval)
    request = ChatRequest(
        agent.name,
        agent.system_prompt,
        [(MEMORY_SPEAKER, entry.text) for entry in memory]
        + [(m.sender, m.text) for m in cycle.batch],
        tool_schemas=registry_schemas(),
        temperature=ctx.config.temperature,
    )
    bound = ctx.config.runtime.max_function_call_iterations
    for _ in range(bound):
        response = ctx.gateway.complete(request)
        agent.call_counter += 1
        cycle.responses.append(response)
        request.append("assistant", response.text)
        if not response.has_calls and not response.parse_warnings:
            return

        for warning in response.parse_warnings:
            obs = ToolExecutor.warning_observation(warning)
            request.append(f"tool:{obs.tool_name}", obs.render())
        for call in response.parsed_calls:
            obs = ctx.tools.execute(call, agent)
            cycle.observations.append((call, obs))
            request.append(f"tool:{call.tool_name}", obs.render())
        if agent.terminate_requested:
            cycle.terminate_requested = True
            return
    raise FunctionLoopExceededError(agent.name, bound)


def _finish(agent: Agent, ctx: "RuntimeContext", cycle: CycleRecord) -> None:
    supervisor = ctx.supervisor
    verdict = supervisor.verify_format(agent, cycle)
    if verdict is None:
        for talk in cycle.talks:
            try:
                message = ctx.send(agent.name, talk.recipient, talk.text)
            except RoutingError as exp:
                logger.info("%s", exp)
                continue
            ctx.events.emit(
                agent.name,
                "dispatch",
                {"recipient": message.recipient, "seq": message.sequence},
            )

    if cycle.backend_error is None:
        ctx.memory.append(agent.name, cycle.batch_text())
        said = "\n".join(text for text in cycle.texts() if text.strip())
        if said:
            ctx.memory.append(agent.name, said)

    failures = [verdict] if verdict is not None else []
    failures.extend(supervisor.detect_failures(agent, cycle))
    supervisor.settle_cycle(agent, failures)


def run_loop(agent: Agent, ctx: "RuntimeContext") -> None:
    """Thread body of ``agent``."""
    queue = ctx.directory.queue(agent.name)
    poll = ctx.config.runtime.poll_interval
    stopping = ctx.scheduler.stopping
    logger.debug("%s: loop started", agent.name)
    while not stopping.is_set():
        if agent.retired or (agent.finished and queue.is_empty()):
            if ctx.scheduler.try_exit(agent):
                logger.debug("%s: loop finished", agent.name)
                return
        if queue.is_empty():
            agent.wake.wait(poll)
            agent.wake.clear()
            continue
        try:
            if ctx.config.runtime.serial:
                with ctx.serial_lock:
                    cycle = agent_step(agent, ctx)
            else:
                cycle = agent_step(agent, ctx)
        except OrchestrationError as exp:
            ctx.abort(exp)
            return
        except Exception as exp:
            logger.exception("%s: cycle crashed", agent.name)
            ctx.abort(MegaAgentError(f"agent {agent.name} crashed", exp))
            return
        if cycle is not None and cycle.backend_error is not None:
            stopping.wait(poll)
