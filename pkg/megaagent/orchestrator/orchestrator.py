"""End-to-end run of a meta-prompt.

Planning: the Boss decomposes the meta-prompt into employee specs, which
become Admin agents; the beginner (or every admin) gets a kickoff message.
TaskSolving: every agent runs its own thread. Whenever the system is still,
the deepest group whose members all finished their checklists is reviewed
by its admin, the Boss last. The run is quiescent when it is still, every
checklist is complete and every group review accepted. Merging: the
workspace HEADs become the deliverable.
"""
import logging
import time
from pathlib import Path
from typing import Optional, Union

from ..config import Config
from ..error import (
    MegaAgentError,
    OrchestrationError,
    OrchestrationErrorCodes,
    SpawnRefusedError,
)
from ..gateway.backend import Backend, HTTPBackend, ScriptedBackend
from ..gateway.scenario import ScriptedScenario
from ..gateway.types import ChatRequest
from ..memory.embedding import HTTPEmbedder
from ..memory.store import MemoryStore
from ..metrics.ledger import StageLabel, StageReport
from ..runtime.agent import Agent, AgentState
from ..runtime.context import RuntimeContext
from ..runtime.events import EventLog
from ..runtime.loop import agent_step
from ..supervisor.checklist import checklist_owner, checklist_path
from ..supervisor.failures import SUPERVISOR
from ..workspace import Workspace
from .deliverable import COMPLETE, PARTIAL, Deliverable, DeliverableFile
from .specs import MetaPrompt, parse_employee_specs

logger = logging.getLogger(__name__)

ORCHESTRATOR = "orchestrator"
LIVE_EMBEDDING_DIMENSION = 1536

_DECOMPOSE = """\
Split the task in your instructions among employees. Write one block per
employee:
<employee name="Name">Who the employee is and exactly what it must deliver,
including the files it writes.</employee>
Then name the employee who starts the work: <beginner>Name</beginner>"""

_NUDGE = """\
Your answer contained no employee. Reply with at least one
<employee name="Name">...</employee> block."""

_KICKOFF = """\
Start working on your task. Write your plan into your checklist {checklist},
mark finished items with [done], talk to colleagues when you need them and
call TERMINATE once every item is done."""

_SUMMARY = """\
All groups finished. Summarize the final deliverable for the user. Files:
{files}"""


class Orchestrator:
    """Runs one meta-prompt.

    Args:
        config: Run configuration.
        backend: Model backend.
        run_dir: Directory receiving ``log.jsonl``, ``workspace/``,
            ``memory/``, ``deliverable.json``, ``report.json`` and
            ``report.txt``. :data:`None` keeps everything in memory.
        log_path: Event log file, instead of ``log.jsonl`` in ``run_dir``.

    Usage:
        >>> from megaagent import Config, Orchestrator
        >>> from megaagent.gateway import ScriptedBackend, ScriptedScenario
        >>> scenario = ScriptedScenario.from_file("gobang.json")
        >>> orchestrator = Orchestrator(Config(), ScriptedBackend(scenario))
        >>> deliverable = orchestrator.run("Write a Gobang game in Python.")
        >>> deliverable.paths()
    """

    def __init__(
        self,
        config: Config,
        backend: Backend,
        *,
        run_dir: Optional[Union[str, Path]] = None,
        log_path: Optional[Union[str, Path]] = None,
    ):
        self._config = config
        self._run_dir = Path(run_dir) if run_dir is not None else None
        if log_path is None and self._run_dir is not None:
            log_path = self._run_dir / "log.jsonl"
        if log_path is not None:
            Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        events = EventLog(log_path)
        if self._run_dir is not None:
            self._run_dir.mkdir(parents=True, exist_ok=True)
            workspace = Workspace(self._run_dir / "workspace", events=events)
            memory = MemoryStore(self._run_dir / "memory", embedder=_embedder(config))
        else:
            workspace = Workspace(events=events)
            memory = MemoryStore(embedder=_embedder(config))
        self.ctx = RuntimeContext(
            config, backend, workspace=workspace, memory=memory, events=events
        )

    def run(self, meta: Union[str, MetaPrompt]) -> Deliverable:
        """Bootstrap, solve and merge.

        An aborted run still returns a ``partial`` deliverable; the
        diagnostic names the cause.

        Raises:
            :class:`ValueError`: Empty meta-prompt.
        """
        if not isinstance(meta, MetaPrompt):
            meta = MetaPrompt(meta)
        ctx = self.ctx
        ctx.events.emit(ORCHESTRATOR, "run", {"action": "start"})
        status, diagnostic = COMPLETE, None
        try:
            self._open_stage(StageLabel.Planning)
            boss = self.bootstrap(meta)
            if not boss.finished:
                self._open_stage(StageLabel.TaskSolving)
                ctx.scheduler.start()
                self._solve()
        except MegaAgentError as exp:
            ctx.abort(exp)
        finally:
            ctx.scheduler.shutdown()
            ctx.sandbox.shutdown()
        if ctx.failure is not None:
            status, diagnostic = PARTIAL, str(ctx.failure)

        self._open_stage(StageLabel.Merging)
        deliverable = self.aggregate(status=status, diagnostic=diagnostic)
        ctx.events.emit(ORCHESTRATOR, "run", {"action": "end", "status": status})
        if self._run_dir is not None:
            self._write_artifacts(deliverable)
        ctx.close()
        logger.info("run %s with %d files", status, len(deliverable.files))
        return deliverable

    def bootstrap(self, meta: MetaPrompt) -> Agent:
        """Create the Boss, spawn its admins and send the kickoff.

        Raises:
            :class:`~megaagent.error.OrchestrationError`: No employee spec,
                even after a nudge
                (:attr:`OrchestrationErrorCodes.EmptyDecomposition`).
        """
        ctx = self.ctx
        boss = ctx.spawn_agent(self._config.boss_name, meta.text)
        ctx.send(SUPERVISOR, boss.name, _DECOMPOSE)
        decomposition = None
        for attempt in range(2):
            if attempt:
                ctx.send(SUPERVISOR, boss.name, _NUDGE)
            cycle = agent_step(boss, ctx)
            if boss.finished:
                logger.info("%s terminated the run during planning", boss.name)
                return boss
            if cycle is None:
                continue
            decomposition = parse_employee_specs("\n".join(cycle.texts()))
            for tag in decomposition.malformed:
                logger.warning("decomposition: offset %d: %s", tag.offset, tag.reason)
            if decomposition.specs:
                break
        if decomposition is None or not decomposition.specs:
            raise OrchestrationError(
                OrchestrationErrorCodes.EmptyDecomposition,
                f"{boss.name} named no employee",
            )

        admins = []
        for spec in decomposition.specs:
            try:
                admin = ctx.spawn_agent(spec.name, spec.prompt_body, parent=boss.name)
                admins.append(admin)
            except SpawnRefusedError as exp:
                logger.warning("employee %s skipped: %s", spec.name, exp)
        starters = [a for a in admins if a.name == decomposition.beginner] or admins
        for admin in starters:
            ctx.send(
                boss.name,
                admin.name,
                _KICKOFF.format(checklist=checklist_path(admin.name)),
            )
        return boss

    def _solve(self) -> None:
        ctx = self.ctx
        runtime = self._config.runtime
        sweep_mark: Optional[float] = None
        while ctx.failure is None:
            ctx.wait_for_activity(runtime.poll_interval)
            if ctx.failure is not None:
                return
            if ctx.is_still():
                admin = self._next_review()
                if admin is not None:
                    self._review(admin)
                    continue
                if self._quiescent():
                    return
            stalled = time.monotonic() - ctx.events.last_activity
            if stalled < runtime.deadlock_timeout:
                continue
            if sweep_mark != ctx.events.last_activity and ctx.supervisor.sweep():
                sweep_mark = ctx.events.last_activity
                continue
            raise OrchestrationError(
                OrchestrationErrorCodes.DeadlockSuspected,
                f"no progress for {runtime.deadlock_timeout:g}s",
            )

    def _next_review(self) -> Optional[Agent]:
        ctx = self.ctx
        eligible = []
        for admin in ctx.directory.agents(active_only=True):
            if not admin.children or not ctx.is_dirty(admin.name):
                continue
            members = ctx.directory.subtree(admin.name)
            if any(m.children and ctx.is_dirty(m.name) for m in members):
                continue
            if all(
                ctx.supervisor.checklist(a.name).is_complete for a in [admin] + members
            ):
                eligible.append(admin)
        if not eligible:
            return None
        return max(eligible, key=lambda agent: agent.level)

    def _review(self, admin: Agent) -> None:
        ctx = self.ctx
        ctx.clear_dirty(admin.name)
        with ctx.busy(), admin.cycle_lock:
            ctx.transition(admin, AgentState.Processing)
            try:
                outcome = ctx.supervisor.validate_result(
                    admin, ctx.group_outputs(admin), admin.system_prompt
                )
            finally:
                ctx.transition(admin, AgentState.Response)
                if ctx.directory.queue(admin.name).is_empty():
                    ctx.transition(admin, AgentState.Idle)
        logger.info("review %d of %s: %s", outcome.round, admin.name, outcome.verdict)

    def _quiescent(self) -> bool:
        ctx = self.ctx
        for agent in ctx.directory.agents(active_only=True):
            if agent.children and ctx.is_dirty(agent.name):
                return False
            if not ctx.supervisor.checklist(agent.name).is_complete:
                return False
        return ctx.is_still()

    def aggregate(
        self, *, status: str = COMPLETE, diagnostic: Optional[str] = None
    ) -> Deliverable:
        """Collect the HEAD files into the deliverable and close the ledger.

        The summary is the sorted path list, or a Boss model call in the
        ``live`` profile.
        """
        ctx = self.ctx
        heads = ctx.workspace.heads()
        files = [
            DeliverableFile(path, record.head)
            for path, record in sorted(heads.items())
            if checklist_owner(path) is None
        ]
        summary = "\n".join(f.path for f in files)
        boss = ctx.directory.boss
        if self._config.profile == "live" and status == COMPLETE and boss is not None:
            try:
                summary = self._summarize(boss, summary)
            except MegaAgentError as exp:
                logger.warning("summary call failed: %s", exp)

        at = ctx.ledger.close_stage()
        if at is not None:
            ctx.events.emit(
                ORCHESTRATOR,
                "stage",
                {"stage": StageLabel.Merging.value, "action": "close", "at": at},
            )
        report: StageReport = ctx.ledger.report(
            agent_count=len(ctx.directory.agents(active_only=True))
        )
        return Deliverable(files, summary, report, status=status, diagnostic=diagnostic)

    def _summarize(self, boss: Agent, paths: str) -> str:
        ctx = self.ctx
        request = ChatRequest(
            boss.name,
            boss.system_prompt,
            [(SUPERVISOR, _SUMMARY.format(files=paths or "none"))],
            temperature=self._config.temperature,
        )
        with boss.cycle_lock:
            ctx.transition(boss, AgentState.Processing)
            try:
                response = ctx.gateway.complete(request)
            finally:
                ctx.events.emit(
                    boss.name,
                    "verdict",
                    {"ok": True, "kind": None, "cause": None, "detail": None},
                )
                ctx.transition(boss, AgentState.Response)
                ctx.transition(boss, AgentState.Idle)
        return response.text.strip() or paths

    def _open_stage(self, stage: StageLabel) -> None:
        ledger = self.ctx.ledger
        previous = ledger.current_stage
        at = ledger.open_stage(stage)
        if previous is not None:
            self.ctx.events.emit(
                ORCHESTRATOR,
                "stage",
                {"stage": previous.value, "action": "close", "at": at},
            )
        self.ctx.events.emit(
            ORCHESTRATOR, "stage", {"stage": stage.value, "action": "open", "at": at}
        )

    def _write_artifacts(self, deliverable: Deliverable) -> None:
        assert self._run_dir is not None
        deliverable.write(self._run_dir / "deliverable.json")
        (self._run_dir / "report.json").write_text(
            str(deliverable.ledger) + "\n", encoding="utf-8"
        )
        (self._run_dir / "report.txt").write_text(
            deliverable.ledger.table(), encoding="utf-8"
        )


def build_backend(
    config: Config, scenario: Optional[ScriptedScenario] = None
) -> Backend:
    """Backend of the configured kind.

    Raises:
        :class:`ValueError`: Scripted backend without a scenario.
    """
    if scenario is not None:
        return ScriptedBackend(scenario)
    if config.profile == "live":
        return HTTPBackend(config.http)
    raise ValueError("the scripted backend needs a scenario")


def run(
    meta_prompt: Union[str, MetaPrompt],
    config: Optional[Config] = None,
    backend: Optional[Backend] = None,
    *,
    run_dir: Optional[Union[str, Path]] = None,
    log_path: Optional[Union[str, Path]] = None,
) -> Deliverable:
    """Run ``meta_prompt`` to a deliverable. See :class:`Orchestrator`."""
    config = config or Config()
    backend = backend or build_backend(config)
    orchestrator = Orchestrator(config, backend, run_dir=run_dir, log_path=log_path)
    return orchestrator.run(meta_prompt)


def _embedder(config: Config):
    if config.profile == "live" and config.http.embedding_endpoint:
        return HTTPEmbedder(config.http, dimension=LIVE_EMBEDDING_DIMENSION)
    return None
