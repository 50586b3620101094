"""Executes parsed function calls.

Tool failures never raise: each invocation yields exactly one
:class:`ToolObservation` and one ``tool`` event.
"""
import logging
import threading
from pathlib import PurePosixPath
from typing import TYPE_CHECKING, Callable, Dict, Tuple

from ..error import (
    SpawnRefusedError,
    ToolErrorCodes,
    WorkspaceError,
    WorkspaceErrorCodes,
)
from ..supervisor.checklist import checklist_owner
from ..workspace import ConflictReport, normalize_path
from . import schemas
from .observation import ToolFailure, ToolObservation
from .parser import FunctionCall, ParseWarning

if TYPE_CHECKING:
    from ..runtime.agent import Agent
    from ..runtime.context import RuntimeContext

logger = logging.getLogger(__name__)

_Handler = Callable[["Agent", Dict[str, str]], ToolObservation]

_WORKSPACE_CODES = {
    WorkspaceErrorCodes.InvalidPath: ToolErrorCodes.PathEscape,
    WorkspaceErrorCodes.NotFound: ToolErrorCodes.NotFound,
    WorkspaceErrorCodes.StaleReport: ToolErrorCodes.Conflict,
    WorkspaceErrorCodes.UnknownBaseHash: ToolErrorCodes.MissingTicket,
}


class ToolExecutor:
    """Dispatches calls to the workspace, the sandbox and the registrar.

    Write tickets: an agent may overwrite an existing file only with the
    hash it last read or wrote there. A write based on an outdated hash
    yields a conflict; the agent's next ``write_file`` on that path is
    taken as the merged content.
    """

    def __init__(self, ctx: "RuntimeContext"):
        self._ctx = ctx
        self._pending: Dict[Tuple[str, str], ConflictReport] = {}
        self._lock = threading.Lock()
        self._handlers: Dict[str, _Handler] = {
            schemas.EXEC_PYTHON_FILE: self._exec_python_file,
            schemas.READ_FILE: self._read_file,
            schemas.INPUT: self._input,
            schemas.WRITE_FILE: self._write_file,
            schemas.ADD_AGENT: self._add_agent,
            schemas.TERMINATE: self._terminate,
        }

    def execute(self, call: FunctionCall, caller: "Agent") -> ToolObservation:
        handler = self._handlers.get(call.tool_name)
        if handler is None:
            obs = ToolObservation.failed(
                call.tool_name, ToolErrorCodes.UnknownTool, call.tool_name
            )
        else:
            try:
                obs = handler(caller, call.arguments)
            except ToolFailure as exp:
                obs = ToolObservation.failed(call.tool_name, exp.code, exp.detail)
            except KeyError as exp:
                obs = ToolObservation.failed(
                    call.tool_name, ToolErrorCodes.InvalidArguments, f"missing {exp}"
                )
            except UnicodeError as exp:
                obs = ToolObservation.failed(
                    call.tool_name, ToolErrorCodes.InvalidArguments, str(exp)
                )
            except WorkspaceError as exp:
                logger.warning("%s: %s failed: %s", caller.name, call.tool_name, exp)
                obs = ToolObservation.failed(
                    call.tool_name, _WORKSPACE_CODES.get(exp.code), str(exp)
                )

        detail = {
            "tool": call.tool_name,
            "success": obs.success,
            "error": obs.error_code.value if obs.error_code is not None else None,
        }
        target = call.arguments.get("filename") or call.arguments.get("name")
        if target:
            detail["target"] = target
        if obs.exit_code is not None:
            detail["exit_code"] = obs.exit_code
        if obs.running:
            detail["running"] = True
        self._ctx.events.emit(caller.name, "tool", detail)
        return obs

    @staticmethod
    def warning_observation(warning: ParseWarning) -> ToolObservation:
        """Observation telling the model a call block was skipped."""
        return ToolObservation.failed(
            "parse",
            warning.code,
            f"call block {warning.block} skipped: {warning.reason}",
        )

    def pending_conflict(self, caller: str, path: str):
        with self._lock:
            return self._pending.get((caller, path))

    def forget(self, caller: str) -> None:
        """Drop pending conflicts of ``caller``."""
        with self._lock:
            for key in [key for key in self._pending if key[0] == caller]:
                del self._pending[key]

    def _path(self, filename: str) -> str:
        try:
            return normalize_path(filename)
        except WorkspaceError:
            raise ToolFailure(ToolErrorCodes.PathEscape, filename) from None

    def _read_file(self, caller: "Agent", args: Dict[str, str]) -> ToolObservation:
        path = self._path(args["filename"])
        try:
            content, _ = self._ctx.workspace.read(path, caller=caller.name)
        except WorkspaceError as exp:
            raise ToolFailure(ToolErrorCodes.NotFound, path) from exp
        with self._lock:
            self._pending.pop((caller.name, path), None)
        return ToolObservation(schemas.READ_FILE, content)

    def _write_file(self, caller: "Agent", args: Dict[str, str]) -> ToolObservation:
        path = self._path(args["filename"])
        content = args["content"]
        suffix = PurePosixPath(path).suffix.lower()
        if suffix not in self._ctx.config.sandbox.allowed_extensions:
            raise ToolFailure(
                ToolErrorCodes.ForbiddenExtension,
                f"{path}: only {', '.join(self._ctx.config.sandbox.allowed_extensions)}"
                " files can be written",
            )
        owner = checklist_owner(path)
        if owner is not None and owner != caller.name:
            raise ToolFailure(
                ToolErrorCodes.Forbidden, f"{path} belongs to {owner}"
            )

        workspace = self._ctx.workspace
        with self._lock:
            pending = self._pending.pop((caller.name, path), None)
        if pending is not None:
            try:
                commit = workspace.resolve_conflict(
                    pending, content, caller=caller.name
                )
            except WorkspaceError as exp:
                if exp.code != WorkspaceErrorCodes.StaleReport:
                    raise
                return self._conflict(caller, exp.fresh_report)
            return ToolObservation(
                schemas.WRITE_FILE, f"Merged {path}, new version {commit[:12]}."
            )

        base = None
        if workspace.exists(path):
            base = workspace.ticket(caller.name, path)
            if base is None:
                raise ToolFailure(
                    ToolErrorCodes.MissingTicket,
                    f"{path} exists; read it before writing it",
                )
        result = workspace.write(path, content, base, caller=caller.name)
        if isinstance(result, ConflictReport):
            return self._conflict(caller, result)
        return ToolObservation(
            schemas.WRITE_FILE, f"Wrote {path}, version {result[:12]}."
        )

    def _conflict(self, caller: "Agent", report: ConflictReport) -> ToolObservation:
        with self._lock:
            self._pending[(caller.name, report.path)] = report
        self._ctx.notify_conflict(caller, report)
        return ToolObservation.failed(
            schemas.WRITE_FILE, ToolErrorCodes.Conflict, report.render()
        )

    def _exec_python_file(
        self, caller: "Agent", args: Dict[str, str]
    ) -> ToolObservation:
        result = self._ctx.sandbox.run(caller.name, args["filename"])
        return self._program_observation(schemas.EXEC_PYTHON_FILE, result)

    def _input(self, caller: "Agent", args: Dict[str, str]) -> ToolObservation:
        result = self._ctx.sandbox.send_input(caller.name, args["content"])
        return self._program_observation(schemas.INPUT, result)

    @staticmethod
    def _program_observation(tool: str, result) -> ToolObservation:
        if result.running:
            return ToolObservation(
                tool,
                f"{result.output}\n[program is waiting for input]".lstrip("\n"),
                running=True,
            )
        if result.exit_code == 0:
            return ToolObservation(tool, result.output, exit_code=0)
        return ToolObservation.failed(
            tool,
            None,
            f"program exited with code {result.exit_code}",
            output=result.output,
            exit_code=result.exit_code,
        )

    def _add_agent(self, caller: "Agent", args: Dict[str, str]) -> ToolObservation:
        try:
            agent = self._ctx.spawn_agent(
                args["name"], args["description"], parent=caller.name
            )
        except SpawnRefusedError as exp:
            raise ToolFailure(ToolErrorCodes.SpawnRefused, str(exp)) from None
        return ToolObservation(
            schemas.ADD_AGENT, f"Recruited {agent.name} as your subordinate."
        )

    def _terminate(self, caller: "Agent", args: Dict[str, str]) -> ToolObservation:
        if caller.terminate_requested:
            return ToolObservation(schemas.TERMINATE, "TERMINATE already requested.")
        caller.terminate_requested = True
        return ToolObservation(schemas.TERMINATE, "Terminating after this cycle.")
