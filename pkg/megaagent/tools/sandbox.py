"""Program execution for the ``exec_python_file`` and ``input`` tools.

Each run happens in a fresh temporary checkout of the workspace HEAD files,
so a program only sees workspace content and its writes never reach the
workspace. Output (stdout and stderr merged) is collected by a reader thread.

A run returns when the program exits, or when it has been silent for
``input_wait_s`` while alive; the program then stays the caller's live
program and ``input`` feeds its standard input. Whatever happens, a watchdog
kills a program once its lifetime exceeds ``timeout_s``. A program killed
while nobody waits on it is reported to the ``on_timeout`` callback and to
the next ``input`` of its owner.

With :attr:`SandboxPolicy.confine` set, programs start through
:mod:`megaagent.tools.confine`, which keeps them inside their checkout.
"""
import logging
import os
import subprocess
import tempfile
import threading
import time
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional

from ..config import SandboxPolicy
from ..error import ToolErrorCodes, WorkspaceError
from ..workspace import Workspace, normalize_path
from .observation import ToolFailure

logger = logging.getLogger(__name__)

_TICK = 0.01

CONFINE_SCRIPT = str(Path(__file__).with_name("confine.py"))


class SandboxResult(NamedTuple):
    output: str
    exit_code: Optional[int]
    running: bool


class _Program:
    def __init__(
        self,
        owner: str,
        proc: subprocess.Popen,
        workdir: tempfile.TemporaryDirectory,
        lifetime: float,
        on_expire: Callable[["_Program"], None],
    ):
        self.owner = owner
        self.proc = proc
        self.workdir = workdir
        self.started = time.monotonic()
        self.last_output = self.started
        self.timed_out = False
        self.collecting = False
        self._chunks: List[str] = []
        self._lock = threading.Lock()
        self._on_expire = on_expire
        self.reader = threading.Thread(
            target=self._read, name=f"sandbox-{owner}", daemon=True
        )
        self.reader.start()
        self.watchdog = threading.Timer(lifetime, self._expire)
        self.watchdog.daemon = True
        self.watchdog.start()

    def _read(self) -> None:
        assert self.proc.stdout is not None
        fd = self.proc.stdout.fileno()
        while True:
            try:
                chunk = os.read(fd, 4096)
            except OSError:
                break
            if not chunk:
                break
            with self._lock:
                self._chunks.append(chunk.decode("utf-8", errors="replace"))
                self.last_output = time.monotonic()

    def _expire(self) -> None:
        with self._lock:
            if not self.alive():
                return
            self.timed_out = True
            unattended = not self.collecting
            self.proc.kill()
        if unattended:
            self._on_expire(self)

    def begin_collect(self) -> None:
        with self._lock:
            self.collecting = True

    def end_collect(self) -> None:
        with self._lock:
            self.collecting = False

    def take_output(self) -> str:
        with self._lock:
            out = "".join(self._chunks)
            self._chunks.clear()
            return out

    def silent_for(self) -> float:
        with self._lock:
            return time.monotonic() - self.last_output

    def mark_input(self) -> None:
        with self._lock:
            self.last_output = time.monotonic()

    def alive(self) -> bool:
        return self.proc.poll() is None

    def kill(self) -> None:
        self.watchdog.cancel()
        if self.alive():
            self.proc.kill()
        self.proc.wait()
        self.finish()

    def finish(self) -> None:
        self.watchdog.cancel()
        self.reader.join(timeout=1.0)
        for stream in (self.proc.stdin, self.proc.stdout):
            if stream is not None:
                try:
                    stream.close()
                except OSError:
                    pass
        self.workdir.cleanup()


class Sandbox:
    """Runs workspace programs; at most one live program per agent.

    Args:
        policy: Timeouts, interpreter and writable extensions.
        workspace: Source of the checked out files.
        on_timeout: Called with the owner's name when the watchdog kills a
            program between tool calls.
    """

    def __init__(
        self,
        policy: SandboxPolicy,
        workspace: Workspace,
        on_timeout: Optional[Callable[[str], None]] = None,
    ):
        self._policy = policy
        self._workspace = workspace
        self._on_timeout = on_timeout
        self._live: Dict[str, _Program] = {}
        self._lock = threading.Lock()

    @property
    def policy(self) -> SandboxPolicy:
        return self._policy

    def has_live(self, owner: str) -> bool:
        with self._lock:
            program = self._live.get(owner)
        return program is not None and program.alive()

    def timed_out(self, owner: str) -> bool:
        """Whether the watchdog killed the current program of ``owner``."""
        with self._lock:
            program = self._live.get(owner)
        return program is not None and program.timed_out

    def run(self, owner: str, filename: str) -> SandboxResult:
        """Run ``filename`` from a fresh checkout.

        Raises:
            :class:`~megaagent.tools.observation.ToolFailure`: Path escape,
                missing file, or timeout.
        """
        try:
            path = normalize_path(filename)
        except WorkspaceError:
            raise ToolFailure(ToolErrorCodes.PathEscape, filename) from None
        if not self._workspace.exists(path):
            raise ToolFailure(ToolErrorCodes.NotFound, path)

        self.stop(owner)
        workdir = tempfile.TemporaryDirectory(prefix="megaagent-")
        self._workspace.checkout(workdir.name)
        command = [self._policy.interpreter_path, path]
        if self._policy.confine:
            command.insert(1, CONFINE_SCRIPT)
        try:
            proc = subprocess.Popen(
                command,
                cwd=workdir.name,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
            )
        except OSError as exp:
            workdir.cleanup()
            raise ToolFailure(ToolErrorCodes.NotFound, f"interpreter: {exp}") from None
        program = _Program(owner, proc, workdir, self._policy.timeout_s, self._expired)
        logger.debug("%s started %s (pid %d)", owner, path, proc.pid)
        with self._lock:
            self._live[owner] = program
        return self._collect(program)

    def send_input(self, owner: str, content: str) -> SandboxResult:
        """Write a line to the live program of ``owner``.

        Raises:
            :class:`~megaagent.tools.observation.ToolFailure`: No live program,
                or timeout.
        """
        with self._lock:
            program = self._live.get(owner)
        if program is None or not program.alive():
            if program is not None:
                self._drop(program)
                program.finish()
                if program.timed_out:
                    raise self._timeout_failure(program.take_output())
            raise ToolFailure(ToolErrorCodes.NoRunningProcess, owner)
        assert program.proc.stdin is not None
        try:
            program.proc.stdin.write((content + "\n").encode("utf-8"))
            program.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            pass
        program.mark_input()
        return self._collect(program)

    def stop(self, owner: str) -> None:
        """Kill the live program of ``owner``, if any."""
        with self._lock:
            program = self._live.pop(owner, None)
        if program is not None:
            program.kill()

    def shutdown(self) -> None:
        with self._lock:
            programs = list(self._live.values())
            self._live.clear()
        for program in programs:
            program.kill()

    def _collect(self, program: _Program) -> SandboxResult:
        program.begin_collect()
        try:
            while True:
                if not program.alive():
                    program.proc.wait()
                    program.reader.join(timeout=1.0)
                    output = program.take_output()
                    self._drop(program)
                    program.finish()
                    if program.timed_out:
                        raise self._timeout_failure(output)
                    return SandboxResult(output, program.proc.returncode, False)
                if program.silent_for() >= self._policy.input_wait_s:
                    return SandboxResult(program.take_output(), None, True)
                time.sleep(_TICK)
        finally:
            program.end_collect()

    def _expired(self, program: _Program) -> None:
        logger.info(
            "%s: idle program killed after %.1fs", program.owner, self._policy.timeout_s
        )
        if self._on_timeout is not None:
            self._on_timeout(program.owner)

    def _timeout_failure(self, output: str) -> ToolFailure:
        return ToolFailure(
            ToolErrorCodes.SandboxTimeout,
            f"killed after {self._policy.timeout_s:g}s; output so far:\n{output}",
        )

    def _drop(self, program: _Program) -> None:
        with self._lock:
            if self._live.get(program.owner) is program:
                del self._live[program.owner]
