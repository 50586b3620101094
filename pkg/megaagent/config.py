"""Runtime configuration.

Every setting has a documented default. :meth:`Config.profile_defaults` returns the
defaults of a profile (``scripted`` for desk runs, ``live`` for real models),
:meth:`Config.from_file` reads a JSON configuration file on top of a profile.
The ``MEGA_API_KEY`` environment variable overrides the file's API key.
"""
import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple

import httpx

API_KEY_ENV = "MEGA_API_KEY"

PROFILES = ("scripted", "live")


class Timeouts:
    """HTTP timeout configuration.

    Args:
        default: Timeout (in seconds) on all operations listed below.
            :data:`None` means "infinite timeout".
        connect: Timeout to establish a connection. Falls back to ``default``.
        read: Timeout between consecutive reads. Falls back to ``default``.
        write: Timeout between consecutive writes. Falls back to ``default``.
    Usage:
        >>> # 60s timeout on all operations.
        >>> Timeouts(default=60.0)
        >>> # 10s timeout on connect. 120s timeout elsewhere.
        >>> Timeouts(default=120.0, connect=10.0)
    """

    def __init__(
        self,
        *,
        default: Optional[float] = 60.0,
        connect: Optional[float] = None,
        read: Optional[float] = None,
        write: Optional[float] = None,
    ):
        self.connect = connect if connect is not None else default
        self.read = read if read is not None else default
        self.write = write if write is not None else default

    def _as_httpx_timeouts(self) -> httpx.Timeout:
        return httpx.Timeout(
            connect=self.connect,
            read=self.read,
            write=self.write,
            # Timeout (in seconds) on acquiring connection from pool.
            pool=5.0,
        )


class Limits:
    """Connection pool limits of HTTP backends.

    Args:
        max_connections: The maximum number of concurrent connections.
            Agents call the backend in parallel, so keep it at least
            as large as the expected number of busy agents.
        max_keepalive_connections: Keep-alive connections kept in the pool.
        keepalive_expiry: Idle time (in seconds) before closing a keep-alive
            connection.
    """

    def __init__(
        self,
        *,
        max_connections: Optional[int] = 100,
        max_keepalive_connections: Optional[int] = 20,
        keepalive_expiry: Optional[float] = 5.0,
    ):
        self.max_connections = max_connections
        self.max_keepalive_connections = max_keepalive_connections
        self.keepalive_expiry = keepalive_expiry

    def _as_httpx_limits(self) -> httpx.Limits:
        return httpx.Limits(
            max_connections=self.max_connections,
            max_keepalive_connections=self.max_keepalive_connections,
            keepalive_expiry=self.keepalive_expiry,
        )


_DEFAULT_TIMEOUTS = Timeouts(default=120.0, connect=10.0)
_DEFAULT_LIMITS = Limits()
_DEFAULT_RETRY_COUNT = 3


class HTTPBackendConfig:
    """Chat-completion endpoint settings.

    Args:
        endpoint: Full URL of the chat-completion route.
        model: Model name sent with every request.
        api_key: Bearer key. Empty key is allowed only for local endpoints.
        embedding_endpoint: Optional embedding route for the live memory store.
        embedding_model: Model name of the embedding route.
        ssl_verify: Enable SSL certificate verification.
        timeouts: Timeout configuration.
        limits: Connection pool limits.
        retry: Attempts on transport errors before giving up.
        backoff_base: First retry delay in seconds, doubled on each attempt.
    """

    def __init__(
        self,
        *,
        endpoint: str = "https://api.openai.com/v1/chat/completions",
        model: str = "gpt-4o",
        api_key: str = "",
        embedding_endpoint: Optional[str] = None,
        embedding_model: str = "text-embedding-3-small",
        ssl_verify: bool = True,
        timeouts: Timeouts = _DEFAULT_TIMEOUTS,
        limits: Limits = _DEFAULT_LIMITS,
        retry: int = _DEFAULT_RETRY_COUNT,
        backoff_base: float = 0.5,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.embedding_endpoint = embedding_endpoint
        self.embedding_model = embedding_model
        self.ssl_verify = ssl_verify
        self.timeouts = timeouts
        self.limits = limits
        self.retry = retry if retry > 0 else 1
        self.backoff_base = backoff_base


class RuntimeConfig:
    """Agent scheduling bounds.

    Args:
        poll_interval: Idle wait (in seconds) between queue checks.
            Idle agents cost no model calls.
        max_function_call_iterations: Model calls allowed in one Processing cycle.
        max_agents: Upper bound of spawned agents, the Boss included.
        max_hierarchy_depth: Deepest level an agent may be spawned at.
        deadlock_timeout: Seconds without any event, while not quiescent,
            before the orchestrator intervenes.
        serial: Run one agent cycle at a time.
    Raises:
        :class:`ValueError`: A bound is not positive.
    """

    def __init__(
        self,
        *,
        poll_interval: float = 0.05,
        max_function_call_iterations: int = 10,
        max_agents: int = 1024,
        max_hierarchy_depth: int = 6,
        deadlock_timeout: float = 30.0,
        serial: bool = False,
    ):
        _require_positive(
            poll_interval=poll_interval,
            max_function_call_iterations=max_function_call_iterations,
            max_agents=max_agents,
            max_hierarchy_depth=max_hierarchy_depth,
            deadlock_timeout=deadlock_timeout,
        )
        self.poll_interval = poll_interval
        self.max_function_call_iterations = max_function_call_iterations
        self.max_agents = max_agents
        self.max_hierarchy_depth = max_hierarchy_depth
        self.deadlock_timeout = deadlock_timeout
        self.serial = serial


class SandboxPolicy:
    """Program execution policy of the ``exec_python_file`` tool.

    Args:
        timeout_s: Wall-clock lifetime of one program.
        input_wait_s: Silence after which a live program is considered
            to wait for ``input``.
        allowed_extensions: File extensions agents may write.
        interpreter_path: Program used to run files.
            Defaults to the running interpreter.
        confine: Install audit hooks in the program that refuse writes
            outside its checkout, reads outside the checkout and the
            interpreter installation, and process spawning. The hooks act
            at the Python level only; native extensions can bypass them.
    """

    def __init__(
        self,
        *,
        timeout_s: float = 30.0,
        input_wait_s: float = 1.0,
        allowed_extensions: Iterable[str] = (".txt", ".py"),
        interpreter_path: Optional[str] = None,
        confine: bool = True,
    ):
        _require_positive(timeout_s=timeout_s, input_wait_s=input_wait_s)
        self.timeout_s = timeout_s
        self.input_wait_s = input_wait_s
        self.allowed_extensions: Tuple[str, ...] = tuple(
            ext.lower() for ext in allowed_extensions
        )
        self.interpreter_path = interpreter_path or sys.executable
        self.confine = bool(confine)


class RetrievalConfig:
    """Memory retrieval shape.

    Args:
        n_relevant: Most similar entries returned first.
        k_latest: Latest entries appended after them.
    Raises:
        :class:`ValueError`: Either count is below 1.
    """

    def __init__(self, *, n_relevant: int = 1, k_latest: int = 6):
        _require_positive(n_relevant=n_relevant, k_latest=k_latest)
        self.n_relevant = n_relevant
        self.k_latest = k_latest


_DEFAULT_REFUSAL_PATTERNS = ("Sorry, I can't help",)


class SupervisorConfig:
    """Monitoring thresholds.

    Args:
        retry_budget: Retry prompts per (agent, failure kind) before escalation.
        repetition_threshold: Identical consecutive actions flagged as repetition.
        repetition_window: Cycles of history inspected for repetition.
        refusal_patterns: Case-insensitive substrings marking a refusal.
    """

    def __init__(
        self,
        *,
        retry_budget: int = 3,
        repetition_threshold: int = 3,
        repetition_window: int = 8,
        refusal_patterns: Iterable[str] = _DEFAULT_REFUSAL_PATTERNS,
    ):
        _require_positive(
            retry_budget=retry_budget,
            repetition_threshold=repetition_threshold,
            repetition_window=repetition_window,
        )
        self.retry_budget = retry_budget
        self.repetition_threshold = repetition_threshold
        self.repetition_window = repetition_window
        self.refusal_patterns = tuple(refusal_patterns)


class Config:
    """Complete run configuration.

    Args:
        profile: ``scripted`` or ``live``; selects defaults,
            see :meth:`profile_defaults`.
        runtime: Scheduling bounds.
        sandbox: Program execution policy.
        retrieval: Memory retrieval shape.
        supervisor: Monitoring thresholds.
        http: HTTP backend settings, used by the ``http`` backend only.
        temperature: Sampling temperature in [0, 1].
        boss_name: Name of the root agent.
    """

    def __init__(
        self,
        *,
        profile: str = "scripted",
        runtime: Optional[RuntimeConfig] = None,
        sandbox: Optional[SandboxPolicy] = None,
        retrieval: Optional[RetrievalConfig] = None,
        supervisor: Optional[SupervisorConfig] = None,
        http: Optional[HTTPBackendConfig] = None,
        temperature: float = 0.0,
        boss_name: str = "Boss",
    ):
        if profile not in PROFILES:
            raise ValueError(f"unknown profile {profile!r}, expected one of {PROFILES}")
        if not 0.0 <= temperature <= 1.0:
            raise ValueError("temperature must be within [0, 1]")
        if not boss_name or any(ch.isspace() for ch in boss_name):
            raise ValueError("boss_name must be a non-empty word")
        self.profile = profile
        self.runtime = runtime or RuntimeConfig()
        self.sandbox = sandbox or SandboxPolicy()
        self.retrieval = retrieval or RetrievalConfig()
        self.supervisor = supervisor or SupervisorConfig()
        self.http = http or HTTPBackendConfig()
        self.temperature = temperature
        self.boss_name = boss_name

    @classmethod
    def profile_defaults(cls, profile: str) -> "Config":
        """Defaults of a profile.

        ``scripted`` polls every 50 ms and suspects a deadlock after 30 s;
        ``live`` polls every second and waits 300 s.
        """
        if profile == "live":
            runtime = RuntimeConfig(poll_interval=1.0, deadlock_timeout=300.0)
            return cls(profile=profile, runtime=runtime)
        return cls(profile=profile)

    @classmethod
    def from_dict(
        cls,
        data: Mapping[str, Any],
        *,
        profile: Optional[str] = None,
        env: Optional[Mapping[str, str]] = None,
    ) -> "Config":
        """Build configuration from a parsed JSON document.

        Unknown sections are rejected so typos don't go unnoticed.

        Args:
            data: Parsed configuration document.
            profile: Profile overriding the document's ``profile`` key.
            env: Environment; ``MEGA_API_KEY`` there wins over ``http.api_key``.
        Raises:
            :class:`ValueError`: Unknown keys or invalid values.
        """
        known = {
            "profile",
            "runtime",
            "sandbox",
            "retrieval",
            "supervisor",
            "http",
            "temperature",
            "boss_name",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")

        chosen = profile or data.get("profile", "scripted")
        base = cls.profile_defaults(chosen)

        runtime_data = _merge(vars(base.runtime), data.get("runtime"))
        http_data: Dict[str, Any] = dict(data.get("http") or {})
        if "timeouts" in http_data:
            http_data["timeouts"] = _section(
                "http.timeouts", Timeouts, http_data["timeouts"]
            )
        if "limits" in http_data:
            http_data["limits"] = _section("http.limits", Limits, http_data["limits"])
        environ = os.environ if env is None else env
        if environ.get(API_KEY_ENV):
            http_data["api_key"] = environ[API_KEY_ENV]

        return cls(
            profile=chosen,
            runtime=_section("runtime", RuntimeConfig, runtime_data),
            sandbox=_section("sandbox", SandboxPolicy, data.get("sandbox")),
            retrieval=_section("retrieval", RetrievalConfig, data.get("retrieval")),
            supervisor=_section("supervisor", SupervisorConfig, data.get("supervisor")),
            http=_section("http", HTTPBackendConfig, http_data),
            temperature=float(data.get("temperature", base.temperature)),
            boss_name=data.get("boss_name", base.boss_name),
        )

    @classmethod
    def from_file(
        cls,
        path: Path,
        *,
        profile: Optional[str] = None,
        env: Optional[Mapping[str, str]] = None,
    ) -> "Config":
        """Read a JSON configuration file. See :meth:`from_dict`."""
        with open(path, encoding="utf-8") as fp:
            data = json.load(fp)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: configuration must be a JSON object")
        return cls.from_dict(data, profile=profile, env=env)


def _section(name: str, factory, values: Optional[Mapping[str, Any]]):
    try:
        return factory(**(values or {}))
    except TypeError as exp:
        raise ValueError(f"{name}: {exp}") from None


def _merge(defaults: Dict[str, Any], override: Optional[Mapping[str, Any]]):
    merged = dict(defaults)
    merged.update(override or {})
    return merged


def _require_positive(**values) -> None:
    for name, value in values.items():
        if value <= 0:
            raise ValueError(f"{name} must be positive, got {value}")
