"""Model backends.

:class:`ScriptedBackend` answers from a :class:`ScriptedScenario` and counts
tokens by whitespace. :class:`HTTPBackend` posts chat-completion requests and
takes token counts from the provider verbatim.
"""
import logging
import threading
import time
from typing import Dict, List, Optional, Tuple

import httpx

from ..config import HTTPBackendConfig
from ..error import MegaAgentError
from ..internal import HTTPConnector, JsonObject, JsonObjectView
from ..tools.schemas import ToolSchema
from .auth import BearerAuth
from .scenario import ScriptedScenario
from .types import ChatRequest, TokenUsage

logger = logging.getLogger(__name__)


def count_tokens(text: str) -> int:
    """Whitespace-delimited token count."""
    return len(text.split())


class Backend:
    """Backend handle shared by every agent of a run."""

    name = "backend"

    def infer(self, request: ChatRequest) -> Tuple[str, TokenUsage]:
        """Answer one request.

        Return:
            Response text and token usage.
        Raises:
            :class:`~megaagent.error.BackendUnavailableError`: Backend
                unreachable after bounded retries.
        """
        raise NotImplementedError

    def close(self) -> None:
        """Release backend resources."""


class ScriptedBackend(Backend):
    """Deterministic backend.

    The ``i``-th call of agent ``a`` returns ``scenario.lookup(a, i)``.
    Per-agent counters are updated under a lock, so concurrent agents
    never share or skip an index.

    Args:
        scenario: Response table.
    """

    name = "scripted"

    def __init__(self, scenario: ScriptedScenario):
        self._scenario = scenario
        self._counters: Dict[str, int] = {}
        self._lock = threading.Lock()

    @property
    def scenario(self) -> ScriptedScenario:
        return self._scenario

    def call_index(self, agent: str) -> int:
        """Calls answered so far for ``agent``."""
        with self._lock:
            return self._counters.get(agent, 0)

    def infer(self, request: ChatRequest) -> Tuple[str, TokenUsage]:
        with self._lock:
            index = self._counters.get(request.agent_name, 0)
            self._counters[request.agent_name] = index + 1
        text = self._scenario.lookup(request.agent_name, index)
        if self._scenario.latency:
            time.sleep(self._scenario.latency)
        usage = TokenUsage(
            sum(count_tokens(t) for t in request.texts()), count_tokens(text)
        )
        logger.debug("scripted %s#%d -> %d chars", request.agent_name, index, len(text))
        return text, usage


_CALL_INSTRUCTIONS = """\
You can call the functions listed below. To call one, write a block:
```call
{"name": "<function>", "arguments": {"<parameter>": "<value>"}}
```
Every parameter is required. To message another agent write
<talk to="Name">message</talk>.
Functions:
"""


def render_tool_instructions(schemas: List[ToolSchema]) -> str:
    """Tool section appended to the system prompt of live requests."""
    lines = [_CALL_INSTRUCTIONS]
    for schema in schemas:
        lines.append(str(schema))
    return "\n".join(lines)


class HTTPBackend(Backend):
    """Chat-completion backend.

    Args:
        config: Endpoint settings.
        transport: Optional httpx transport, tests pass
            :class:`httpx.MockTransport`.
    Usage:
        >>> from megaagent.config import HTTPBackendConfig
        >>> backend = HTTPBackend(HTTPBackendConfig(api_key="sk-..."))
        >>> backend.close()  # "with" syntax is also supported
    """

    name = "http"

    def __init__(
        self,
        config: HTTPBackendConfig,
        *,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self._config = config
        self._connector = HTTPConnector(
            auth=BearerAuth(api_key=config.api_key),
            ssl_verify=config.ssl_verify,
            timeouts=config.timeouts,
            limits=config.limits,
            retry=config.retry,
            backoff_base=config.backoff_base,
            transport=transport,
        )

    def __enter__(self) -> "HTTPBackend":
        self._connector.__enter__()
        return self

    def __exit__(self, exc_type=None, exc_value=None, traceback=None) -> None:
        self._connector.__exit__(exc_type, exc_value, traceback)

    def close(self) -> None:
        self._connector.close()

    def infer(self, request: ChatRequest) -> Tuple[str, TokenUsage]:
        resp = self._connector.do_post(
            self._config.endpoint, json=self._payload(request)
        )
        view = ChatCompletionView(resp.json())
        return view.text, view.usage

    def _payload(self, request: ChatRequest) -> JsonObject:
        system = request.system_prompt
        if request.tool_schemas:
            system = f"{system}\n\n{render_tool_instructions(request.tool_schemas)}"
        messages = [{"role": "system", "content": system}]
        for speaker, text in request.context_messages:
            if speaker == "assistant":
                messages.append({"role": "assistant", "content": text})
            else:
                messages.append({"role": "user", "content": f"[{speaker}]\n{text}"})
        return {
            "model": self._config.model,
            "temperature": request.temperature,
            "messages": messages,
        }


class ChatCompletionView(JsonObjectView):
    """Chat-completion response body."""

    @property
    def text(self) -> str:
        """Content of the first choice."""
        choices = self._get("choices")
        if not choices:
            raise MegaAgentError("chat completion has no choices")
        message = choices[0].get("message") or {}
        return message.get("content") or ""

    @property
    def usage(self) -> TokenUsage:
        """Provider-reported usage."""
        usage = self._get_optional("usage") or {}
        return TokenUsage(
            int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))
        )
