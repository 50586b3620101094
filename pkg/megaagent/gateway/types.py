from typing import Iterable, List, Optional, Sequence, Tuple

from ..internal import JsonObject
from ..tools.parser import FunctionCall, ParseWarning, parse_response
from ..tools.schemas import ToolSchema


class TokenUsage:
    """Token usage of one model call.

    Args:
        input_tokens: Prompt tokens.
        output_tokens: Completion tokens.
    Raises:
        :class:`ValueError`: Negative count.
    """

    __slots__ = ("input_tokens", "output_tokens")

    def __init__(self, input_tokens: int = 0, output_tokens: int = 0):
        if input_tokens < 0 or output_tokens < 0:
            raise ValueError("token counts must not be negative")
        self.input_tokens = input_tokens
        self.output_tokens = output_tokens

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, TokenUsage):
            return NotImplemented
        return (self.input_tokens, self.output_tokens) == (
            other.input_tokens,
            other.output_tokens,
        )

    def __repr__(self) -> str:
        return f"TokenUsage(input={self.input_tokens}, output={self.output_tokens})"


class ChatRequest:
    """Model call input.

    Args:
        agent_name: Calling agent; keys scripted lookups and ledger entries.
        system_prompt: Agent's system prompt.
        context_messages: Ordered ``(speaker, text)`` pairs.
        tool_schemas: Functions the model may call.
        temperature: Sampling temperature in [0, 1].
    """

    def __init__(
        self,
        agent_name: str,
        system_prompt: str,
        context_messages: Iterable[Tuple[str, str]] = (),
        *,
        tool_schemas: Sequence[ToolSchema] = (),
        temperature: float = 0.0,
    ):
        if not 0.0 <= temperature <= 1.0:
            raise ValueError("temperature must be within [0, 1]")
        self.agent_name = agent_name
        self.system_prompt = system_prompt
        self.context_messages: List[Tuple[str, str]] = list(context_messages)
        self.tool_schemas = list(tool_schemas)
        self.temperature = temperature

    def append(self, speaker: str, text: str) -> None:
        self.context_messages.append((speaker, text))

    def copy(self) -> "ChatRequest":
        return ChatRequest(
            self.agent_name,
            self.system_prompt,
            self.context_messages,
            tool_schemas=self.tool_schemas,
            temperature=self.temperature,
        )

    def texts(self) -> List[str]:
        """System prompt followed by every context text."""
        return [self.system_prompt] + [text for _, text in self.context_messages]

    def json(self) -> JsonObject:
        return {
            "agent": self.agent_name,
            "system_prompt": self.system_prompt,
            "context": [[speaker, text] for speaker, text in self.context_messages],
            "tools": [schema.json() for schema in self.tool_schemas],
            "temperature": self.temperature,
        }


class ModelResponse:
    """Model call output.

    Calls and warnings are parsed from ``text`` on construction,
    so :attr:`parsed_calls` is always exactly what the text holds.
    """

    def __init__(self, text: str, usage: Optional[TokenUsage] = None):
        self.text = text
        self.usage = usage or TokenUsage()
        parsed = parse_response(text)
        self.parsed_calls: List[FunctionCall] = parsed.calls
        self.parse_warnings: List[ParseWarning] = parsed.warnings
        self.talks = parsed.talks
        self.prose = parsed.prose

    @property
    def has_calls(self) -> bool:
        return bool(self.parsed_calls)

    def __repr__(self) -> str:
        return f"ModelResponse(calls={len(self.parsed_calls)}, usage={self.usage!r})"
