"""Canonical encoding of function calls and messages inside model output.

A function call is a fenced block::

    ```call
    {"name": "write_file", "arguments": {"filename": "a.txt", "content": "x"}}
    ```

An outgoing message is a ``<talk to="Name">text</talk>`` block.
"""
import json
import re
from typing import Dict, List, NamedTuple, Optional, Tuple

from ..error import ToolErrorCodes
from .schemas import lookup_schema

_CALL_BLOCK = re.compile(r"^```call[ \t]*\n(.*?)\n```[ \t]*$", re.MULTILINE | re.DOTALL)
_TALK_BLOCK = re.compile(r"<talk\s+to=\"([^\"]*)\"\s*>(.*?)</talk>", re.DOTALL)


class FunctionCall(NamedTuple):
    """Validated invocation of a registered tool."""

    tool_name: str
    arguments: Dict[str, str]

    def render(self) -> str:
        """Canonical block text of the call."""
        body = json.dumps({"name": self.tool_name, "arguments": self.arguments})
        return f"```call\n{body}\n```"


class ParseWarning(NamedTuple):
    """Malformed call block, skipped by the parser."""

    block: int
    code: ToolErrorCodes
    reason: str


class Talk(NamedTuple):
    """Outgoing message found in a response."""

    recipient: str
    text: str


class ParsedResponse(NamedTuple):
    calls: List[FunctionCall]
    warnings: List[ParseWarning]
    talks: List[Talk]
    prose: str
    """Response text with every call and talk block removed."""


def parse_calls(text: str) -> List[FunctionCall]:
    """Well-formed calls of ``text`` in source order, duplicates dropped."""
    return parse_response(text).calls


def parse_response(text: str) -> ParsedResponse:
    """Split a model response into calls, parse warnings, talks and prose."""
    calls: List[FunctionCall] = []
    warnings: List[ParseWarning] = []
    seen = set()
    for index, match in enumerate(_CALL_BLOCK.finditer(text)):
        call, warning = _parse_block(index, match.group(1))
        if warning is not None:
            warnings.append(warning)
            continue
        assert call is not None
        key = (call.tool_name, tuple(sorted(call.arguments.items())))
        if key in seen:
            continue
        seen.add(key)
        calls.append(call)

    talks = [
        Talk(m.group(1).strip(), m.group(2).strip()) for m in _TALK_BLOCK.finditer(text)
    ]
    prose = _TALK_BLOCK.sub("", _CALL_BLOCK.sub("", text)).strip()
    return ParsedResponse(calls, warnings, talks, prose)


def _parse_block(
    index: int, body: str
) -> Tuple[Optional[FunctionCall], Optional[ParseWarning]]:
    try:
        data = json.loads(body)
    except json.JSONDecodeError as exp:
        return None, ParseWarning(
            index, ToolErrorCodes.InvalidArguments, f"invalid JSON: {exp}"
        )
    if not isinstance(data, dict) or not isinstance(data.get("name"), str):
        return None, ParseWarning(
            index, ToolErrorCodes.InvalidArguments, "call block must name a function"
        )

    name = data["name"]
    schema = lookup_schema(name)
    if schema is None:
        return None, ParseWarning(
            index, ToolErrorCodes.UnknownTool, f"unknown function {name!r}"
        )

    arguments = data.get("arguments") or {}
    if not isinstance(arguments, dict):
        return None, ParseWarning(
            index, ToolErrorCodes.InvalidArguments, "arguments must be an object"
        )
    for param in schema.parameter_names:
        if param not in arguments:
            return None, ParseWarning(
                index,
                ToolErrorCodes.InvalidArguments,
                f"{name}: missing argument {param!r}",
            )
        if not isinstance(arguments[param], str):
            return None, ParseWarning(
                index,
                ToolErrorCodes.InvalidArguments,
                f"{name}: argument {param!r} must be a string",
            )
        try:
            arguments[param].encode("utf-8")
        except UnicodeEncodeError:
            return None, ParseWarning(
                index,
                ToolErrorCodes.InvalidArguments,
                f"{name}: argument {param!r} is not valid UTF-8 text",
            )
    picked = {param: arguments[param] for param in schema.parameter_names}
    return FunctionCall(name, picked), None
