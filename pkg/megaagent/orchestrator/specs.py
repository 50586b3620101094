"""Parsing of the Boss decomposition.

The Boss answers the meta-prompt with one block per employee::

    <employee name="Alice">You are Alice, a novelist...</employee>

and optionally names who starts the work with ``<beginner>Alice</beginner>``.
"""
import re
from pathlib import Path
from typing import List, NamedTuple, Optional, Union

from ..runtime.agent import is_valid_name

_TAG = re.compile(r'<employee\s+name="([^"]*)"\s*>|</employee\s*>')
_BEGINNER = re.compile(r"<beginner>\s*(.*?)\s*</beginner>", re.DOTALL)


class MetaPrompt:
    """The single instruction that seeds a run.

    Raises:
        :class:`ValueError`: Blank text.
    """

    def __init__(self, text: str):
        if not text.strip():
            raise ValueError("meta-prompt must not be empty")
        self.text = text

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "MetaPrompt":
        with open(path, encoding="utf-8") as fp:
            return cls(fp.read())

    def __repr__(self) -> str:
        return f"MetaPrompt({self.text[:40]!r})"


class AgentSpec(NamedTuple):
    name: str
    prompt_body: str
    is_beginner: bool = False


class MalformedTag(NamedTuple):
    """Skipped employee block."""

    offset: int
    """Character offset of the offending tag."""
    reason: str


class Decomposition(NamedTuple):
    specs: List[AgentSpec]
    beginner: Optional[str]
    malformed: List[MalformedTag]


def parse_employee_specs(text: str) -> Decomposition:
    """Extract employee blocks and the beginner from a decomposition.

    Unbalanced tags, invalid and duplicate names are reported as
    :class:`MalformedTag` and their block is skipped. A beginner that
    names no parsed spec is dropped.
    """
    found: List[AgentSpec] = []
    malformed: List[MalformedTag] = []
    names = set()
    pending: Optional[re.Match] = None

    for match in _TAG.finditer(text):
        if match.group(0).startswith("</"):
            if pending is None:
                malformed.append(
                    MalformedTag(match.start(), "closing tag without opening")
                )
                continue
            name = pending.group(1).strip()
            body = text[pending.end() : match.start()].strip()
            if not is_valid_name(name):
                reason = f"invalid name {name!r}"
                malformed.append(MalformedTag(pending.start(), reason))
            elif name in names:
                reason = f"duplicate name {name}"
                malformed.append(MalformedTag(pending.start(), reason))
            else:
                names.add(name)
                found.append(AgentSpec(name, body))
            pending = None
        else:
            if pending is not None:
                malformed.append(MalformedTag(pending.start(), "unclosed employee tag"))
            pending = match
    if pending is not None:
        malformed.append(MalformedTag(pending.start(), "unclosed employee tag"))

    beginner = None
    match = _BEGINNER.search(text)
    if match and match.group(1) in names:
        beginner = match.group(1)
    specs = [spec._replace(is_beginner=spec.name == beginner) for spec in found]
    return Decomposition(specs, beginner, malformed)
