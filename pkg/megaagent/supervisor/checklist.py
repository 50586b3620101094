"""Per-agent checklists stored as ``todo_<owner>.txt``.

An item is a numbered (``1. text``) or bulleted (``- text``, ``* text``)
line; ``[done]`` anywhere on the line marks it done. Other lines are prose
and ignored. An empty checklist is complete.
"""
import re
from typing import List, NamedTuple, Optional

_ITEM = re.compile(r"^\s*(?:\d+[.)]|[-*])\s+(.*\S)\s*$")
_DONE = "[done]"
_PATH = re.compile(r"^todo_(.+)\.txt$")


class ChecklistItem(NamedTuple):
    text: str
    done: bool


class Checklist:
    """Parsed checklist of one agent."""

    def __init__(self, owner: str, items: Optional[List[ChecklistItem]] = None):
        self.owner = owner
        self.items: List[ChecklistItem] = list(items or [])

    @property
    def storage_path(self) -> str:
        return checklist_path(self.owner)

    @property
    def is_complete(self) -> bool:
        return all(item.done for item in self.items)

    def open_items(self) -> List[ChecklistItem]:
        return [item for item in self.items if not item.done]

    def render(self) -> str:
        return render_items(self.items)

    def __repr__(self) -> str:
        open_count = len(self.open_items())
        return f"Checklist({self.owner!r}, {open_count}/{len(self.items)} open)"


def checklist_path(owner: str) -> str:
    return f"todo_{owner}.txt"


def checklist_owner(path: str) -> Optional[str]:
    """Owner named by a checklist path, :data:`None` for other files."""
    match = _PATH.match(path)
    return match.group(1) if match else None


def parse_checklist(owner: str, text: str) -> Checklist:
    items = []
    for line in text.splitlines():
        match = _ITEM.match(line)
        if match is None:
            continue
        body = match.group(1)
        done = _DONE in body.lower()
        body = re.sub(re.escape(_DONE), "", body, flags=re.IGNORECASE).strip()
        items.append(ChecklistItem(body, done))
    return Checklist(owner, items)


def render_items(items: List[ChecklistItem]) -> str:
    lines = [
        f"{index}. {item.text}{' [done]' if item.done else ''}"
        for index, item in enumerate(items, start=1)
    ]
    return "\n".join(lines) + ("\n" if lines else "")
