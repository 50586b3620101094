"""Append-only JSON Lines files shared by the event log, the commit
journal and the memory store."""
import json
import threading
from pathlib import Path
from typing import Any, Iterator, List, Tuple

from ..error import MegaAgentError
from .base import JsonObject


class JsonlWriter:
    """Thread-safe appender. Each record is flushed as one complete line."""

    def __init__(self, path: Path):
        self._path = Path(path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._fp = open(self._path, "a", encoding="utf-8")

    @property
    def path(self) -> Path:
        return self._path

    def append(self, record: JsonObject) -> None:
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._lock:
            self._fp.write(line + "\n")
            self._fp.flush()

    def close(self) -> None:
        with self._lock:
            if not self._fp.closed:
                self._fp.close()


class TruncatedLogError(MegaAgentError):
    """Last record of a JSONL file is incomplete."""

    def __init__(self, line: int):
        self.line = line
        super().__init__(f"line {line}: unexpected end of log")


def iter_jsonl(path: Path) -> Iterator[Tuple[int, Any]]:
    """Yield ``(line_number, record)`` pairs, skipping blank lines.

    Raises:
        :class:`TruncatedLogError`: The final line is cut short.
        :class:`~megaagent.error.MegaAgentError`: A middle line is not JSON.
    """
    with open(path, encoding="utf-8") as fp:
        text = fp.read()
    lines = text.split("\n")
    # A complete file ends with a newline, so the last chunk is empty.
    complete = lines[:-1]
    tail = lines[-1]
    for number, line in enumerate(complete, start=1):
        if not line.strip():
            continue
        try:
            yield number, json.loads(line)
        except json.JSONDecodeError as exp:
            if number == len(complete) and not tail:
                raise TruncatedLogError(number) from None
            raise MegaAgentError(f"line {number}: malformed record", exp) from None
    if tail.strip():
        raise TruncatedLogError(len(complete) + 1)


def read_jsonl(path: Path, *, missing_ok: bool = False) -> List[Any]:
    """Read every record of a JSONL file."""
    if missing_ok and not Path(path).exists():
        return []
    return [record for _, record in iter_jsonl(path)]
