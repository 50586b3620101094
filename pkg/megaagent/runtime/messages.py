import threading
from collections import deque
from typing import Deque, Iterable, List, NamedTuple


class Message(NamedTuple):
    """Inter-agent message. ``sequence`` is global and monotone."""

    sender: str
    recipient: str
    text: str
    sequence: int


class SequenceCounter:
    """Atomic global message counter."""

    def __init__(self, start: int = 0):
        self._next = start
        self._lock = threading.Lock()

    def next(self) -> int:
        with self._lock:
            value = self._next
            self._next += 1
            return value


class MessageQueue:
    """FIFO buffer of one agent.

    Any thread may enqueue; only the owner drains.
    """

    def __init__(self, owner: str):
        self.owner = owner
        self._entries: Deque[Message] = deque()
        self._lock = threading.RLock()

    @property
    def lock(self) -> threading.RLock:
        """Held while a sender numbers and queues a message."""
        return self._lock

    def enqueue(self, message: Message) -> None:
        with self._lock:
            self._entries.append(message)

    def drain_into(self, other: "MessageQueue") -> List[Message]:
        """Move every queued message to ``other``, keeping their numbers."""
        with self._lock:
            moved = list(self._entries)
            self._entries.clear()
        with other.lock:
            merged = sorted(list(other._entries) + moved, key=lambda m: m.sequence)
            other._entries = deque(merged)
        return moved

    def dequeue_batch(self) -> List[Message]:
        """Drain every queued message in FIFO order."""
        with self._lock:
            batch = list(self._entries)
            self._entries.clear()
            return batch

    def requeue_front(self, batch: Iterable[Message]) -> None:
        """Put an unprocessed batch back ahead of newer messages."""
        with self._lock:
            self._entries.extendleft(reversed(list(batch)))

    def peek(self) -> List[Message]:
        with self._lock:
            return list(self._entries)

    def is_empty(self) -> bool:
        with self._lock:
            return not self._entries

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)
