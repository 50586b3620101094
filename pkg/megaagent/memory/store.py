"""Per-agent long-term memory.

Each agent owns an append-only sequence of entries. Retrieval returns the
``n_relevant`` entries most similar to the query (newer first on ties)
followed by the ``k_latest`` newest entries in chronological order, without
repeating a relevance hit.
"""
import logging
import threading
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..config import RetrievalConfig
from ..error import EmptyTextError, MegaAgentError
from ..internal import JsonlWriter, read_jsonl
from .embedding import Embedder, HashingEmbedder

logger = logging.getLogger(__name__)


class MemoryEntry:
    """Stored text with its embedding."""

    __slots__ = ("agent", "text", "embedding", "sequence")

    def __init__(self, agent: str, text: str, embedding: np.ndarray, sequence: int):
        self.agent = agent
        self.text = text
        self.embedding = embedding
        self.sequence = sequence

    def json(self):
        return {"seq": self.sequence, "text": self.text, "vec": self.embedding.tolist()}

    def __repr__(self) -> str:
        return f"MemoryEntry({self.agent!r}, seq={self.sequence})"


class _AgentMemory:
    def __init__(self, agent: str, path: Optional[Path], dimension: int):
        self.agent = agent
        self.lock = threading.Lock()
        self.entries: Tuple[MemoryEntry, ...] = ()
        self.writer: Optional[JsonlWriter] = None
        if path is not None:
            loaded = []
            for record in read_jsonl(path, missing_ok=True):
                vec = np.asarray(record["vec"], dtype=np.float64)
                if vec.shape != (dimension,):
                    raise MegaAgentError(
                        f"{path}: entry {record['seq']} has dimension {vec.shape[0]}"
                    )
                loaded.append(MemoryEntry(agent, record["text"], vec, record["seq"]))
            self.entries = tuple(loaded)
            self.writer = JsonlWriter(path)


class MemoryStore:
    """Embedding memory of every agent.

    Args:
        root: Directory holding ``<agent>.jsonl`` files.
            :data:`None` keeps memory in process only.
        embedder: Text embedder, hashing embedder by default.
    """

    def __init__(
        self,
        root: Optional[Union[str, Path]] = None,
        *,
        embedder: Optional[Embedder] = None,
    ):
        self._root = Path(root) if root is not None else None
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)
        self._embedder = embedder or HashingEmbedder()
        self._agents: Dict[str, _AgentMemory] = {}
        self._lock = threading.Lock()

    @property
    def embedder(self) -> Embedder:
        return self._embedder

    def embed(self, text: str) -> np.ndarray:
        return self._embedder.embed(text)

    def append(self, agent: str, text: str) -> MemoryEntry:
        """Store ``text`` with the next sequence of ``agent``.

        Raises:
            :class:`~megaagent.error.EmptyTextError`: Blank text.
        """
        if not text.strip():
            raise EmptyTextError(f"empty memory entry for {agent}")
        memory = self._memory(agent)
        vec = self._embedder.embed(text)
        with memory.lock:
            sequence = memory.entries[-1].sequence + 1 if memory.entries else 0
            entry = MemoryEntry(agent, text, vec, sequence)
            if memory.writer is not None:
                memory.writer.append(entry.json())
            memory.entries = memory.entries + (entry,)
        return entry

    def entries(self, agent: str) -> List[MemoryEntry]:
        return list(self._memory(agent).entries)

    def retrieve(
        self,
        agent: str,
        query_text: str,
        config: Optional[RetrievalConfig] = None,
    ) -> List[MemoryEntry]:
        """Relevance hits followed by the latest block."""
        config = config or RetrievalConfig()
        snapshot = self._memory(agent).entries
        if not snapshot:
            return []

        query = self._embedder.embed(query_text)
        matrix = np.stack([entry.embedding for entry in snapshot])
        norms = np.linalg.norm(matrix, axis=1)
        qnorm = np.linalg.norm(query)
        sims = np.zeros(len(snapshot))
        if qnorm > 0:
            nonzero = norms > 0
            sims[nonzero] = (matrix[nonzero] @ query) / (norms[nonzero] * qnorm)

        ranked = sorted(
            range(len(snapshot)),
            key=lambda i: (-round(float(sims[i]), 12), -snapshot[i].sequence),
        )
        relevant = [snapshot[i] for i in ranked[: config.n_relevant]]
        picked = {entry.sequence for entry in relevant}
        latest = [e for e in snapshot[-config.k_latest :] if e.sequence not in picked]
        return relevant + latest

    def close(self) -> None:
        with self._lock:
            for memory in self._agents.values():
                if memory.writer is not None:
                    memory.writer.close()
        self._embedder.close()

    def _memory(self, agent: str) -> _AgentMemory:
        with self._lock:
            memory = self._agents.get(agent)
            if memory is None:
                path = self._root / f"{agent}.jsonl" if self._root is not None else None
                memory = _AgentMemory(agent, path, self._embedder.dimension)
                self._agents[agent] = memory
            return memory
