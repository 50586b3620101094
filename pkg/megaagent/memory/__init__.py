"""Embedding memory: relevant plus latest entries per agent."""
from .embedding import (
    DEFAULT_DIMENSION,
    Embedder,
    EmbeddingView,
    HashingEmbedder,
    HTTPEmbedder,
    cosine,
)
from .store import MemoryEntry, MemoryStore
