"""Text embedders of the memory store."""
import hashlib
import logging
from typing import Optional

import httpx
import numpy as np

from ..config import HTTPBackendConfig
from ..error import MegaAgentError
from ..gateway.auth import BearerAuth
from ..internal import HTTPConnector, JsonObjectView

logger = logging.getLogger(__name__)

DEFAULT_DIMENSION = 64


class Embedder:
    """Maps text to a vector of fixed dimension."""

    dimension: int = DEFAULT_DIMENSION

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:
        pass


class HashingEmbedder(Embedder):
    """Deterministic feature-hashed bag of words.

    Lowercased whitespace tokens are hashed with MD5 into ``dimension``
    buckets; bucket counts are L2-normalized. Text without tokens maps
    to the zero vector.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in text.lower().split():
            bucket = int(hashlib.md5(token.encode("utf-8")).hexdigest(), 16)
            vec[bucket % self.dimension] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


class HTTPEmbedder(Embedder):
    """Embedding service client for live runs.

    Args:
        config: Backend settings; ``embedding_endpoint`` must be set.
        dimension: Vector size the service returns.
        transport: Optional httpx transport for tests.
    Raises:
        :class:`ValueError`: No embedding endpoint configured.
    """

    def __init__(
        self,
        config: HTTPBackendConfig,
        *,
        dimension: int,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        if not config.embedding_endpoint:
            raise ValueError("embedding_endpoint is not configured")
        self.dimension = dimension
        self._endpoint = config.embedding_endpoint
        self._model = config.embedding_model
        self._connector = HTTPConnector(
            auth=BearerAuth(api_key=config.api_key),
            ssl_verify=config.ssl_verify,
            timeouts=config.timeouts,
            limits=config.limits,
            retry=config.retry,
            backoff_base=config.backoff_base,
            transport=transport,
        )

    def embed(self, text: str) -> np.ndarray:
        if not text.split():
            return np.zeros(self.dimension, dtype=np.float64)
        resp = self._connector.do_post(
            self._endpoint, json={"model": self._model, "input": text}
        )
        vec = np.asarray(EmbeddingView(resp.json()).embedding, dtype=np.float64)
        if vec.shape != (self.dimension,):
            raise MegaAgentError(
                f"embedding service returned {vec.shape[0]} values, "
                f"expected {self.dimension}"
            )
        return vec

    def close(self) -> None:
        self._connector.close()


class EmbeddingView(JsonObjectView):
    """Embedding response body."""

    @property
    def embedding(self):
        data = self._get("data")
        if not data:
            raise MegaAgentError("embedding response has no data")
        return data[0]["embedding"]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; zero when either vector is zero."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
