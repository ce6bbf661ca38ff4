"""Text embedding providers and the unit-norm vector type.

Two providers share one interface: a deterministic offline provider used by
the whole test/replay story, and an HTTP provider speaking the de-facto
embeddings wire shape ({model, input: [...]} -> {data: [{embedding: [...]}]}).
Providers must return unit-norm vectors; similarity is then a plain dot
product.
"""

from __future__ import annotations

import hashlib
import math
import os
import re
import time
from dataclasses import dataclass

from .errors import ConfigError, TransportError

NORM_TOLERANCE = 1e-6

ENV_EMBED_BASE_URL = "MEMCODER_EMBED_BASE_URL"
ENV_EMBED_MODEL = "MEMCODER_EMBED_MODEL"
ENV_EMBED_API_KEY = "MEMCODER_EMBED_API_KEY"

_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+")


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-dimension real vector with unit L2 norm (within 1e-6)."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        norm = math.sqrt(math.fsum(v * v for v in self.values))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"embedding vector is not unit-norm (|v|={norm!r})")

    @property
    def dimension(self) -> int:
        return len(self.values)

    @classmethod
    def from_raw(cls, values: list[float] | tuple[float, ...]) -> "EmbeddingVector":
        """Normalize an arbitrary non-zero vector into a unit vector."""
        norm = math.sqrt(math.fsum(v * v for v in values))
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return cls(tuple(v / norm for v in values))


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity of two unit vectors, i.e. their dot product.

    Clamped into [-1, 1] to absorb rounding at the boundaries.
    """
    if a.dimension != b.dimension:
        raise ValueError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    dot = math.fsum(x * y for x, y in zip(a.values, b.values))
    return max(-1.0, min(1.0, dot))


class DeterministicProvider:
    """Offline provider: token-hash bag-of-words projected onto `dimension` axes.

    Each token hashes (sha256, platform-stable) to an axis index and a sign;
    token counts accumulate and the result is L2-normalized. Identical text
    always produces an identical vector; no I/O involved.
    """

    kind = "deterministic-test"

    def __init__(self, dimension: int = 256):
        if dimension < 2:
            raise ConfigError(f"embedding dimension must be >= 2, got {dimension}")
        self.dimension = dimension

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        tokens = _TOKEN_RE.findall(text.lower())
        if not tokens:
            # All-punctuation input: fall back to hashing the raw text once.
            tokens = [text]
        acc = [0.0] * self.dimension
        for token in tokens:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            index = int.from_bytes(digest[:8], "big") % self.dimension
            sign = 1.0 if digest[8] % 2 == 0 else -1.0
            acc[index] += sign
        if all(v == 0.0 for v in acc):
            # Opposite-signed tokens cancelled out exactly; nudge one axis.
            acc[0] = 1.0
        return EmbeddingVector.from_raw(acc)


class HttpProvider:
    """Provider backed by an embeddings HTTP endpoint.

    POSTs {model, input: [text]} to {base_url}/embeddings and reads
    data[0].embedding. Transient failures retry with exponential backoff.
    """

    kind = "http"

    def __init__(
        self,
        base_url: str | None = None,
        model: str | None = None,
        api_key: str | None = None,
        dimension: int | None = None,
        max_retries: int = 3,
        backoff_s: float = 0.5,
        session=None,
    ):
        self.base_url = (base_url or os.environ.get(ENV_EMBED_BASE_URL, "")).rstrip("/")
        self.model = model or os.environ.get(ENV_EMBED_MODEL, "")
        self.api_key = api_key or os.environ.get(ENV_EMBED_API_KEY, "")
        if not self.base_url:
            raise ConfigError(
                f"http embedding provider needs a base URL (flag or {ENV_EMBED_BASE_URL})"
            )
        if not self.model:
            raise ConfigError(
                f"http embedding provider needs a model name (flag or {ENV_EMBED_MODEL})"
            )
        self.dimension = dimension
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._session = session
        self._cache: dict[str, EmbeddingVector] = {}

    def _post(self, payload: dict):
        if self._session is None:
            import requests

            self._session = requests.Session()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return self._session.post(
            f"{self.base_url}/embeddings", json=payload, headers=headers, timeout=30
        )

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        payload = {"model": self.model, "input": [text]}
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                response = self._post(payload)
                if response.status_code in (429,) or response.status_code >= 500:
                    raise TransportError(f"embedding endpoint returned {response.status_code}")
                response.raise_for_status()
                raw = response.json()["data"][0]["embedding"]
                break
            except Exception as exc:  # transport + decode failures retry alike
                last_error = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff_s * (2**attempt))
        else:
            raise TransportError(
                f"embedding request failed after {self.max_retries} attempts: {last_error}"
            )
        if self.dimension is None:
            self.dimension = len(raw)
        elif len(raw) != self.dimension:
            raise TransportError(
                f"embedding dimension changed mid-run: expected {self.dimension}, got {len(raw)}"
            )
        vector = EmbeddingVector.from_raw(raw)
        self._cache[text] = vector
        return vector
