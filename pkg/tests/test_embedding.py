from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memcoder.embedding import (
    DeterministicProvider,
    EmbeddingVector,
    HttpProvider,
    cosine_similarity,
)
from memcoder.errors import ConfigError, TransportError


def test_embed_is_deterministic(provider):
    assert provider.embed("x") == provider.embed("x")


def test_embed_is_unit_norm(provider):
    for text in ("x", "a longer requirement with several words", "123 !!"):
        vector = provider.embed(text)
        assert math.isclose(
            math.sqrt(sum(v * v for v in vector.values)), 1.0, abs_tol=1e-6
        )


def test_distinct_texts_map_to_distinct_vectors(provider):
    similarity = cosine_similarity(provider.embed("a"), provider.embed("b"))
    assert similarity < 1.0


def test_tokenization_ignores_case(provider):
    assert provider.embed("Align The Ranks") == provider.embed("align the ranks")


@settings(max_examples=40, deadline=None)
@given(text=st.text(min_size=1, max_size=50))
def test_embed_total_on_arbitrary_text(text):
    provider = DeterministicProvider(32)
    vector = provider.embed(text)
    assert vector.dimension == 32


def test_cosine_self_similarity(provider):
    vector = provider.embed("anything")
    assert cosine_similarity(vector, vector) == pytest.approx(1.0)


def test_cosine_orthogonal():
    a = EmbeddingVector((1.0, 0.0))
    b = EmbeddingVector((0.0, 1.0))
    assert cosine_similarity(a, b) == 0.0


def test_cosine_hand_computed_diagonal():
    a = EmbeddingVector((1.0, 0.0))
    b = EmbeddingVector.from_raw([1.0, 1.0])
    assert cosine_similarity(a, b) == pytest.approx(1 / math.sqrt(2), abs=1e-9)
    assert cosine_similarity(a, b) == pytest.approx(0.70710678, abs=1e-8)


def test_cosine_dimension_mismatch():
    a = EmbeddingVector((1.0, 0.0))
    b = EmbeddingVector((1.0, 0.0, 0.0))
    with pytest.raises(ValueError, match="dimension mismatch"):
        cosine_similarity(a, b)


def test_vector_rejects_non_unit_norm():
    with pytest.raises(ValueError, match="unit-norm"):
        EmbeddingVector((1.0, 1.0))


def test_empty_text_rejected(provider):
    with pytest.raises(ValueError):
        provider.embed("")


class _FakeResponse:
    def __init__(self, status_code: int, payload=None):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        return self._payload

    def raise_for_status(self):
        if self.status_code >= 400:
            raise RuntimeError(f"status {self.status_code}")


class _FlakySession:
    """Fails with 503 a fixed number of times, then succeeds."""

    def __init__(self, failures: int, vector: list[float]):
        self.failures = failures
        self.vector = vector
        self.calls = 0

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls += 1
        if self.calls <= self.failures:
            return _FakeResponse(503)
        return _FakeResponse(200, {"data": [{"embedding": self.vector}]})


def test_http_provider_retries_then_succeeds():
    session = _FlakySession(failures=2, vector=[3.0, 4.0])
    provider = HttpProvider(
        base_url="http://embed.local/v1",
        model="m",
        api_key="k",
        max_retries=3,
        backoff_s=0.0,
        session=session,
    )
    vector = provider.embed("hello")
    assert session.calls == 3
    assert vector.values == pytest.approx((0.6, 0.8))


def test_http_provider_exhausts_retries():
    session = _FlakySession(failures=10, vector=[1.0])
    provider = HttpProvider(
        base_url="http://embed.local/v1",
        model="m",
        max_retries=2,
        backoff_s=0.0,
        session=session,
    )
    with pytest.raises(TransportError, match="after 2 attempts"):
        provider.embed("hello")
    assert session.calls == 2


def test_http_provider_requires_config(monkeypatch):
    monkeypatch.delenv("MEMCODER_EMBED_BASE_URL", raising=False)
    monkeypatch.delenv("MEMCODER_EMBED_MODEL", raising=False)
    with pytest.raises(ConfigError, match="MEMCODER_EMBED_BASE_URL"):
        HttpProvider()
