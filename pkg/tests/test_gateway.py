from __future__ import annotations

import pytest

from memcoder.errors import ConfigError, FixtureMissError, TransportError
from memcoder.gateway import (
    CaptureBackend,
    ChatRequest,
    HttpBackend,
    ScriptedBackend,
    fingerprint,
)


def request(text: str = "hello") -> ChatRequest:
    return ChatRequest(messages=({"role": "user", "content": text},))


def test_fingerprint_is_stable():
    # Frozen value: guards canonical serialization across platforms/runs.
    assert (
        fingerprint(request("hello"), 0)
        == "d209687461ad15930cdc9147513038e5cfdaaefb4900f0fbc69a11e31a5bbcd5"
    )


def test_fingerprint_varies_with_sample_index():
    assert fingerprint(request(), 0) != fingerprint(request(), 1)


def test_fingerprint_ignores_sampling_params():
    a = ChatRequest(messages=({"role": "user", "content": "x"},), temperature=0.7)
    b = ChatRequest(messages=({"role": "user", "content": "x"},), temperature=0.0, model="other")
    assert fingerprint(a, 0) == fingerprint(b, 0)


def test_scripted_hit():
    backend = ScriptedBackend({fingerprint(request("X"), 0): "ok"})
    assert backend.complete(request("X"), 0) == "ok"


def test_scripted_miss_is_explicit():
    backend = ScriptedBackend({fingerprint(request("X"), 0): "ok"})
    with pytest.raises(FixtureMissError):
        backend.complete(request("X"), 1)


def test_scripted_determinism():
    backend = ScriptedBackend({fingerprint(request("X"), 0): "ok"})
    assert backend.complete(request("X"), 0) == backend.complete(request("X"), 0)


def test_capture_round_trips_through_scripted():
    class Fixed:
        def complete(self, request, sample_index):
            return f"answer-{sample_index}"

    capture = CaptureBackend(Fixed())
    capture.complete(request("a"), 0)
    capture.complete(request("a"), 1)
    scripted = ScriptedBackend(capture.captured)
    assert scripted.complete(request("a"), 1) == "answer-1"


def test_chat_request_validation():
    with pytest.raises(ValueError):
        ChatRequest(messages=({"role": "user", "content": "x"},), temperature=-1)
    with pytest.raises(ValueError):
        ChatRequest(messages=({"role": "user", "content": "x"},), top_p=0.0)
    with pytest.raises(ValueError):
        ChatRequest(messages=({"role": "oracle", "content": "x"},))


class _FakeResponse:
    def __init__(self, status_code, payload=None):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        return self._payload

    def raise_for_status(self):
        if self.status_code >= 400:
            raise RuntimeError(f"status {self.status_code}")


class _FlakySession:
    def __init__(self, failures):
        self.failures = failures
        self.calls = 0
        self.last_payload = None

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls += 1
        self.last_payload = json
        if self.calls <= self.failures:
            return _FakeResponse(500)
        return _FakeResponse(200, {"choices": [{"message": {"content": "generated"}}]})


def test_http_backend_retries_and_sends_wire_shape():
    session = _FlakySession(failures=1)
    backend = HttpBackend(
        base_url="http://llm.local/v1",
        model="m-7b",
        max_retries=3,
        backoff_s=0.0,
        session=session,
    )
    got = backend.complete(request("write code"), 0)
    assert got == "generated"
    assert session.calls == 2
    assert set(session.last_payload) == {"model", "messages", "temperature", "top_p", "max_tokens"}
    assert session.last_payload["model"] == "m-7b"
    assert session.last_payload["max_tokens"] == 4096


def test_http_backend_exhausts_retries():
    backend = HttpBackend(
        base_url="http://llm.local/v1",
        model="m",
        max_retries=2,
        backoff_s=0.0,
        session=_FlakySession(failures=99),
    )
    with pytest.raises(TransportError, match="after 2 attempts"):
        backend.complete(request(), 0)


def test_http_backend_requires_config(monkeypatch):
    monkeypatch.delenv("MEMCODER_LLM_BASE_URL", raising=False)
    monkeypatch.delenv("MEMCODER_LLM_MODEL", raising=False)
    with pytest.raises(ConfigError, match="MEMCODER_LLM_BASE_URL"):
        HttpBackend()
