"""Uniform chat-completion gateway.

Two backends implement `complete(request, sample_index) -> str`: an HTTP
backend speaking the de-facto chat-completions wire protocol, and a scripted
backend that replays canned responses keyed by a stable request fingerprint.
The fingerprint hashes the canonical serialization of the messages plus the
sampling index, so an n-sample run can script a distinct candidate per sample
while staying byte-stable across runs and platforms.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field

from .errors import ConfigError, FixtureMissError, TransportError

ENV_LLM_BASE_URL = "MEMCODER_LLM_BASE_URL"
ENV_LLM_API_KEY = "MEMCODER_LLM_API_KEY"
ENV_LLM_MODEL = "MEMCODER_LLM_MODEL"

DEFAULT_TEMPERATURE = 0.7
DEFAULT_TOP_P = 0.95
DEFAULT_MAX_TOKENS = 4096


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[dict, ...]
    model: str = ""
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        for message in self.messages:
            if message.get("role") not in ("system", "user", "assistant"):
                raise ValueError(f"bad message role: {message.get('role')!r}")


def fingerprint(request: ChatRequest, sample_index: int) -> str:
    """Stable fixture key: sha256 over canonical messages + sampling index."""
    payload = json.dumps(
        {"messages": list(request.messages), "sample_index": sample_index},
        sort_keys=True,
        ensure_ascii=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ScriptedBackend:
    """Pure fixture lookup; an unknown fingerprint is an explicit miss."""

    def __init__(self, fixtures: dict[str, str]):
        self.fixtures = dict(fixtures)
        self.hits = 0

    @classmethod
    def from_file(cls, path: str) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def complete(self, request: ChatRequest, sample_index: int) -> str:
        key = fingerprint(request, sample_index)
        if key not in self.fixtures:
            raise FixtureMissError(
                f"no scripted response for fingerprint {key[:16]}... (sample {sample_index})"
            )
        self.hits += 1
        return self.fixtures[key]


@dataclass
class CaptureBackend:
    """Wraps a live backend and records fingerprint -> response pairs.

    Used to freeze scripted fixtures from a rule-driven or real backend.
    """

    inner: object
    captured: dict[str, str] = field(default_factory=dict)

    def complete(self, request: ChatRequest, sample_index: int) -> str:
        response = self.inner.complete(request, sample_index)
        self.captured[fingerprint(request, sample_index)] = response
        return response


class _RateLimiter:
    """Minimum-interval throttle shared across threads."""

    def __init__(self, requests_per_second: float):
        self.interval = 1.0 / requests_per_second if requests_per_second > 0 else 0.0
        self._lock = threading.Lock()
        self._last = 0.0

    def wait(self) -> None:
        if self.interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._last + self.interval - now
            if delay > 0:
                time.sleep(delay)
                now = time.monotonic()
            self._last = now


class HttpBackend:
    """POSTs {model, messages, temperature, top_p, max_tokens} to
    {base_url}/chat/completions and reads choices[0].message.content.

    Transient failures (connection errors, 429, 5xx) retry with exponential
    backoff; anything else fails fast.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        max_retries: int = 3,
        backoff_s: float = 0.5,
        requests_per_second: float = 0.0,
        session=None,
    ):
        self.base_url = (base_url or os.environ.get(ENV_LLM_BASE_URL, "")).rstrip("/")
        self.api_key = api_key or os.environ.get(ENV_LLM_API_KEY, "")
        self.model = model or os.environ.get(ENV_LLM_MODEL, "")
        if not self.base_url:
            raise ConfigError(f"http LLM backend needs a base URL (flag or {ENV_LLM_BASE_URL})")
        if not self.model:
            raise ConfigError(f"http LLM backend needs a model name (flag or {ENV_LLM_MODEL})")
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._limiter = _RateLimiter(requests_per_second)
        self._session = session

    def _post(self, payload: dict):
        if self._session is None:
            import requests

            self._session = requests.Session()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return self._session.post(
            f"{self.base_url}/chat/completions", json=payload, headers=headers, timeout=120
        )

    def complete(self, request: ChatRequest, sample_index: int) -> str:
        payload = {
            "model": request.model or self.model,
            "messages": list(request.messages),
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            self._limiter.wait()
            try:
                response = self._post(payload)
                if response.status_code == 429 or response.status_code >= 500:
                    raise TransportError(f"chat endpoint returned {response.status_code}")
                response.raise_for_status()
                return response.json()["choices"][0]["message"]["content"]
            except Exception as exc:
                last_error = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff_s * (2**attempt))
        raise TransportError(
            f"chat request failed after {self.max_retries} attempts: {last_error}"
        )
