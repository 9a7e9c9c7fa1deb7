"""Chat-model clients: the wire protocol, mocks, and retry handling.

The HTTP client speaks a chat-completion-style JSON interface so any
compatible backend or local stub can serve it:

    POST <base_url>
    {"model": ..., "messages": [{"role": "system|user|assistant",
     "content": ...}, ...], "temperature": ...}

    200 -> {"choices": [{"message": {"content": "..."}}]}

Credentials come only from the environment variable named in the client
spec and are sent as a bearer token. Mock clients replay a scripted list
of responses and record every request they see.
"""

from __future__ import annotations

import itertools
import os
import time
from dataclasses import dataclass
from typing import Any, Callable, Protocol, Sequence

import requests

_VALID_ROLES = ("system", "user", "assistant")


class ClientError(Exception):
    """A client call failed (network, HTTP status, or malformed payload)."""


class ClientConfigError(ClientError):
    """The client cannot be constructed (bad spec, missing credential)."""


class ScriptExhaustedError(ClientError):
    """A mock client was asked for more responses than it was given."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _VALID_ROLES:
            raise ValueError(f"invalid role {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")


def messages_to_wire(messages: Sequence[ChatMessage]) -> list[dict[str, str]]:
    return [{"role": m.role, "content": m.content} for m in messages]


class ModelClient(Protocol):
    def complete(self, messages: Sequence[ChatMessage]) -> str: ...


@dataclass(frozen=True)
class ModelClientSpec:
    """Endpoint identity plus sampling and retry policy for one role."""

    base_url: str = ""
    model: str = ""
    temperature: float = 0.0
    max_tokens: int | None = None
    seed: int | None = None
    timeout: float = 30.0
    max_attempts: int = 3
    backoff_seconds: float = 0.5
    api_key_env: str = ""

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


class MockClient:
    """Returns scripted responses in order and records all requests."""

    def __init__(self, script: Sequence[str]):
        if not script:
            raise ValueError("mock script must be non-empty")
        self._script = list(script)
        self._cursor = 0
        self.requests: list[list[ChatMessage]] = []

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        self.requests.append(list(messages))
        if self._cursor >= len(self._script):
            raise ScriptExhaustedError(
                f"mock script exhausted after {len(self._script)} responses")
        response = self._script[self._cursor]
        self._cursor += 1
        return response


class CyclingMockClient:
    """Mock that cycles its script forever; for open-ended offline runs."""

    def __init__(self, script: Sequence[str]):
        if not script:
            raise ValueError("mock script must be non-empty")
        self._iter = itertools.cycle(list(script))
        self.requests: list[list[ChatMessage]] = []

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        self.requests.append(list(messages))
        return next(self._iter)


class HttpChatClient:
    """Chat-completion HTTP client built from a :class:`ModelClientSpec`."""

    def __init__(self, spec: ModelClientSpec):
        if not spec.base_url:
            raise ClientConfigError("client spec has no base_url")
        if not spec.api_key_env:
            raise ClientConfigError("client spec names no credential variable")
        api_key = os.environ.get(spec.api_key_env, "")
        if not api_key:
            raise ClientConfigError(
                f"credential variable {spec.api_key_env} is not set")
        self._spec = spec
        self._headers = {"Authorization": f"Bearer {api_key}",
                         "Content-Type": "application/json"}

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        payload: dict[str, Any] = {
            "model": self._spec.model,
            "messages": messages_to_wire(messages),
            "temperature": self._spec.temperature,
        }
        if self._spec.max_tokens is not None:
            payload["max_tokens"] = self._spec.max_tokens
        if self._spec.seed is not None:
            payload["seed"] = self._spec.seed
        try:
            response = requests.post(self._spec.base_url, json=payload,
                                     headers=self._headers,
                                     timeout=self._spec.timeout)
        except requests.RequestException as exc:
            raise ClientError(f"request failed: {exc}") from exc
        if response.status_code != 200:
            raise ClientError(f"HTTP {response.status_code}: {response.text[:200]}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ClientError(f"malformed completion payload: {exc}") from exc


class HttpEmbeddingProvider:
    """Embeddings HTTP client: POST {"model", "input"} -> {"data":
    [{"embedding": [...]}]}. Callable, so it plugs straight into the
    similarity code."""

    def __init__(self, spec: ModelClientSpec):
        if not spec.base_url:
            raise ClientConfigError("provider spec has no base_url")
        if not spec.api_key_env:
            raise ClientConfigError("provider spec names no credential variable")
        api_key = os.environ.get(spec.api_key_env, "")
        if not api_key:
            raise ClientConfigError(
                f"credential variable {spec.api_key_env} is not set")
        self._spec = spec
        self._headers = {"Authorization": f"Bearer {api_key}",
                         "Content-Type": "application/json"}

    def __call__(self, text: str) -> list[float]:
        try:
            response = requests.post(self._spec.base_url,
                                     json={"model": self._spec.model, "input": text},
                                     headers=self._headers,
                                     timeout=self._spec.timeout)
        except requests.RequestException as exc:
            raise ClientError(f"request failed: {exc}") from exc
        if response.status_code != 200:
            raise ClientError(f"HTTP {response.status_code}: {response.text[:200]}")
        try:
            return [float(x) for x in response.json()["data"][0]["embedding"]]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ClientError(f"malformed embedding payload: {exc}") from exc


AttemptCallback = Callable[[int, str | None, str | None, float], None]


def call_with_retries(client: ModelClient, messages: Sequence[ChatMessage],
                      max_attempts: int, backoff_seconds: float,
                      on_attempt: AttemptCallback | None = None) -> str:
    """Call the client up to max_attempts times, backing off linearly.

    ``on_attempt(attempt, error, response, elapsed_s)`` fires once per
    attempt so callers can keep a full audit trail. Raises the last
    :class:`ClientError` when every attempt fails.
    """
    last_error: ClientError | None = None
    for attempt in range(1, max_attempts + 1):
        started = time.monotonic()
        try:
            response = client.complete(messages)
        except ClientError as exc:
            last_error = exc
            if on_attempt is not None:
                on_attempt(attempt, str(exc), None, time.monotonic() - started)
            if attempt < max_attempts and backoff_seconds > 0:
                time.sleep(backoff_seconds * attempt)
            continue
        if on_attempt is not None:
            on_attempt(attempt, None, response, time.monotonic() - started)
        return response
    assert last_error is not None
    raise last_error


def client_factory_from_config(obj: dict[str, Any]) -> Callable[[], ModelClient]:
    """Build a per-dialogue client factory from a config object.

    ``{"type": "mock", "script": [...], "cycle": false}`` yields a fresh
    scripted mock per call; ``{"type": "http", ...spec fields...}`` yields
    a shared HTTP client.
    """
    kind = obj.get("type", "http")
    if kind == "mock":
        script = obj.get("script")
        if not isinstance(script, list) or not script:
            raise ClientConfigError("mock client config needs a non-empty 'script'")
        if obj.get("cycle", False):
            return lambda: CyclingMockClient(script)
        return lambda: MockClient(script)
    if kind == "http":
        spec = spec_from_config(obj)
        client = HttpChatClient(spec)
        return lambda: client
    raise ClientConfigError(f"unknown client type {kind!r}")


def spec_from_config(obj: dict[str, Any]) -> ModelClientSpec:
    fields = {"base_url", "model", "temperature", "max_tokens", "seed", "timeout",
              "max_attempts", "backoff_seconds", "api_key_env"}
    kwargs = {k: v for k, v in obj.items() if k in fields}
    unknown = set(obj) - fields - {"type", "script", "cycle"}
    if unknown:
        raise ClientConfigError(f"unknown client spec fields: {sorted(unknown)}")
    return ModelClientSpec(**kwargs)
