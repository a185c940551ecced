"""Chat-completion client plumbing shared by QA generation, judging, and
timeliness probes.

The wire contract is the de-facto open chat protocol: POST a JSON body
``{model, messages, temperature, max_tokens}`` and read the assistant text
from ``choices[0].message.content``. Every consumer takes any object with a
``complete(messages, ...)`` method, so tests and offline runs plug in mocks.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from typing import Iterable, Protocol

import requests

from .errors import ConfigError, ProtocolError, TransportError

DEFAULT_TEMPERATURE = 0.3
DEFAULT_MAX_TOKENS = 100


class ChatClient(Protocol):
    def complete(
        self,
        messages: list[dict],
        temperature: float | None = None,
        max_tokens: int | None = None,
    ) -> str: ...


@dataclass
class HttpChatClient:
    """Client for an HTTP chat-completion endpoint.

    The auth token is read from the environment (never from config files);
    transport failures are retried with linear backoff before raising.
    """

    base_url: str
    model: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    timeout: float = 60.0
    retries: int = 3
    retry_delay: float = 1.0
    token_env: str = "FACTDRIFT_CHAT_TOKEN"

    def complete(
        self,
        messages: list[dict],
        temperature: float | None = None,
        max_tokens: int | None = None,
    ) -> str:
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature if temperature is None else temperature,
            "max_tokens": self.max_tokens if max_tokens is None else max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last_exc: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(
                    self.base_url, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_exc = exc
                if attempt < self.retries - 1:
                    time.sleep(self.retry_delay * (attempt + 1))
                continue
            if resp.status_code in (429, 500, 502, 503, 504):
                last_exc = TransportError(f"HTTP {resp.status_code} from {self.base_url}")
                if attempt < self.retries - 1:
                    time.sleep(self.retry_delay * (attempt + 1))
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"HTTP {resp.status_code} from {self.base_url}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ProtocolError(f"malformed chat response: {exc}") from exc
            if not isinstance(content, str):
                raise ProtocolError("chat response content is not a string")
            return content
        raise TransportError(
            f"chat request failed after {self.retries} attempts"
        ) from last_exc


@dataclass
class MockChatClient:
    """Scripted client for tests: returns queued responses in order and
    records every call."""

    responses: list[str] = field(default_factory=list)
    calls: list[list[dict]] = field(default_factory=list)

    def complete(
        self,
        messages: list[dict],
        temperature: float | None = None,
        max_tokens: int | None = None,
    ) -> str:
        self.calls.append(messages)
        if not self.responses:
            raise TransportError("mock client script exhausted")
        return self.responses.pop(0)

    @property
    def call_count(self) -> int:
        return len(self.calls)


@dataclass
class ScriptedChatClient:
    """File-backed scripted client: one response per line of a JSONL file with
    objects ``{"content": str}``, consumed in order."""

    script_path: str
    _responses: list[str] = field(default_factory=list, repr=False)
    _loaded: bool = field(default=False, repr=False)
    calls: int = 0

    def _ensure_loaded(self) -> None:
        if self._loaded:
            return
        try:
            with open(self.script_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._responses.append(json.loads(line)["content"])
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad chat script {self.script_path!r}: {exc}") from exc
        self._loaded = True

    def complete(
        self,
        messages: list[dict],
        temperature: float | None = None,
        max_tokens: int | None = None,
    ) -> str:
        self._ensure_loaded()
        if self.calls >= len(self._responses):
            raise TransportError(f"chat script {self.script_path!r} exhausted")
        out = self._responses[self.calls]
        self.calls += 1
        return out


def extract_json_object(text: str) -> dict:
    """Parse the first JSON object out of a model reply.

    Accepts raw JSON, fenced code blocks, or an object embedded in prose.
    Raises ProtocolError when nothing parseable is found.
    """
    text = text.strip()
    if text.startswith("```"):
        lines = text.splitlines()
        if len(lines) >= 3:
            text = "\n".join(lines[1:-1]).strip()
    try:
        obj = json.loads(text)
        if isinstance(obj, dict):
            return obj
    except ValueError:
        pass
    start = text.find("{")
    end = text.rfind("}")
    if start != -1 and end > start:
        try:
            obj = json.loads(text[start : end + 1])
            if isinstance(obj, dict):
                return obj
        except ValueError:
            pass
    raise ProtocolError(f"no JSON object in model reply: {text[:200]!r}")


def require_fields(obj: dict, fields: Iterable[str]) -> dict:
    """Check that each field is a non-empty string; returns obj for chaining."""
    for name in fields:
        value = obj.get(name)
        if not isinstance(value, str) or not value.strip():
            raise ProtocolError(f"model reply missing usable field {name!r}")
    return obj


_PROMPT_FIELD_RE = re.compile(r"^\[(\w+)\]\s?(.*)$")


def parse_tagged_lines(prompt: str) -> dict[str, str]:
    """Read ``[field] value`` lines out of a prompt.

    Prompt templates tag their data lines this way so offline backends can
    answer deterministically without a model.
    """
    fields: dict[str, str] = {}
    for line in prompt.splitlines():
        m = _PROMPT_FIELD_RE.match(line.strip())
        if m:
            fields[m.group(1)] = m.group(2)
    return fields
