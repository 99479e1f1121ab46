"""Text-completion backends: an HTTP chat-completion client and a scripted mock."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol

import httpx
import yaml

log = logging.getLogger(__name__)

API_KEY_ENV = "SENSE_API_KEY"
DEFAULT_MODEL = "gpt-3.5-turbo"
DEFAULT_TEMPERATURE = 0.2
DEFAULT_MAX_TOKENS = 2048
DEFAULT_RETRIES = 3


class LlmError(RuntimeError):
    pass


class BackendUnavailableError(LlmError):
    """Network failure, timeout, or server error that survived all retries."""


class RequestRejectedError(LlmError):
    def __init__(self, status: int, body: str = "") -> None:
        super().__init__(f"request rejected with HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class ScriptMissError(LlmError):
    """No mock script entry matches the request."""


class MockScriptError(ValueError):
    """The mock script is malformed or ambiguous."""


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class Message:
    role: Role
    content: str


@dataclass(frozen=True)
class LlmRequest:
    model_name: str
    messages: tuple[Message, ...]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("request needs at least one message")
        if not 0 <= self.temperature <= 2:
            raise ValueError(f"temperature must be within [0, 2], got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")

    def payload(self) -> dict:
        return {
            "model": self.model_name,
            "messages": [{"role": m.role.value, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class LlmResponse:
    text: str
    finish_reason: FinishReason = FinishReason.STOP
    usage: dict[str, int] | None = None


class Backend(Protocol):
    def complete(self, request: LlmRequest) -> LlmResponse: ...


def complete(backend: Backend, request: LlmRequest) -> LlmResponse:
    return backend.complete(request)


class RemoteBackend:
    """Chat-completion client for any endpoint speaking the common JSON protocol.

    Transport errors, timeouts, HTTP 429 and 5xx are retried with exponential
    backoff; other 4xx responses fail immediately.
    """

    def __init__(
        self,
        endpoint_url: str,
        api_key: str | None = None,
        retries: int = DEFAULT_RETRIES,
        backoff: float = 0.5,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if not endpoint_url:
            raise ValueError("endpoint_url is required for the remote backend")
        self.endpoint_url = endpoint_url
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not self.api_key:
            raise ValueError(f"set {API_KEY_ENV} to use the remote backend")
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def complete(self, request: LlmRequest) -> LlmResponse:
        body = json.dumps(request.payload(), ensure_ascii=False).encode("utf-8")
        headers = {"Authorization": f"Bearer {self.api_key}", "Content-Type": "application/json"}
        last_error = "no attempt made"
        for attempt in range(self.retries + 1):
            if attempt:
                delay = self.backoff * 2 ** (attempt - 1)
                log.info("retrying completion in %.2fs (%s)", delay, last_error)
                self._sleep(delay)
            try:
                resp = self._client.post(self.endpoint_url, content=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise RequestRejectedError(resp.status_code, resp.text)
            return _parse_chat_response(resp)
        raise BackendUnavailableError(f"completion failed after {self.retries} retries: {last_error}")


def _parse_chat_response(resp: httpx.Response) -> LlmResponse:
    try:
        data = resp.json()
        choice = data["choices"][0]
        text = choice["message"]["content"] or ""
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise BackendUnavailableError(f"malformed completion response: {exc}") from exc
    reason = {"stop": FinishReason.STOP, "length": FinishReason.LENGTH}.get(
        choice.get("finish_reason") or "stop", FinishReason.ERROR
    )
    usage = data.get("usage")
    if isinstance(usage, dict):
        usage = {k: int(usage[k]) for k in ("prompt_tokens", "completion_tokens") if k in usage}
    else:
        usage = None
    return LlmResponse(text, reason, usage)


# -- mock --------------------------------------------------------------------

_INPUT_LINE = re.compile(r"^INPUT:\s*(.*?)\s*$", re.MULTILINE)


@dataclass(frozen=True)
class MockEntry:
    """One scripted reply.

    ``match`` is either an inquiry text (matched against the ``INPUT:`` line of
    the prompt) or a 1-based call number.  ``fail`` makes the call raise
    :class:`BackendUnavailableError` instead of answering.
    """

    match: str | int
    completion: str = ""
    fail: bool = False


@dataclass(frozen=True)
class MockScript:
    entries: tuple[MockEntry, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        keys = [_match_key(e.match) for e in self.entries]
        dupes = sorted({str(k[1]) for k in keys if keys.count(k) > 1})
        if dupes:
            raise MockScriptError(f"ambiguous mock script: several entries match {', '.join(dupes)}")

    @classmethod
    def from_yaml(cls, text: str) -> MockScript:
        doc = yaml.safe_load(text)
        if doc is None:
            return cls()
        if not isinstance(doc, list):
            raise MockScriptError("mock script must be a list of {match, completion} entries")
        entries = []
        for i, item in enumerate(doc):
            if not isinstance(item, dict) or "match" not in item:
                raise MockScriptError(f"entry {i}: expected a mapping with a 'match' field")
            match = item["match"]
            if isinstance(match, bool) or not isinstance(match, (int, str)):
                raise MockScriptError(f"entry {i}: match must be inquiry text or a turn number")
            if isinstance(match, int) and match < 1:
                raise MockScriptError(f"entry {i}: turn numbers start at 1")
            fail = bool(item.get("fail", False))
            if not fail and not isinstance(item.get("completion"), str):
                raise MockScriptError(f"entry {i}: completion text is required")
            entries.append(MockEntry(match, item.get("completion") or "", fail))
        return cls(tuple(entries))

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> MockScript:
        return cls.from_yaml(Path(path).read_text(encoding="utf-8"))


def _match_key(match: str | int) -> tuple[str, str | int]:
    if isinstance(match, int):
        return ("turn", match)
    return ("text", _normalize_inquiry(match))


def _normalize_inquiry(text: str) -> str:
    text = re.sub(r"^\s*INPUT\s*:\s*", "", text.strip(), flags=re.IGNORECASE)
    return " ".join(text.split()).casefold()


class MockBackend:
    """Deterministic backend answering from a :class:`MockScript`.

    Turn numbers count calls made on this instance, starting at 1.
    """

    def __init__(self, script: MockScript) -> None:
        self.script = script
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, request: LlmRequest) -> LlmResponse:
        with self._lock:
            self.calls += 1
            turn = self.calls
        inquiry = _request_inquiry(request.messages)
        matches = [
            e
            for e in self.script.entries
            if (isinstance(e.match, int) and e.match == turn)
            or (isinstance(e.match, str) and inquiry is not None and _normalize_inquiry(e.match) == inquiry)
        ]
        if len(matches) > 1:
            raise MockScriptError(f"call {turn}: several script entries match")
        if not matches:
            raise ScriptMissError(f"call {turn}: no script entry for inquiry {inquiry!r}")
        entry = matches[0]
        if entry.fail:
            raise BackendUnavailableError(f"call {turn}: scripted backend failure")
        return LlmResponse(entry.completion, FinishReason.STOP, None)


def _request_inquiry(messages: Sequence[Message]) -> str | None:
    for message in messages:
        if message.role is Role.USER:
            found = _INPUT_LINE.findall(message.content)
            if found:
                return _normalize_inquiry(found[-1])
    return None


def mock_backend_from_script(script: MockScript) -> MockBackend:
    return MockBackend(script)
