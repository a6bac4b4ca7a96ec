"""Uniform chat interface over multimodal language backends.

One `ChatBackend.chat()` surface fronts four kinds: a live OpenAI-compatible
HTTP endpoint, a deterministic scripted mock, the simulation oracle (see
world.py), and transcript replay. Every successful exchange is appended to
the backend's transcript, optionally streamed to a JSON Lines file, which
makes any run bit-reproducible through the replay backend.
"""

from __future__ import annotations

import base64
import enum
import json
import mimetypes
import os
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

import requests

from .errors import (
    BackendUnreachableError,
    ParseError,
    ReplayMismatchError,
    ScriptExhaustedError,
)

ENV_API_KEY = "CTGI_API_KEY"
ENV_ENDPOINT = "CTGI_ENDPOINT"

_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    text: str
    image_ref: str | None = None

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not self.text and self.image_ref is None:
            raise ValueError("message needs text or an image_ref")

    def to_json(self) -> dict:
        record = {"role": self.role, "text": self.text}
        if self.image_ref is not None:
            record["image_ref"] = self.image_ref
        return record

    @classmethod
    def from_json(cls, record) -> "ChatMessage":
        return cls(
            role=record["role"],
            text=record.get("text", ""),
            image_ref=record.get("image_ref"),
        )


def user(text: str, image_ref: str | None = None) -> ChatMessage:
    return ChatMessage(role="user", text=text, image_ref=image_ref)


@dataclass
class ChatBackendConfig:
    kind: str = "scripted"
    endpoint: str | None = None
    model_name: str | None = None
    temperature: float = 0.01
    max_retries: int = 3
    timeout: float = 30.0
    retry_backoff: float = 0.5

    def __post_init__(self):
        if self.kind not in ("http", "scripted", "oracle", "replay"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.kind == "http" and (not self.endpoint or not self.model_name):
            raise ValueError("http backend requires endpoint and model_name")


@dataclass
class Exchange:
    request: list[ChatMessage]
    response: str
    backend: str
    ts: str

    def to_json(self) -> dict:
        return {
            "request": [message.to_json() for message in self.request],
            "response": self.response,
            "backend": self.backend,
            "ts": self.ts,
        }

    @classmethod
    def from_json(cls, record) -> "Exchange":
        return cls(
            request=[ChatMessage.from_json(m) for m in record["request"]],
            response=record["response"],
            backend=record.get("backend", ""),
            ts=record.get("ts", ""),
        )


class ChatTranscript:
    """Append-only exchange log, optionally streamed to a JSONL sink."""

    def __init__(self, sink_path=None):
        self.exchanges: list[Exchange] = []
        self._lock = threading.Lock()
        self._sink = open(sink_path, "w", encoding="utf-8") if sink_path else None

    def append(self, exchange: Exchange) -> None:
        with self._lock:
            self.exchanges.append(exchange)
            if self._sink is not None:
                self._sink.write(json.dumps(exchange.to_json()) + "\n")
                self._sink.flush()

    def close(self) -> None:
        with self._lock:
            if self._sink is not None:
                self._sink.close()
                self._sink = None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for exchange in self.exchanges:
                handle.write(json.dumps(exchange.to_json()) + "\n")

    def __len__(self):
        return len(self.exchanges)

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def load_transcript(path) -> list[Exchange]:
    exchanges = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                exchanges.append(Exchange.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ParseError(f"line {line_no}: bad transcript record") from exc
    return exchanges


class ChatBackend:
    """Base backend: subclasses implement `_reply`, callers use `chat`."""

    kind = "abstract"

    def __init__(self, transcript: ChatTranscript | None = None):
        self.transcript = transcript if transcript is not None else ChatTranscript()

    def chat(self, messages: list[ChatMessage]) -> str:
        if not messages:
            raise ValueError("messages must be nonempty")
        reply = self._reply(messages)
        self.transcript.append(
            Exchange(
                request=list(messages),
                response=reply,
                backend=self.kind,
                ts=datetime.now(timezone.utc).isoformat(),
            )
        )
        return reply

    def _reply(self, messages: list[ChatMessage]) -> str:
        raise NotImplementedError


class ScriptedBackend(ChatBackend):
    """Deterministic mock: an ordered reply queue and/or substring rules.

    Queued replies are consumed first; otherwise the first rule whose
    substring occurs in the last message text fires (rules persist).
    """

    kind = "scripted"

    def __init__(self, replies=None, rules=None, transcript=None):
        super().__init__(transcript)
        self._queue = list(replies) if replies else []
        self._rules = [tuple(rule) for rule in rules] if rules else []
        self._lock = threading.Lock()

    @classmethod
    def always(cls, reply: str, transcript=None) -> "ScriptedBackend":
        return cls(rules=[("", reply)], transcript=transcript)

    def _reply(self, messages):
        with self._lock:
            if self._queue:
                return self._queue.pop(0)
        text = messages[-1].text
        for needle, reply in self._rules:
            if needle in text:
                return reply
        raise ScriptExhaustedError("no scripted reply matches the request")


class ReplayBackend(ChatBackend):
    """Replays a recorded transcript, verifying each request matches."""

    kind = "replay"

    def __init__(self, recorded: list[Exchange], transcript=None):
        super().__init__(transcript)
        self._recorded = list(recorded)
        self._cursor = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path, transcript=None) -> "ReplayBackend":
        return cls(load_transcript(path), transcript=transcript)

    def _reply(self, messages):
        with self._lock:
            if self._cursor >= len(self._recorded):
                raise ScriptExhaustedError("transcript exhausted")
            expected = self._recorded[self._cursor]
            if [m.to_json() for m in messages] != [
                m.to_json() for m in expected.request
            ]:
                raise ReplayMismatchError(
                    f"request differs from recording at exchange {self._cursor}"
                )
            self._cursor += 1
            return expected.response


def _encode_image(image_ref: str) -> str:
    """Inline a local file as a data URL; pass non-file refs through."""
    if os.path.isfile(image_ref):
        mime = mimetypes.guess_type(image_ref)[0] or "application/octet-stream"
        with open(image_ref, "rb") as handle:
            payload = base64.b64encode(handle.read()).decode("ascii")
        return f"data:{mime};base64,{payload}"
    return image_ref


def build_request_body(config: ChatBackendConfig, messages: list[ChatMessage]) -> dict:
    """OpenAI chat-completions body; a pure function of (config, messages)."""
    wire = []
    for message in messages:
        if message.image_ref is None:
            wire.append({"role": message.role, "content": message.text})
        else:
            parts = []
            if message.text:
                parts.append({"type": "text", "text": message.text})
            parts.append(
                {
                    "type": "image_url",
                    "image_url": {"url": _encode_image(message.image_ref)},
                }
            )
            wire.append({"role": message.role, "content": parts})
    return {
        "model": config.model_name,
        "temperature": config.temperature,
        "messages": wire,
    }


class HttpBackend(ChatBackend):
    """OpenAI-compatible chat-completions client with transport retries.

    Transport failures retry with exponential backoff up to max_retries;
    non-2xx responses surface immediately.
    """

    kind = "http"

    def __init__(self, config: ChatBackendConfig, transcript=None, api_key=None):
        if config.kind != "http":
            raise ValueError("HttpBackend requires kind='http'")
        super().__init__(transcript)
        self.config = config
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY)

    def _url(self) -> str:
        endpoint = self.config.endpoint.rstrip("/")
        if endpoint.endswith("/chat/completions"):
            return endpoint
        return endpoint + "/chat/completions"

    def _reply(self, messages):
        body = build_request_body(self.config, messages)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error = None
        for attempt in range(self.config.max_retries):
            try:
                response = requests.post(
                    self._url(),
                    json=body,
                    headers=headers,
                    timeout=self.config.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                time.sleep(self.config.retry_backoff * (2**attempt))
                continue
            if not 200 <= response.status_code < 300:
                raise BackendUnreachableError(
                    f"backend returned HTTP {response.status_code}"
                )
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendUnreachableError("malformed backend response") from exc
        raise BackendUnreachableError(
            f"transport failed after {self.config.max_retries} attempts: {last_error}"
        )


class YesNo(enum.Enum):
    AFFIRMATIVE = "affirmative"
    NEGATIVE = "negative"
    AMBIGUOUS = "ambiguous"


_FIRST_WORD = re.compile(r"[A-Za-z]+")


def parse_yes_no(reply: str) -> YesNo:
    """Classify a reply by its first alphabetic token; total and deterministic."""
    match = _FIRST_WORD.search(reply)
    if match is None:
        return YesNo.AMBIGUOUS
    word = match.group(0).lower()
    if word == "yes":
        return YesNo.AFFIRMATIVE
    if word == "no":
        return YesNo.NEGATIVE
    return YesNo.AMBIGUOUS
