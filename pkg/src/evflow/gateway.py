"""Backend clients for the two model capabilities, plus scripted replicas.

Two call shapes exist in the whole pipeline: `chat` (planner, arbitrator,
synthesizer) and `embed_text`/`embed_image` (dual-encoder scorer). Real
traffic goes over HTTP; tests and offline runs install the scripted
versions, which replay canned responses deterministically.
"""

import json
import logging
import threading
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import requests

from . import wire
from .errors import (
    DimensionMismatch,
    ModelError,
    ProtocolError,
    TransportError,
    ZeroVector,
)
from .types import EmbeddingVector, Raster

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    raster: Raster


Part = TextPart | ImagePart


@dataclass(frozen=True)
class ChatMessage:
    """One turn of a chat conversation; images ride only on user turns."""

    role: str
    parts: tuple[Part, ...]

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ProtocolError(f"unknown chat role {self.role!r}")
        if not self.parts:
            raise ProtocolError("chat message needs at least one part")
        if self.role != "user" and any(isinstance(p, ImagePart) for p in self.parts):
            raise ProtocolError(f"image parts are only allowed in user messages, not {self.role!r}")

    def text(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))

    def to_wire(self) -> dict[str, Any]:
        content: list[dict[str, Any]] = []
        for p in self.parts:
            if isinstance(p, TextPart):
                content.append({"type": "text", "text": p.text})
            else:
                url = wire.DATA_URL_PREFIX + wire.png_base64(p.raster)
                content.append({"type": "image_url", "image_url": {"url": url}})
        return {"role": self.role, "content": content}


def user_message(*parts: Part | str) -> ChatMessage:
    """Convenience: bare strings become text parts."""
    wrapped = tuple(TextPart(p) if isinstance(p, str) else p for p in parts)
    return ChatMessage(role="user", parts=wrapped)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: dict[str, int] = field(default_factory=dict)


def messages_text(messages: list[ChatMessage]) -> str:
    """All text content across all turns, used for scripted rule matching."""
    return "\n".join(m.text() for m in messages)


def _post(url: str, body: dict[str, Any], api_key: str | None, timeout: float) -> Any:
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    attempts = 0
    while True:
        attempts += 1
        try:
            resp = requests.post(url, json=body, headers=headers, timeout=timeout)
        except requests.Timeout as exc:
            # one retry on timeout only; everything else fails fast
            if attempts == 1:
                logger.warning("timeout talking to %s, retrying once", url)
                continue
            raise TransportError(f"timeout talking to {url}") from exc
        except requests.RequestException as exc:
            raise TransportError(f"cannot reach {url}: {exc}") from exc
        if resp.status_code >= 400:
            raise ModelError(resp.status_code, resp.text)
        try:
            return resp.json()
        except (json.JSONDecodeError, ValueError) as exc:
            raise ProtocolError(f"non-JSON response from {url}") from exc


class HttpChatClient:
    """Chat-completions client; safe for concurrent calls."""

    def __init__(self, endpoint: str, model: str, api_key: str | None = None, timeout: float = 60.0):
        if not endpoint:
            raise ProtocolError("chat endpoint not configured")
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout

    def chat(self, messages: list[ChatMessage], temperature: float, max_tokens: int) -> ChatResponse:
        if not messages:
            raise ProtocolError("no messages")
        body = wire.build_chat_request(
            self.model, [m.to_wire() for m in messages], temperature, max_tokens
        )
        payload = _post(self.endpoint + wire.CHAT_PATH, body, self.api_key, self.timeout)
        text, usage = wire.parse_chat_response(payload)
        return ChatResponse(text=text, usage=usage)


class _DimsGuard:
    """Rejects mixed embedding sizes within one client session."""

    def __init__(self):
        self._expected: int | None = None
        self._lock = threading.Lock()

    def check(self, dims: int):
        with self._lock:
            if self._expected is None:
                self._expected = dims
            elif dims != self._expected:
                raise DimensionMismatch(self._expected, dims)


class HttpEmbeddingClient:
    """Embeddings client; normalizes every returned vector client-side."""

    def __init__(self, endpoint: str, model: str, api_key: str | None = None, timeout: float = 60.0):
        if not endpoint:
            raise ProtocolError("embeddings endpoint not configured")
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self._guard = _DimsGuard()

    def _embed_one(self, item: str | Raster) -> EmbeddingVector:
        body = wire.build_embeddings_request(self.model, [item])
        payload = _post(self.endpoint + wire.EMBEDDINGS_PATH, body, self.api_key, self.timeout)
        values = wire.parse_embeddings_response(payload, expected_count=1)[0]
        self._guard.check(len(values))
        return EmbeddingVector(values=tuple(values)).normalize()

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise ProtocolError("cannot embed empty text")
        return self._embed_one(text)

    def embed_image(self, raster: Raster) -> EmbeddingVector:
        return self._embed_one(raster)


@dataclass
class ChatRule:
    """One canned reply. `match` is a substring over all text parts,
    `at` pins the rule to an absolute call index; both None matches any
    call. Non-repeat rules are consumed on use."""

    reply: str
    match: str | None = None
    at: int | None = None
    repeat: bool = False


class ScriptedChat:
    """Deterministic chat replica driven by an ordered rule list."""

    def __init__(self, rules: list[ChatRule]):
        self._rules = list(rules)
        self._lock = threading.Lock()
        self.calls = 0
        self.transcript: list[list[ChatMessage]] = []

    def chat(self, messages: list[ChatMessage], temperature: float, max_tokens: int) -> ChatResponse:
        if not messages:
            raise ProtocolError("no messages")
        text = messages_text(messages)
        with self._lock:
            index = self.calls
            self.calls += 1
            self.transcript.append(list(messages))
            for i, rule in enumerate(self._rules):
                if rule.at is not None and rule.at != index:
                    continue
                if rule.match is not None and rule.match not in text:
                    continue
                if not rule.repeat:
                    del self._rules[i]
                return ChatResponse(text=rule.reply, usage={"prompt_tokens": 0, "completion_tokens": 0})
        raise ProtocolError(f"no scripted reply for chat call {index}; prompt began {text[:80]!r}")


class ScriptedEmbedder:
    """Deterministic embedding replica.

    Text inputs are looked up by the string itself, images by the raster
    content digest, so the table survives PNG round trips.
    """

    def __init__(self, table: dict[str, Any], default: Any = None):
        self._table = {k: tuple(float(x) for x in v) for k, v in table.items()}
        self._default = tuple(float(x) for x in default) if default is not None else None
        self._lock = threading.Lock()
        self._guard = _DimsGuard()
        self.text_calls = 0
        self.image_calls = 0
        self.seen_keys: list[str] = []

    def _lookup(self, key: str) -> EmbeddingVector:
        values = self._table.get(key, self._default)
        if values is None:
            raise ProtocolError(f"no scripted embedding for key {key[:48]!r}")
        self._guard.check(len(values))
        return EmbeddingVector(values=values).normalize()

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise ProtocolError("cannot embed empty text")
        with self._lock:
            self.text_calls += 1
            self.seen_keys.append(text)
        return self._lookup(text)

    def embed_image(self, raster: Raster) -> EmbeddingVector:
        key = raster.digest
        with self._lock:
            self.image_calls += 1
            self.seen_keys.append(key)
        return self._lookup(key)


@dataclass(frozen=True)
class BackendScript:
    """Serializable bundle of chat rules plus an embedding table.

    JSON shape:
      {"chat": [{"reply": ..., "match": ..., "at": ..., "repeat": ...}],
       "embeddings": {"<text or digest>": [floats]},
       "default_embedding": [floats]}
    """

    chat_rules: tuple[ChatRule, ...] = ()
    embeddings: dict[str, tuple[float, ...]] = field(default_factory=dict)
    default_embedding: tuple[float, ...] | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BackendScript":
        rules = tuple(
            ChatRule(
                reply=r["reply"],
                match=r.get("match"),
                at=r.get("at"),
                repeat=bool(r.get("repeat", False)),
            )
            for r in data.get("chat", [])
        )
        table = {k: tuple(float(x) for x in v) for k, v in data.get("embeddings", {}).items()}
        default = data.get("default_embedding")
        return cls(
            chat_rules=rules,
            embeddings=table,
            default_embedding=tuple(float(x) for x in default) if default is not None else None,
        )

    @classmethod
    def load(cls, path: str) -> "BackendScript":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "chat": [
                {
                    k: v
                    for k, v in (
                        ("reply", r.reply),
                        ("match", r.match),
                        ("at", r.at),
                        ("repeat", r.repeat),
                    )
                    if v is not None and v is not False
                }
                for r in self.chat_rules
            ],
            "embeddings": {k: list(v) for k, v in self.embeddings.items()},
        }
        if self.default_embedding is not None:
            out["default_embedding"] = list(self.default_embedding)
        return out

    def make_chat(self) -> ScriptedChat:
        return ScriptedChat(list(self.chat_rules))

    def make_embedder(self) -> ScriptedEmbedder:
        return ScriptedEmbedder(dict(self.embeddings), default=self.default_embedding)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dims != b.dims:
        raise DimensionMismatch(a.dims, b.dims)
    va = a.as_array()
    vb = b.as_array()
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine undefined for zero vectors")
    return float(np.dot(va, vb) / (na * nb))
