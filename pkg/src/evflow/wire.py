"""Wire protocol for the two backend routes.

Chat: POST {chat_endpoint}/chat/completions, messages carry text parts and
PNG data URLs. Embeddings: POST {embed_endpoint}/embeddings, input items
are either plain strings or {"type": "image_base64", "data": ...}, a
declared extension of the text-only embeddings convention so one endpoint
serves both encoders.
"""

import base64
import io
from typing import Any

import numpy as np
from PIL import Image

from .errors import ProtocolError
from .types import Raster

CHAT_PATH = "/chat/completions"
EMBEDDINGS_PATH = "/embeddings"

DATA_URL_PREFIX = "data:image/png;base64,"


def png_base64(raster: Raster) -> str:
    img = Image.frombytes("RGB", (raster.width, raster.height), raster.data)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png_base64(b64: str) -> Raster:
    try:
        blob = base64.b64decode(b64, validate=True)
        img = Image.open(io.BytesIO(blob))
        img = img.convert("RGB")
    except Exception as exc:
        raise ProtocolError(f"undecodable image payload: {exc}") from exc
    return Raster.from_array(np.asarray(img, dtype=np.uint8))


def build_chat_request(
    model: str,
    messages: list[dict[str, Any]],
    temperature: float,
    max_tokens: int,
) -> dict[str, Any]:
    """`messages` must already be in wire shape; see ChatMessage.to_wire."""
    return {
        "model": model,
        "messages": messages,
        "temperature": temperature,
        "max_tokens": max_tokens,
    }


def parse_chat_response(payload: Any) -> tuple[str, dict[str, int]]:
    try:
        text = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"chat response missing choices[0].message.content: {exc}") from exc
    if not isinstance(text, str):
        raise ProtocolError(f"chat content is {type(text).__name__}, expected string")
    usage = payload.get("usage") if isinstance(payload, dict) else None
    if not isinstance(usage, dict):
        usage = {}
    return text, {
        "prompt_tokens": int(usage.get("prompt_tokens", 0)),
        "completion_tokens": int(usage.get("completion_tokens", 0)),
    }


def build_embeddings_request(model: str, inputs: list[str | Raster]) -> dict[str, Any]:
    items: list[Any] = []
    for item in inputs:
        if isinstance(item, Raster):
            items.append({"type": "image_base64", "data": png_base64(item)})
        else:
            items.append(item)
    return {"model": model, "input": items}


def parse_embeddings_response(payload: Any, expected_count: int) -> list[list[float]]:
    try:
        data = payload["data"]
        vectors = [row["embedding"] for row in data]
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"embeddings response missing data[i].embedding: {exc}") from exc
    if len(vectors) != expected_count:
        raise ProtocolError(f"expected {expected_count} embeddings, got {len(vectors)}")
    out = []
    for vec in vectors:
        if not isinstance(vec, list) or not vec:
            raise ProtocolError("embedding must be a non-empty list of numbers")
        out.append([float(v) for v in vec])
    return out


_TEXT_PART_SCHEMA = {
    "type": "object",
    "required": ["type", "text"],
    "properties": {"type": {"const": "text"}, "text": {"type": "string"}},
    "additionalProperties": False,
}

_IMAGE_PART_SCHEMA = {
    "type": "object",
    "required": ["type", "image_url"],
    "properties": {
        "type": {"const": "image_url"},
        "image_url": {
            "type": "object",
            "required": ["url"],
            "properties": {"url": {"type": "string", "pattern": "^data:image/png;base64,"}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

CHAT_REQUEST_SCHEMA = {
    "type": "object",
    "required": ["model", "messages", "temperature", "max_tokens"],
    "properties": {
        "model": {"type": "string"},
        "temperature": {"type": "number"},
        "max_tokens": {"type": "integer", "minimum": 1},
        "messages": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["role", "content"],
                "properties": {
                    "role": {"enum": ["system", "user", "assistant"]},
                    "content": {
                        "type": "array",
                        "minItems": 1,
                        "items": {"oneOf": [_TEXT_PART_SCHEMA, _IMAGE_PART_SCHEMA]},
                    },
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

EMBEDDINGS_REQUEST_SCHEMA = {
    "type": "object",
    "required": ["model", "input"],
    "properties": {
        "model": {"type": "string"},
        "input": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    {"type": "string", "minLength": 1},
                    {
                        "type": "object",
                        "required": ["type", "data"],
                        "properties": {
                            "type": {"const": "image_base64"},
                            "data": {"type": "string", "minLength": 1},
                        },
                        "additionalProperties": False,
                    },
                ]
            },
        },
    },
    "additionalProperties": False,
}
