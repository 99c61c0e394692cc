"""In-process HTTP stub implementing both backend routes.

Serves a BackendScript over real sockets so the HTTP clients can be
exercised end to end. Every request body is validated against the wire
schemas and the outcome recorded, which is how protocol conformance is
checked in tests.
"""

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

import jsonschema

from . import wire
from .gateway import BackendScript, ScriptedChat, user_message

logger = logging.getLogger(__name__)


class StubServer:
    """Scripted backend behind 127.0.0.1:<ephemeral port>.

    `fail_status`, when set, makes every request return that HTTP status;
    used to exercise client error paths.
    """

    def __init__(self, script: BackendScript, fail_status: int | None = None):
        self.script = script
        self.fail_status = fail_status
        self.requests: list[dict[str, Any]] = []
        self._chat: ScriptedChat = script.make_chat()
        self._lock = threading.Lock()
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        assert self._httpd is not None, "server not started"
        return f"http://127.0.0.1:{self._httpd.server_address[1]}"

    def start(self) -> "StubServer":
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # silence default stderr chatter
                logger.debug("stub: " + fmt, *args)

            def _send(self, status: int, payload: dict[str, Any]):
                blob = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(blob)))
                self.end_headers()
                self.wfile.write(blob)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length)
                try:
                    body = json.loads(raw)
                except json.JSONDecodeError:
                    self._send(400, {"error": "request body is not JSON"})
                    return
                if outer.fail_status is not None:
                    outer._record(self.path, body, False, ["forced failure"])
                    self._send(outer.fail_status, {"error": f"forced {outer.fail_status}"})
                    return
                if self.path == wire.CHAT_PATH:
                    self._handle(body, wire.CHAT_REQUEST_SCHEMA, outer._chat_reply)
                elif self.path == wire.EMBEDDINGS_PATH:
                    self._handle(body, wire.EMBEDDINGS_REQUEST_SCHEMA, outer._embed_reply)
                else:
                    self._send(404, {"error": f"unknown path {self.path}"})

            def _handle(self, body, schema, responder):
                try:
                    jsonschema.validate(body, schema)
                except jsonschema.ValidationError as exc:
                    outer._record(self.path, body, False, [exc.message])
                    self._send(400, {"error": f"schema violation: {exc.message}"})
                    return
                outer._record(self.path, body, True, [])
                try:
                    self._send(200, responder(body))
                except Exception as exc:
                    self._send(500, {"error": str(exc)})

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self) -> "StubServer":
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _record(self, path: str, body: Any, valid: bool, errors: list[str]):
        with self._lock:
            self.requests.append({"path": path, "body": body, "valid": valid, "errors": errors})

    def _chat_reply(self, body: dict[str, Any]) -> dict[str, Any]:
        text = "\n".join(
            part["text"]
            for message in body["messages"]
            for part in message["content"]
            if part.get("type") == "text"
        )
        response = self._chat.chat([user_message(text)], body["temperature"], body["max_tokens"])
        return {
            "choices": [{"message": {"role": "assistant", "content": response.text}}],
            "usage": {"prompt_tokens": 0, "completion_tokens": 0},
        }

    def _embed_reply(self, body: dict[str, Any]) -> dict[str, Any]:
        # raw script vectors go over the wire; normalization and the
        # dimension guard are the client's job
        data = []
        for item in body["input"]:
            if isinstance(item, str):
                key = item
            else:
                key = wire.decode_png_base64(item["data"]).digest
            vec = self.script.embeddings.get(key, self.script.default_embedding)
            if vec is None:
                raise KeyError(f"no scripted embedding for {key[:48]!r}")
            data.append({"embedding": [float(v) for v in vec]})
        return {"data": data}
