"""Wire-protocol server wrapping an in-process backend session.

Serves handshake, edit, classify, and their batch variants over HTTP with
JSON bodies. Used to expose the synthetic world for end-to-end protocol tests
and the ``serve-synthetic`` CLI command. Connections are handled concurrently;
the wrapped session is responsible for its own thread safety.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..errors import ProtocolError
from .types import (
    PROTOCOL_VERSION,
    BackendSession,
    EditInstruction,
    EditParams,
    ImageRef,
)


def _edit_one(session: BackendSession, body: dict) -> dict:
    request_id = body.get("request_id", "")
    image_id = body.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        raise ProtocolError("bad_params", "'image_id' must be a non-empty string")
    raw_semantics = body.get("semantics", [])
    if not isinstance(raw_semantics, list):
        raise ProtocolError("bad_params", "'semantics' must be a list")
    try:
        semantics = [
            EditInstruction(s["prompt_fragment"], s.get("guidance", "add")) for s in raw_semantics
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError("bad_params", f"bad semantics entry: {exc}") from exc
    raw_params = body.get("params", {})
    try:
        params = EditParams(
            edit_threshold=float(raw_params["edit_threshold"]),
            seed=int(raw_params["seed"]),
            skipped_steps=int(raw_params.get("skipped_steps", 25)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError("bad_params", f"bad params: {exc}") from exc
    domain = session.domains[0] if session.domains else ""
    edited = session.edit(ImageRef(id=image_id, domain=domain), semantics, params)
    return {"request_id": request_id, "edited_image_id": edited.id}


def _classify_one(session: BackendSession, body: dict) -> dict:
    request_id = body.get("request_id", "")
    image_id = body.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        raise ProtocolError("bad_params", "'image_id' must be a non-empty string")
    domain = session.domains[0] if session.domains else ""
    out = session.classify(ImageRef(id=image_id, domain=domain))
    return {
        "request_id": request_id,
        "labels": list(out.class_labels),
        "values": list(out.values),
    }


class _Handler(BaseHTTPRequestHandler):
    server_version = "diffex-backend"
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):  # quiet by default
        pass

    def _send(self, status: int, payload) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _error(self, request_id: str, code: str, message: str) -> None:
        status = 500 if code == "internal" else 400
        self._send(status, {"request_id": request_id, "error": {"code": code, "message": message}})

    def do_POST(self):  # noqa: N802 (http.server naming)
        session = self.server.session  # type: ignore[attr-defined]
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b"{}"
        try:
            body = json.loads(raw.decode("utf-8")) if raw.strip() else {}
        except (ValueError, UnicodeDecodeError):
            self._error("", "bad_params", "request body must be JSON")
            return
        route = self.path.rstrip("/")
        try:
            if route == "/v1/handshake":
                self._send(
                    200,
                    {
                        "protocol": PROTOCOL_VERSION,
                        "labels": list(session.labels),
                        "value_space": session.value_space,
                        "domains": list(session.domains),
                    },
                )
            elif route == "/v1/edit":
                self._send(200, _edit_one(session, body))
            elif route == "/v1/classify":
                self._send(200, _classify_one(session, body))
            elif route == "/v1/edit_batch":
                self._send(200, self._batch(session, body, _edit_one))
            elif route == "/v1/classify_batch":
                self._send(200, self._batch(session, body, _classify_one))
            else:
                self._error("", "bad_params", f"unknown route {self.path!r}")
        except ProtocolError as exc:
            self._error(body.get("request_id", "") if isinstance(body, dict) else "", exc.code, str(exc))
        except Exception as exc:  # pragma: no cover - defensive
            self._error("", "internal", f"{type(exc).__name__}: {exc}")

    @staticmethod
    def _batch(session: BackendSession, body, one):
        if not isinstance(body, list):
            raise ProtocolError("bad_params", "batch body must be a JSON array")
        results = []
        for item in body:
            try:
                results.append(one(session, item))
            except ProtocolError as exc:
                results.append(
                    {
                        "request_id": item.get("request_id", "") if isinstance(item, dict) else "",
                        "error": {"code": exc.code, "message": str(exc)},
                    }
                )
        return results


class BackendServer:
    """Lifecycle wrapper: start/stop the HTTP server from code or the CLI."""

    def __init__(self, session: BackendSession, host: str = "127.0.0.1", port: int = 0):
        self._http = ThreadingHTTPServer((host, port), _Handler)
        self._http.daemon_threads = True
        self._http.session = session  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._http.server_address[1]

    @property
    def url(self) -> str:
        host = self._http.server_address[0]
        return f"http://{host}:{self.port}"

    def start(self) -> "BackendServer":
        self._thread = threading.Thread(target=self._http.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._http.shutdown()
        self._http.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def serve_forever(self) -> None:
        self._http.serve_forever()

    def __enter__(self) -> "BackendServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def serve_session(session: BackendSession, host: str = "127.0.0.1", port: int = 0) -> BackendServer:
    """Bind (but do not start) a wire-protocol server over ``session``."""
    return BackendServer(session, host=host, port=port)
