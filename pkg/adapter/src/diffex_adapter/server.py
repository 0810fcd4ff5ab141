"""HTTP server implementing the backend wire protocol over a model.

A "model" is anything with ``labels``, ``value_space``, ``domains``,
``edit(image_id, semantics, params) -> edited_image_id`` and
``classify(image_id) -> values``; the stub and real modes both satisfy this.
Edit responses carry an ``X-Edit-Params`` debug header echoing the parameters
actually forwarded to the editor.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import RequestError

PROTOCOL_VERSION = "diffex-backend/1"


def _parse_params(raw) -> dict:
    if not isinstance(raw, dict):
        raise RequestError("bad_params", "'params' must be an object")
    try:
        threshold = float(raw["edit_threshold"])
        seed = int(raw["seed"])
        skipped = int(raw.get("skipped_steps", 25))
    except (KeyError, TypeError, ValueError) as exc:
        raise RequestError("bad_params", f"bad params: {exc}") from exc
    if not 0.0 <= threshold <= 1.0:
        raise RequestError("bad_params", f"edit_threshold must be in [0,1], got {threshold}")
    if skipped < 0:
        raise RequestError("bad_params", f"skipped_steps must be >= 0, got {skipped}")
    return {"edit_threshold": threshold, "skipped_steps": skipped, "seed": seed}


def _parse_semantics(raw) -> list[tuple[str, str]]:
    if not isinstance(raw, list):
        raise RequestError("bad_params", "'semantics' must be a list")
    semantics = []
    for item in raw:
        if not isinstance(item, dict) or "prompt_fragment" not in item:
            raise RequestError("bad_params", "each semantic needs a 'prompt_fragment'")
        guidance = item.get("guidance", "add")
        if guidance not in ("add", "remove"):
            raise RequestError("bad_params", f"guidance must be 'add' or 'remove', got {guidance!r}")
        semantics.append((str(item["prompt_fragment"]), guidance))
    return semantics


def _edit_one(model, body: dict) -> tuple[dict, dict]:
    request_id = body.get("request_id", "")
    image_id = body.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        raise RequestError("bad_params", "'image_id' must be a non-empty string")
    semantics = _parse_semantics(body.get("semantics", []))
    params = _parse_params(body.get("params", {}))
    edited = model.edit(image_id, semantics, params)
    return {"request_id": request_id, "edited_image_id": edited}, params


def _classify_one(model, body: dict) -> dict:
    request_id = body.get("request_id", "")
    image_id = body.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        raise RequestError("bad_params", "'image_id' must be a non-empty string")
    values = model.classify(image_id)
    return {"request_id": request_id, "labels": list(model.labels), "values": list(values)}


class _Handler(BaseHTTPRequestHandler):
    server_version = "diffex-adapter"
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):
        pass

    def _send(self, status: int, payload, headers: dict | None = None) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        for name, value in (headers or {}).items():
            self.send_header(name, value)
        self.end_headers()
        self.wfile.write(data)

    def _error(self, request_id: str, code: str, message: str) -> None:
        status = 500 if code == "internal" else 400
        self._send(status, {"request_id": request_id, "error": {"code": code, "message": message}})

    def do_POST(self):  # noqa: N802 (http.server naming)
        model = self.server.model  # type: ignore[attr-defined]
        announced = self.server.announced_protocol  # type: ignore[attr-defined]
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b"{}"
        try:
            body = json.loads(raw.decode("utf-8")) if raw.strip() else {}
        except (ValueError, UnicodeDecodeError):
            self._error("", "bad_params", "request body must be JSON")
            return
        route = self.path.rstrip("/")
        request_id = body.get("request_id", "") if isinstance(body, dict) else ""
        try:
            if route == "/v1/handshake":
                self._send(
                    200,
                    {
                        "protocol": announced,
                        "labels": list(model.labels),
                        "value_space": model.value_space,
                        "domains": list(model.domains),
                    },
                )
            elif route == "/v1/edit":
                payload, params = _edit_one(model, body)
                self._send(200, payload, headers={"X-Edit-Params": json.dumps(params, sort_keys=True)})
            elif route == "/v1/classify":
                self._send(200, _classify_one(model, body))
            elif route == "/v1/edit_batch":
                self._send(200, self._batch(model, body, lambda m, item: _edit_one(m, item)[0]))
            elif route == "/v1/classify_batch":
                self._send(200, self._batch(model, body, _classify_one))
            else:
                self._error(request_id, "bad_params", f"unknown route {self.path!r}")
        except RequestError as exc:
            self._error(request_id, exc.code, str(exc))
        except Exception as exc:  # pragma: no cover - defensive
            self._error(request_id, "internal", f"{type(exc).__name__}: {exc}")

    @staticmethod
    def _batch(model, body, one):
        if not isinstance(body, list):
            raise RequestError("bad_params", "batch body must be a JSON array")
        results = []
        for item in body:
            try:
                results.append(one(model, item))
            except RequestError as exc:
                results.append(
                    {
                        "request_id": item.get("request_id", "") if isinstance(item, dict) else "",
                        "error": {"code": exc.code, "message": str(exc)},
                    }
                )
        return results


class AdapterServer:
    """Start/stop wrapper around the threaded HTTP server."""

    def __init__(self, model, host: str = "127.0.0.1", port: int = 0, *, announced_protocol: str = PROTOCOL_VERSION):
        self._http = ThreadingHTTPServer((host, port), _Handler)
        self._http.daemon_threads = True
        self._http.model = model  # type: ignore[attr-defined]
        self._http.announced_protocol = announced_protocol  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._http.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self._http.server_address[0]}:{self.port}"

    def start(self) -> "AdapterServer":
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

    def __enter__(self) -> "AdapterServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
