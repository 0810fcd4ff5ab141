"""HTTP client for remote edit/classify backends.

Speaks the versioned JSON wire protocol: handshake on connect, then
``/v1/edit`` and ``/v1/classify`` requests matched by request id. In-flight
concurrency is bounded by a semaphore, connection failures are retried up to a
configured budget, and protocol errors surface with their wire error codes.
"""

from __future__ import annotations

import itertools
import threading
import time
from dataclasses import dataclass
from typing import Sequence

import requests

from ..errors import IncompatibilityError, ProtocolError, TransportError
from .types import (
    PROTOCOL_VERSION,
    ClassifierOutput,
    EditInstruction,
    EditParams,
    ImageRef,
)


@dataclass(frozen=True)
class RemoteOptions:
    timeout: float = 10.0
    max_in_flight: int = 4
    retries: int = 0
    backoff_s: float = 0.05


class RemoteSession:
    """Session over one remote backend endpoint."""

    def __init__(self, endpoint: str, auth: str | None = None, options: RemoteOptions | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.options = options or RemoteOptions()
        self._headers = {"Content-Type": "application/json"}
        if auth:
            self._headers["Authorization"] = f"Bearer {auth}"
        self._gate = threading.BoundedSemaphore(self.options.max_in_flight)
        self._request_ids = itertools.count(1)
        self._lock = threading.Lock()
        self._counters = {"edit_calls": 0, "classify_calls": 0, "handshake_calls": 0}

        body = self._post("/v1/handshake", {}, counter="handshake_calls")
        protocol = body.get("protocol")
        if protocol != PROTOCOL_VERSION:
            raise IncompatibilityError(PROTOCOL_VERSION, str(protocol), endpoint=self.endpoint)
        self.labels = tuple(body.get("labels", ()))
        self.value_space = body.get("value_space", "logit")
        self.domains = tuple(body.get("domains", ()))

    def telemetry(self) -> dict:
        with self._lock:
            return dict(self._counters)

    def _next_request_id(self) -> str:
        return f"req-{next(self._request_ids)}"

    def _post(self, path: str, body: dict, *, counter: str) -> dict:
        url = self.endpoint + path
        attempts = 0
        budget = self.options.retries
        while True:
            attempts += 1
            with self._lock:
                self._counters[counter] += 1
            try:
                with self._gate:
                    response = requests.post(
                        url, json=body, headers=self._headers, timeout=self.options.timeout
                    )
            except (requests.ConnectionError, requests.Timeout) as exc:
                if attempts > budget:
                    raise TransportError(
                        f"backend unreachable at {url} after {attempts} attempt(s): {exc}",
                        endpoint=self.endpoint,
                        attempts=attempts,
                        retryable=True,
                    ) from exc
                time.sleep(self.options.backoff_s * attempts)
                continue
            try:
                payload = response.json()
            except ValueError as exc:
                raise TransportError(
                    f"non-JSON response from {url} (status {response.status_code})",
                    endpoint=self.endpoint,
                    attempts=attempts,
                    retryable=False,
                ) from exc
            error = payload.get("error")
            if error:
                raise ProtocolError(error.get("code", "internal"), error.get("message", ""))
            if response.status_code != 200:
                raise TransportError(
                    f"unexpected status {response.status_code} from {url}",
                    endpoint=self.endpoint,
                    attempts=attempts,
                    retryable=False,
                )
            return payload

    def edit(self, image: ImageRef, semantics: Sequence[EditInstruction], params: EditParams) -> ImageRef:
        request_id = self._next_request_id()
        body = {
            "request_id": request_id,
            "image_id": image.id,
            "semantics": [
                {"prompt_fragment": s.prompt_fragment, "guidance": s.guidance} for s in semantics
            ],
            "params": params.to_dict(),
        }
        payload = self._post("/v1/edit", body, counter="edit_calls")
        return ImageRef(
            id=payload["edited_image_id"],
            domain=image.domain or (self.domains[0] if self.domains else ""),
            origin="edited",
            parent_id=image.id,
        )

    def classify(self, image: ImageRef) -> ClassifierOutput:
        request_id = self._next_request_id()
        payload = self._post(
            "/v1/classify", {"request_id": request_id, "image_id": image.id}, counter="classify_calls"
        )
        return ClassifierOutput(
            class_labels=tuple(payload["labels"]),
            values=tuple(float(v) for v in payload["values"]),
            value_space=self.value_space,
        )


def connect_remote_backend(
    endpoint: str,
    auth: str | None = None,
    *,
    options: RemoteOptions | None = None,
) -> RemoteSession:
    """Handshake with ``endpoint`` and return a session bound to it."""
    return RemoteSession(endpoint, auth=auth, options=options)
