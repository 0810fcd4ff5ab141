"""Deterministic stub backend: images are seeded hash states.

The published stub functions, reproducible across processes and platforms
(integer-only hash math; the only float operation is one final division per
label, so no accumulation-order dependence):

- initial images are ``stub-0000`` .. ``stub-{N-1:04d}`` with state
  ``sha256("diffex-stub/1|<seed>|<image_id>")``,
- an edit folds the canonical JSON of (semantics, params) into the state:
  ``state' = sha256(state + b"|edit|" + canonical)``; the edited image id is
  the first 32 hex chars of the new state; an empty edit returns the same
  image unchanged,
- classify hashes the state against each label:
  ``h_k = int(sha256(state + b"|classify|" + label)[:8]) + 1`` and returns the
  probabilities ``h_k / sum(h)``.

Any prompt fragment is a valid semantic (the vocabulary is open); unknown
image ids are rejected with the ``unknown_image`` code.
"""

from __future__ import annotations

import hashlib
import json
import threading
from typing import Sequence

from .config import AdapterConfig
from .errors import RequestError

STATE_NAMESPACE = "diffex-stub/1"


def canonical_edit_blob(semantics: Sequence[tuple[str, str]], params: dict) -> bytes:
    doc = {
        "semantics": [[fragment, guidance] for fragment, guidance in semantics],
        "params": {
            "edit_threshold": params["edit_threshold"],
            "skipped_steps": params["skipped_steps"],
            "seed": params["seed"],
        },
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


class StubModel:
    """In-memory model for stub mode; thread-safe."""

    def __init__(self, config: AdapterConfig):
        self.config = config
        self.labels = config.labels
        self.value_space = "probability"
        self.domains = config.domains
        self._lock = threading.Lock()
        self._states: dict[str, bytes] = {}
        for k in range(config.image_count):
            image_id = f"stub-{k:04d}"
            seedline = f"{STATE_NAMESPACE}|{config.seed}|{image_id}".encode("utf-8")
            self._states[image_id] = hashlib.sha256(seedline).digest()

    def image_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._states)[: self.config.image_count]

    def _state(self, image_id: str) -> bytes:
        with self._lock:
            state = self._states.get(image_id)
        if state is None:
            raise RequestError("unknown_image", f"image {image_id!r} not known to this adapter")
        return state

    def edit(self, image_id: str, semantics: Sequence[tuple[str, str]], params: dict) -> str:
        state = self._state(image_id)
        if not semantics:
            return image_id  # identity: same content, same digest
        new_state = hashlib.sha256(state + b"|edit|" + canonical_edit_blob(semantics, params)).digest()
        new_id = new_state.hex()[:32]
        with self._lock:
            self._states[new_id] = new_state
        return new_id

    def classify(self, image_id: str) -> list[float]:
        state = self._state(image_id)
        counts = [
            int.from_bytes(
                hashlib.sha256(state + b"|classify|" + label.encode("utf-8")).digest()[:8], "big"
            )
            + 1
            for label in self.labels
        ]
        total = sum(counts)
        return [count / total for count in counts]
