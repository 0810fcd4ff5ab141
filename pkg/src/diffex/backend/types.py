"""Shared backend value types and the session protocol."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from ..errors import ProtocolError

PROTOCOL_VERSION = "diffex-backend/1"
VALUE_SPACES = ("logit", "probability")
DEFAULT_SKIPPED_STEPS = 25


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ImageRef:
    """Opaque handle to an image held by a backend. Never carries pixels."""

    id: str
    domain: str = ""
    origin: str = "original"  # "original" | "edited"
    parent_id: str | None = None

    def __post_init__(self):
        if self.origin not in ("original", "edited"):
            raise ValueError(f"origin must be 'original' or 'edited', got {self.origin!r}")
        if self.origin == "edited" and not self.parent_id:
            raise ValueError("edited images must carry parent_id")


@dataclass(frozen=True)
class EditParams:
    """Edit hyperparameters forwarded to the backend.

    The seed has no wall-clock default on purpose: runs must be reproducible
    from their recorded configuration alone.
    """

    edit_threshold: float
    seed: int
    skipped_steps: int = DEFAULT_SKIPPED_STEPS

    def __post_init__(self):
        if not 0.0 <= self.edit_threshold <= 1.0:
            raise ValueError(f"edit_threshold must be in [0,1], got {self.edit_threshold}")
        if self.skipped_steps < 0 or int(self.skipped_steps) != self.skipped_steps:
            raise ValueError(f"skipped_steps must be a non-negative integer, got {self.skipped_steps}")

    def digest(self) -> str:
        return digest(
            {
                "edit_threshold": self.edit_threshold,
                "skipped_steps": self.skipped_steps,
                "seed": self.seed,
            }
        )

    def to_dict(self) -> dict:
        return {
            "edit_threshold": self.edit_threshold,
            "skipped_steps": self.skipped_steps,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class EditInstruction:
    """One semantic to apply: the edit-driving text plus its direction."""

    prompt_fragment: str
    guidance: str = "add"

    def __post_init__(self):
        if self.guidance not in ("add", "remove"):
            raise ValueError(f"guidance must be 'add' or 'remove', got {self.guidance!r}")


@dataclass(frozen=True)
class ClassifierOutput:
    class_labels: tuple[str, ...]
    values: tuple[float, ...]
    value_space: str  # "logit" | "probability"

    def __post_init__(self):
        if len(self.class_labels) != len(self.values):
            raise ValueError("class_labels and values must have equal length")
        if self.value_space not in VALUE_SPACES:
            raise ValueError(f"value_space must be one of {VALUE_SPACES}")
        if self.value_space == "probability":
            if any(not 0.0 <= v <= 1.0 for v in self.values):
                raise ValueError("probabilities must lie in [0,1]")
            if abs(math.fsum(self.values) - 1.0) > 1e-6:
                raise ValueError("probabilities must sum to 1 within 1e-6")

    def value_for(self, label: str) -> float:
        try:
            return self.values[self.class_labels.index(label)]
        except ValueError:
            raise ProtocolError(
                "bad_params",
                f"unknown label {label!r}; valid labels: {list(self.class_labels)}",
            ) from None


@runtime_checkable
class BackendSession(Protocol):
    """Uniform surface over edit/classify backends.

    Implementations must be deterministic given a seed and safe for
    concurrent calls; telemetry counters are exact request counts.
    """

    labels: tuple[str, ...]
    value_space: str
    domains: tuple[str, ...]

    def edit(self, image: ImageRef, semantics: Sequence[EditInstruction], params: EditParams) -> ImageRef: ...

    def classify(self, image: ImageRef) -> ClassifierOutput: ...

    def telemetry(self) -> dict: ...


def edit(session: BackendSession, image: ImageRef, semantics: Sequence[EditInstruction], params: EditParams) -> ImageRef:
    """Apply ``semantics`` to ``image``, returning the edited image handle."""
    return session.edit(image, semantics, params)


def classify(session: BackendSession, image: ImageRef, target_class: str | None = None) -> ClassifierOutput:
    """Classify ``image``; when given, ``target_class`` must be a known label."""
    if target_class is not None and target_class not in session.labels:
        raise ProtocolError(
            "bad_params",
            f"unknown label {target_class!r}; valid labels: {list(session.labels)}",
        )
    return session.classify(image)
