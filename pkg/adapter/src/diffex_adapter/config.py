"""Adapter configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import AdapterStartupError

MODES = ("stub", "real")


@dataclass(frozen=True)
class AdapterConfig:
    """How the adapter serves: a deterministic stub or real models.

    Stub mode needs no model fields and is the contract surface exercised in
    CI; real mode wraps a text-guided diffusion editor plus an image
    classifier and is best-effort.
    """

    mode: str = "stub"
    labels: tuple[str, ...] = ("negative", "positive")
    value_space: str = "probability"
    domains: tuple[str, ...] = ("stub",)
    seed: int = 0
    image_count: int = 8
    # real mode only
    editor_model: str = ""
    classifier_model: str = ""
    image_dir: str = ""
    device: str = "cpu"

    def __post_init__(self):
        if self.mode not in MODES:
            raise AdapterStartupError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.labels:
            raise AdapterStartupError("at least one class label is required")
        if self.mode == "real":
            missing = [
                name
                for name, value in (
                    ("editor_model", self.editor_model),
                    ("classifier_model", self.classifier_model),
                    ("image_dir", self.image_dir),
                )
                if not value
            ]
            if missing:
                raise AdapterStartupError(f"real mode requires {', '.join(missing)}")
