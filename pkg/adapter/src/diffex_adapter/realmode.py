"""Best-effort real mode: a text-guided diffusion editor plus an image
classifier behind the same model surface as the stub.

Excluded from CI on purpose: it needs GPU-class hardware and model downloads.
Imports are lazy so the stub path never touches them. Image bytes never leave
this process; ids are content digests of the encoded image.
"""

from __future__ import annotations

import hashlib
import io
import threading
from pathlib import Path
from typing import Sequence

from .config import AdapterConfig
from .errors import AdapterStartupError, RequestError


class RealModel:
    def __init__(self, config: AdapterConfig):
        try:
            import torch  # noqa: F401
            from diffusers import LEditsPPPipelineStableDiffusionXL
            from PIL import Image
            from transformers import pipeline as hf_pipeline
        except ImportError as exc:
            raise AdapterStartupError(
                f"real mode needs torch, diffusers, transformers and Pillow: {exc}"
            ) from exc

        self._Image = Image
        self.config = config
        self.labels = config.labels
        self.value_space = "probability"
        self.domains = config.domains
        self._gpu_lock = threading.Lock()  # GPU work is serialized

        try:
            self._editor = LEditsPPPipelineStableDiffusionXL.from_pretrained(config.editor_model)
            self._editor.to(config.device)
            self._classifier = hf_pipeline(
                "image-classification", model=config.classifier_model, device=config.device
            )
        except Exception as exc:
            raise AdapterStartupError(f"model load failed: {exc}") from exc

        self._images: dict[str, bytes] = {}
        image_dir = Path(config.image_dir)
        for path in sorted(image_dir.iterdir()):
            if path.suffix.lower() in (".png", ".jpg", ".jpeg"):
                data = path.read_bytes()
                self._images[hashlib.sha256(data).hexdigest()[:32]] = data
        if not self._images:
            raise AdapterStartupError(f"no images found under {image_dir}")

    def image_ids(self) -> list[str]:
        return sorted(self._images)

    def _load(self, image_id: str):
        data = self._images.get(image_id)
        if data is None:
            raise RequestError("unknown_image", f"image {image_id!r} not known to this adapter")
        return self._Image.open(io.BytesIO(data)).convert("RGB")

    def edit(self, image_id: str, semantics: Sequence[tuple[str, str]], params: dict) -> str:
        image = self._load(image_id)
        if not semantics:
            return image_id
        prompts = [fragment for fragment, _ in semantics]
        reverse = [guidance == "remove" for _, guidance in semantics]
        with self._gpu_lock:
            import torch

            generator = torch.Generator(device="cpu").manual_seed(int(params["seed"]))
            self._editor.invert(image=image, num_inversion_steps=50, skip=0.0, generator=generator)
            # edit_threshold and skipped_steps are forwarded verbatim; the
            # X-Edit-Params response header echoes them for audit.
            result = self._editor(
                editing_prompt=prompts,
                reverse_editing_direction=reverse,
                edit_threshold=[float(params["edit_threshold"])] * len(prompts),
                edit_warmup_steps=[int(params["skipped_steps"])] * len(prompts),
                generator=generator,
            ).images[0]
        buffer = io.BytesIO()
        result.save(buffer, format="PNG")
        data = buffer.getvalue()
        new_id = hashlib.sha256(data).hexdigest()[:32]
        self._images[new_id] = data
        return new_id

    def classify(self, image_id: str) -> list[float]:
        image = self._load(image_id)
        with self._gpu_lock:
            raw = self._classifier(image, top_k=None)
        by_label = {entry["label"]: float(entry["score"]) for entry in raw}
        missing = [label for label in self.labels if label not in by_label]
        if missing:
            raise RequestError("bad_params", f"classifier does not emit label(s) {missing}")
        return [by_label[label] for label in self.labels]
