"""Deterministic synthetic backend: a feature-vector world with a linear head.

The synthetic world is the ground-truth oracle for the whole search stack.
An "image" is a named feature vector; an edit applies the per-semantic feature
effects sequentially; the classifier is a linear map through a configurable
link. Everything is exactly reproducible from the world file alone.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from ..errors import ProtocolError, WorldError
from .types import ClassifierOutput, EditInstruction, EditParams, ImageRef, canonical_json, digest

WORLD_SCHEMA = "diffex-world/1"
LINKS = ("identity", "sigmoid", "softmax-rows")
EFFECT_OPS = ("add", "set")

_WORLD_FIELDS = {"schema", "domain", "class_labels", "feature_names", "images", "effects", "weights", "bias", "link"}
_EFFECT_FIELDS = {"feature", "op", "value"}


@dataclass(frozen=True)
class FeatureEffect:
    """What applying one semantic does to a feature vector."""

    feature: str
    op: str  # "add" | "set"
    value: float


@dataclass(frozen=True)
class SyntheticWorld:
    domain: str
    feature_names: tuple[str, ...]
    class_labels: tuple[str, ...]
    images: Mapping[str, tuple[float, ...]]
    effects: Mapping[str, FeatureEffect]  # keyed by the semantic's prompt_fragment
    weights: tuple  # vector, or one row per class label for softmax-rows
    bias: float | tuple[float, ...]
    link: str = "identity"

    def validate(self) -> None:
        problems = []
        if self.link not in LINKS:
            problems.append(f"link {self.link!r} not in {LINKS}")
        if not self.feature_names:
            problems.append("feature_names is empty")
        if not self.class_labels:
            problems.append("class_labels is empty")
        n = len(self.feature_names)
        for image_id, vec in self.images.items():
            if len(vec) != n:
                problems.append(f"image {image_id!r} has {len(vec)} features, expected {n}")
        for semantic, effect in self.effects.items():
            if effect.feature not in self.feature_names:
                problems.append(f"effect {semantic!r} references unknown feature {effect.feature!r}")
            if effect.op not in EFFECT_OPS:
                problems.append(f"effect {semantic!r} op {effect.op!r} not in {EFFECT_OPS}")
        if self.link == "softmax-rows":
            rows = self.weights
            if len(rows) != len(self.class_labels):
                problems.append("softmax-rows needs one weight row per class label")
            for i, row in enumerate(rows):
                if not isinstance(row, tuple) or len(row) != n:
                    problems.append(f"weight row {i} length must equal feature count {n}")
            if not isinstance(self.bias, tuple) or len(self.bias) != len(self.class_labels):
                problems.append("softmax-rows needs one bias per class label")
        else:
            if any(isinstance(w, tuple) for w in self.weights) or len(self.weights) != n:
                problems.append(f"weights length must equal feature count {n}")
            if isinstance(self.bias, tuple):
                problems.append("bias must be a scalar for identity/sigmoid links")
            if self.link == "identity" and len(self.class_labels) > 2:
                problems.append("identity link supports at most two class labels")
            if self.link == "sigmoid" and len(self.class_labels) != 2:
                problems.append("sigmoid link needs exactly two class labels")
        if problems:
            raise WorldError("invalid synthetic world: " + "; ".join(problems))

    @property
    def value_space(self) -> str:
        return "logit" if self.link == "identity" else "probability"


def world_from_dict(doc) -> SyntheticWorld:
    if not isinstance(doc, dict):
        raise WorldError("world document must be an object")
    unknown = set(doc) - _WORLD_FIELDS
    if unknown:
        raise WorldError(f"unknown field(s) {sorted(unknown)}")
    if doc.get("schema") != WORLD_SCHEMA:
        raise WorldError(f"'schema' must be {WORLD_SCHEMA!r}, got {doc.get('schema')!r}")
    effects = {}
    for semantic, eff in dict(doc.get("effects", {})).items():
        extra = set(eff) - _EFFECT_FIELDS
        if extra:
            raise WorldError(f"effect {semantic!r} has unknown field(s) {sorted(extra)}")
        effects[semantic] = FeatureEffect(
            feature=eff["feature"], op=eff.get("op", "add"), value=float(eff["value"])
        )
    link = doc.get("link", "identity")
    raw_weights = doc.get("weights", [])
    if link == "softmax-rows":
        weights = tuple(tuple(float(w) for w in row) for row in raw_weights)
        bias = tuple(float(b) for b in doc.get("bias", []))
    else:
        weights = tuple(float(w) for w in raw_weights)
        bias = float(doc.get("bias", 0.0))
    world = SyntheticWorld(
        domain=doc.get("domain", ""),
        feature_names=tuple(doc.get("feature_names", [])),
        class_labels=tuple(doc.get("class_labels", [])),
        images={k: tuple(float(x) for x in v) for k, v in dict(doc.get("images", {})).items()},
        effects=effects,
        weights=weights,
        bias=bias,
        link=link,
    )
    world.validate()
    return world


def load_world(path) -> SyntheticWorld:
    return world_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _dot(weights: Sequence[float], vec: Sequence[float], bias: float) -> float:
    return math.fsum([w * x for w, x in zip(weights, vec)] + [bias])


class SyntheticSession:
    """In-process backend session over a SyntheticWorld.

    Edited vectors are retained and addressable by id so later classify calls
    (and replays) can reference them. Thread-safe; counters are exact.
    """

    def __init__(self, world: SyntheticWorld):
        world.validate()
        self.world = world
        self.labels = world.class_labels
        self.value_space = world.value_space
        self.domains = (world.domain,) if world.domain else ()
        self._vectors: dict[str, tuple[float, ...]] = dict(world.images)
        self._lock = threading.Lock()
        self._counters = {"edit_calls": 0, "classify_calls": 0}

    def telemetry(self) -> dict:
        with self._lock:
            return dict(self._counters)

    def edit(self, image: ImageRef, semantics: Sequence[EditInstruction], params: EditParams) -> ImageRef:
        with self._lock:
            self._counters["edit_calls"] += 1
            vec = self._vectors.get(image.id)
        if vec is None:
            raise ProtocolError("unknown_image", f"image {image.id!r} not known to this backend")
        values = list(vec)
        for instruction in semantics:
            effect = self.world.effects.get(instruction.prompt_fragment)
            if effect is None:
                raise ProtocolError(
                    "unknown_semantic",
                    f"semantic {instruction.prompt_fragment!r} has no effect in this world",
                )
            index = self.world.feature_names.index(effect.feature)
            if effect.op == "add":
                delta = effect.value if instruction.guidance == "add" else -effect.value
                values[index] += delta
            else:  # set; removing a set-valued semantic clears the feature
                values[index] = effect.value if instruction.guidance == "add" else 0.0
        edited_id = "ed-" + digest(
            {
                "parent": image.id,
                "semantics": [[s.prompt_fragment, s.guidance] for s in semantics],
                "params": params.digest(),
            }
        )[:16]
        with self._lock:
            self._vectors[edited_id] = tuple(values)
        return ImageRef(id=edited_id, domain=image.domain or self.world.domain, origin="edited", parent_id=image.id)

    def classify(self, image: ImageRef) -> ClassifierOutput:
        with self._lock:
            self._counters["classify_calls"] += 1
            vec = self._vectors.get(image.id)
        if vec is None:
            raise ProtocolError("unknown_image", f"image {image.id!r} not known to this backend")
        world = self.world
        if world.link == "softmax-rows":
            scores = [_dot(row, vec, b) for row, b in zip(world.weights, world.bias)]
            peak = max(scores)
            exps = [math.exp(s - peak) for s in scores]
            total = math.fsum(exps)
            values = tuple(e / total for e in exps)
        else:
            score = _dot(world.weights, vec, world.bias)
            if world.link == "identity":
                values = (score,) if len(world.class_labels) == 1 else (-score, score)
            else:  # sigmoid
                p = 1.0 / (1.0 + math.exp(-score))
                values = (1.0 - p, p)
        return ClassifierOutput(class_labels=world.class_labels, values=values, value_space=world.value_space)


def make_synthetic_backend(world: SyntheticWorld) -> SyntheticSession:
    """Validate ``world`` and open a deterministic in-process session over it."""
    return SyntheticSession(world)
