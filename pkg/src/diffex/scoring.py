"""Candidate scoring: the mean edited-image classifier score, the mean
absolute shift (influence), and the signed variant used by the ranking tables.

All aggregates are computed with exact summation over values ordered by image
id, so results are invariant under permutation of the sample set and under any
scheduling of concurrent work.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .backend.types import BackendSession, EditInstruction, EditParams, ImageRef, digest
from .corpus import Corpus, SemanticNode
from .errors import BackendError, PartialScoreError, ProtocolError

SCORE_MODES = ("mean_edited_score", "mean_abs_delta", "mean_signed_delta")


@dataclass(frozen=True)
class CandidateMember:
    """One semantic path inside a candidate; the leaf drives the edit."""

    path_labels: tuple[str, ...]
    node_id: str
    prompt_fragment: str
    guidance: str = "add"

    @property
    def leaf_label(self) -> str:
        return self.path_labels[-1]

    def display(self) -> str:
        return " > ".join(self.path_labels)


@dataclass(frozen=True)
class Candidate:
    """An ordered set of semantic paths applied together as one edit.

    The empty candidate is legal and means the identity edit.
    """

    members: tuple[CandidateMember, ...] = ()

    def key(self) -> str:
        """Canonical order-preserving cache key (edits may not commute)."""
        return "+".join(m.node_id for m in self.members)

    def sort_key(self) -> tuple:
        return tuple(m.path_labels for m in self.members)

    def instructions(self) -> tuple[EditInstruction, ...]:
        return tuple(EditInstruction(m.prompt_fragment, m.guidance) for m in self.members)

    def display(self) -> str:
        if not self.members:
            return "(identity)"
        return " + ".join(m.display() for m in self.members)

    def is_empty(self) -> bool:
        return not self.members


def member_for_node(path_labels: Sequence[str], node: SemanticNode) -> CandidateMember:
    return CandidateMember(
        path_labels=tuple(path_labels),
        node_id=node.id,
        prompt_fragment=node.prompt_fragment,
        guidance=node.guidance,
    )


def candidate_for_node(corpus: Corpus, node_id: str) -> Candidate:
    """Single-path candidate for one corpus node."""
    node = corpus.node_by_id(node_id)
    return Candidate((member_for_node(corpus.path_labels(node_id), node),))


@dataclass(frozen=True)
class ScoringConfig:
    sample_image_ids: tuple[str, ...]
    target_class: str
    score_mode: str = "mean_signed_delta"
    value_space_override: str | None = None

    def __post_init__(self):
        if not self.sample_image_ids:
            raise ValueError("at least one sample image is required")
        if not self.target_class:
            raise ValueError("target_class must be non-empty")
        if self.score_mode not in SCORE_MODES:
            raise ValueError(f"score_mode must be one of {SCORE_MODES}, got {self.score_mode!r}")

    def to_dict(self) -> dict:
        return {
            "sample_image_ids": list(self.sample_image_ids),
            "target_class": self.target_class,
            "score_mode": self.score_mode,
            "value_space_override": self.value_space_override,
        }


@dataclass(frozen=True)
class CandidateScore:
    candidate: Candidate
    f_score: float
    influence: float
    per_image: tuple[tuple[str, float, float], ...]  # (image_id, original, edited)
    n: int

    def recompute(self, score_mode: str) -> tuple[float, float]:
        """Re-derive (f_score, influence) from per_image; used to audit stores."""
        return (
            _aggregate(self.per_image, score_mode),
            _aggregate(self.per_image, "mean_abs_delta"),
        )


def _aggregate(per_image: Sequence[tuple[str, float, float]], score_mode: str) -> float:
    ordered = sorted(per_image, key=lambda row: row[0])
    if score_mode == "mean_edited_score":
        values = [edited for _, _, edited in ordered]
    elif score_mode == "mean_abs_delta":
        values = [abs(edited - original) for _, original, edited in ordered]
    elif score_mode == "mean_signed_delta":
        values = [edited - original for _, original, edited in ordered]
    else:
        raise ValueError(f"unknown score_mode {score_mode!r}")
    return math.fsum(values) / len(values)


# ---------------------------------------------------------------------------
# Cache


@dataclass(frozen=True)
class CacheEntry:
    key: str
    image_id: str
    candidate_key: str
    params_digest: str
    semantics: tuple[tuple[str, str], ...]  # (prompt_fragment, guidance)
    edited_image_id: str
    original_value: float
    edited_value: float


@dataclass(frozen=True)
class CacheStats:
    hits: int
    misses: int
    entries: int


def _entry_key(image_id: str, candidate_key: str, params_digest: str) -> str:
    return digest({"image": image_id, "candidate": candidate_key, "params": params_digest})


class ScoreCache:
    """Memo of (image, candidate, edit-params) -> classification pair.

    A cache instance is bound to a single backend/target-class combination;
    reusing it across targets would silently mix value spaces, so that is
    rejected. Concurrent readers are fine; writes are serialized.
    """

    def __init__(self):
        self._entries: dict[str, CacheEntry] = {}
        self._originals: dict[str, float] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.target_class: str | None = None

    def bind_target(self, target_class: str) -> None:
        with self._lock:
            if self.target_class is None:
                self.target_class = target_class
            elif self.target_class != target_class:
                raise ValueError(
                    f"cache already bound to target {self.target_class!r}; "
                    f"use a fresh cache for {target_class!r}"
                )

    def lookup(self, image_id: str, candidate_key: str, params_digest: str) -> CacheEntry | None:
        key = _entry_key(image_id, candidate_key, params_digest)
        with self._lock:
            entry = self._entries.get(key)
            if entry is None:
                self.misses += 1
            else:
                self.hits += 1
        return entry

    def store(self, entry: CacheEntry) -> None:
        with self._lock:
            self._entries[entry.key] = entry
            self._originals.setdefault(entry.image_id, entry.original_value)

    def original_value(self, image_id: str) -> float | None:
        with self._lock:
            return self._originals.get(image_id)

    def remember_original(self, image_id: str, value: float) -> None:
        with self._lock:
            self._originals.setdefault(image_id, value)

    def entries(self) -> tuple[CacheEntry, ...]:
        with self._lock:
            return tuple(self._entries.values())

    def stats(self) -> CacheStats:
        with self._lock:
            return CacheStats(hits=self.hits, misses=self.misses, entries=len(self._entries))


def cache_stats(cache: ScoreCache) -> CacheStats:
    return cache.stats()


def save_cache(cache: ScoreCache, path) -> None:
    """Persist entries as JSON lines for replayable runs."""
    rows = sorted(cache.entries(), key=lambda e: (e.candidate_key, e.image_id, e.params_digest))
    with Path(path).open("w", encoding="utf-8") as handle:
        for e in rows:
            handle.write(
                json.dumps(
                    {
                        "key": e.key,
                        "image_id": e.image_id,
                        "candidate": e.candidate_key,
                        "params_digest": e.params_digest,
                        "semantics": [list(s) for s in e.semantics],
                        "edited_image_id": e.edited_image_id,
                        "original_value": e.original_value,
                        "edited_value": e.edited_value,
                        "target_class": cache.target_class,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_cache(path) -> ScoreCache:
    cache = ScoreCache()
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            entry = CacheEntry(
                key=doc["key"],
                image_id=doc["image_id"],
                candidate_key=doc["candidate"],
                params_digest=doc["params_digest"],
                semantics=tuple((f, g) for f, g in doc["semantics"]),
                edited_image_id=doc["edited_image_id"],
                original_value=float(doc["original_value"]),
                edited_value=float(doc["edited_value"]),
            )
            cache.store(entry)
            if doc.get("target_class") and cache.target_class is None:
                cache.target_class = doc["target_class"]
    return cache


# ---------------------------------------------------------------------------
# Scoring


def _image_ref(session: BackendSession, image_id: str) -> ImageRef:
    domain = session.domains[0] if session.domains else ""
    return ImageRef(id=image_id, domain=domain)


def warm_originals(config: ScoringConfig, session: BackendSession, cache: ScoreCache) -> None:
    """Classify every sample image once up front.

    Keeps the "originals classified once" bound exact even when candidates are
    later scored concurrently.
    """
    cache.bind_target(config.target_class)
    for image_id in config.sample_image_ids:
        if cache.original_value(image_id) is None:
            out = session.classify(_image_ref(session, image_id))
            cache.remember_original(image_id, out.value_for(config.target_class))


def score_candidate(
    candidate: Candidate,
    config: ScoringConfig,
    session: BackendSession,
    params: EditParams,
    cache: ScoreCache | None = None,
) -> CandidateScore:
    """Score one candidate over the sample set.

    Cache lookups are keyed by (image id, canonical candidate key, params
    digest). On a backend failure the candidate aborts with the completed
    per-image entries attached; nothing from the aborted pass is cached.
    """
    if cache is None:
        cache = ScoreCache()
    cache.bind_target(config.target_class)
    if config.target_class not in session.labels:
        raise ProtocolError(
            "bad_params",
            f"unknown label {config.target_class!r}; valid labels: {list(session.labels)}",
        )

    candidate_key = candidate.key()
    params_digest = params.digest()
    instructions = candidate.instructions()

    per_image: list[tuple[str, float, float]] = []
    pending: list[CacheEntry] = []
    for image_id in config.sample_image_ids:
        entry = cache.lookup(image_id, candidate_key, params_digest)
        if entry is not None:
            per_image.append((image_id, entry.original_value, entry.edited_value))
            continue
        try:
            original_value = cache.original_value(image_id)
            ref = _image_ref(session, image_id)
            if original_value is None:
                original_value = session.classify(ref).value_for(config.target_class)
                cache.remember_original(image_id, original_value)
            edited_ref = session.edit(ref, instructions, params)
            edited_value = session.classify(edited_ref).value_for(config.target_class)
        except BackendError as exc:
            raise PartialScoreError(
                f"backend failed while scoring {candidate.display()} on image {image_id!r}: {exc}",
                completed=per_image,
                cause=exc,
            ) from exc
        per_image.append((image_id, original_value, edited_value))
        pending.append(
            CacheEntry(
                key=_entry_key(image_id, candidate_key, params_digest),
                image_id=image_id,
                candidate_key=candidate_key,
                params_digest=params_digest,
                semantics=tuple((i.prompt_fragment, i.guidance) for i in instructions),
                edited_image_id=edited_ref.id,
                original_value=original_value,
                edited_value=edited_value,
            )
        )

    # Commit only after the whole candidate succeeded.
    for entry in pending:
        cache.store(entry)

    rows = tuple(per_image)
    return CandidateScore(
        candidate=candidate,
        f_score=_aggregate(rows, config.score_mode),
        influence=_aggregate(rows, "mean_abs_delta"),
        per_image=rows,
        n=len(rows),
    )


def rank_candidates(scores: Iterable[CandidateScore], by: str = "f_score") -> list[CandidateScore]:
    """Descending by the chosen key; ties broken by lexicographic candidate
    path, which makes the order total and reproducible."""
    if by not in ("f_score", "influence"):
        raise ValueError(f"rank key must be 'f_score' or 'influence', got {by!r}")
    return sorted(scores, key=lambda s: (-getattr(s, by), s.candidate.sort_key()))
