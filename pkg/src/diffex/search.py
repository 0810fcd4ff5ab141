"""Hierarchical beam search over the semantic corpus, the joint-combination
variant, and an exhaustive oracle used to cross-check both.

The search keeps the top-B candidates per level, expands each beam member by
its next-level sub-features, and keeps an expansion only when it strictly
outscores its parent. The beam is re-selected from the surviving expansions at
every level; the search therefore touches O(beam * branching * images) backend
calls per level rather than enumerating every combination.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

from .backend.types import BackendSession, EditParams
from .corpus import Corpus, nodes_at_level
from .errors import EnumerationBoundError, SearchError
from .scoring import (
    Candidate,
    CandidateScore,
    ScoreCache,
    ScoringConfig,
    candidate_for_node,
    member_for_node,
    rank_candidates,
    score_candidate,
    warm_originals,
)

EXPANSION_MODES = ("refine", "augment")
THRESHOLD_SCOPES = ("root_only", "every_level")


@dataclass(frozen=True)
class BeamConfig:
    beam_width: int
    threshold: float = float("-inf")
    max_depth: int | None = None
    expansion_mode: str = "refine"
    improvement_epsilon: float = 0.0
    threshold_scope: str = "root_only"

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError(f"beam_width must be >= 1, got {self.beam_width}")
        if self.improvement_epsilon < 0:
            raise ValueError(f"improvement_epsilon must be >= 0, got {self.improvement_epsilon}")
        if self.expansion_mode not in EXPANSION_MODES:
            raise ValueError(f"expansion_mode must be one of {EXPANSION_MODES}")
        if self.threshold_scope not in THRESHOLD_SCOPES:
            raise ValueError(f"threshold_scope must be one of {THRESHOLD_SCOPES}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")

    def to_dict(self) -> dict:
        return {
            "beam_width": self.beam_width,
            "threshold": self.threshold,
            "max_depth": self.max_depth,
            "expansion_mode": self.expansion_mode,
            "improvement_epsilon": self.improvement_epsilon,
            "threshold_scope": self.threshold_scope,
        }


@dataclass(frozen=True)
class LevelStats:
    level: int
    generated: int
    scored: int
    retained: int
    pruned_by_threshold: int
    pruned_by_improvement: int
    beam_size: int


@dataclass
class SearchTrace:
    levels: list[LevelStats] = field(default_factory=list)
    edit_calls: int = 0
    classify_calls: int = 0
    wall_time_s: float = 0.0

    def to_dict(self, *, include_wall_time: bool = False) -> dict:
        doc = {
            "levels": [
                {
                    "level": s.level,
                    "generated": s.generated,
                    "scored": s.scored,
                    "retained": s.retained,
                    "pruned_by_threshold": s.pruned_by_threshold,
                    "pruned_by_improvement": s.pruned_by_improvement,
                    "beam_size": s.beam_size,
                }
                for s in self.levels
            ],
            "edit_calls": self.edit_calls,
            "classify_calls": self.classify_calls,
        }
        # Wall time is measurement noise, excluded so serialized results stay
        # byte-identical across reruns.
        if include_wall_time:
            doc["wall_time_s"] = self.wall_time_s
        return doc


@dataclass(frozen=True)
class RankedEntry:
    candidate: Candidate
    score: CandidateScore
    depth: int
    parent_key: str | None = None


@dataclass(frozen=True)
class RankedExplanations:
    entries: tuple[RankedEntry, ...]
    trace: SearchTrace
    config: BeamConfig | None
    scoring: ScoringConfig

    def to_dict(self) -> dict:
        return {
            "entries": [
                {
                    "candidate": e.candidate.display(),
                    "key": e.candidate.key(),
                    "paths": [list(m.path_labels) for m in e.candidate.members],
                    "depth": e.depth,
                    "parent_key": e.parent_key,
                    "f_score": e.score.f_score,
                    "influence": e.score.influence,
                    "n": e.score.n,
                    "per_image": [[i, o, v] for i, o, v in e.score.per_image],
                }
                for e in self.entries
            ],
            "config": self.config.to_dict() if self.config else None,
            "scoring": self.scoring.to_dict(),
            "trace": self.trace.to_dict(),
        }

    def score_by_key(self) -> dict[str, CandidateScore]:
        return {e.candidate.key(): e.score for e in self.entries}


def _rank_entries(pool: dict[str, tuple[Candidate, CandidateScore, int, str | None]]) -> tuple[RankedEntry, ...]:
    ordered = sorted(
        pool.values(), key=lambda item: (-item[1].f_score, item[0].sort_key())
    )
    return tuple(RankedEntry(candidate=c, score=s, depth=d, parent_key=p) for c, s, d, p in ordered)


def _score_all(
    candidates: Sequence[Candidate],
    scoring: ScoringConfig,
    session: BackendSession,
    params: EditParams,
    cache: ScoreCache,
    parallelism: int,
) -> list[CandidateScore]:
    if parallelism <= 1 or len(candidates) <= 1:
        return [score_candidate(c, scoring, session, params, cache) for c in candidates]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda c: score_candidate(c, scoring, session, params, cache), candidates))


def _refine_expansions(corpus: Corpus, parent: Candidate) -> list[Candidate]:
    tail = parent.members[-1]
    node = corpus.node_by_id(tail.node_id)
    out = []
    for child in node.children:
        member = member_for_node(tail.path_labels + (child.label,), child)
        out.append(Candidate(parent.members[:-1] + (member,)))
    return out


def _augment_expansions(corpus: Corpus, parent: Candidate) -> list[Candidate]:
    tail = parent.members[-1]
    node = corpus.node_by_id(tail.node_id)
    out = []
    for child in node.children:
        member = member_for_node(tail.path_labels + (child.label,), child)
        out.append(Candidate(parent.members + (member,)))
    return out


def discover(
    corpus: Corpus,
    config: BeamConfig,
    scoring: ScoringConfig,
    session: BackendSession,
    params: EditParams,
    cache: ScoreCache | None = None,
    *,
    parallelism: int = 1,
) -> RankedExplanations:
    """Beam-search the corpus for the semantics that most move the classifier.

    Level 1 scores every root group and keeps the top-B at or above the
    threshold. Each later level expands the beam members by their children
    (replacing the path tail in ``refine`` mode, appending a joint member in
    ``augment`` mode) and keeps an expansion only when it beats its parent by
    more than the improvement epsilon. Returns every candidate that ever made
    the beam, ranked.
    """
    if not corpus.roots:
        raise SearchError("corpus has no roots")
    if cache is None:
        cache = ScoreCache()
    trace = SearchTrace()
    before = session.telemetry()
    started = time.perf_counter()

    warm_originals(scoring, session, cache)

    expand = _refine_expansions if config.expansion_mode == "refine" else _augment_expansions
    pool: dict[str, tuple[Candidate, CandidateScore, int, str | None]] = {}

    roots = [
        Candidate((member_for_node((root.label,), root),)) for root in corpus.roots
    ]
    scores = _score_all(roots, scoring, session, params, cache, parallelism)
    ranked = rank_candidates(scores)
    eligible = [s for s in ranked if s.f_score >= config.threshold]
    beam = eligible[: config.beam_width]
    trace.levels.append(
        LevelStats(
            level=1,
            generated=len(roots),
            scored=len(scores),
            retained=len(eligible),
            pruned_by_threshold=len(scores) - len(eligible),
            pruned_by_improvement=0,
            beam_size=len(beam),
        )
    )
    for s in beam:
        pool[s.candidate.key()] = (s.candidate, s, 1, None)

    depth = 2
    while beam and (config.max_depth is None or depth <= config.max_depth):
        parents = list(beam)
        expansions: list[tuple[CandidateScore, Candidate]] = []
        for parent_score in parents:
            for child in expand(corpus, parent_score.candidate):
                expansions.append((parent_score, child))
        if not expansions:
            break
        child_scores = _score_all(
            [c for _, c in expansions], scoring, session, params, cache, parallelism
        )
        retained: list[tuple[CandidateScore, CandidateScore]] = []  # (parent, child)
        pruned_threshold = 0
        pruned_improvement = 0
        for (parent_score, _), child_score in zip(expansions, child_scores):
            if config.threshold_scope == "every_level" and child_score.f_score < config.threshold:
                pruned_threshold += 1
                continue
            if not child_score.f_score > parent_score.f_score + config.improvement_epsilon:
                pruned_improvement += 1
                continue
            retained.append((parent_score, child_score))
        ranked_children = rank_candidates([child for _, child in retained])
        beam = ranked_children[: config.beam_width]
        parent_of = {child.candidate.key(): parent for parent, child in retained}
        trace.levels.append(
            LevelStats(
                level=depth,
                generated=len(expansions),
                scored=len(child_scores),
                retained=len(retained),
                pruned_by_threshold=pruned_threshold,
                pruned_by_improvement=pruned_improvement,
                beam_size=len(beam),
            )
        )
        for s in beam:
            pool[s.candidate.key()] = (
                s.candidate,
                s,
                depth,
                parent_of[s.candidate.key()].candidate.key(),
            )
        depth += 1

    after = session.telemetry()
    trace.edit_calls = after.get("edit_calls", 0) - before.get("edit_calls", 0)
    trace.classify_calls = after.get("classify_calls", 0) - before.get("classify_calls", 0)
    trace.wall_time_s = time.perf_counter() - started
    return RankedExplanations(entries=_rank_entries(pool), trace=trace, config=config, scoring=scoring)


def joint_search(
    seeds: Sequence[Candidate],
    max_combo: int,
    config: BeamConfig,
    scoring: ScoringConfig,
    session: BackendSession,
    params: EditParams,
    cache: ScoreCache | None = None,
    *,
    parallelism: int = 1,
) -> RankedExplanations:
    """Beam search over combination size instead of hierarchy depth.

    Size-1 candidates are the seeds; each expansion appends one unused seed in
    canonical (input) order so no attribute set is generated twice. Retention
    follows the same strict-improvement rule as ``discover``.
    """
    if max_combo < 2:
        raise SearchError(f"max_combo must be >= 2, got {max_combo}")
    if not seeds:
        raise SearchError("at least one seed is required")
    keys = [s.key() for s in seeds]
    if len(set(keys)) != len(keys):
        raise SearchError("seeds must be distinct")
    if cache is None:
        cache = ScoreCache()
    trace = SearchTrace()
    before = session.telemetry()
    started = time.perf_counter()

    warm_originals(scoring, session, cache)
    seed_index = {s.key(): i for i, s in enumerate(seeds)}
    pool: dict[str, tuple[Candidate, CandidateScore, int, str | None]] = {}

    scores = _score_all(list(seeds), scoring, session, params, cache, parallelism)
    ranked = rank_candidates(scores)
    eligible = [s for s in ranked if s.f_score >= config.threshold]
    beam = eligible[: config.beam_width]
    last_used = {
        s.candidate.key(): seed_index[s.candidate.key()] for s in scores
    }
    trace.levels.append(
        LevelStats(
            level=1,
            generated=len(seeds),
            scored=len(scores),
            retained=len(eligible),
            pruned_by_threshold=len(scores) - len(eligible),
            pruned_by_improvement=0,
            beam_size=len(beam),
        )
    )
    for s in beam:
        pool[s.candidate.key()] = (s.candidate, s, 1, None)

    size = 2
    while beam and size <= max_combo:
        expansions: list[tuple[CandidateScore, Candidate, int]] = []
        for parent_score in beam:
            start = last_used[parent_score.candidate.key()] + 1
            for j in range(start, len(seeds)):
                child = Candidate(parent_score.candidate.members + seeds[j].members)
                expansions.append((parent_score, child, j))
        if not expansions:
            break
        child_scores = _score_all(
            [c for _, c, _ in expansions], scoring, session, params, cache, parallelism
        )
        retained: list[tuple[CandidateScore, CandidateScore, int]] = []
        pruned_threshold = 0
        pruned_improvement = 0
        for (parent_score, _, j), child_score in zip(expansions, child_scores):
            if config.threshold_scope == "every_level" and child_score.f_score < config.threshold:
                pruned_threshold += 1
                continue
            if not child_score.f_score > parent_score.f_score + config.improvement_epsilon:
                pruned_improvement += 1
                continue
            retained.append((parent_score, child_score, j))
        ranked_children = rank_candidates([child for _, child, _ in retained])
        beam = ranked_children[: config.beam_width]
        meta = {child.candidate.key(): (parent, j) for parent, child, j in retained}
        trace.levels.append(
            LevelStats(
                level=size,
                generated=len(expansions),
                scored=len(child_scores),
                retained=len(retained),
                pruned_by_threshold=pruned_threshold,
                pruned_by_improvement=pruned_improvement,
                beam_size=len(beam),
            )
        )
        for s in beam:
            parent, j = meta[s.candidate.key()]
            last_used[s.candidate.key()] = j
            pool[s.candidate.key()] = (s.candidate, s, size, parent.candidate.key())
        size += 1

    after = session.telemetry()
    trace.edit_calls = after.get("edit_calls", 0) - before.get("edit_calls", 0)
    trace.classify_calls = after.get("classify_calls", 0) - before.get("classify_calls", 0)
    trace.wall_time_s = time.perf_counter() - started
    return RankedExplanations(entries=_rank_entries(pool), trace=trace, config=config, scoring=scoring)


def _parent_key_of(candidate: Candidate) -> str | None:
    if len(candidate.members) > 1:
        return Candidate(candidate.members[:-1]).key()
    member = candidate.members[0]
    if len(member.path_labels) > 1:
        return "/".join(member.node_id.split("/")[:-1])
    return None


def brute_force_discover(
    corpus: Corpus,
    scoring: ScoringConfig,
    session: BackendSession,
    params: EditParams,
    cache: ScoreCache | None = None,
    max_combo: int = 1,
    *,
    safety_bound: int = 10_000,
    parallelism: int = 1,
) -> RankedExplanations:
    """Score every semantic path, and every combination up to ``max_combo``.

    This is the exhaustive baseline the beam search avoids; it doubles as the
    oracle the test suite compares against, so it stays deliberately
    straightforward. Refuses to run past ``safety_bound`` candidates.
    """
    if max_combo < 1:
        raise SearchError(f"max_combo must be >= 1, got {max_combo}")
    singles = [
        Candidate((member_for_node(path, node),)) for path, node in corpus.iter_nodes()
    ]
    n = len(singles)
    total = sum(math.comb(n, k) for k in range(1, max_combo + 1))
    if total > safety_bound:
        raise EnumerationBoundError(total, safety_bound)
    if cache is None:
        cache = ScoreCache()
    trace = SearchTrace()
    before = session.telemetry()
    started = time.perf_counter()

    warm_originals(scoring, session, cache)
    pool: dict[str, tuple[Candidate, CandidateScore, int, str | None]] = {}
    for k in range(1, max_combo + 1):
        if k == 1:
            batch = list(singles)
        else:
            batch = [
                Candidate(tuple(m for c in combo for m in c.members))
                for combo in combinations(singles, k)
            ]
        scores = _score_all(batch, scoring, session, params, cache, parallelism)
        for s in scores:
            depth = len(s.candidate.members[0].path_labels) if len(s.candidate.members) == 1 else len(s.candidate.members)
            pool[s.candidate.key()] = (s.candidate, s, depth, _parent_key_of(s.candidate))
        trace.levels.append(
            LevelStats(
                level=k,
                generated=len(batch),
                scored=len(batch),
                retained=len(batch),
                pruned_by_threshold=0,
                pruned_by_improvement=0,
                beam_size=len(batch),
            )
        )

    after = session.telemetry()
    trace.edit_calls = after.get("edit_calls", 0) - before.get("edit_calls", 0)
    trace.classify_calls = after.get("classify_calls", 0) - before.get("classify_calls", 0)
    trace.wall_time_s = time.perf_counter() - started
    return RankedExplanations(entries=_rank_entries(pool), trace=trace, config=None, scoring=scoring)


def exhaustive_beam_width(corpus: Corpus) -> int:
    """Smallest beam width that can never truncate a level of this corpus."""
    widths = [len(nodes_at_level(corpus, level)) for level in range(1, corpus.depth() + 1)]
    return max(widths or [1])


def restrict_to_maximal_paths(result: RankedExplanations, corpus: Corpus) -> RankedExplanations:
    """Keep only single-path candidates that bottom out at corpus leaves."""
    kept = tuple(
        e
        for e in result.entries
        if len(e.candidate.members) == 1 and corpus.node_by_id(e.candidate.members[0].node_id).is_leaf()
    )
    return RankedExplanations(entries=kept, trace=result.trace, config=result.config, scoring=result.scoring)
