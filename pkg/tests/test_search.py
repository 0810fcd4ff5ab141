from __future__ import annotations

import json
import random

import pytest

from diffex.backend import make_synthetic_backend
from diffex.corpus import build_corpus
from diffex.errors import EnumerationBoundError, SearchError
from diffex.scoring import Candidate, ScoreCache, ScoringConfig, candidate_for_node
from diffex.search import (
    BeamConfig,
    brute_force_discover,
    discover,
    exhaustive_beam_width,
    joint_search,
    restrict_to_maximal_paths,
)
from worldgen import random_setup, session_for

ALL_IMAGES = ("img-a", "img-b", "img-c", "img-d")


@pytest.fixture
def wildcat_scoring():
    return ScoringConfig(sample_image_ids=ALL_IMAGES, target_class="wildcat")


def serialized(result) -> bytes:
    return json.dumps(result.to_dict(), sort_keys=True).encode()


# ---------------------------------------------------------------------------
# discover


def test_wildcat_discover_puts_stripes_first(wildcat_corpus, wildcat_session, wildcat_scoring, params):
    config = BeamConfig(beam_width=2, threshold=0.0)
    result = discover(wildcat_corpus, config, wildcat_scoring, wildcat_session, params)
    top = result.entries[0]
    assert top.candidate.display() == "Coat > Stripes"
    assert top.score.f_score == pytest.approx(2.0, abs=1e-12)
    # beam width 2 kept {Head, Coat} at level 1, their refinements at level 2
    keys = [e.candidate.display() for e in result.entries]
    assert keys == ["Coat > Stripes", "Head > Mane", "Head", "Coat"]


def test_discover_empty_corpus_is_error(wildcat_session, wildcat_scoring, params):
    empty = build_corpus("x", [{"label": "only"}])
    empty = empty.__class__(domain="x", version="1", roots=())
    with pytest.raises(SearchError):
        discover(empty, BeamConfig(beam_width=1), wildcat_scoring, wildcat_session, params)


def test_discover_threshold_above_all_gives_empty_result(wildcat_corpus, wildcat_session, wildcat_scoring, params):
    config = BeamConfig(beam_width=2, threshold=99.0)
    result = discover(wildcat_corpus, config, wildcat_scoring, wildcat_session, params)
    assert result.entries == ()
    assert result.trace.levels[0].pruned_by_threshold == 3
    assert result.trace.levels[0].beam_size == 0


def test_worse_child_keeps_only_root(wildcat_session, wildcat_scoring, params):
    # "accessories" shifts collar by +0.5, its child "down" would need an
    # effect that beats it; give the child a weaker one via the corpus below.
    corpus = build_corpus(
        "wildcat",
        [
            {
                "label": "Accessories",
                "prompt_fragment": "collar",
                "children": [{"label": "Weak", "prompt_fragment": "accessories"}],
            }
        ],
    )
    config = BeamConfig(beam_width=2)
    result = discover(corpus, config, wildcat_scoring, wildcat_session, params)
    assert [e.candidate.display() for e in result.entries] == ["Accessories"]
    assert result.entries[0].depth == 1
    assert result.trace.levels[1].pruned_by_improvement == 1


def test_max_depth_stops_expansion(wildcat_corpus, wildcat_session, wildcat_scoring, params):
    config = BeamConfig(beam_width=3, max_depth=1)
    result = discover(wildcat_corpus, config, wildcat_scoring, wildcat_session, params)
    assert all(e.depth == 1 for e in result.entries)
    assert len(result.trace.levels) == 1


def test_augment_mode_builds_joint_candidates(wildcat_corpus, wildcat_session, wildcat_scoring, params):
    config = BeamConfig(beam_width=1, expansion_mode="augment")
    result = discover(wildcat_corpus, config, wildcat_scoring, wildcat_session, params)
    top = result.entries[0]
    assert len(top.candidate.members) == 2
    assert top.candidate.display() == "Head + Head > Mane"
    # joint edit applies both fragments: 0.625 + 1.25
    assert top.score.f_score == pytest.approx(1.875, abs=1e-12)


def test_every_level_threshold_scope(wildcat_corpus, wildcat_session, wildcat_scoring, params):
    config = BeamConfig(beam_width=3, threshold=1.0, threshold_scope="every_level")
    result = discover(wildcat_corpus, config, wildcat_scoring, wildcat_session, params)
    # no root reaches 1.0, so nothing is retained anywhere
    assert result.entries == ()

    config = BeamConfig(beam_width=4, threshold=0.3, threshold_scope="every_level")
    result = discover(wildcat_corpus, config, wildcat_scoring, wildcat_session, params)
    displays = [e.candidate.display() for e in result.entries]
    assert "Coat > Spots" in displays  # 0.625 passes the every-level threshold
    assert "Accessories" not in displays  # 0.25 pruned at the root level
    assert all(e.score.f_score >= 0.3 for e in result.entries)


def test_trace_counts_match_telemetry(wildcat_corpus, wildcat_world, wildcat_scoring, params):
    session = make_synthetic_backend(wildcat_world)
    config = BeamConfig(beam_width=2, threshold=0.0)
    result = discover(wildcat_corpus, config, wildcat_scoring, session, params)
    telemetry = session.telemetry()
    assert result.trace.edit_calls == telemetry["edit_calls"]
    assert result.trace.classify_calls == telemetry["classify_calls"]
    scored = sum(level.scored for level in result.trace.levels)
    assert result.trace.edit_calls == scored * len(ALL_IMAGES)
    assert result.trace.classify_calls == scored * len(ALL_IMAGES) + len(ALL_IMAGES)
    assert result.trace.wall_time_s > 0


def test_discover_deterministic_serialization(wildcat_corpus, wildcat_world, wildcat_scoring, params):
    config = BeamConfig(beam_width=2, threshold=0.0)
    runs = [
        discover(wildcat_corpus, config, wildcat_scoring, make_synthetic_backend(wildcat_world), params)
        for _ in range(2)
    ]
    assert serialized(runs[0]) == serialized(runs[1])


def test_parallel_scoring_matches_serial(wildcat_corpus, wildcat_world, wildcat_scoring, params):
    config = BeamConfig(beam_width=2, threshold=0.0)
    serial = discover(
        wildcat_corpus, config, wildcat_scoring, make_synthetic_backend(wildcat_world), params
    )
    parallel = discover(
        wildcat_corpus,
        config,
        wildcat_scoring,
        make_synthetic_backend(wildcat_world),
        params,
        parallelism=4,
    )
    assert serialized(serial) == serialized(parallel)


# ---------------------------------------------------------------------------
# joint search


def test_joint_superadditive_pair_ranks_first(face_corpus, face_session, params):
    scoring = ScoringConfig(sample_image_ids=("face-1", "face-2"), target_class="older")
    seeds = [
        candidate_for_node(face_corpus, "aging-cues/gray-hair"),
        candidate_for_node(face_corpus, "aging-cues/eyeglasses"),
    ]
    result = joint_search(seeds, 2, BeamConfig(beam_width=2), scoring, face_session, params)
    top = result.entries[0]
    assert top.candidate.display() == "Aging Cues > Gray Hair + Aging Cues > Eyeglasses"
    singles = [e for e in result.entries if len(e.candidate.members) == 1]
    assert all(top.score.f_score > s.score.f_score for s in singles)
    # superadditive: the pair beats the sum of the singles
    assert top.score.f_score > sum(s.score.f_score for s in singles)


def test_joint_disjoint_identity_deltas_add_exactly(wildcat_corpus, wildcat_session, wildcat_scoring, params):
    seeds = [
        candidate_for_node(wildcat_corpus, "coat/stripes"),
        candidate_for_node(wildcat_corpus, "head/mane"),
    ]
    result = joint_search(seeds, 2, BeamConfig(beam_width=4), wildcat_scoring, wildcat_session, params)
    singles = [e for e in result.entries if len(e.candidate.members) == 1]
    pair = next(e for e in result.entries if len(e.candidate.members) == 2)
    assert pair.score.f_score == sum(s.score.f_score for s in singles)
    assert pair.score.f_score == pytest.approx(2.0 + 1.25, abs=1e-12)


def test_joint_mirrors_amplified_combination_shape(face_corpus, face_session, params):
    # individual edits barely move the score; together they shift it a lot
    scoring = ScoringConfig(sample_image_ids=("face-3", "face-4"), target_class="younger")
    seeds = [
        candidate_for_node(face_corpus, "makeup/lip-color"),
        candidate_for_node(face_corpus, "makeup/eye-makeup"),
    ]
    result = joint_search(seeds, 2, BeamConfig(beam_width=2), scoring, face_session, params)
    pair = next(e for e in result.entries if len(e.candidate.members) == 2)
    singles = [e for e in result.entries if len(e.candidate.members) == 1]
    assert pair.score.f_score > 2 * max(s.score.f_score for s in singles)


def test_joint_rejects_small_combo_and_duplicates(face_corpus, face_session, params):
    scoring = ScoringConfig(sample_image_ids=("face-1",), target_class="older")
    seed = candidate_for_node(face_corpus, "aging-cues/gray-hair")
    with pytest.raises(SearchError):
        joint_search([seed], 1, BeamConfig(beam_width=2), scoring, face_session, params)
    with pytest.raises(SearchError):
        joint_search([seed, seed], 2, BeamConfig(beam_width=2), scoring, face_session, params)


def test_joint_no_duplicate_sets(face_corpus, face_session, params):
    scoring = ScoringConfig(sample_image_ids=("face-1", "face-2"), target_class="older")
    seeds = [
        candidate_for_node(face_corpus, "aging-cues/gray-hair"),
        candidate_for_node(face_corpus, "aging-cues/eyeglasses"),
        candidate_for_node(face_corpus, "accessories/hairband"),
    ]
    result = joint_search(seeds, 3, BeamConfig(beam_width=8), scoring, face_session, params)
    keys = [e.candidate.key() for e in result.entries]
    assert len(keys) == len(set(keys))
    sets = [frozenset(m.node_id for m in e.candidate.members) for e in result.entries]
    assert len(sets) == len(set(sets))


# ---------------------------------------------------------------------------
# brute force oracle


def test_brute_force_matches_golden(wildcat_corpus, wildcat_session, wildcat_scoring, params, wildcat_golden):
    result = brute_force_discover(
        wildcat_corpus, wildcat_scoring, wildcat_session, params, max_combo=2
    )
    assert len(result.entries) == 36
    golden_rows = wildcat_golden["rows"]
    assert [e.candidate.display() for e in result.entries] == [r["display"] for r in golden_rows]
    for entry, row in zip(result.entries, golden_rows):
        assert entry.score.f_score == pytest.approx(row["mean_signed_delta"], abs=1e-12)
        assert entry.score.influence == pytest.approx(row["mean_abs_delta"], abs=1e-12)


def test_brute_force_single_node_corpus(wildcat_session, wildcat_scoring, params):
    corpus = build_corpus("wildcat", [{"label": "Stripes", "prompt_fragment": "stripes"}])
    result = brute_force_discover(corpus, wildcat_scoring, wildcat_session, params)
    assert len(result.entries) == 1
    assert result.entries[0].candidate.display() == "Stripes"


def test_brute_force_refuses_past_bound(wildcat_corpus, wildcat_session, wildcat_scoring, params):
    with pytest.raises(EnumerationBoundError) as err:
        brute_force_discover(
            wildcat_corpus, wildcat_scoring, wildcat_session, params, max_combo=2, safety_bound=10
        )
    assert err.value.count == 36
    assert "36" in str(err.value)


# ---------------------------------------------------------------------------
# oracle equivalence


def assert_oracle_equivalence(corpus, world, scoring, params):
    session_a = make_synthetic_backend(world)
    session_b = make_synthetic_backend(world)
    width = exhaustive_beam_width(corpus)
    config = BeamConfig(beam_width=width, threshold=float("-inf"), improvement_epsilon=0.0)
    beam_result = discover(corpus, config, scoring, session_a, params)
    oracle_result = brute_force_discover(corpus, scoring, session_b, params, max_combo=1)
    beam_maximal = restrict_to_maximal_paths(beam_result, corpus)
    oracle_maximal = restrict_to_maximal_paths(oracle_result, corpus)
    assert [e.candidate.key() for e in beam_maximal.entries] == [
        e.candidate.key() for e in oracle_maximal.entries
    ]
    for b, o in zip(beam_maximal.entries, oracle_maximal.entries):
        assert b.score.f_score == o.score.f_score
        assert b.score.per_image == o.score.per_image


def test_oracle_equivalence_wildcat(wildcat_corpus, wildcat_world, wildcat_scoring, params):
    assert_oracle_equivalence(wildcat_corpus, wildcat_world, wildcat_scoring, params)


def test_oracle_equivalence_face_toy(face_corpus, face_world, params):
    # mixed-direction attributes: equivalence needs the magnitude score
    scoring = ScoringConfig(
        sample_image_ids=("face-1", "face-2", "face-3", "face-4"),
        target_class="older",
        score_mode="mean_abs_delta",
    )
    assert_oracle_equivalence(face_corpus, face_world, scoring, params)


# ---------------------------------------------------------------------------
# randomized invariants


def test_monotone_retention_and_beam_bound_random_worlds(params):
    rng = random.Random(20260811)
    for trial in range(25):
        corpus, world = random_setup(
            rng,
            n_roots=rng.randint(2, 4),
            children_per_root=rng.randint(1, 4),
            n_images=rng.randint(1, 4),
        )
        session = session_for(world)
        scoring = ScoringConfig(
            sample_image_ids=tuple(world.images), target_class="target"
        )
        beam_width = rng.randint(1, 4)
        epsilon = rng.choice([0.0, 0.01])
        config = BeamConfig(beam_width=beam_width, improvement_epsilon=epsilon)
        result = discover(corpus, config, scoring, session, params)
        scores = result.score_by_key()
        for entry in result.entries:
            if entry.parent_key is None:
                continue
            parent = scores[entry.parent_key]
            assert entry.score.f_score > parent.f_score + epsilon, (trial, entry.candidate.display())
        for level in result.trace.levels:
            assert level.beam_size <= beam_width
            assert level.retained <= level.scored


def test_random_worlds_oracle_equivalence_on_improving_corpora(params):
    # plant strictly improving children, then full-width search must agree
    # with the oracle on maximal paths
    rng = random.Random(7)
    for _ in range(8):
        n_roots = rng.randint(2, 3)
        roots = []
        effects = {}
        features = []
        weights = []
        for r in range(n_roots):
            root = f"g{r}"
            child_labels = [f"g{r}x{c}" for c in range(rng.randint(1, 3))]
            roots.append(
                {
                    "label": root,
                    "children": [{"label": c} for c in child_labels],
                }
            )
            feature = f"f{r}"
            features.append(feature)
            weights.append(1.0)
            effects[root] = {"feature": feature, "op": "add", "value": 0.5}
            for i, child in enumerate(child_labels):
                effects[child] = {"feature": feature, "op": "add", "value": 1.0 + 0.25 * i}
        corpus = build_corpus("synthetic", roots, version="1")
        from diffex.backend import world_from_dict

        world = world_from_dict(
            {
                "schema": "diffex-world/1",
                "domain": "synthetic",
                "class_labels": ["target"],
                "feature_names": features,
                "images": {"im0": [0.0] * len(features), "im1": [0.25] * len(features)},
                "effects": effects,
                "weights": weights,
                "bias": 0.0,
                "link": "identity",
            }
        )
        scoring = ScoringConfig(sample_image_ids=("im0", "im1"), target_class="target")
        assert_oracle_equivalence(corpus, world, scoring, params)
