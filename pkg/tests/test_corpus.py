from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffex.corpus import (
    Corpus,
    SemanticNode,
    VlmPromptSpec,
    build_corpus,
    build_vlm_prompt,
    corpus_to_dict,
    ingest_vlm_response,
    load_corpus,
    nodes_at_level,
    render_vlm_response,
    save_corpus,
    validate_corpus,
)
from diffex.errors import (
    CorpusFormatError,
    CorpusParseError,
    CorpusValidationError,
    VlmIngestError,
    VlmPromptError,
)

# ---------------------------------------------------------------------------
# load / save


def test_load_bird_corpus(bird_corpus):
    assert bird_corpus.domain == "bird"
    assert [r.label for r in bird_corpus.roots] == ["Beak", "Wings", "Eye", "Head", "Body"]
    beak = bird_corpus.roots[0]
    assert [c.label for c in beak.children] == ["Beak Color", "Beak Shape", "Beak Size"]
    assert beak.level == 1
    assert all(c.level == 2 for c in beak.children)
    assert beak.children[0].id == "beak/beak-color"


def test_roundtrip_preserves_structure(bird_corpus, tmp_path):
    out = tmp_path / "bird.json"
    save_corpus(bird_corpus, out)
    again = load_corpus(out)
    assert again == bird_corpus
    # canonical writer: saving twice gives identical bytes
    out2 = tmp_path / "bird2.json"
    save_corpus(again, out2)
    assert out.read_bytes() == out2.read_bytes()


def test_empty_roots_rejected(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text(json.dumps({"schema": "diffex-corpus/1", "domain": "x", "version": "1", "roots": []}))
    with pytest.raises(CorpusValidationError) as err:
        load_corpus(path)
    assert any(f.rule == "empty-roots" for f in err.value.report.findings)
    assert "at least one root" in str(err.value)


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"schema": "diffex-corpus/1",\n  "domain": }')
    with pytest.raises(CorpusParseError) as err:
        load_corpus(path)
    assert err.value.line == 2
    assert err.value.column is not None


def test_unknown_fields_rejected(tmp_path):
    path = tmp_path / "extra.json"
    path.write_text(
        json.dumps(
            {
                "schema": "diffex-corpus/1",
                "domain": "x",
                "version": "1",
                "roots": [{"label": "A", "prompt_fragment": "a", "color": "red"}],
            }
        )
    )
    with pytest.raises(CorpusFormatError) as err:
        load_corpus(path)
    assert "color" in str(err.value)


def test_wrong_schema_rejected(tmp_path):
    path = tmp_path / "schema.json"
    path.write_text(json.dumps({"schema": "diffex-corpus/2", "domain": "x", "roots": []}))
    with pytest.raises(CorpusFormatError):
        load_corpus(path)


def test_same_label_under_two_parents_is_legal():
    # Distinct paths may share leaf labels (e.g. a color under two groups).
    corpus = build_corpus(
        "plant",
        [
            {"label": "Leaf Base Color", "children": [{"label": "Green"}]},
            {"label": "Leaf Apex Color", "children": [{"label": "Green"}]},
        ],
    )
    assert validate_corpus(corpus).ok


def test_colliding_ids_name_both_paths(tmp_path):
    # Two roots whose labels collide case-insensitively give their children
    # colliding path slugs: the same "Makeup" id under two parents.
    path = tmp_path / "dup.json"
    path.write_text(
        json.dumps(
            {
                "schema": "diffex-corpus/1",
                "domain": "face",
                "version": "1",
                "roots": [
                    {"label": "Accessories", "children": [{"label": "Makeup"}]},
                    {"label": "accessories", "children": [{"label": "Makeup"}]},
                ],
            }
        )
    )
    with pytest.raises(CorpusValidationError) as err:
        load_corpus(path)
    findings = err.value.report.findings
    dup = [f for f in findings if f.rule == "duplicate-node-id"]
    assert dup, findings
    named = " ".join(f.path for f in dup)
    assert "Accessories > Makeup" in named and "accessories > Makeup" in named
    assert any(f.rule == "duplicate-sibling-label" for f in findings)


# ---------------------------------------------------------------------------
# validate_corpus


def test_validate_clean_corpus(face_corpus):
    assert validate_corpus(face_corpus).ok


def test_duplicate_sibling_labels_case_insensitive():
    corpus = build_corpus(
        "face",
        [{"label": "Mouth", "children": [{"label": "red lip"}, {"label": "Red Lip"}]}],
    )
    report = validate_corpus(corpus)
    rules = [f.rule for f in report.findings]
    assert rules.count("duplicate-sibling-label") == 1


def test_level_mismatch_detected():
    child = SemanticNode(id="a/b", label="B", level=1, prompt_fragment="b")
    root = SemanticNode(id="a", label="A", level=1, prompt_fragment="a", children=(child,))
    report = validate_corpus(Corpus(domain="x", roots=(root,)))
    assert any(f.rule == "level-mismatch" and "A > B" in f.path for f in report.findings)


def test_aliased_node_detected():
    shared = SemanticNode(id="a/c", label="C", level=2, prompt_fragment="c")
    root_a = SemanticNode(id="a", label="A", level=1, prompt_fragment="a", children=(shared,))
    root_b = SemanticNode(id="b", label="B", level=1, prompt_fragment="b", children=(shared,))
    report = validate_corpus(Corpus(domain="x", roots=(root_a, root_b)))
    assert any(f.rule == "node-aliased" for f in report.findings)


def test_empty_prompt_fragment_detected():
    corpus = Corpus(
        domain="x",
        roots=(SemanticNode(id="a", label="A", level=1, prompt_fragment="  "),),
    )
    report = validate_corpus(corpus)
    assert any(f.rule == "empty-prompt-fragment" for f in report.findings)


# ---------------------------------------------------------------------------
# nodes_at_level


def test_bird_level_one_order(bird_corpus):
    assert [n.label for n in nodes_at_level(bird_corpus, 1)] == ["Beak", "Wings", "Eye", "Head", "Body"]


def test_level_beyond_depth_empty(bird_corpus):
    assert nodes_at_level(bird_corpus, 99) == []


def test_level_below_one_rejected(bird_corpus):
    with pytest.raises(ValueError):
        nodes_at_level(bird_corpus, 0)


def test_retina_level_three_under_exudates(retina_corpus):
    level3 = [n.label for n in nodes_at_level(retina_corpus, 3)]
    assert "Hard Exudates" in level3 and "Soft Exudates" in level3


# ---------------------------------------------------------------------------
# prompt construction


def test_face_prompt_contains_attribute_sentence():
    spec = VlmPromptSpec(
        domain_name="human features",
        sample_attribute_names=("skin texture", "expression", "accessories", "eyebrow shape"),
    )
    text = build_vlm_prompt(spec)
    assert "for human features, it ranges from skin texture to expression, accessories, eyebrow shape" in text


def test_prompt_is_byte_stable():
    spec = VlmPromptSpec(domain_name="bird features", sample_attribute_names=("beak", "wings", "crest"))
    assert build_vlm_prompt(spec) == build_vlm_prompt(spec)


def test_prompt_rejects_empty_attributes():
    spec = VlmPromptSpec(domain_name="bird features", sample_attribute_names=())
    with pytest.raises(VlmPromptError) as err:
        build_vlm_prompt(spec)
    assert err.value.placeholder == "ATTRIBUTE_1"


def test_prompt_rejects_single_attribute():
    spec = VlmPromptSpec(domain_name="bird features", sample_attribute_names=("beak",))
    with pytest.raises(VlmPromptError) as err:
        build_vlm_prompt(spec)
    assert err.value.placeholder == "ATTRIBUTE_2"


def test_prompt_rejects_empty_domain():
    spec = VlmPromptSpec(domain_name=" ", sample_attribute_names=("a", "b"))
    with pytest.raises(VlmPromptError) as err:
        build_vlm_prompt(spec)
    assert err.value.placeholder == "DOMAIN_NAME"


# ---------------------------------------------------------------------------
# response ingestion


def test_ingest_face_sample(face_vlm_response):
    result = ingest_vlm_response(face_vlm_response, "face")
    corpus = result.corpus
    labels = [r.label for r in corpus.roots]
    for expected in ["Face", "Skin Texture", "Eyes Color", "Hair Color", "Lip Color"]:
        assert expected in labels
    eyes = next(r for r in corpus.roots if r.label == "Eyes Color")
    assert [c.label for c in eyes.children] == [
        "blue colored eyes",
        "green colored eyes",
        "hazel colored eyes",
    ]
    # multiline group survives the parse
    hair = next(r for r in corpus.roots if r.label == "Hair Color")
    assert "brunette hair" in [c.label for c in hair.children]
    # loose stragglers collect into the synthesized group, flagged in provenance
    accessories = next(r for r in corpus.roots if r.label == "Accessories")
    assert [c.label for c in accessories.children] == ["earrings", "necklace", "glasses", "sunglasses"]
    assert "Accessories" in corpus.provenance
    assert any("stray" in w for w in result.warnings)


def test_ingest_face_sample_roundtrips(face_vlm_response, tmp_path):
    corpus = ingest_vlm_response(face_vlm_response, "face").corpus
    path = tmp_path / "face.json"
    save_corpus(corpus, path)
    assert load_corpus(path) == corpus


def test_ingest_empty_is_error():
    with pytest.raises(VlmIngestError):
        ingest_vlm_response("", "face")


def test_ingest_duplicate_key_merges():
    text = '[{ "Face": {"oval face"}, "Face": {"round face", "oval face"} }]'
    result = ingest_vlm_response(text, "face")
    faces = [r for r in result.corpus.roots if r.label == "Face"]
    assert len(faces) == 1
    assert [c.label for c in faces[0].children] == ["oval face", "round face"]
    assert any("duplicate group" in w for w in result.warnings)


def test_ingest_partially_parsable_warns():
    text = 'Sure! Here are the attributes:\n[{ "Wings": {"pointed", "rounded"} }]\nHope that helps.'
    result = ingest_vlm_response(text, "bird")
    assert [r.label for r in result.corpus.roots] == ["Wings"]
    assert any("unparsed content" in w for w in result.warnings)


def test_ingest_idempotent_on_rendered_output(face_vlm_response):
    first = ingest_vlm_response(face_vlm_response, "face").corpus
    second = ingest_vlm_response(render_vlm_response(first), "face").corpus
    assert second.roots == first.roots


# ---------------------------------------------------------------------------
# properties

_label = st.text(alphabet="abcdefghij XYZ", min_size=1, max_size=8).filter(
    lambda s: s.strip() and s.strip(" -")
)


@st.composite
def corpora(draw):
    def unique_labels(n):
        labels = draw(
            st.lists(_label, min_size=1, max_size=n, unique_by=lambda s: s.casefold().strip())
        )
        # slug collisions between distinct labels are rare but possible; dedupe
        seen, out = set(), []
        for label in labels:
            slug = "".join(ch if ch.isalnum() else "-" for ch in label.casefold()).strip("-")
            if slug and slug not in seen:
                seen.add(slug)
                out.append(label)
        return out

    roots = []
    for root_label in unique_labels(4):
        children = [
            {"label": child, "children": [{"label": leaf} for leaf in unique_labels(2)]}
            for child in unique_labels(3)
        ]
        roots.append({"label": root_label, "children": children})
    if not roots:
        roots = [{"label": "fallback"}]
    return build_corpus("prop", roots, version="1")


@given(corpora())
@settings(max_examples=40, deadline=None)
def test_property_roundtrip(tmp_path_factory, corpus):
    path = tmp_path_factory.mktemp("prop") / "c.json"
    save_corpus(corpus, path)
    assert load_corpus(path) == corpus


@given(corpora())
@settings(max_examples=40, deadline=None)
def test_property_levels_partition_nodes(corpus):
    all_nodes = [node for _, node in corpus.iter_nodes()]
    by_level = []
    level = 1
    while True:
        chunk = nodes_at_level(corpus, level)
        if not chunk:
            break
        by_level.extend(chunk)
        level += 1
    assert len(by_level) == len(all_nodes)
    assert {id(n) for n in by_level} == {id(n) for n in all_nodes}
    for node in by_level:
        assert node in nodes_at_level(corpus, node.level)


@given(corpora())
@settings(max_examples=40, deadline=None)
def test_property_generated_corpora_validate(corpus):
    assert validate_corpus(corpus).ok


@given(corpora(), st.sampled_from(["level", "fragment", "alias", "guidance"]))
@settings(max_examples=40, deadline=None)
def test_property_planted_violations_are_found(corpus, kind):
    roots = list(corpus.roots)
    first = roots[0]
    if kind == "level":
        tampered = SemanticNode(
            id=first.id, label=first.label, level=first.level + 5,
            prompt_fragment=first.prompt_fragment, children=first.children,
        )
        roots[0] = tampered
        expected = "level-mismatch"
    elif kind == "fragment":
        tampered = SemanticNode(
            id=first.id, label=first.label, level=first.level,
            prompt_fragment="", children=first.children,
        )
        roots[0] = tampered
        expected = "empty-prompt-fragment"
    elif kind == "alias":
        roots.append(first)
        expected = "node-aliased"
    else:
        tampered = SemanticNode(
            id=first.id, label=first.label, level=first.level,
            prompt_fragment=first.prompt_fragment, guidance="delete", children=first.children,
        )
        roots[0] = tampered
        expected = "invalid-guidance"
    report = validate_corpus(Corpus(domain=corpus.domain, version=corpus.version, roots=tuple(roots)))
    assert any(f.rule == expected for f in report.findings), (kind, report.findings)


@st.composite
def vlm_responses(draw):
    word = st.text(alphabet="abcdefgh", min_size=1, max_size=6)
    keys = draw(st.lists(word, min_size=1, max_size=4, unique_by=lambda s: s.casefold()))
    parts = []
    for key in keys:
        members = draw(st.lists(word, min_size=1, max_size=4, unique_by=lambda s: s.casefold()))
        body = ", ".join(f'"{m}"' for m in members)
        parts.append(f'"{key.title()}": {{{body}}}')
    return "[{" + ", ".join(parts) + "}]"


@given(vlm_responses())
@settings(max_examples=40, deadline=None)
def test_property_ingest_idempotent(text):
    first = ingest_vlm_response(text, "prop").corpus
    second = ingest_vlm_response(render_vlm_response(first), "prop").corpus
    assert second.roots == first.roots
