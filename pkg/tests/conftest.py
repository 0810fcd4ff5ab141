from __future__ import annotations

import json
from pathlib import Path

import pytest

from diffex.backend import load_world, make_synthetic_backend
from diffex.backend.types import EditParams
from diffex.corpus import load_corpus

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def wildcat_corpus():
    return load_corpus(DATA / "wildcat_toy_corpus.json")


@pytest.fixture
def wildcat_world():
    return load_world(DATA / "wildcat_toy_world.json")


@pytest.fixture
def wildcat_session(wildcat_world):
    return make_synthetic_backend(wildcat_world)


@pytest.fixture
def face_corpus():
    return load_corpus(DATA / "face_toy_corpus.json")


@pytest.fixture
def face_world():
    return load_world(DATA / "face_toy_world.json")


@pytest.fixture
def face_session(face_world):
    return make_synthetic_backend(face_world)


@pytest.fixture
def bird_corpus():
    return load_corpus(DATA / "bird_corpus.json")


@pytest.fixture
def retina_corpus():
    return load_corpus(DATA / "retina_corpus.json")


@pytest.fixture
def face_vlm_response() -> str:
    return (DATA / "face_vlm_response.txt").read_text(encoding="utf-8")


@pytest.fixture
def wildcat_golden():
    return json.loads((DATA / "wildcat_toy_golden.json").read_text(encoding="utf-8"))


@pytest.fixture
def params():
    return EditParams(edit_threshold=0.75, seed=7, skipped_steps=25)
