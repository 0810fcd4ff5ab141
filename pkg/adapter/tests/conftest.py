from __future__ import annotations

import hashlib

import pytest

from diffex_adapter.config import AdapterConfig
from diffex_adapter.server import AdapterServer
from diffex_adapter.stub import StubModel


@pytest.fixture
def stub_config():
    return AdapterConfig(labels=("cat", "dog"), domains=("pets",), seed=3, image_count=4)


@pytest.fixture
def stub_model(stub_config):
    return StubModel(stub_config)


@pytest.fixture
def stub_server(stub_model):
    server = AdapterServer(stub_model)
    server.start()
    yield server
    server.stop()


class MutatingStub(StubModel):
    """Fault fixture: every edit also corrupts the original image's state."""

    def edit(self, image_id, semantics, params):
        with self._lock:
            state = self._states.get(image_id)
            if state is not None:
                self._states[image_id] = hashlib.sha256(state + b"|mutate").digest()
        return super().edit(image_id, semantics, params)


@pytest.fixture
def mutating_server(stub_config):
    server = AdapterServer(MutatingStub(stub_config))
    server.start()
    yield server
    server.stop()


@pytest.fixture
def wrong_version_server(stub_model):
    server = AdapterServer(stub_model, announced_protocol="diffex-backend/999")
    server.start()
    yield server
    server.stop()
