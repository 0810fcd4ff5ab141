"""Pluggable edit/classify backends behind one session protocol."""

from .conformance import CheckResult, ConformanceReport, run_conformance
from .remote import RemoteOptions, RemoteSession, connect_remote_backend
from .server import BackendServer, serve_session
from .synthetic import (
    EFFECT_OPS,
    LINKS,
    WORLD_SCHEMA,
    FeatureEffect,
    SyntheticSession,
    SyntheticWorld,
    load_world,
    make_synthetic_backend,
    world_from_dict,
)
from .types import (
    DEFAULT_SKIPPED_STEPS,
    PROTOCOL_VERSION,
    VALUE_SPACES,
    BackendSession,
    ClassifierOutput,
    EditInstruction,
    EditParams,
    ImageRef,
    classify,
    edit,
)

__all__ = [
    "BackendServer",
    "BackendSession",
    "CheckResult",
    "ClassifierOutput",
    "ConformanceReport",
    "DEFAULT_SKIPPED_STEPS",
    "EFFECT_OPS",
    "EditInstruction",
    "EditParams",
    "FeatureEffect",
    "ImageRef",
    "LINKS",
    "PROTOCOL_VERSION",
    "RemoteOptions",
    "RemoteSession",
    "SyntheticSession",
    "SyntheticWorld",
    "VALUE_SPACES",
    "WORLD_SCHEMA",
    "classify",
    "connect_remote_backend",
    "edit",
    "load_world",
    "make_synthetic_backend",
    "run_conformance",
    "serve_session",
    "world_from_dict",
]
