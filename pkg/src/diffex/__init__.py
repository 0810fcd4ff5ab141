"""Counterfactual attribute-influence explanations for black-box classifiers.

Searches a hierarchical corpus of semantic attributes with a beam procedure,
scores each candidate by how counterfactual edits shift a classifier's output,
and emits ranked, hierarchical explanation reports. Editing and classification
are pluggable backends behind a small wire protocol; a deterministic synthetic
backend makes the whole stack verifiable by brute force.
"""

from .backend import (
    BackendServer,
    BackendSession,
    ClassifierOutput,
    ConformanceReport,
    EditInstruction,
    EditParams,
    ImageRef,
    RemoteOptions,
    RemoteSession,
    SyntheticSession,
    SyntheticWorld,
    classify,
    connect_remote_backend,
    edit,
    load_world,
    make_synthetic_backend,
    run_conformance,
    serve_session,
)
from .corpus import (
    Corpus,
    IngestResult,
    SemanticNode,
    ValidationReport,
    VlmPromptSpec,
    build_corpus,
    build_vlm_prompt,
    ingest_vlm_response,
    load_corpus,
    nodes_at_level,
    render_vlm_response,
    save_corpus,
    validate_corpus,
)
from .errors import (
    BackendError,
    ConfigError,
    CorpusError,
    CorpusParseError,
    CorpusValidationError,
    DiffexError,
    EnumerationBoundError,
    IncompatibilityError,
    PartialScoreError,
    ProtocolError,
    SearchError,
    TransportError,
    VlmIngestError,
    VlmPromptError,
    WorldError,
)
from .report import (
    CounterfactualManifest,
    ExplanationReport,
    build_report,
    export_manifest,
    manifest_to_csv,
    parse_report,
    render,
    top_k,
)
from .scoring import (
    Candidate,
    CandidateMember,
    CandidateScore,
    ScoreCache,
    ScoringConfig,
    cache_stats,
    candidate_for_node,
    load_cache,
    rank_candidates,
    save_cache,
    score_candidate,
)
from .search import (
    BeamConfig,
    RankedExplanations,
    SearchTrace,
    brute_force_discover,
    discover,
    exhaustive_beam_width,
    joint_search,
    restrict_to_maximal_paths,
)

__version__ = "0.1.0"
