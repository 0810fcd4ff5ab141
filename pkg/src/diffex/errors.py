"""Exception taxonomy shared across the package."""

from __future__ import annotations


class DiffexError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(DiffexError):
    """Base class for corpus document problems."""


class CorpusParseError(CorpusError):
    """Corpus document is not syntactically valid JSON."""

    def __init__(self, message: str, *, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.line = line
        self.column = column


class CorpusFormatError(CorpusError):
    """Corpus document is valid JSON but violates the file schema."""

    def __init__(self, message: str, *, location: str = ""):
        super().__init__(message)
        self.location = location


class CorpusValidationError(CorpusError):
    """A structurally parsed corpus violates one or more invariants.

    Carries the full ValidationReport so callers see every violated rule,
    not just the first.
    """

    def __init__(self, report):
        self.report = report
        lines = [f"[{f.rule}] {f.path}: {f.message}" for f in report.findings]
        super().__init__("corpus validation failed:\n" + "\n".join(lines))


class VlmPromptError(DiffexError):
    """A prompt placeholder could not be filled."""

    def __init__(self, placeholder: str, message: str):
        super().__init__(message)
        self.placeholder = placeholder


class VlmIngestError(DiffexError):
    """A VLM response contained no parsable attribute group."""


class BackendError(DiffexError):
    """Base class for edit/classify backend failures."""


class ProtocolError(BackendError):
    """The backend rejected a request (unknown image, unknown semantic, ...)."""

    CODES = ("unknown_image", "unknown_semantic", "bad_params", "internal")

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class TransportError(BackendError):
    """The backend could not be reached or timed out."""

    def __init__(self, message: str, *, endpoint: str = "", attempts: int = 1, retryable: bool = True):
        super().__init__(message)
        self.endpoint = endpoint
        self.attempts = attempts
        self.retryable = retryable


class IncompatibilityError(BackendError):
    """The remote endpoint speaks a different protocol version."""

    def __init__(self, expected: str, actual: str, *, endpoint: str = ""):
        super().__init__(f"protocol mismatch at {endpoint or 'endpoint'}: expected {expected!r}, got {actual!r}")
        self.expected = expected
        self.actual = actual


class WorldError(DiffexError):
    """A synthetic world definition is inconsistent."""


class PartialScoreError(DiffexError):
    """Scoring a candidate aborted partway through its sample images.

    ``completed`` holds the (image_id, original, edited) triples finished
    before the failure; none of them were committed to the cache.
    """

    def __init__(self, message: str, *, completed, cause: Exception | None = None):
        super().__init__(message)
        self.completed = tuple(completed)
        self.cause = cause


class SearchError(DiffexError):
    """A search precondition does not hold."""


class EnumerationBoundError(SearchError):
    """Brute-force enumeration refused: candidate count exceeds the safety bound."""

    def __init__(self, count: int, bound: int):
        super().__init__(f"exhaustive enumeration would score {count} candidates, above the safety bound of {bound}")
        self.count = count
        self.bound = bound


class ConfigError(DiffexError):
    """A run configuration file is unusable."""
