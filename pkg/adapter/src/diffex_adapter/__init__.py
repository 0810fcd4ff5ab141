"""Reference backend adapter for the diffex wire protocol."""

from .config import AdapterConfig
from .conformance import SelftestReport, conformance_selftest
from .errors import AdapterError, AdapterStartupError, RequestError
from .server import PROTOCOL_VERSION, AdapterServer
from .stub import StubModel

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "AdapterServer",
    "AdapterStartupError",
    "PROTOCOL_VERSION",
    "RequestError",
    "SelftestReport",
    "StubModel",
    "conformance_selftest",
]
