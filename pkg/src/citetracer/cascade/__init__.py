"""Evidence gathering: transport, connectors, cache and the staged cascade."""

from .cache import CacheUnavailable, MemoryCache
from .connectors import SOURCE_PRIORITY, make_connectors
from .pipeline import Cascade, CascadeConfig, CascadeResult, ConnectorHealth, run_cascade
from .transport import FixtureStore, FixtureTransport, HttpxTransport, Request, Response, TransportError
from .websearch import JsonWebSearch, NullWebSearch

__all__ = [
    "CacheUnavailable",
    "Cascade",
    "CascadeConfig",
    "CascadeResult",
    "ConnectorHealth",
    "FixtureStore",
    "FixtureTransport",
    "HttpxTransport",
    "JsonWebSearch",
    "MemoryCache",
    "NullWebSearch",
    "Request",
    "Response",
    "SOURCE_PRIORITY",
    "TransportError",
    "make_connectors",
    "run_cascade",
]
