"""HTTP transport with rate limiting, retries and record/replay fixtures."""

from __future__ import annotations

import gzip
import hashlib
import json
import logging
import os
import random
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol
from urllib.parse import urlsplit, urlunsplit

import httpx

log = logging.getLogger(__name__)

MODES = ("live", "record", "replay")


class TransportError(RuntimeError):
    """A request could not be completed (after any retries)."""


class FixtureMissing(TransportError):
    """Replay mode met a request that was never recorded."""


@dataclass(frozen=True)
class Request:
    url: str
    params: tuple[tuple[str, str], ...] = ()
    method: str = "GET"
    headers: tuple[tuple[str, str], ...] = ()
    connector: str = "http"

    @classmethod
    def get(cls, url: str, params: Mapping[str, object] | None = None, connector: str = "http", **headers: str) -> "Request":
        items = tuple(sorted((str(k), str(v)) for k, v in (params or {}).items()))
        hdrs = tuple(sorted((k.replace("_", "-"), v) for k, v in headers.items()))
        return cls(url, items, "GET", hdrs, connector)

    def canonical_url(self) -> str:
        parts = urlsplit(self.url)
        return urlunsplit((parts.scheme.lower(), parts.netloc.lower(), parts.path or "/", parts.query, ""))

    def digest(self) -> str:
        """Hash of method, canonical URL and sorted query parameters."""
        payload = json.dumps([self.method.upper(), self.canonical_url(), sorted(self.params)], ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {"method": self.method, "url": self.url, "params": [list(p) for p in self.params]}


@dataclass(frozen=True)
class Response:
    status: int
    body: str
    retrieved_at: str
    digest: str

    @property
    def ok(self) -> bool:
        return 200 <= self.status < 300

    def json(self):
        return json.loads(self.body)


class Transport(Protocol):
    def fetch(self, request: Request) -> Response: ...


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


@dataclass
class RatePolicy:
    rate: float = 1.0  # requests per second, per connector
    retries: int = 4
    backoff_base: float = 1.0
    backoff_cap: float = 32.0
    timeout: float = 30.0


class RateLimiter:
    """Minimum spacing between calls, tracked per key."""

    def __init__(self, clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self._next: dict[str, float] = {}
        self._lock = threading.Lock()
        self.clock = clock
        self.sleep = sleep

    def wait(self, key: str, rate: float) -> None:
        if rate <= 0:
            return
        with self._lock:
            now = self.clock()
            slot = max(now, self._next.get(key, now))
            self._next[key] = slot + 1.0 / rate
        if slot > now:
            self.sleep(slot - now)


def backoff_delay(attempt: int, policy: RatePolicy, rng: random.Random) -> float:
    """Full-jitter exponential backoff."""
    ceiling = min(policy.backoff_cap, policy.backoff_base * (2**attempt))
    return rng.uniform(0, ceiling)


class HttpxTransport:
    """Live HTTP. 404s come back as responses; 429/5xx/timeouts are retried."""

    RETRY_STATUS = {429, 500, 502, 503, 504}

    def __init__(
        self,
        policies: Mapping[str, RatePolicy] | None = None,
        default: RatePolicy | None = None,
        client: httpx.Client | None = None,
        user_agent: str = "citetracer/0.1 (bibliography audit)",
        sleep: Callable[[float], None] = time.sleep,
        seed: int | None = None,
    ):
        self.policies = dict(policies or {})
        self.default = default or RatePolicy()
        self.client = client or httpx.Client(follow_redirects=True, headers={"User-Agent": user_agent})
        self.limiter = RateLimiter(sleep=sleep)
        self.sleep = sleep
        self.rng = random.Random(seed)
        self._rng_lock = threading.Lock()

    def _policy(self, connector: str) -> RatePolicy:
        return self.policies.get(connector, self.default)

    def fetch(self, request: Request) -> Response:
        policy = self._policy(request.connector)
        last: Exception | None = None
        for attempt in range(policy.retries + 1):
            self.limiter.wait(request.connector, policy.rate)
            try:
                resp = self.client.request(
                    request.method,
                    request.url,
                    params=list(request.params),
                    headers=dict(request.headers),
                    timeout=policy.timeout,
                )
            except httpx.HTTPError as exc:
                last = exc
            else:
                if resp.status_code not in self.RETRY_STATUS:
                    return Response(resp.status_code, resp.text, _now(), request.digest())
                last = TransportError(f"HTTP {resp.status_code}")
            if attempt < policy.retries:
                with self._rng_lock:
                    delay = backoff_delay(attempt, policy, self.rng)
                log.info("retrying %s in %.1fs (%s)", request.connector, delay, last)
                self.sleep(delay)
        raise TransportError(f"{request.connector}: {request.url}: {last}")


class FixtureStore:
    """Content-addressed directory of gzipped request/response pairs."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, digest: str) -> Path:
        return self.root / digest[:2] / f"{digest}.json.gz"

    def has(self, request: Request) -> bool:
        return self.path(request.digest()).exists()

    def load(self, request: Request) -> Response | None:
        digest = request.digest()
        path = self.path(digest)
        if not path.exists():
            return None
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            data = json.load(fh)
        return Response(data["status"], data["body"], data["retrieved_at"], digest)

    def save(self, request: Request, response: Response) -> None:
        digest = request.digest()
        path = self.path(digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = {
            "request": request.to_dict(),
            "status": response.status,
            "body": response.body,
            "retrieved_at": response.retrieved_at,
        }
        raw = json.dumps(data, ensure_ascii=False, sort_keys=True).encode("utf-8")
        # mtime=0 keeps the archive bytes a pure function of the payload
        blob = gzip.compress(raw, mtime=0)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)

    def put(self, request: Request, status: int, body: str, retrieved_at: str = "2025-01-01T00:00:00Z") -> None:
        self.save(request, Response(status, body, retrieved_at, request.digest()))

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*/*.json.gz")) if self.root.exists() else 0


@dataclass
class FixtureTransport:
    """Route requests through a fixture store.

    ``replay`` never touches the network; ``record`` calls ``inner`` and saves
    what came back; ``live`` passes straight through to ``inner``.
    """

    store: FixtureStore
    mode: str = "replay"
    inner: Transport | None = None
    network_calls: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"fixture mode must be one of {MODES}")
        if self.mode != "replay" and self.inner is None:
            self.inner = HttpxTransport()

    def fetch(self, request: Request) -> Response:
        if self.mode == "replay":
            hit = self.store.load(request)
            if hit is None:
                raise FixtureMissing(f"no fixture for {request.method} {request.canonical_url()} {list(request.params)}")
            return hit
        assert self.inner is not None
        with self._lock:
            self.network_calls += 1
        response = self.inner.fetch(request)
        if self.mode == "record":
            self.store.save(request, response)
        return response


class CallableTransport:
    """Answer requests from a function; handy for tests and fault injection."""

    def __init__(self, fn: Callable[[Request], tuple[int, str]], retrieved_at: str = "2025-01-01T00:00:00Z"):
        self.fn = fn
        self.retrieved_at = retrieved_at

    def fetch(self, request: Request) -> Response:
        status, body = self.fn(request)
        return Response(status, body, self.retrieved_at, request.digest())
