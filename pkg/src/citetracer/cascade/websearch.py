"""General web search as the last, most permissive evidence stage."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Iterable, Protocol

from ..model import CandidateRecord, CitationRecord
from .connectors import _year, host_of
from .transport import Request, Response, Transport


@dataclass(frozen=True)
class WebResult:
    url: str
    title: str = ""
    meta: dict[str, Any] = field(default_factory=dict)


class WebSearchBackend(Protocol):
    name: str
    available: bool

    def search(self, query: str) -> tuple[list[WebResult], Response | None]: ...


class NullWebSearch:
    """No search engine configured; the stage is skipped with a fact."""

    name = "none"
    available = False

    def search(self, query):
        return [], None


class JsonWebSearch:
    """Any endpoint answering ``GET ?q=`` with ``{"results": [{url, title, meta}]}``."""

    name = "json"
    available = True

    def __init__(self, endpoint: str, transport: Transport, limit: int = 5):
        self.endpoint = endpoint
        self.transport = transport
        self.limit = limit

    def request(self, query: str) -> Request:
        return Request.get(self.endpoint, {"q": query, "count": self.limit}, connector="web")

    def search(self, query):
        response = self.transport.fetch(self.request(query))
        if not response.ok:
            return [], response
        data = json.loads(response.body)
        out = []
        for item in (data.get("results") or [])[: self.limit]:
            if item.get("url"):
                out.append(WebResult(item["url"], item.get("title") or "", item.get("meta") or {}))
        return out, response

    @staticmethod
    def render(results: Iterable[WebResult]) -> str:
        return json.dumps(
            {"results": [{"url": r.url, "title": r.title, "meta": r.meta} for r in results]}, ensure_ascii=False
        )


def web_query(record: CitationRecord) -> str:
    """Quoted title plus the first author's surname."""
    query = f'"{record.title}"' if record.title else ""
    named = record.named_authors
    if named:
        last = named[0].split()[-1] if named[0].split() else ""
        query = f"{query} {last}".strip() if last else query
    return query


def result_candidate(result: WebResult, response: Response | None) -> CandidateRecord | None:
    meta = result.meta
    title = meta.get("title")
    if not title:
        return None
    authors = meta.get("authors") or []
    if isinstance(authors, str):
        authors = [authors]
    return CandidateRecord(
        title=title,
        authors=tuple(authors),
        venue=meta.get("venue"),
        year=_year(meta.get("year")),
        volume=meta.get("volume"),
        pages=meta.get("pages"),
        publisher=meta.get("publisher"),
        location=meta.get("location"),
        doi=meta.get("doi"),
        arxiv_id=meta.get("arxiv_id"),
        url=result.url,
        source="web",
        retrieved_at=response.retrieved_at if response else None,
        raw_payload_digest=response.digest if response else None,
    )


@lru_cache(maxsize=1)
def nonacademic_hosts() -> tuple[frozenset[str], tuple[str, ...]]:
    text = resources.files("citetracer.data").joinpath("nonacademic_hosts.txt").read_text("utf-8")
    exact, suffixes = set(), []
    for line in text.splitlines():
        line = line.strip().lower()
        if not line or line.startswith("#"):
            continue
        if line.startswith("*."):
            suffixes.append(line[1:])
        else:
            exact.add(line)
    return frozenset(exact), tuple(suffixes)


def is_nonacademic(url: str) -> bool:
    host = host_of(url)
    if not host:
        return False
    exact, suffixes = nonacademic_hosts()
    bare = host[4:] if host.startswith("www.") else host
    if host in exact or bare in exact:
        return True
    if host.startswith("blog.") or ".blog." in host:
        return True
    return any(host.endswith(s) for s in suffixes)
