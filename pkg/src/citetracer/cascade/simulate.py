"""An in-memory stand-in for the public indices, used to plant replay fixtures.

The index answers title searches by token overlap and identifier lookups by
exact match; ``plant_fixtures`` renders those answers into each connector's
own wire format and writes them to a fixture store, so the cascade can run in
replay mode exactly as it would against recorded traffic.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from ..model import CONNECTOR_IDS, MAX_CANDIDATES_PER_CONNECTOR, CitationRecord
from ..normalize import normalize_arxiv, normalize_doi, normalize_title
from .connectors import AclAnthologyConnector, host_of
from .pipeline import BIOMEDICAL_CONNECTORS, Cascade, is_biomedical, scholar_query
from .transport import FixtureStore
from .websearch import JsonWebSearch, WebResult, is_nonacademic, web_query


def default_coverage(record: CitationRecord) -> tuple[str, ...]:
    """Which connectors index a record when nothing else is said."""
    out = [c for c in CONNECTOR_IDS if c not in BIOMEDICAL_CONNECTORS and c not in ("arxiv", "aclanthology")]
    if record.arxiv_id:
        out.append("arxiv")
    if AclAnthologyConnector.anthology_id(record):
        out.append("aclanthology")
    if is_biomedical(record):
        out += list(BIOMEDICAL_CONNECTORS)
    return tuple(out)


class SimulatedIndex:
    def __init__(self, records: Sequence[CitationRecord], coverage: Mapping[str, Iterable[str]] | None = None, threshold: float = 0.5):
        self.records = list(records)
        self.threshold = threshold
        self.coverage: dict[int, frozenset[str]] = {}
        for i, r in enumerate(self.records):
            given = (coverage or {}).get(r.source_key or "")
            self.coverage[i] = frozenset(given if given is not None else default_coverage(r))
        self._tokens = [set(normalize_title(r.title or "").split()) for r in self.records]

    def search(self, connector: str, query: str, limit: int = MAX_CANDIDATES_PER_CONNECTOR) -> list[CitationRecord]:
        q = set(normalize_title(query).split())
        if not q:
            return []
        scored = []
        for i, toks in enumerate(self._tokens):
            if connector not in self.coverage[i] or not toks:
                continue
            score = len(q & toks) / len(q | toks)
            if score >= self.threshold:
                scored.append((-score, i))
        return [self.records[i] for _, i in sorted(scored)[:limit]]

    def by_doi(self, doi: str) -> CitationRecord | None:
        want = normalize_doi(doi)
        return next((r for r in self.records if r.doi and normalize_doi(r.doi) == want), None)

    def by_arxiv(self, arxiv_id: str) -> CitationRecord | None:
        want = normalize_arxiv(arxiv_id)
        return next((r for r in self.records if r.arxiv_id and normalize_arxiv(r.arxiv_id) == want), None)

    def by_url(self, url: str) -> CitationRecord | None:
        return next((r for r in self.records if r.url and r.url.strip() == url.strip()), None)

    def by_anthology(self, anthology_id: str) -> CitationRecord | None:
        return next((r for r in self.records if AclAnthologyConnector.anthology_id(r) == anthology_id), None)


def plant_fixtures(
    store: FixtureStore,
    citations: Iterable[CitationRecord],
    index: SimulatedIndex,
    cascade: Cascade,
    web_results: Mapping[str, Sequence[WebResult]] | None = None,
) -> int:
    """Write every response the cascade could request for ``citations``."""
    n = 0

    def put(request, status, body):
        nonlocal n
        store.put(request, status, body)
        n += 1

    for rec in citations:
        if rec.doi:
            seed = index.by_doi(rec.doi)
            req = cascade.doi.request(rec.doi)
            if seed:
                put(req, 200, cascade.doi.render(seed))
            else:
                put(req, 404, "DOI not found")
        if rec.arxiv_id:
            seed = index.by_arxiv(rec.arxiv_id)
            put(cascade.arxiv.id_request(rec.arxiv_id), 200, cascade.arxiv.render([seed] if seed else []))
        if rec.url and not is_nonacademic(rec.url):
            host = host_of(rec.url)
            if not (host.endswith("doi.org") or host.endswith("arxiv.org")):
                seed = index.by_url(rec.url)
                req = cascade.urls.request(rec.url)
                if seed:
                    put(req, 200, cascade.urls.render(seed))
                else:
                    put(req, 404, "Not Found")
        if rec.title:
            title, author = scholar_query(rec)
            for cid, conn in cascade.connectors.items():
                if isinstance(conn, AclAnthologyConnector):
                    ident = conn.anthology_id(rec)
                    hits = [s for s in [index.by_anthology(ident)] if s is not None] if ident else []
                else:
                    hits = index.search(cid, title)
                for req, status, body in conn.fixtures(title, author, hits, record=rec):
                    put(req, status, body)
        if isinstance(cascade.web, JsonWebSearch):
            query = web_query(rec)
            if query:
                results = list((web_results or {}).get(rec.source_key or "", ()))
                put(cascade.web.request(query), 200, JsonWebSearch.render(results))
    return n
