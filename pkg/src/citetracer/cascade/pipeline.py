"""The four-stage evidence cascade."""

from __future__ import annotations

import logging
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from ..model import (
    CONNECTOR_IDS,
    MAX_CANDIDATES_PER_CONNECTOR,
    STAGES,
    CandidateRecord,
    CitationRecord,
    EvidenceBundle,
    Fact,
    Label,
    TaxonomyCode,
    Verdict,
)
from ..normalize import normalize_arxiv, normalize_doi, normalize_title
from .cache import CacheUnavailable, MemoryCache
from .connectors import (
    SOURCE_PRIORITY,
    AclAnthologyConnector,
    ArxivConnector,
    Connector,
    DoiResolver,
    UrlMetaResolver,
    host_of,
    make_connectors,
    split_display_name,
)
from .transport import Transport, TransportError
from .websearch import NullWebSearch, WebSearchBackend, is_nonacademic, result_candidate, web_query

log = logging.getLogger(__name__)

BIOMEDICAL_CONNECTORS = ("europepmc", "pubmed")
_BIO_WORDS = re.compile(
    r"\b(?:med\w*|bio\w*|clin\w*|health\w*|lancet|jama|bmj|cell|genom\w*|genet\w*|neuro\w*|"
    r"pharm\w*|cancer|oncol\w*|patho\w*|radiol\w*|miccai|isbi|physiol\w*|epidem\w*|nucleic|protein\w*|plos)\b",
    re.I,
)


def is_biomedical(record: CitationRecord) -> bool:
    text = " ".join(x for x in (record.venue, record.publisher) if x)
    return bool(text and _BIO_WORDS.search(text))


def scholar_query(record: CitationRecord) -> tuple[str, str | None]:
    """Normalized title plus the first author's surname (if any)."""
    author = None
    named = record.named_authors
    if named:
        author = split_display_name(named[0])[1] or None
    return normalize_title(record.title or ""), author


# ---------------------------------------------------------------------------
# ranking and merging


def _tokens(text: str | None) -> set[str]:
    return set(normalize_title(text).split()) if text else set()


def title_overlap(a: str | None, b: str | None) -> float:
    ta, tb = _tokens(a), _tokens(b)
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def identifier_match(record, cand) -> bool:
    if record.doi and cand.doi and normalize_doi(record.doi) == normalize_doi(cand.doi):
        return True
    return bool(record.arxiv_id and cand.arxiv_id and normalize_arxiv(record.arxiv_id) == normalize_arxiv(cand.arxiv_id))


def _priority(source: str) -> int:
    return SOURCE_PRIORITY.index(source) if source in SOURCE_PRIORITY else len(SOURCE_PRIORITY)


def rank_candidates(record: CitationRecord, candidates: Sequence[CandidateRecord]) -> list[CandidateRecord]:
    """Identifier match, then exact normalized title, then token overlap."""
    want = normalize_title(record.title) if record.title else None

    def key(item):
        i, c = item
        exact = bool(want and c.title and normalize_title(c.title) == want)
        return (-identifier_match(record, c), -exact, -round(title_overlap(record.title, c.title), 6), _priority(c.source), i)

    return [c for _, c in sorted(enumerate(candidates), key=key)]


def same_work(a, b) -> bool:
    """Dedup key precedence: doi, then arxiv id, then (normalized title, year)."""
    if a.doi and b.doi:
        return normalize_doi(a.doi) == normalize_doi(b.doi)
    if a.arxiv_id and b.arxiv_id:
        return normalize_arxiv(a.arxiv_id) == normalize_arxiv(b.arxiv_id)
    return bool(a.title and b.title) and normalize_title(a.title) == normalize_title(b.title) and a.year == b.year


def merge_candidates(groups: Sequence[Sequence[CandidateRecord]]) -> list[CandidateRecord]:
    """Merge per-connector result lists (already in priority order)."""
    merged: list[CandidateRecord] = []
    for results in groups:
        for cand in results:
            for i, head in enumerate(merged):
                if same_work(head, cand):
                    fill = {f: getattr(cand, f) for f in ("title", "authors", "venue", "year", "volume", "pages", "publisher", "location", "doi", "arxiv_id", "url") if head.get(f) is None and cand.get(f) is not None}
                    extra = tuple(s for s in cand.sources if s not in head.sources)
                    merged[i] = _replace(head, corroborating=head.corroborating + extra, **fill)
                    break
            else:
                merged.append(cand)
    return merged


def _replace(cand: CandidateRecord, **changes: Any) -> CandidateRecord:
    data = cand.to_dict()
    data.update(changes)
    data["corroborating"] = tuple(data.get("corroborating") or ())
    return CandidateRecord.from_dict(data)


def cap_per_source(existing: Iterable[CandidateRecord], new: Iterable[CandidateRecord], limit: int = MAX_CANDIDATES_PER_CONNECTOR) -> list[CandidateRecord]:
    """Drop new candidates that would push any connector past ``limit``."""
    counts: dict[str, int] = {}
    for c in existing:
        for s in c.sources:
            counts[s] = counts.get(s, 0) + 1
    kept = []
    for c in new:
        if any(counts.get(s, 0) >= limit for s in c.sources if s in CONNECTOR_IDS):
            continue
        for s in c.sources:
            counts[s] = counts.get(s, 0) + 1
        kept.append(c)
    return kept


# ---------------------------------------------------------------------------
# health


class ConnectorHealth:
    """Per-connector success/failure counts for one run."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.ok: dict[str, int] = {}
        self.failed: dict[str, int] = {}
        self.errors: dict[str, str] = {}

    def record(self, source: str, ok: bool, error: str | None = None) -> None:
        with self._lock:
            bucket = self.ok if ok else self.failed
            bucket[source] = bucket.get(source, 0) + 1
            if error and source not in self.errors:
                self.errors[source] = error

    @property
    def degraded(self) -> list[str]:
        with self._lock:
            return sorted(self.failed)

    def summary(self) -> dict[str, dict[str, Any]]:
        with self._lock:
            names = sorted(set(self.ok) | set(self.failed))
            return {
                n: {"ok": self.ok.get(n, 0), "failed": self.failed.get(n, 0), "degraded": n in self.failed}
                for n in names
            }


# ---------------------------------------------------------------------------
# the cascade


@dataclass
class CascadeConfig:
    connectors: tuple[str, ...] = CONNECTOR_IDS
    fanout: int = 10
    api_keys: dict[str, str] = field(default_factory=dict)
    record_timings: bool = False


@dataclass
class CascadeResult:
    verdict: Verdict
    bundle: EvidenceBundle
    outcome: Any = None
    timings: dict[str, float] = field(default_factory=dict)

    def __iter__(self):
        # unpacks as (verdict, bundle)
        return iter((self.verdict, self.bundle))


def stops_cascade(verdict: Verdict) -> bool:
    """Real verdicts stop the cascade; so does a P2 (non-academic) routing."""
    return verdict.label is Label.REAL or TaxonomyCode.P2 in verdict.codes


class Cascade:
    def __init__(
        self,
        transport: Transport,
        cache: MemoryCache | None = None,
        web: WebSearchBackend | None = None,
        config: CascadeConfig | None = None,
        health: ConnectorHealth | None = None,
    ):
        self.transport = transport
        self.cache = cache
        self.web = web or NullWebSearch()
        self.config = config or CascadeConfig()
        self.health = health or ConnectorHealth()
        self.connectors: dict[str, Connector] = make_connectors(self.config.connectors, self.config.api_keys)
        self.doi = DoiResolver()
        self.arxiv = ArxivConnector()
        self.urls = UrlMetaResolver()

    # -- stage 1
    def stage_memory(self, record: CitationRecord) -> tuple[list[CandidateRecord], list[Fact]]:
        if self.cache is None:
            return [], [Fact("stage_skipped", "Memory", detail="no cache configured")]
        try:
            return self.cache.lookup(record), []
        except CacheUnavailable as exc:
            log.warning("memory cache unavailable: %s", exc)
            return [], [Fact("stage_skipped", "Memory", detail=f"cache unavailable: {exc}")]

    # -- stage 2
    def stage_url_fetch(self, record: CitationRecord) -> tuple[list[CandidateRecord], list[Fact]]:
        cands: list[CandidateRecord] = []
        facts: list[Fact] = []
        url = record.url
        if not (record.doi or record.arxiv_id or url):
            return [], [Fact("stage_skipped", "UrlFetch", detail="no identifiers")]
        if record.doi:
            self._resolve(record.doi, "doi", lambda: self.doi.resolve(self.transport, record.doi), cands, facts)
        if record.arxiv_id:
            self._resolve(record.arxiv_id, "arxiv_id", lambda: self.arxiv.lookup(self.transport, record.arxiv_id), cands, facts)
        if url:
            host = host_of(url)
            if is_nonacademic(url):
                if looks_nonacademic(record):
                    facts.append(Fact("non_academic_source", "UrlFetch", field="url", value=url, source=host))
            elif host.endswith("doi.org") or host.endswith("arxiv.org"):
                pass  # identifier links are covered above or by the scholar stage
            else:
                self._resolve(url, "url", lambda: self.urls.resolve(self.transport, url), cands, facts)
        return cands, facts

    def _resolve(self, value: str, field_name: str, call: Callable, cands: list, facts: list) -> None:
        source = {"doi": "doi", "arxiv_id": "arxiv", "url": "url"}[field_name]
        try:
            cand, response = call()
        except TransportError as exc:
            self.health.record(source, False, str(exc))
            facts.append(Fact("stage_partial", "UrlFetch", field=field_name, value=value, source=source, detail=str(exc)))
            return
        self.health.record(source, True)
        if cand is None:
            facts.append(
                Fact("unresolvable", "UrlFetch", field=field_name, value=value, source=source, detail=f"HTTP {response.status}")
            )
        else:
            cands.append(cand)

    # -- stage 3
    def stage_scholar(self, record: CitationRecord, existing: Sequence[CandidateRecord] = ()) -> tuple[list[CandidateRecord], list[Fact]]:
        if not record.title:
            return [], [Fact("stage_skipped", "ScholarConnectors", detail="no title")]
        title, author = scholar_query(record)
        first = [c for cid, c in self.connectors.items() if cid not in BIOMEDICAL_CONNECTORS]
        first = [c for c in first if c.by_title or (isinstance(c, AclAnthologyConnector) and c.anthology_id(record))]
        bio = [c for cid, c in self.connectors.items() if cid in BIOMEDICAL_CONNECTORS]
        facts: list[Fact] = []
        wave1 = first + (bio if is_biomedical(record) else [])
        results = self._query(wave1, record, title, author, facts)
        answered = [cid for cid, res in results.items() if res is not None]
        if not any(results.get(c.id) for c in wave1) and not is_biomedical(record) and bio:
            more = self._query(bio, record, title, author, facts)
            results.update(more)
            answered += [cid for cid, res in more.items() if res is not None]
        queried = list(results)
        if queried and not answered:
            facts.append(Fact("stage_failed", "ScholarConnectors", detail="all connectors degraded"))
        ordered = sorted(results, key=_priority)
        groups = [results[cid] or [] for cid in ordered]
        merged = rank_candidates(record, merge_candidates(groups))
        return cap_per_source(existing, merged), facts

    def _query(self, connectors: list[Connector], record, title, author, facts) -> dict[str, list[CandidateRecord] | None]:
        out: dict[str, list[CandidateRecord] | None] = {}
        if not connectors:
            return out

        def one(conn: Connector):
            try:
                return conn.id, conn.search(self.transport, title, author, record=record)[:MAX_CANDIDATES_PER_CONNECTOR], None
            except (TransportError, ValueError, KeyError, AttributeError) as exc:
                return conn.id, None, exc

        workers = max(1, min(self.config.fanout, len(connectors)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(one, connectors))
        for cid, res, exc in done:
            out[cid] = res
            self.health.record(cid, exc is None, None if exc is None else str(exc))
            if exc is not None:
                facts.append(Fact("connector_degraded", "ScholarConnectors", source=cid, detail=str(exc)))
        return out

    # -- stage 4
    def stage_web_search(self, record: CitationRecord) -> tuple[list[CandidateRecord], list[Fact]]:
        if not self.web.available:
            return [], [Fact("stage_skipped", "WebSearch", detail="no web search backend")]
        query = web_query(record)
        if not query:
            return [], [Fact("stage_skipped", "WebSearch", detail="nothing to search for")]
        try:
            results, response = self.web.search(query)
        except TransportError as exc:
            self.health.record("web", False, str(exc))
            return [], [Fact("stage_skipped", "WebSearch", detail=f"web search unavailable: {exc}")]
        self.health.record("web", True)
        facts = []
        if results and is_nonacademic(results[0].url):
            facts.append(Fact("non_academic_source", "WebSearch", field="url", value=results[0].url, source=host_of(results[0].url)))
        cands = [c for c in (result_candidate(r, response) for r in results) if c is not None]
        return cands[:MAX_CANDIDATES_PER_CONNECTOR], facts

    def gather(self, stage: str, record: CitationRecord, bundle: EvidenceBundle) -> tuple[list[CandidateRecord], list[Fact]]:
        if stage == "Memory":
            return self.stage_memory(record)
        if stage == "UrlFetch":
            cands, facts = self.stage_url_fetch(record)
            return cap_per_source(bundle.candidates, cands), facts
        if stage == "ScholarConnectors":
            return self.stage_scholar(record, bundle.candidates)
        cands, facts = self.stage_web_search(record)
        return cap_per_source(bundle.candidates, cands), facts

    def run(self, record: CitationRecord, adjudicate: Callable[[CitationRecord, EvidenceBundle], Any]) -> CascadeResult:
        """Run stages cheapest first, adjudicating the cumulative bundle after each."""
        bundle = EvidenceBundle()
        timings: dict[str, float] = {}
        outcome = None
        for stage in STAGES:
            t0 = time.perf_counter()
            cands, facts = self.gather(stage, record, bundle)
            if stage == STAGES[-1] and not bundle.candidates and not cands:
                facts.append(Fact("evidence_absent", stage, detail="no candidate at any stage"))
            bundle = bundle.extend(stage, cands, facts)
            outcome = adjudicate(record, bundle)
            if self.config.record_timings:
                timings[stage] = round(time.perf_counter() - t0, 6)
            if stops_cascade(_verdict_of(outcome)):
                break
        return CascadeResult(_verdict_of(outcome), bundle, outcome, timings)


def looks_nonacademic(record: CitationRecord) -> bool:
    """A non-academic URL only marks the citation when nothing else claims a venue."""
    if record.doi or record.arxiv_id:
        return False
    if not record.venue:
        return True
    return bool(re.search(r"github|gitlab|blog|medium|repository|forum|reddit|twitter|youtube|hugging ?face|kaggle", record.venue, re.I))


def _verdict_of(outcome: Any) -> Verdict:
    return outcome if isinstance(outcome, Verdict) else outcome.verdict


def run_cascade(record: CitationRecord, adjudicate, cascade: Cascade) -> CascadeResult:
    return cascade.run(record, adjudicate)
