import threading

import httpx
import pytest

from citetracer.adjudication import Adjudicator
from citetracer.bench import seed_coverage
from citetracer.cascade import (
    Cascade,
    FixtureStore,
    FixtureTransport,
    HttpxTransport,
    JsonWebSearch,
    MemoryCache,
    Request,
    TransportError,
)
from citetracer.cascade.cache import CacheUnavailable
from citetracer.cascade.connectors import make_connectors
from citetracer.cascade.pipeline import cap_per_source, merge_candidates, rank_candidates, scholar_query
from citetracer.cascade.simulate import SimulatedIndex, plant_fixtures
from citetracer.cascade.transport import CallableTransport, FixtureMissing, RateLimiter, RatePolicy, backoff_delay
from citetracer.cascade.websearch import WebResult
from citetracer.model import CONNECTOR_IDS, STAGES, CitationRecord, Label, TaxonomyCode

WEB = "https://search.example/api"


def world(tmp_path, seeds, citations, web_results=None, cache=None, coverage=None):
    store = FixtureStore(tmp_path / "fx")
    transport = FixtureTransport(store, "replay")
    cas = Cascade(transport, cache=cache, web=JsonWebSearch(WEB, transport) if web_results is not None else None)
    index = SimulatedIndex([s.record for s in seeds], coverage if coverage is not None else seed_coverage(seeds))
    plant_fixtures(store, citations, index, cas, web_results)
    return cas


# -- transport -------------------------------------------------------------


def test_request_digest_ignores_param_order():
    a = Request.get("https://x.org/a", {"q": "t", "rows": 5})
    b = Request.get("https://x.org/a", {"rows": 5, "q": "t"})
    assert a.digest() == b.digest()
    assert a.digest() != Request.get("https://x.org/a", {"q": "u", "rows": 5}).digest()


def test_fixture_store_roundtrip_and_bytes(tmp_path):
    store = FixtureStore(tmp_path)
    req = Request.get("https://x.org/a", {"q": "t"})
    store.put(req, 200, "héllo")
    resp = store.load(req)
    assert (resp.status, resp.body) == (200, "héllo")
    blob = store.path(req.digest()).read_bytes()
    store.put(req, 200, "héllo")
    assert store.path(req.digest()).read_bytes() == blob


def test_replay_never_touches_network(tmp_path):
    class Exploding:
        def fetch(self, request):
            raise AssertionError("network call in replay")

    store = FixtureStore(tmp_path)
    t = FixtureTransport(store, "replay", inner=Exploding())
    with pytest.raises(FixtureMissing):
        t.fetch(Request.get("https://x.org/missing"))
    assert t.network_calls == 0


def test_record_mode_saves(tmp_path):
    store = FixtureStore(tmp_path)
    t = FixtureTransport(store, "record", inner=CallableTransport(lambda r: (200, "ok")))
    req = Request.get("https://x.org/r")
    t.fetch(req)
    assert store.has(req) and t.network_calls == 1


def test_httpx_retries_then_succeeds():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(429 if len(calls) < 3 else 200, text="fine")

    slept = []
    t = HttpxTransport(default=RatePolicy(0, 4, 1.0, 32.0, 5), client=httpx.Client(transport=httpx.MockTransport(handler)),
                       sleep=slept.append, seed=1)
    resp = t.fetch(Request.get("https://x.org/a"))
    assert resp.status == 200 and len(calls) == 3 and len(slept) == 2


def test_httpx_gives_up_and_404_is_not_retried():
    t = HttpxTransport(default=RatePolicy(0, 2, 1.0, 32.0, 5), client=httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(503))),
                       sleep=lambda s: None)
    with pytest.raises(TransportError):
        t.fetch(Request.get("https://x.org/a"))
    n = []
    t404 = HttpxTransport(default=RatePolicy(0, 4, 1.0, 32.0, 5),
                          client=httpx.Client(transport=httpx.MockTransport(lambda r: n.append(1) or httpx.Response(404))),
                          sleep=lambda s: None)
    assert t404.fetch(Request.get("https://x.org/a")).status == 404 and len(n) == 1


def test_backoff_bounds():
    import random
    p = RatePolicy(1, 4, 1.0, 32.0, 5)
    rng = random.Random(0)
    for attempt in range(10):
        d = backoff_delay(attempt, p, rng)
        assert 0 <= d <= 32.0


def test_rate_limiter_spacing():
    now = [0.0]
    slept = []

    def sleep(s):
        slept.append(s)
        now[0] += s

    lim = RateLimiter(clock=lambda: now[0], sleep=sleep)
    for _ in range(3):
        lim.wait("dblp", 2.0)
    assert pytest.approx(sum(slept)) == 1.0


# -- cache -----------------------------------------------------------------


def test_cache_admin(tmp_path):
    from importlib import resources
    lines = resources.files("citetracer.data").joinpath("sample_mirror.jsonl").read_text("utf-8").splitlines(True)
    cache = MemoryCache(tmp_path / "c.jsonl")
    assert cache.import_dump(lines) == (3, [])
    assert cache.import_dump(lines)[0] == 0 and len(cache) == 3
    cache.add(CitationRecord(title="Fresh", year=2024), "verified_run")
    assert cache.stats() == {"seed_mirror": 3, "verified_run": 1}
    cache.evict("verified_run")
    assert cache.stats() == {"seed_mirror": 3, "verified_run": 0}
    cache.save()
    assert len(MemoryCache(tmp_path / "c.jsonl")) == 3


def test_cache_dump_errors_have_offsets(tmp_path):
    cache = MemoryCache()
    good = '{"title": "A", "year": 2020}\n'
    added, errors = cache.import_dump([good, "not json\n", '{"title": "B", "journal": "X"}\n'])
    assert added == 1
    assert [(e.line, e.offset) for e in errors] == [(2, len(good)), (3, len(good) + len("not json\n"))]


def test_cache_title_year_key():
    cache = MemoryCache()
    cache.add(CitationRecord(title="Same Title", year=2019), "seed_mirror")
    cache.add(CitationRecord(title="Same  title!", year=2021), "seed_mirror")
    hits = cache.lookup(CitationRecord(title="same title", year=2021))
    assert [h.year for h in hits] == [2021]
    assert cache.lookup(CitationRecord(title="nothing", year=2021)) == []


def test_unavailable_cache_is_skipped(tmp_path):
    p = tmp_path / "broken.jsonl"
    p.write_text("{not json\n")
    cache = MemoryCache(p)
    with pytest.raises(CacheUnavailable):
        cache.lookup(CitationRecord(title="x"))
    cands, facts = Cascade(CallableTransport(lambda r: (404, "")), cache=cache).stage_memory(CitationRecord(title="x"))
    assert cands == [] and facts[0].kind == "stage_skipped"


def test_concurrent_cache_reads_and_writes():
    cache = MemoryCache()
    errors = []

    def work(i):
        try:
            for j in range(50):
                cache.add(CitationRecord(title=f"T {i} {j}", year=2000 + j % 5), "verified_run")
                cache.lookup(CitationRecord(title=f"T {i} {j}", year=2000 + j % 5))
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=work, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors and len(cache) == 400


# -- connectors ------------------------------------------------------------


def test_every_connector_parses_its_own_wire_format(seeds):
    seed = next(s.record for s in seeds if s.key == "devlin2019bert")
    conns = make_connectors(CONNECTOR_IDS)
    assert set(conns) == set(CONNECTOR_IDS)
    title, author = scholar_query(seed)
    for cid, conn in conns.items():
        canned = {req.digest(): (status, body) for req, status, body in conn.fixtures(title, author, [seed] * 7, record=seed)}
        t = CallableTransport(lambda r: canned.get(r.digest(), (404, "")))
        got = conn.search(t, title, author, record=seed)
        if cid == "aclanthology":
            continue  # identifier lookup only
        assert got, cid
        assert len(got) <= 5
        assert all(c.source == cid for c in got)
        assert got[0].title == seed.title


# -- pipeline --------------------------------------------------------------


def test_cache_hit_short_circuits(tmp_path, seeds):
    seed = seeds[0].record
    cache = MemoryCache()
    cache.add(seed, "verified_run")
    cas = Cascade(CallableTransport(lambda r: (_ for _ in ()).throw(AssertionError("no network"))), cache=cache)
    v, b = cas.run(seed, Adjudicator())
    assert v.label is Label.REAL and b.stages_tried == ("Memory",)
    assert b.candidates[0].provenance == "verified_run"


def test_fabricated_doi_fact(tmp_path, seeds):
    rec = seeds[0].record.with_fields(doi="10.99999/fake123", arxiv_id=None)
    cas = world(tmp_path, seeds, [rec])
    cands, facts = cas.stage_url_fetch(rec)
    assert cands == []
    assert [(f.kind, f.field) for f in facts] == [("unresolvable", "doi")]


def test_no_identifiers_skips_url_fetch(seeds):
    rec = CitationRecord(title="Anything")
    cands, facts = Cascade(CallableTransport(lambda r: (404, ""))).stage_url_fetch(rec)
    assert cands == [] and facts[0].kind == "stage_skipped"


def test_arxiv_lookup(tmp_path, seeds):
    rec = next(s.record for s in seeds if s.record.arxiv_id)
    cas = world(tmp_path, seeds, [rec])
    cands, facts = cas.stage_url_fetch(CitationRecord(title=rec.title, arxiv_id=rec.arxiv_id))
    assert [c.source for c in cands] == ["arxiv"] and not facts


def test_dedup_merges_provenance(tmp_path, seeds):
    rec = seeds[0].record
    cas = world(tmp_path, seeds, [rec])
    cands, facts = cas.stage_scholar(rec)
    top = cands[0]
    assert top.title == rec.title
    assert {"crossref", "dblp"} <= set(top.sources)
    same = [c for c in cands if c.title == rec.title]
    assert len(same) == 1


def test_all_connectors_degraded(seeds):
    rec = seeds[0].record

    def fail(request):
        raise TransportError("boom")

    cas = Cascade(CallableTransport(fail))
    cands, facts = cas.stage_scholar(rec)
    assert cands == []
    assert any(f.kind == "stage_failed" for f in facts)
    v, b = cas.run(rec, Adjudicator())
    assert b.stages_tried == STAGES
    assert cas.health.degraded


def test_title_absent_skips_scholar():
    cands, facts = Cascade(CallableTransport(lambda r: (404, ""))).stage_scholar(CitationRecord(year=2020))
    assert cands == [] and facts[0].kind == "stage_skipped"


def test_github_citation_is_p2(tmp_path, seeds):
    rec = CitationRecord(title="transformers: state-of-the-art NLP toolkit", authors=("Hugging Face",),
                         url="https://github.com/huggingface/transformers", year=2020, source_key="gh")
    cas = world(tmp_path, seeds, [rec])
    v, b = cas.run(rec, Adjudicator())
    assert v.label is Label.POTENTIAL and TaxonomyCode.P2 in v.codes
    assert b.stages_tried == ("Memory", "UrlFetch")
    assert "github.com" in v.sources


def test_no_results_anywhere_is_evidence_absent(tmp_path, seeds):
    rec = CitationRecord(title="Quantum Pancake Folding for Sparse Llamas", authors=("Zed Nobody",), year=2021, source_key="z")
    cas = world(tmp_path, seeds, [rec], web_results={})
    v, b = cas.run(rec, Adjudicator())
    assert b.has_fact("evidence_absent") and b.stages_tried == STAGES
    assert v.label is Label.HALLUCINATED and "title" in v.offending_fields


def test_web_only_candidate(tmp_path, seeds):
    rec = CitationRecord(title="A Workshop Paper Nobody Indexed", authors=("Ann Author",), year=2022,
                         venue="Some Workshop", source_key="w")
    meta = {"title": rec.title, "authors": ["Ann Author"], "year": 2022, "venue": "Some Workshop"}
    cas = world(tmp_path, seeds, [rec], web_results={"w": [WebResult("https://ws.example.org/p1", rec.title, meta)]})
    v, b = cas.run(rec, Adjudicator())
    assert b.stages_tried == STAGES
    assert [c.source for c in b.candidates] == ["web"]
    assert v.label is Label.REAL


def test_per_connector_cap():
    from citetracer.model import CandidateRecord
    existing = [CandidateRecord(title=f"t{i}", source="dblp") for i in range(3)]
    new = [CandidateRecord(title=f"n{i}", source="dblp") for i in range(6)] + [CandidateRecord(title="c", source="crossref")]
    out = cap_per_source(existing, new)
    assert sum(1 for c in out if c.source == "dblp") == 2 and len(out) == 3


def test_ranking_prefers_identifier_then_exact_title():
    from citetracer.model import CandidateRecord
    rec = CitationRecord(title="Deep Residual Learning", doi="10.1/x")
    a = CandidateRecord(title="Deep Residual Learning", source="openalex")
    b = CandidateRecord(title="Something Else", doi="10.1/X", source="dblp")
    c = CandidateRecord(title="Deep Residual Learning for Images", source="crossref")
    assert [x.source for x in rank_candidates(rec, [c, a, b])] == ["dblp", "openalex", "crossref"]


def test_merge_candidates_fills_fields():
    from citetracer.model import CandidateRecord
    a = CandidateRecord(title="T", year=2020, source="crossref")
    b = CandidateRecord(title="T", year=2020, pages="1-2", source="dblp")
    merged = merge_candidates([[a], [b]])
    assert len(merged) == 1 and merged[0].pages == "1-2" and set(merged[0].sources) == {"crossref", "dblp"}


def test_h4_runs_all_stages(replay_cascade, bench110):
    e = next(e for e in bench110.entries if e.code is TaxonomyCode.H4)
    v, b = replay_cascade.run(e.record, Adjudicator())
    assert b.stages_tried == STAGES
    assert v.label is Label.HALLUCINATED and TaxonomyCode.H4 in v.codes and v.offending_fields == {"year"}


def test_p3_is_potential_after_full_cascade(replay_cascade, bench110):
    e = next(e for e in bench110.entries if e.code is TaxonomyCode.P3)
    v, b = replay_cascade.run(e.record, Adjudicator())
    assert b.stages_tried == STAGES
    assert v.label is Label.POTENTIAL and v.codes == (TaxonomyCode.P3,)


def test_monotone_growth_and_soundness(replay_cascade, bench110):
    for e in bench110.entries:
        snapshots = []

        def adj(record, bundle, _a=Adjudicator()):
            snapshots.append(bundle)
            return _a(record, bundle)

        v, b = replay_cascade.run(e.record, adj)
        for prev, nxt in zip(snapshots, snapshots[1:]):
            assert nxt.candidates[: len(prev.candidates)] == prev.candidates
            assert set(prev.facts) <= set(nxt.facts)
        if len(b.stages_tried) < len(STAGES):
            assert v.label is Label.REAL or TaxonomyCode.P2 in v.codes
        assert max(b.per_source_counts().values(), default=0) <= 5
