import json
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from citetracer.adjudication import (
    Adjudicator,
    LLMJudgerBackend,
    Target,
    judge_potential,
    judge_valid,
    route,
    validate_reply,
)
from citetracer.channel import BackendContractError, CallableChannel
from citetracer.matching import surname_of
from citetracer.model import STAGES, CitationRecord, EvidenceBundle, Fact, Label, ResolvedBy, TaxonomyCode

BASE = dict(title="Efficient Graph Partitioning at Scale", authors=("Katherine Lee", "Ming Zhou"),
            venue="Workshop on Graph Learning Systems", year=2020)


def cite(**kw):
    return CitationRecord(**{**BASE, **kw})


def bundle(*cands, facts=()):
    return EvidenceBundle(tuple(cands), STAGES, tuple(facts))


CAND = cite().as_candidate("crossref")


def adjudicate(rec, b, judger=None):
    return Adjudicator(judger=judger)(rec, b)


def test_route_examples():
    adj = Adjudicator()
    ctx, _, _ = adj.context(cite(authors=("Katherine Lee", "Ming Zhou", "Bob Fake")), bundle(CAND))
    assert route(ctx).target is Target.HALLUCINATED
    ctx, _, _ = adj.context(cite(volume="7"), bundle(CAND))
    assert route(ctx).target is Target.POTENTIAL
    ctx, _, _ = adj.context(cite(venue="WGLS"), bundle(CAND))
    assert route(ctx).target is Target.VALID


def test_valid_examples():
    a = adjudicate(cite(venue="WGLS", authors=("K. Lee", "Ming Zhou")), bundle(CAND))
    assert a.verdict.label is Label.REAL and a.verdict.codes == (TaxonomyCode.R2,)
    assert a.verdict.resolved_by is ResolvedBy.VALID_JUDGER


def test_valid_escalates_on_contradiction():
    adj = Adjudicator()
    ctx, _, _ = adj.context(cite(venue="WGLS", year=2011), bundle(CAND))
    v = judge_valid(ctx)
    assert v.label is Label.HALLUCINATED and TaxonomyCode.H4 in v.codes


def test_valid_backend_timeout_falls_back():
    def slow(prompt, system):
        raise TimeoutError("timeout")

    a = adjudicate(cite(venue="WGLS"), bundle(CAND), LLMJudgerBackend(CallableChannel(slow)))
    assert a.verdict.label is Label.REAL and a.verdict.codes == (TaxonomyCode.R2,)


def test_potential_examples():
    a = adjudicate(cite(authors=("Kate Lee", "Ming Zhou")), bundle(CAND))
    assert (a.verdict.label, a.verdict.codes) == (Label.POTENTIAL, (TaxonomyCode.P1,))
    a = adjudicate(cite(doi="10.1234/abc"), bundle(CAND))
    assert (a.verdict.label, a.verdict.codes) == (Label.HALLUCINATED, (TaxonomyCode.H5,))


def test_non_academic_is_p2():
    rec = CitationRecord(title="some toolkit", url="https://github.com/x/y")
    fact = Fact("non_academic_source", "UrlFetch", field="url", value=rec.url, source="github.com")
    v = adjudicate(rec, EvidenceBundle((), STAGES[:2], (fact,))).verdict
    assert v.codes == (TaxonomyCode.P2,) and v.sources == {"github.com"}


def test_hallucinated_examples():
    v = adjudicate(cite(year=2017), bundle(CAND)).verdict
    assert v.codes == (TaxonomyCode.H4,) and v.offending_fields == {"year"}
    other = CitationRecord(title="A Totally Different Paper", authors=("X Y",), year=2011, doi="10.1/zzz").as_candidate("doi")
    v = adjudicate(cite(doi="10.1/zzz"), bundle(other, CAND)).verdict
    assert TaxonomyCode.H5 in v.codes and "doi" in v.offending_fields
    v = adjudicate(cite(title="Quantum Pancakes"), bundle(facts=[Fact("evidence_absent", "WebSearch")])).verdict
    assert v.label is Label.HALLUCINATED and "title" in v.offending_fields


def test_unresolvable_identifier_is_h5():
    fact = Fact("unresolvable", "UrlFetch", field="arxiv_id", value="2301.99999", source="arxiv")
    v = adjudicate(cite(arxiv_id="2301.99999"), bundle(CAND, facts=[fact])).verdict
    assert v.codes == (TaxonomyCode.H5,) and v.offending_fields == {"arxiv_id"}


def test_reply_validation():
    assert validate_reply(Target.POTENTIAL, {"label": "POTENTIAL", "taxonomy": ["P1"], "reason": "x"})[1] == (TaxonomyCode.P1,)
    with pytest.raises(BackendContractError):
        validate_reply(Target.POTENTIAL, {"label": "REAL", "taxonomy": ["R1"], "reason": "x"})
    with pytest.raises(BackendContractError):
        validate_reply(Target.HALLUCINATED, {"label": "HALLUCINATED", "taxonomy": ["H9"], "reason": ""})


def test_llm_cannot_bless_contradiction():
    reply = json.dumps({"label": "REAL", "taxonomy": ["R2"], "reason": "looks fine"})
    judger = LLMJudgerBackend(CallableChannel(lambda p, s: reply))
    v = adjudicate(cite(venue="WGLS", year=2011), bundle(CAND), judger).verdict
    assert v.label is Label.HALLUCINATED


def test_llm_potential_reply_used_when_consistent():
    reply = json.dumps({"label": "POTENTIAL", "taxonomy": ["P1"], "reason": "nickname"})
    seen = []

    def fn(prompt, system):
        seen.append(prompt)
        return reply

    v = adjudicate(cite(authors=("Kate Lee", "Ming Zhou")), bundle(CAND), LLMJudgerBackend(CallableChannel(fn))).verdict
    assert v.codes == (TaxonomyCode.P1,) and seen and "Kate Lee" in seen[0]


# -- properties ------------------------------------------------------------

GIVEN = ["Katherine", "Kate", "K.", "Ming", "M.", "Robert", "Bob", "Ann"]
SURN = ["Lee", "Zhou", "Smith", "Garcia", "Okafor"]
author = st.builds(lambda g, s: f"{g} {s}", st.sampled_from(GIVEN), st.sampled_from(SURN))


@st.composite
def cases(draw):
    cand_authors = tuple(draw(st.lists(author, min_size=1, max_size=4)))
    cand = dict(BASE, authors=cand_authors)
    rec = dict(cand)
    if draw(st.booleans()):
        rec["authors"] = tuple(draw(st.lists(author, min_size=1, max_size=4)))
    if draw(st.booleans()):
        rec["year"] = BASE["year"] + draw(st.integers(-3, 3))
    if draw(st.booleans()):
        rec["venue"] = draw(st.sampled_from(["WGLS", "ICML", "Workshop on Graph Learning Systems", "Nature"]))
    for f in ("volume", "pages", "publisher", "location", "doi"):
        choice = draw(st.sampled_from(["none", "rec", "both", "diff"]))
        val = {"volume": "7", "pages": "1-9", "publisher": "ACM", "location": "Paris", "doi": "10.1/abc"}[f]
        if choice in ("rec", "both", "diff"):
            rec[f] = val
        if choice == "both":
            cand[f] = val
        if choice == "diff":
            cand[f] = {"volume": "8", "pages": "2-9", "publisher": "IEEE", "location": "Rome", "doi": "10.1/xyz"}[f]
    facts = []
    if draw(st.booleans()):
        facts.append(Fact("unresolvable", "UrlFetch", field="doi", value="10.1/abc", source="doi"))
    cands = () if draw(st.integers(0, 9)) == 0 else (CitationRecord(**cand).as_candidate(draw(st.sampled_from(["crossref", "dblp", "web"]))),)
    if not cands:
        facts.append(Fact("evidence_absent", "WebSearch"))
    return CitationRecord(**rec), EvidenceBundle(cands, STAGES, tuple(facts))


@settings(max_examples=300, deadline=None)
@given(cases())
def test_router_total_and_deterministic(case):
    rec, b = case
    adj = Adjudicator()
    ctx, _, early = adj.context(rec, b)
    r1, r2 = route(ctx), route(ctx)
    assert r1 == r2 and r1.target in Target
    assert adj(rec, b).verdict == adj(rec, b).verdict


def _surnames(names):
    return sorted(surname_of(n) for n in names if n not in ("et al.",))


@settings(max_examples=300, deadline=None)
@given(cases())
def test_author_set_mismatch_never_p1(case):
    rec, b = case
    v = Adjudicator()(rec, b).verdict
    if b.candidates and _surnames(rec.authors) != _surnames(b.candidates[0].authors):
        assert TaxonomyCode.P1 not in v.codes
        assert v.label is not Label.REAL


@settings(max_examples=200, deadline=None)
@given(cases())
def test_doi_candidate_missing_never_p3(case):
    rec, b = case
    if not b.candidates:
        return
    rec = rec.with_fields(doi="10.5555/only-in-citation")
    b = EvidenceBundle((replace(b.candidates[0], doi=None),), b.stages_tried, b.facts)
    v = Adjudicator()(rec, b).verdict
    assert TaxonomyCode.P3 not in v.codes or "doi" not in v.offending_fields
    assert v.label is Label.HALLUCINATED


@settings(max_examples=200, deadline=None)
@given(cases())
def test_code_field_consistency_and_escalation(case):
    rec, b = case
    a = Adjudicator()(rec, b)
    v = a.verdict
    for c in v.codes:
        if c.label is Label.HALLUCINATED:
            assert c.touched_fields & v.offending_fields
    if a.route is not None and a.route.target is Target.HALLUCINATED:
        assert v.label is not Label.REAL


FAULTS = [
    lambda p, s: (_ for _ in ()).throw(TimeoutError("t")),
    lambda p, s: "not json at all",
    lambda p, s: json.dumps({"label": "REAL"}),
    lambda p, s: json.dumps({"label": "HALLUCINATED", "taxonomy": ["Z1"], "reason": ""}),
    lambda p, s: json.dumps({"label": "POTENTIAL", "taxonomy": ["P2"], "reason": "x"}),
    lambda p, s: json.dumps({"label": "REAL", "taxonomy": ["R1"], "reason": "x"}),
    lambda p, s: json.dumps([1, 2, 3]),
]


@settings(max_examples=300, deadline=None)
@given(cases(), st.sampled_from(range(len(FAULTS))))
def test_no_abstention_under_faults(case, fault):
    rec, b = case
    a = Adjudicator(judger=LLMJudgerBackend(CallableChannel(FAULTS[fault])))(rec, b)
    assert a.verdict.label in Label and a.verdict.codes
