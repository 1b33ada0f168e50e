import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from citetracer.bench import (
    OPERATORS_BY_CODE,
    SPECS,
    SYNTH_CODES,
    BenchError,
    LabeledEntry,
    Mutator,
    OperatorSkip,
    SeedEntry,
    SimulatedVerifier,
    diff_fields,
    emit_benchmark,
    mutate,
    parse_targets,
    qc_boundary_review,
    qc_roundtrip,
    qc_verifiability,
    read_labels,
    synthesize,
)
from citetracer.bibtex import parse_bibtex_text
from citetracer.model import FIELDS, CitationRecord, TaxonomyCode


def test_operator_catalogue():
    assert set(OPERATORS_BY_CODE) == set(SYNTH_CODES)
    assert TaxonomyCode.P2 not in OPERATORS_BY_CODE
    for op, spec in SPECS.items():
        assert spec.post_schema == spec.touched_fields
        assert spec.touched_fields <= spec.code.touched_fields or spec.code.value.startswith("R")


def test_h4_shift_plus_three(seeds):
    seed = next(s for s in seeds if s.record.year == 2019)
    for n in range(200):
        e = mutate(seed, "year_shift", n, seeds)
        if e.notes["shift"] == 3:
            break
    assert e.record.year == 2022
    assert diff_fields(seed.record, e.record) == {"year"}
    assert all(e.record.get(f) == seed.record.get(f) for f in FIELDS if f != "year")


def test_year_shift_range(seeds):
    for s in seeds:
        e = mutate(s, "year_shift", 1, seeds)
        assert 1 <= abs(e.record.year - s.record.year) <= 5


def test_r3_truncation(seeds):
    seed = next(s for s in seeds if len(s.record.authors) == 5)
    e = mutate(seed, "truncate_et_al", 0, seeds)
    assert e.record.authors == (seed.record.authors[0], "et al.")


def test_r2_initials():
    seed = SeedEntry(CitationRecord(title="T", authors=("Gao Hao",), year=2020, source_key="s"), "ml", None)
    e = mutate(seed, "author_initials", 0)
    assert e.record.authors == ("G. Hao",)


def test_applicability_skip():
    seed = SeedEntry(CitationRecord(title="T", authors=("Solo Author",), year=2020, source_key="s"), "ml", None)
    with pytest.raises(OperatorSkip):
        mutate(seed, "truncate_et_al", 0)


def test_deterministic_operators_reproducible(seeds):
    for op in ("year_shift", "drop_author", "reorder_authors", "author_initials", "truncate_et_al", "doi_unresolvable"):
        for s in seeds[:10]:
            try:
                a = mutate(s, op, 42, seeds)
            except OperatorSkip:
                continue
            b = mutate(s, op, 42, seeds)
            assert a.record == b.record


def test_every_operator_roundtrips(seeds):
    m = Mutator(seeds)
    for op in SPECS:
        made = 0
        for s in seeds:
            try:
                e = m.mutate(s, op, 3)
            except OperatorSkip:
                continue
            assert qc_roundtrip(e, s).passed, (op, s.key)
            made += 1
        assert made, op


class Rogue:
    """Backend that changes fields it was never asked to touch."""

    name = "rogue"

    def __init__(self, rng):
        self.rng = rng

    def propose(self, spec, seed, instruction):
        out = {f: f"junk{self.rng.randint(0, 99)}" for f in ("title", "venue", "publisher", "location") if self.rng.random() < 0.7}
        out["year"] = 1901
        if "authors" in spec.touched_fields:
            out["authors"] = ["Nobody Real", "Also Fake"]
        if "venue" in spec.touched_fields:
            out["venue"] = "Journal of Unlikely Results"
        if "title" in spec.touched_fields:
            out["title"] = "A Different Title Entirely"
        return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["inject_author", "fabricate_authors", "venue_swap", "title_substitution", "nickname"]))
def test_schema_enforcement_repairs_rogue_backend(seeds, rng_seed, op):
    m = Mutator(seeds, backend=Rogue(random.Random(rng_seed)))
    seed = seeds[rng_seed % len(seeds)]
    try:
        e = m.mutate(seed, op, rng_seed)
    except OperatorSkip:
        return
    assert qc_roundtrip(e, seed).passed


def test_roundtrip_gate_examples(seeds):
    s = seeds[0]
    h3 = mutate(s, "venue_swap", 0, seeds)
    rep = qc_roundtrip(h3, s)
    assert rep.passed and rep.diff == {"venue"}
    bad = LabeledEntry(h3.record.with_fields(year=h3.record.year + 1), h3.code, h3.seed_key, h3.operator, h3.touched_fields)
    assert not qc_roundtrip(bad, s).passed
    r1 = mutate(s, "identity", 0)
    assert qc_roundtrip(r1, s).passed
    r1_bad = LabeledEntry(s.record.with_fields(pages="1--2"), TaxonomyCode.R1, s.key, "identity", frozenset())
    assert not qc_roundtrip(r1_bad, s).passed


def test_verifiability_gate(seeds):
    verifier = SimulatedVerifier(seeds)
    seed = next(s for s in seeds if s.record.doi)
    assert qc_verifiability(mutate(seed, "identity", 0), seed, verifier) == "pass"
    # P3 volume on a seed whose volume the connectors index: verifiable, so not P3
    indexed = next(s for s in seeds if s.record.volume)
    planted = LabeledEntry(indexed.record, TaxonomyCode.P3, indexed.key, "fabricate_volume", frozenset({"volume"}))
    assert qc_verifiability(planted, indexed, verifier) == "fail"
    h5 = mutate(seed, "doi_unresolvable", 0)
    assert qc_verifiability(h5, seed, verifier) == "pass"


def test_verifiability_indeterminate_when_all_degraded(seeds):
    class Dead:
        def prepare(self, records):
            pass

        def evidence(self, record):
            return [], [], False

    assert qc_verifiability(mutate(seeds[0], "identity", 0), seeds[0], Dead()) == "indeterminate"


def test_boundary_review(seeds):
    seed = SeedEntry(CitationRecord(title="T", authors=("Michael Jordan", "Ann Lee"), year=2020, source_key="mj"), "ml", None)
    e = mutate(seed, "nickname", 0)
    t = qc_boundary_review(e)
    assert t.table_hit and t.status == "approved"
    fake = LabeledEntry(seed.record.with_fields(authors=("Jondy Smith",)), TaxonomyCode.P1, "x", "nickname",
                        frozenset({"authors"}), notes={"table_hit": False, "original": "Jonathan", "substituted": "Jondy"})
    assert qc_boundary_review(fake).status == "held"
    assert qc_boundary_review(fake, {fake.key: "approve"}).status == "approved"
    with pytest.raises(BenchError):
        qc_boundary_review(mutate(seeds[0], "year_shift", 0, seeds))


def test_p2_rejected():
    with pytest.raises(BenchError, match="P2"):
        parse_targets({"P2": 1})


def test_synth_determinism(seeds):
    a = synthesize(seeds, {"H4": 5}, rng_seed=11)
    b = synthesize(seeds, {"H4": 5}, rng_seed=11)
    assert len(a.entries) == 5
    assert [e.record for e in a.entries] == [e.record for e in b.entries]


def test_emit_one_per_code(tmp_path, seeds):
    res = synthesize(seeds, {c.value: 1 for c in SYNTH_CODES}, rng_seed=3)
    manifest = emit_benchmark(res.entries, tmp_path, res)
    assert manifest["counts"] == {c.value: 1 for c in SYNTH_CODES}
    records, errors = parse_bibtex_text((tmp_path / "benchmark.bib").read_text())
    assert not errors and len(records) == 11
    labels = read_labels(tmp_path / "labels.tsv")
    assert labels == {e.key: e.code.value for e in res.entries}
    assert json.loads((tmp_path / "manifest.json").read_text())["gate_rejections"] == res.gate_rejections
    by_key = {r.source_key: r for r in records}
    for e in res.entries:
        assert by_key[e.key].fields_dict() == e.record.fields_dict()


def test_emit_rejects_duplicates(tmp_path, seeds):
    e = mutate(seeds[0], "identity", 0)
    e.qc_status = "accepted"
    with pytest.raises(BenchError):
        emit_benchmark([e, e], tmp_path)
    e2 = mutate(seeds[1], "identity", 0)
    with pytest.raises(BenchError):
        emit_benchmark([e2], tmp_path)


def test_never_emits_p2(bench110):
    assert all(e.code is not TaxonomyCode.P2 for e in bench110.entries)
    assert all(e.qc_status == "accepted" for e in bench110.entries)
