"""Benchmark synthesis: seed pool, mutation operators, QC gates, emission."""

from __future__ import annotations

import json
import logging
import random
import re
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

from .bibtex import entry_to_record, read_entries, record_to_bibtex
from .channel import BackendContractError, ChannelError, TextChannel, extract_json
from .model import FIELDS, PERIPHERAL_FIELDS, CandidateRecord, CitationRecord, TaxonomyCode
from .normalize import (
    Tables,
    _name_token,
    default_tables,
    normalize,
    normalize_title,
    normalize_venue,
    read_pairs,
)
from .prompts import load_prompt

log = logging.getLogger(__name__)

T = TaxonomyCode


class BenchError(ValueError):
    pass


class OperatorSkip(Exception):
    """The seed does not satisfy the operator's applicability condition."""


# ---------------------------------------------------------------------------
# seeds


@dataclass(frozen=True)
class SeedEntry:
    record: CitationRecord
    topic: str = "general"
    indexed: tuple[str, ...] | None = None

    @property
    def key(self) -> str:
        return self.record.source_key or ""


def load_seeds(path: str | Path | None = None) -> list[SeedEntry]:
    """Read a seed pool from BibTeX (``topic``/``indexed`` are extra fields)."""
    if path is None:
        text = resources.files("citetracer.data").joinpath("seeds.bib").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    result = read_entries(text)
    if result.errors:
        raise BenchError("; ".join(str(e) for e in result.errors))
    seeds = []
    for entry in result.entries:
        indexed = entry.fields.get("indexed")
        seeds.append(
            SeedEntry(
                entry_to_record(entry),
                entry.fields.get("topic", "general").strip() or "general",
                tuple(s.strip() for s in indexed.split(",") if s.strip()) if indexed else None,
            )
        )
    return seeds


def seed_coverage(seeds: Iterable[SeedEntry]) -> dict[str, tuple[str, ...]]:
    return {s.key: s.indexed for s in seeds if s.indexed is not None}


@lru_cache(maxsize=1)
def synonyms() -> dict[str, str]:
    text = resources.files("citetracer.data").joinpath("synonyms.tsv").read_text("utf-8")
    return {a.lower(): b for a, b in read_pairs(text.splitlines(), "synonyms.tsv")}


@lru_cache(maxsize=1)
def fake_names() -> tuple[str, ...]:
    text = resources.files("citetracer.data").joinpath("names.txt").read_text("utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#"))


# ---------------------------------------------------------------------------
# operators


@dataclass(frozen=True)
class MutationSpec:
    code: TaxonomyCode
    operator: str
    touched_fields: frozenset[str]
    generator: str = "deterministic"  # or "backend"

    @property
    def post_schema(self) -> frozenset[str]:
        # the only fields the post-processor lets through from the generator
        return self.touched_fields


def _spec(code, op, fields, generator="deterministic"):
    return MutationSpec(T(code), op, frozenset(fields), generator)


SPECS: dict[str, MutationSpec] = {
    s.operator: s
    for s in [
        _spec("R1", "identity", ()),
        _spec("R2", "venue_acronym", ("venue",)),
        _spec("R2", "author_initials", ("authors",)),
        _spec("R2", "title_case", ("title",)),
        _spec("R3", "truncate_et_al", ("authors",)),
        _spec("P1", "nickname", ("authors",), "backend"),
        *[_spec("P3", f"fabricate_{f}", (f,)) for f in PERIPHERAL_FIELDS],
        _spec("H1", "title_substitution", ("title",), "backend"),
        _spec("H1", "title_fabrication", ("title",)),
        _spec("H2", "drop_author", ("authors",)),
        _spec("H2", "reorder_authors", ("authors",)),
        _spec("H2", "inject_author", ("authors",), "backend"),
        _spec("H2", "fabricate_authors", ("authors",), "backend"),
        _spec("H3", "venue_swap", ("venue",), "backend"),
        _spec("H4", "year_shift", ("year",)),
        _spec("H5", "doi_unresolvable", ("doi",)),
        _spec("H5", "arxiv_unresolvable", ("arxiv_id",)),
        _spec("H5", "doi_other_paper", ("doi",)),
        _spec("H5", "arxiv_other_paper", ("arxiv_id",)),
        *[_spec("H6", f"corrupt_{f}", (f,)) for f in PERIPHERAL_FIELDS],
    ]
}

OPERATORS_BY_CODE: dict[TaxonomyCode, tuple[str, ...]] = {}
for _op, _s in SPECS.items():
    OPERATORS_BY_CODE.setdefault(_s.code, ())
    OPERATORS_BY_CODE[_s.code] += (_op,)

SYNTH_CODES = tuple(c for c in T if c is not T.P2)


@dataclass
class LabeledEntry:
    record: CitationRecord
    code: TaxonomyCode
    seed_key: str
    operator: str
    touched_fields: frozenset[str]
    qc_status: str = "pending"
    notes: dict[str, Any] = field(default_factory=dict)

    @property
    def key(self) -> str:
        return self.record.source_key or ""


class MutationBackend(Protocol):
    name: str

    def propose(self, spec: MutationSpec, seed: SeedEntry, instruction: str) -> Mapping[str, Any]: ...


class LLMMutationBackend:
    """Ask a text backend for the mutated fields using the shipped prompt."""

    name = "llm"

    def __init__(self, channel: TextChannel):
        self.channel = channel
        self.prompt = load_prompt("mutation")

    def propose(self, spec, seed, instruction):
        text = self.prompt.render(
            operator=spec.operator,
            instruction=instruction,
            seed_json=json.dumps(seed.record.fields_dict(), ensure_ascii=False),
            fields=", ".join(sorted(spec.touched_fields)),
        )
        data = extract_json(self.channel.complete(text, system=self.prompt.system))
        if not isinstance(data, Mapping):
            raise BackendContractError("mutation reply must be an object")
        return data


INSTRUCTIONS = {
    "nickname": "Replace one author's given name with a common nickname or transliteration variant of the same person.",
    "title_substitution": "Substitute one content word of the title so the title names a different work.",
    "inject_author": "Insert one plausible but non-existent co-author.",
    "fabricate_authors": "Replace the author list with plausible but non-existent people.",
    "venue_swap": "Replace the venue with a real but wrong venue from the same field.",
}


def enforce_schema(seed: CitationRecord, proposed: CitationRecord, spec: MutationSpec, key: str) -> CitationRecord:
    """Overwrite everything outside the operator's field mask with seed values."""
    changes = {f: getattr(seed, f) for f in FIELDS if f not in spec.post_schema}
    return proposed.with_fields(**changes, source_key=key)


def diff_fields(a: CitationRecord, b: CitationRecord) -> frozenset[str]:
    return frozenset(f for f in FIELDS if a.get(f) != b.get(f))


@lru_cache(maxsize=1)
def _venue_display() -> dict[str, str]:
    """Normalized venue key -> display form of its canonical table entry."""
    text = resources.files("citetracer.data").joinpath("venues.tsv").read_text("utf-8")
    out: dict[str, str] = {}
    for _, canonical in read_pairs(text.splitlines(), "venues.tsv"):
        out.setdefault(normalize_venue(canonical), canonical)
    return out


_GIVEN_SPLIT = re.compile(r"[\s\-]+")


def _initials(name: str) -> str:
    from .cascade.connectors import split_display_name

    given, family = split_display_name(name)
    if not given:
        raise OperatorSkip("single-token name")
    parts = [p for p in _GIVEN_SPLIT.split(given) if p]
    initials = " ".join(p[0].upper() + "." for p in parts)
    return f"{initials} {family}"


class Mutator:
    def __init__(self, seeds: Sequence[SeedEntry], tables: Tables | None = None, backend: MutationBackend | None = None):
        self.seeds = list(seeds)
        self.tables = tables or default_tables()
        self.backend = backend

    # each op returns (fields dict, notes)
    def op_identity(self, s, rng):
        return {}, {}

    def op_venue_acronym(self, s, rng):
        venue = s.record.venue
        if not venue:
            raise OperatorSkip("no venue")
        canonical = self._canonical_venue(venue)
        if not canonical or canonical == venue or " " in canonical:
            raise OperatorSkip("no acronym for venue")
        return {"venue": canonical}, {}

    def _canonical_venue(self, venue: str) -> str | None:
        return _venue_display().get(normalize_venue(venue, self.tables))

    def op_author_initials(self, s, rng):
        authors = list(s.record.authors)
        out = []
        for a in authors:
            try:
                out.append(a if a.lower().startswith("et al") else _initials(a))
            except OperatorSkip:
                out.append(a)
        if out == authors:
            raise OperatorSkip("names already initialized")
        return {"authors": tuple(out)}, {}

    def op_title_case(self, s, rng):
        title = s.record.title or ""
        lowered = title[:1] + title[1:].lower()
        new = lowered if lowered != title else title.title()
        if new == title:
            raise OperatorSkip("title casing cannot change")
        return {"title": new}, {}

    def op_truncate_et_al(self, s, rng):
        named = s.record.named_authors
        if len(named) < 2:
            raise OperatorSkip("needs at least two authors")
        return {"authors": (named[0], "et al.")}, {}

    def op_nickname(self, s, rng):
        from .cascade.connectors import split_display_name

        authors = list(s.record.named_authors)
        options = []
        for i, a in enumerate(authors):
            given, family = split_display_name(a)
            if not given:
                continue
            first, _, rest = given.partition(" ")
            for alt in sorted(self.tables.nicknames.get(_name_token(first), ())):
                options.append((i, first, alt.capitalize(), rest, family))
        if options:
            i, old, alt, rest, family = rng.choice(options)
            authors[i] = " ".join(p for p in (alt, rest, family) if p)
            return {"authors": tuple(authors)}, {"original": old, "substituted": alt, "table_hit": True}
        proposed = self._ask(SPECS["nickname"], s)
        if proposed and proposed.get("authors"):
            return {"authors": tuple(proposed["authors"])}, {"table_hit": False, "substituted": "backend"}
        raise OperatorSkip("no nickname-table hit")

    def _fabricated_value(self, fld: str, rng: random.Random, avoid: str | None = None) -> str:
        for _ in range(20):
            if fld == "volume":
                value = str(rng.randint(2, 60))
            elif fld == "pages":
                start = rng.randint(10, 3000)
                value = f"{start}--{start + rng.randint(6, 14)}"
            elif fld == "publisher":
                value = rng.choice(["Springer", "Elsevier", "IEEE", "ACM", "MIT Press", "Curran Associates, Inc.", "Morgan Kaufmann", "Oxford University Press"])
            else:
                value = rng.choice(["Vienna, Austria", "Sydney, Australia", "Seoul, Korea", "Toronto, Canada", "Barcelona, Spain", "Kyoto, Japan", "Lisbon, Portugal", "Stockholm, Sweden"])
            if avoid is None or normalize(fld, value, self.tables) != normalize(fld, avoid, self.tables):
                return value
        raise OperatorSkip(f"could not draw a fresh {fld}")

    def _fabricate(self, fld):
        def op(s, rng):
            if s.record.get(fld):
                raise OperatorSkip(f"seed already has {fld}")
            return {fld: self._fabricated_value(fld, rng)}, {}

        return op

    def _corrupt(self, fld):
        def op(s, rng):
            old = s.record.get(fld)
            if not old:
                raise OperatorSkip(f"seed has no {fld}")
            if fld == "pages":
                nums = re.findall(r"\d+", old)
                if not nums:
                    raise OperatorSkip("pages not numeric")
                shift = rng.randint(3, 40)
                return {fld: re.sub(r"\d+", lambda m: str(int(m.group(0)) + shift), old)}, {}
            if fld == "volume" and old.isdigit():
                n = int(old)
                shift = rng.choice([1, 2, 3]) if n <= 3 else rng.choice([-3, -2, -1, 1, 2, 3])
                return {fld: str(n + shift)}, {}
            return {fld: self._fabricated_value(fld, rng, avoid=old)}, {}

        return op

    def op_title_substitution(self, s, rng):
        proposed = self._ask(SPECS["title_substitution"], s)
        if proposed and proposed.get("title"):
            return {"title": proposed["title"]}, {"generator": "backend"}
        words = (s.record.title or "").split()
        table = synonyms()
        spots = [i for i, w in enumerate(words) if re.sub(r"[^\w\-]", "", w).lower() in table]
        if not spots:
            raise OperatorSkip("no substitutable word")
        i = rng.choice(spots)
        core = re.sub(r"[^\w\-]", "", words[i])
        sub = table[core.lower()]
        if core[:1].isupper():
            sub = sub[:1].upper() + sub[1:]
        words[i] = words[i].replace(core, sub)
        return {"title": " ".join(words)}, {"generator": "synonym_table", "word": core}

    _ADJ = ("Adaptive", "Hierarchical", "Contrastive", "Sparse", "Causal", "Robust", "Federated", "Latent", "Implicit", "Equivariant")
    _NOUN = ("Attention", "Diffusion", "Memory", "Routing", "Distillation", "Retrieval", "Tokenization", "Calibration")
    _GOAL = ("Graph Reasoning", "Scene Understanding", "Protein Folding", "Program Synthesis", "Speech Separation", "Dialogue Planning", "Anomaly Detection", "Molecule Generation")

    def op_title_fabrication(self, s, rng):
        for _ in range(20):
            title = f"{rng.choice(self._ADJ)} {rng.choice(self._NOUN)} for {rng.choice(self._GOAL)}"
            toks = set(normalize_title(title).split())
            clash = any(
                len(toks & set(normalize_title(o.record.title or "").split())) / len(toks | set(normalize_title(o.record.title or "").split())) >= 0.3
                for o in self.seeds
            )
            if not clash:
                return {"title": title}, {"generator": "template"}
        raise OperatorSkip("no clash-free fabricated title")

    def op_drop_author(self, s, rng):
        named = list(s.record.named_authors)
        if len(named) < 2 or s.record.has_et_al:
            raise OperatorSkip("needs at least two authors")
        i = rng.randrange(len(named))
        return {"authors": tuple(named[:i] + named[i + 1 :])}, {"dropped": named[i]}

    def op_reorder_authors(self, s, rng):
        from .matching import surname_of

        named = list(s.record.named_authors)
        pairs = [i for i in range(len(named) - 1) if surname_of(named[i]) != surname_of(named[i + 1])]
        if not pairs or s.record.has_et_al:
            raise OperatorSkip("no swappable neighbours")
        i = rng.choice(pairs)
        named[i], named[i + 1] = named[i + 1], named[i]
        return {"authors": tuple(named)}, {"swapped": i}

    def _fresh_names(self, s, rng, k):
        from .matching import surname_of

        taken = {surname_of(a) for o in self.seeds for a in o.record.named_authors}
        pool = [n for n in fake_names() if surname_of(n) not in taken]
        if len(pool) < k:
            raise OperatorSkip("name pool exhausted")
        return rng.sample(pool, k)

    def op_inject_author(self, s, rng):
        proposed = self._ask(SPECS["inject_author"], s)
        if proposed and proposed.get("authors"):
            return {"authors": tuple(proposed["authors"])}, {"generator": "backend"}
        named = list(s.record.named_authors)
        if s.record.has_et_al:
            raise OperatorSkip("et-al list")
        name = self._fresh_names(s, rng, 1)[0]
        named.insert(rng.randint(0, len(named)), name)
        return {"authors": tuple(named)}, {"injected": name}

    def op_fabricate_authors(self, s, rng):
        proposed = self._ask(SPECS["fabricate_authors"], s)
        if proposed and proposed.get("authors"):
            return {"authors": tuple(proposed["authors"])}, {"generator": "backend"}
        return {"authors": tuple(self._fresh_names(s, rng, rng.randint(2, 4)))}, {"generator": "name_pool"}

    def op_venue_swap(self, s, rng):
        venue = s.record.venue
        if not venue:
            raise OperatorSkip("no venue")
        mine = normalize_venue(venue, self.tables)
        pool = sorted(
            {
                o.record.venue
                for o in self.seeds
                if o.topic == s.topic and o.record.venue
                and normalize_venue(o.record.venue, self.tables) not in (mine, "arxiv")
            }
        )
        if not pool:
            raise OperatorSkip("no same-topic venue")
        proposed = self._ask(SPECS["venue_swap"], s)
        if proposed and proposed.get("venue") and normalize_venue(proposed["venue"], self.tables) != mine:
            return {"venue": proposed["venue"]}, {"generator": "backend"}
        return {"venue": rng.choice(pool)}, {"generator": "topic_pool"}

    def op_year_shift(self, s, rng):
        year = s.record.year
        if year is None:
            raise OperatorSkip("no year")
        delta = rng.choice([-5, -4, -3, -2, -1, 1, 2, 3, 4, 5])
        new = max(1900, year + delta)
        if new == year:
            new = year + abs(delta)
        return {"year": new}, {"shift": new - year}

    def op_doi_unresolvable(self, s, rng):
        prefix = rng.randint(1000, 99999)
        token = "".join(rng.choice("abcdefghijklmnopqrstuvwxyz0123456789") for _ in range(8))
        return {"doi": f"10.{prefix}/{token}"}, {}

    def op_arxiv_unresolvable(self, s, rng):
        year = max(2007, min(2024, s.record.year or 2018))
        return {"arxiv_id": f"{year % 100:02d}{rng.randint(1, 12):02d}.{rng.randint(90000, 99999):05d}"}, {}

    def _other(self, s, fld, rng):
        mine = s.record.get(fld)
        pool = [o for o in self.seeds if o.record.get(fld) and o.record.get(fld) != mine and o.key != s.key]
        if not pool:
            raise OperatorSkip(f"no other {fld}")
        other = rng.choice(pool)
        return {fld: other.record.get(fld)}, {"resolves_to": other.key}

    def op_doi_other_paper(self, s, rng):
        return self._other(s, "doi", rng)

    def op_arxiv_other_paper(self, s, rng):
        return self._other(s, "arxiv_id", rng)

    def _ask(self, spec: MutationSpec, s: SeedEntry) -> Mapping[str, Any] | None:
        if self.backend is None:
            return None
        try:
            return self.backend.propose(spec, s, INSTRUCTIONS.get(spec.operator, spec.operator))
        except (ChannelError, BackendContractError, ValueError) as exc:
            log.warning("mutation backend failed for %s (%s); deterministic fallback", spec.operator, exc)
            return None

    def operator(self, name: str) -> Callable:
        if name.startswith("fabricate_") and name[10:] in PERIPHERAL_FIELDS:
            return self._fabricate(name[10:])
        if name.startswith("corrupt_"):
            return self._corrupt(name[8:])
        return getattr(self, f"op_{name}")

    def mutate(self, seed: SeedEntry, spec: MutationSpec | str, rng_seed: int | str, key: str | None = None, retries: int = 3) -> LabeledEntry:
        """Apply one operator; the result differs from the seed in exactly its field mask."""
        spec = SPECS[spec] if isinstance(spec, str) else spec
        key = key or f"{seed.key}-{spec.operator}-{rng_seed}"
        for attempt in range(retries):
            rng = random.Random(f"{rng_seed}:{spec.operator}:{seed.key}:{attempt}")
            changes, notes = self.operator(spec.operator)(seed, rng)
            try:
                proposed = seed.record.with_fields(**{k: v for k, v in changes.items() if k in FIELDS})
            except (TypeError, ValueError):
                continue
            record = enforce_schema(seed.record, proposed, spec, key)
            if diff_fields(seed.record, record) == spec.touched_fields:
                return LabeledEntry(record, spec.code, seed.key, spec.operator, spec.touched_fields, notes=notes)
        raise OperatorSkip(f"{spec.operator}: output empty after post-processing")


def mutate(seed: SeedEntry, spec: MutationSpec | str, rng_seed: int | str, seeds: Sequence[SeedEntry] = (), backend=None) -> LabeledEntry:
    return Mutator(seeds or [seed], backend=backend).mutate(seed, spec, rng_seed)


# ---------------------------------------------------------------------------
# quality control


@dataclass(frozen=True)
class RoundtripReport:
    passed: bool
    diff: frozenset[str]
    extra: frozenset[str]
    missing: frozenset[str]


def qc_roundtrip(entry: LabeledEntry, seed: SeedEntry | CitationRecord) -> RoundtripReport:
    """Diff seed -> entry must equal the operator's documented field set."""
    base = seed.record if isinstance(seed, SeedEntry) else seed
    spec = SPECS[entry.operator]
    diff = diff_fields(base, entry.record)
    want = spec.touched_fields
    ok = diff == want and entry.code is spec.code and (entry.code is not T.R1 or not diff)
    return RoundtripReport(ok, diff, diff - want, want - diff)


class Verifier(Protocol):
    def evidence(self, record: CitationRecord) -> tuple[list[CandidateRecord], list, bool]: ...


class CascadeVerifier:
    """Consult the cascade's identifier and scholar stages for QC."""

    def __init__(self, cascade):
        self.cascade = cascade

    def prepare(self, records: Iterable[CitationRecord]) -> None:
        pass

    def evidence(self, record):
        cands, facts = self.cascade.stage_url_fetch(record)
        more, facts2 = self.cascade.stage_scholar(record)
        answered = not any(f.kind == "stage_failed" for f in facts2)
        return list(cands) + list(more), list(facts) + list(facts2), answered


class SimulatedVerifier(CascadeVerifier):
    """Verifier over a simulated index; fixtures are planted on demand."""

    def __init__(self, seeds: Sequence[SeedEntry], root: str | Path | None = None):
        from .cascade.pipeline import Cascade
        from .cascade.simulate import SimulatedIndex, plant_fixtures
        from .cascade.transport import FixtureStore, FixtureTransport

        self._tmp = None
        if root is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="citetracer-qc-")
            root = self._tmp.name
        self.store = FixtureStore(root)
        self.index = SimulatedIndex([s.record for s in seeds], seed_coverage(seeds))
        self._plant = plant_fixtures
        super().__init__(Cascade(FixtureTransport(self.store, "replay")))

    def prepare(self, records):
        self._plant(self.store, list(records), self.index, self.cascade)


def plant_replay_fixtures(records: Iterable[CitationRecord], seeds: Sequence[SeedEntry], root: str | Path, cascade=None) -> int:
    """Plant replay fixtures so ``records`` can be audited against the seed pool offline."""
    from .cascade.pipeline import Cascade
    from .cascade.simulate import SimulatedIndex, plant_fixtures
    from .cascade.transport import FixtureStore, FixtureTransport

    store = FixtureStore(root)
    cascade = cascade or Cascade(FixtureTransport(store, "replay"))
    index = SimulatedIndex([s.record for s in seeds], seed_coverage(seeds))
    return plant_fixtures(store, list(records), index, cascade)


def _same_work(a, b) -> bool:
    return bool(a.title and b.title) and normalize_title(a.title) == normalize_title(b.title)


def qc_verifiability(entry: LabeledEntry, seed: SeedEntry, verifier) -> str:
    """Return ``pass``, ``fail`` or ``indeterminate``."""
    verifier.prepare([seed.record, entry.record])
    seed_cands, _, answered = verifier.evidence(seed.record)
    if not answered:
        return "indeterminate"
    if not any(_same_work(c, seed.record) for c in seed_cands):
        return "fail"
    code, op = entry.code, entry.operator
    tables = default_tables()
    if code is T.P3:
        fld = next(iter(entry.touched_fields))
        # unverifiable means: no consulted source supplies this field at all
        return "fail" if any(_same_work(c, seed.record) and c.get(fld) for c in seed_cands) else "pass"
    if code is T.H6:
        fld = next(iter(entry.touched_fields))
        value = normalize(fld, entry.record.get(fld), tables)
        contradicted = any(
            _same_work(c, seed.record) and c.get(fld) and normalize(fld, c.get(fld), tables) != value for c in seed_cands
        )
        return "pass" if contradicted else "fail"
    if code is T.H5:
        fld = next(iter(entry.touched_fields))
        cands, facts, _ = verifier.evidence(entry.record)
        unresolved = any(f.kind == "unresolvable" and f.field == fld for f in facts)
        if op.endswith("unresolvable"):
            return "pass" if unresolved else "fail"
        resolved_other = any(
            c.source in ("doi", "arxiv") and c.get(fld) and not _same_work(c, seed.record) for c in cands
        )
        return "pass" if resolved_other else "fail"
    return "pass"


@dataclass(frozen=True)
class ReviewTicket:
    key: str
    original: str | None
    substituted: str | None
    table_hit: bool
    status: str  # approved / held / rejected


def qc_boundary_review(entry: LabeledEntry, decisions: Mapping[str, str] | None = None) -> ReviewTicket:
    """Nickname-table substitutions are pre-approved; others wait for a reviewer."""
    if entry.code is not T.P1:
        raise BenchError(f"boundary review applies to P1 entries only, got {entry.code}")
    hit = bool(entry.notes.get("table_hit"))
    status = "approved" if hit else "held"
    verdict = (decisions or {}).get(entry.key)
    if not hit and verdict in ("approve", "approved", "reject", "rejected"):
        status = "approved" if verdict.startswith("approve") else "rejected"
    return ReviewTicket(entry.key, entry.notes.get("original"), entry.notes.get("substituted"), hit, status)


def read_review_file(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text("utf-8").splitlines():
        parts = line.strip().split("\t")
        if len(parts) >= 2 and not line.startswith("#"):
            out[parts[0]] = parts[1].strip().lower()
    return out


# ---------------------------------------------------------------------------
# synthesis and emission

GATES = ("roundtrip", "verifiability", "boundary_review")


@dataclass
class SynthResult:
    entries: list[LabeledEntry]
    rejected: list[LabeledEntry]
    gate_rejections: dict[str, int]
    skips: Counter
    targets: dict[str, int]

    def counts(self) -> dict[str, int]:
        c = Counter(e.code.value for e in self.entries)
        return {code.value: c.get(code.value, 0) for code in SYNTH_CODES if code.value in self.targets}


# per-code counts of the full-size benchmark (P2 is never synthesized)
TABLE1_TARGETS = {
    "R1": 338, "R2": 342, "R3": 343, "P1": 91, "P3": 180,
    "H1": 200, "H2": 198, "H3": 197, "H4": 195, "H5": 200, "H6": 166,
}


def parse_targets(targets: Mapping[str, int] | Mapping[TaxonomyCode, int]) -> dict[TaxonomyCode, int]:
    out = {}
    for code, n in targets.items():
        code = T(str(code))
        if code is T.P2:
            raise BenchError("P2 cannot be synthesized: non-academic sources are only observed in real bibliographies, never generated")
        if n < 0:
            raise BenchError(f"negative target for {code}")
        out[code] = int(n)
    return out


def synthesize(
    seeds: Sequence[SeedEntry],
    targets: Mapping[str, int],
    rng_seed: int = 0,
    verifier=None,
    backend: MutationBackend | None = None,
    review: Mapping[str, str] | None = None,
    max_attempts: int = 40,
) -> SynthResult:
    goal = parse_targets(targets)
    mutator = Mutator(seeds, backend=backend)
    verifier = verifier if verifier is not None else SimulatedVerifier(seeds)
    by_key = {s.key: s for s in seeds}
    accepted, rejected = [], []
    gates = {g: 0 for g in GATES}
    skips: Counter = Counter()
    used: set[str] = set()
    for code in SYNTH_CODES:
        want = goal.get(code, 0)
        if not want:
            continue
        order = list(seeds)
        random.Random(f"{rng_seed}:{code.value}:order").shuffle(order)
        ops = OPERATORS_BY_CODE[code]
        got, attempt = 0, 0
        while got < want and attempt < max_attempts * want:
            seed = order[attempt % len(order)]
            op = ops[(got + attempt) % len(ops)]
            attempt += 1
            key = f"{code.value.lower()}_{got + 1:03d}_{seed.key}"
            if key in used:
                key = f"{key}_{attempt}"
            try:
                entry = mutator.mutate(seed, op, f"{rng_seed}:{attempt}", key=key)
            except OperatorSkip as exc:
                skips[f"{op}: {exc}"] += 1
                continue
            if not qc_roundtrip(entry, by_key[entry.seed_key]).passed:
                gates["roundtrip"] += 1
                entry.qc_status = "rejected"
                rejected.append(entry)
                continue
            status = qc_verifiability(entry, seed, verifier)
            if status != "pass":
                gates["verifiability"] += 1
                entry.qc_status = "rejected" if status == "fail" else "indeterminate"
                entry.notes["verifiability"] = status
                rejected.append(entry)
                continue
            if code is T.P1:
                ticket = qc_boundary_review(entry, review)
                entry.notes["review"] = ticket.status
                if ticket.status != "approved":
                    gates["boundary_review"] += 1
                    entry.qc_status = "held" if ticket.status == "held" else "rejected"
                    rejected.append(entry)
                    continue
            entry.qc_status = "accepted"
            accepted.append(entry)
            used.add(key)
            got += 1
    return SynthResult(accepted, rejected, gates, skips, {c.value: n for c, n in goal.items()})


def emit_benchmark(entries: Sequence[LabeledEntry], out_dir: str | Path, result: SynthResult | None = None, name: str = "benchmark") -> dict[str, Any]:
    """Write ``<name>.bib``, ``labels.tsv`` and ``manifest.json``."""
    keys = [e.key for e in entries]
    dupes = sorted(k for k, n in Counter(k.casefold() for k in keys).items() if n > 1)
    if dupes:
        raise BenchError(f"duplicate source keys: {dupes}")
    pending = [e.key for e in entries if e.qc_status != "accepted"]
    if pending:
        raise BenchError(f"entries not accepted by QC: {pending}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.bib").write_text("\n".join(record_to_bibtex(e.record) for e in entries), encoding="utf-8")
    lines = ["# key\tcode\toperator\ttouched_fields"]
    lines += [f"{e.key}\t{e.code.value}\t{e.operator}\t{','.join(sorted(e.touched_fields)) or '-'}" for e in entries]
    (out / "labels.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    counts = Counter(e.code.value for e in entries)
    manifest = {
        "entries": len(entries),
        "counts": {c.value: counts[c.value] for c in SYNTH_CODES if counts[c.value]},
        "operators": dict(sorted(Counter(e.operator for e in entries).items())),
    }
    if result is not None:
        manifest["targets"] = result.targets
        manifest["gate_rejections"] = result.gate_rejections
        manifest["generated"] = len(result.entries) + len(result.rejected)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def read_labels(path: str | Path) -> dict[str, str]:
    """``key -> code`` from a labels file (extra columns ignored)."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise BenchError(f"{path}:{lineno}: expected key<TAB>code")
        out[parts[0]] = T(parts[1].strip()).value
    return out
