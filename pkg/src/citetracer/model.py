"""Shared domain types: citation records, taxonomy codes, evidence and verdicts."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields, replace
from typing import Any, Iterable, Mapping

# Field order follows the parser JSON schema exactly.
FIELDS = (
    "title",
    "authors",
    "venue",
    "year",
    "volume",
    "pages",
    "publisher",
    "location",
    "doi",
    "arxiv_id",
    "url",
)
TEXT_FIELDS = tuple(f for f in FIELDS if f not in ("authors", "year"))
CORE_FIELDS = ("title", "authors", "venue", "year")
PERIPHERAL_FIELDS = ("volume", "pages", "publisher", "location")
IDENTIFIER_FIELDS = ("doi", "arxiv_id")

ET_AL_MARKERS = ("et al.", "et al", "others", "and others")


def is_et_al(name: str) -> bool:
    return name.strip().casefold() in ET_AL_MARKERS


class Label(str, enum.Enum):
    REAL = "Real"
    POTENTIAL = "Potential"
    HALLUCINATED = "Hallucinated"

    def __str__(self) -> str:
        return self.value


_CLASS_BY_PREFIX = {"R": Label.REAL, "P": Label.POTENTIAL, "H": Label.HALLUCINATED}


class TaxonomyCode(str, enum.Enum):
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    H1 = "H1"
    H2 = "H2"
    H3 = "H3"
    H4 = "H4"
    H5 = "H5"
    H6 = "H6"

    def __str__(self) -> str:
        return self.value

    @property
    def label(self) -> Label:
        return _CLASS_BY_PREFIX[self.value[0]]

    @property
    def touched_fields(self) -> frozenset[str]:
        return TOUCHED_FIELDS[self]

    @property
    def description(self) -> str:
        return DESCRIPTIONS[self]


TOUCHED_FIELDS: dict[TaxonomyCode, frozenset[str]] = {
    TaxonomyCode.R1: frozenset(),
    TaxonomyCode.R2: frozenset({"title", "authors", "venue"}),
    TaxonomyCode.R3: frozenset({"authors"}),
    TaxonomyCode.P1: frozenset({"authors"}),
    TaxonomyCode.P2: frozenset(),
    TaxonomyCode.P3: frozenset(PERIPHERAL_FIELDS),
    TaxonomyCode.H1: frozenset({"title"}),
    TaxonomyCode.H2: frozenset({"authors"}),
    TaxonomyCode.H3: frozenset({"venue"}),
    TaxonomyCode.H4: frozenset({"year"}),
    TaxonomyCode.H5: frozenset(IDENTIFIER_FIELDS),
    TaxonomyCode.H6: frozenset(PERIPHERAL_FIELDS),
}

DESCRIPTIONS = {
    TaxonomyCode.R1: "exact field-wise match",
    TaxonomyCode.R2: "format variant",
    TaxonomyCode.R3: "et al. truncation with correct named authors",
    TaxonomyCode.P1: "author nickname or transliteration variant",
    TaxonomyCode.P2: "non-academic source",
    TaxonomyCode.P3: "peripheral fields without external evidence",
    TaxonomyCode.H1: "title error",
    TaxonomyCode.H2: "author error",
    TaxonomyCode.H3: "venue error",
    TaxonomyCode.H4: "year error",
    TaxonomyCode.H5: "identifier error",
    TaxonomyCode.H6: "peripheral error contradicted by a source",
}

# Code emitted when the given field is contradicted or unverifiable.
H_CODE_FOR_FIELD = {
    "title": TaxonomyCode.H1,
    "authors": TaxonomyCode.H2,
    "venue": TaxonomyCode.H3,
    "year": TaxonomyCode.H4,
    "doi": TaxonomyCode.H5,
    "arxiv_id": TaxonomyCode.H5,
    "volume": TaxonomyCode.H6,
    "pages": TaxonomyCode.H6,
    "publisher": TaxonomyCode.H6,
    "location": TaxonomyCode.H6,
}


def class_of(code: TaxonomyCode | str) -> Label:
    """Return the class a taxonomy code belongs to."""
    return TaxonomyCode(code).label


def sort_codes(codes: Iterable[TaxonomyCode | str]) -> tuple[TaxonomyCode, ...]:
    """Deduplicate and order codes by taxonomy order."""
    order = list(TaxonomyCode)
    return tuple(sorted({TaxonomyCode(c) for c in codes}, key=order.index))


class ResolvedBy(str, enum.Enum):
    RULE_MATCHER = "RuleMatcher"
    VALID_JUDGER = "ValidJudger"
    POTENTIAL_JUDGER = "PotentialJudger"
    HALLUCINATED_JUDGER = "HallucinatedJudger"
    ROUTING = "Routing"

    def __str__(self) -> str:
        return self.value


def _clean_text(value: Any) -> str | None:
    if value is None:
        return None
    text = str(value).strip()
    return text or None


def _clean_year(value: Any) -> int | None:
    if value is None or isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    text = str(value).strip()
    if not text:
        return None
    if not text.isdigit():
        raise ValueError(f"year must be an integer, got {value!r}")
    return int(text)


def _clean_authors(value: Any) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        value = [value]
    names = (_clean_text(v) for v in value)
    return tuple(n for n in names if n)


class _Bibliographic:
    """Field handling shared by citations and candidates."""

    def __post_init__(self) -> None:
        for name in TEXT_FIELDS:
            object.__setattr__(self, name, _clean_text(getattr(self, name)))
        object.__setattr__(self, "authors", _clean_authors(self.authors))
        object.__setattr__(self, "year", _clean_year(self.year))

    def get(self, name: str) -> Any:
        """Field value, with the empty author list mapped to None."""
        value = getattr(self, name)
        if name == "authors" and not value:
            return None
        return value

    @property
    def provided_fields(self) -> tuple[str, ...]:
        return tuple(f for f in FIELDS if self.get(f) is not None)

    @property
    def has_et_al(self) -> bool:
        return bool(self.authors) and is_et_al(self.authors[-1])

    @property
    def named_authors(self) -> tuple[str, ...]:
        return tuple(a for a in self.authors if not is_et_al(a))

    def fields_dict(self) -> dict[str, Any]:
        """The C.1-style field map: absent strings as "", year as null."""
        out: dict[str, Any] = {}
        for name in FIELDS:
            value = getattr(self, name)
            if name == "authors":
                out[name] = list(value)
            elif name == "year":
                out[name] = value
            else:
                out[name] = value if value is not None else ""
        return out


@dataclass(frozen=True)
class CitationRecord(_Bibliographic):
    title: str | None = None
    authors: tuple[str, ...] = ()
    venue: str | None = None
    year: int | None = None
    volume: str | None = None
    pages: str | None = None
    publisher: str | None = None
    location: str | None = None
    doi: str | None = None
    arxiv_id: str | None = None
    url: str | None = None
    source_key: str | None = None

    def to_dict(self) -> dict[str, Any]:
        out = self.fields_dict()
        out["source_key"] = self.source_key or ""
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CitationRecord":
        kwargs = {name: data.get(name) for name in FIELDS}
        return cls(**kwargs, source_key=data.get("source_key"))

    def with_fields(self, **changes: Any) -> "CitationRecord":
        return replace(self, **changes)

    def as_candidate(self, source: str, **extra: Any) -> "CandidateRecord":
        kwargs = {name: getattr(self, name) for name in FIELDS}
        return CandidateRecord(**kwargs, source=source, **extra)


# Identifiers a CandidateRecord.source may take.
CONNECTOR_IDS = (
    "arxiv",
    "dblp",
    "crossref",
    "semanticscholar",
    "openalex",
    "aclanthology",
    "europepmc",
    "pubmed",
)
SOURCE_IDS = CONNECTOR_IDS + ("memory", "doi", "url", "web")


@dataclass(frozen=True)
class CandidateRecord(_Bibliographic):
    title: str | None = None
    authors: tuple[str, ...] = ()
    venue: str | None = None
    year: int | None = None
    volume: str | None = None
    pages: str | None = None
    publisher: str | None = None
    location: str | None = None
    doi: str | None = None
    arxiv_id: str | None = None
    url: str | None = None
    source: str = "web"
    retrieved_at: str | None = None
    raw_payload_digest: str | None = None
    provenance: str | None = None
    corroborating: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.source not in SOURCE_IDS:
            raise ValueError(f"unknown evidence source {self.source!r}")
        object.__setattr__(self, "corroborating", tuple(self.corroborating))

    @property
    def sources(self) -> tuple[str, ...]:
        return (self.source,) + tuple(s for s in self.corroborating if s != self.source)

    def to_dict(self) -> dict[str, Any]:
        out = self.fields_dict()
        out.update(
            source=self.source,
            retrieved_at=self.retrieved_at,
            raw_payload_digest=self.raw_payload_digest,
            provenance=self.provenance,
            corroborating=list(self.corroborating),
        )
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CandidateRecord":
        kwargs = {name: data.get(name) for name in FIELDS}
        return cls(
            **kwargs,
            source=data.get("source", "web"),
            retrieved_at=data.get("retrieved_at"),
            raw_payload_digest=data.get("raw_payload_digest"),
            provenance=data.get("provenance"),
            corroborating=tuple(data.get("corroborating") or ()),
        )

    def as_citation(self, source_key: str | None = None) -> CitationRecord:
        kwargs = {name: getattr(self, name) for name in FIELDS}
        return CitationRecord(**kwargs, source_key=source_key)


STAGES = ("Memory", "UrlFetch", "ScholarConnectors", "WebSearch")
MAX_CANDIDATES_PER_CONNECTOR = 5


@dataclass(frozen=True)
class Fact:
    """A non-candidate observation made while gathering evidence.

    ``kind`` is one of: ``unresolvable`` (field holds the identifier field),
    ``non_academic_source``, ``evidence_absent``, ``stage_skipped``,
    ``stage_failed``, ``stage_partial``, ``connector_degraded``.
    """

    kind: str
    stage: str | None = None
    field: str | None = None
    value: str | None = None
    source: str | None = None
    detail: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Fact":
        return cls(**{f.name: data.get(f.name) for f in fields(cls)})


@dataclass(frozen=True)
class EvidenceBundle:
    candidates: tuple[CandidateRecord, ...] = ()
    stages_tried: tuple[str, ...] = ()
    facts: tuple[Fact, ...] = ()
    per_connector_truncation: int = MAX_CANDIDATES_PER_CONNECTOR

    def __post_init__(self) -> None:
        if tuple(self.stages_tried) != STAGES[: len(self.stages_tried)]:
            raise ValueError(f"stages_tried must be a prefix of {STAGES}: {self.stages_tried}")

    def extend(
        self,
        stage: str,
        candidates: Iterable[CandidateRecord] = (),
        facts: Iterable[Fact] = (),
    ) -> "EvidenceBundle":
        return EvidenceBundle(
            candidates=self.candidates + tuple(candidates),
            stages_tried=self.stages_tried + (stage,),
            facts=self.facts + tuple(facts),
            per_connector_truncation=self.per_connector_truncation,
        )

    def facts_of(self, kind: str) -> list[Fact]:
        return [f for f in self.facts if f.kind == kind]

    def has_fact(self, kind: str) -> bool:
        return any(f.kind == kind for f in self.facts)

    def per_source_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for cand in self.candidates:
            for src in cand.sources:
                counts[src] = counts.get(src, 0) + 1
        return counts

    def to_dict(self) -> dict[str, Any]:
        return {
            "candidates": [c.to_dict() for c in self.candidates],
            "stages_tried": list(self.stages_tried),
            "facts": [f.to_dict() for f in self.facts],
            "per_connector_truncation": self.per_connector_truncation,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvidenceBundle":
        return cls(
            candidates=tuple(CandidateRecord.from_dict(c) for c in data.get("candidates", ())),
            stages_tried=tuple(data.get("stages_tried", ())),
            facts=tuple(Fact.from_dict(f) for f in data.get("facts", ())),
            per_connector_truncation=data.get("per_connector_truncation", MAX_CANDIDATES_PER_CONNECTOR),
        )


@dataclass(frozen=True)
class Verdict:
    label: Label
    codes: tuple[TaxonomyCode, ...]
    offending_fields: frozenset[str] = frozenset()
    sources: frozenset[str] = frozenset()
    reason: str = ""
    resolved_by: ResolvedBy = ResolvedBy.RULE_MATCHER

    def __post_init__(self) -> None:
        object.__setattr__(self, "label", Label(self.label))
        object.__setattr__(self, "resolved_by", ResolvedBy(self.resolved_by))
        codes = tuple(TaxonomyCode(c) for c in self.codes)
        if not codes:
            raise ValueError("a verdict needs at least one taxonomy code")
        if len(set(codes)) != len(codes):
            raise ValueError(f"duplicate codes in {codes}")
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "offending_fields", frozenset(self.offending_fields))
        object.__setattr__(self, "sources", frozenset(self.sources))
        wrong = [c for c in codes if c.label is not self.label]
        if wrong:
            raise ValueError(f"codes {wrong} do not belong to class {self.label}")
        unknown = self.offending_fields - set(FIELDS)
        if unknown:
            raise ValueError(f"unknown offending fields {sorted(unknown)}")
        if self.label is Label.REAL and self.offending_fields:
            raise ValueError("a Real verdict cannot carry offending fields")
        if self.label is Label.HALLUCINATED:
            if not self.offending_fields:
                raise ValueError("a Hallucinated verdict needs offending fields")
            allowed = frozenset().union(*(c.touched_fields for c in codes))
            stray = self.offending_fields - allowed
            if stray:
                raise ValueError(f"offending fields {sorted(stray)} not covered by codes {codes}")

    @property
    def primary_code(self) -> TaxonomyCode:
        return self.codes[0]

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label.value,
            "codes": [c.value for c in self.codes],
            "offending_fields": sorted(self.offending_fields),
            "sources": sorted(self.sources),
            "reason": self.reason,
            "resolved_by": self.resolved_by.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Verdict":
        return cls(
            label=Label(data["label"]),
            codes=tuple(data["codes"]),
            offending_fields=frozenset(data.get("offending_fields", ())),
            sources=frozenset(data.get("sources", ())),
            reason=data.get("reason", ""),
            resolved_by=ResolvedBy(data.get("resolved_by", "RuleMatcher")),
        )


def validate_record(record: CitationRecord) -> list[str]:
    """List invariant violations of a record; empty when it is well formed."""
    problems = []
    if record.title is None:
        problems.append("missing-title")
    markers = [i for i, a in enumerate(record.authors) if is_et_al(a)]
    if markers:
        if markers != [len(record.authors) - 1]:
            problems.append("marker-not-last")
        elif len(record.authors) == 1:
            problems.append("marker-only")
    if record.year is not None and record.year <= 0:
        problems.append("non-positive-year")
    return problems


def validate_records(records: Iterable[CitationRecord]) -> dict[str, list[str]]:
    """Per-record violations plus duplicate source keys across the run."""
    out: dict[str, list[str]] = {}
    seen: set[str] = set()
    for i, record in enumerate(records):
        key = record.source_key or f"#{i}"
        problems = validate_record(record)
        if record.source_key is not None:
            if record.source_key in seen:
                problems.append("duplicate-source-key")
            seen.add(record.source_key)
        if problems:
            out[key] = problems
    return out


__all__ = [
    "CORE_FIELDS",
    "CONNECTOR_IDS",
    "CandidateRecord",
    "CitationRecord",
    "ET_AL_MARKERS",
    "EvidenceBundle",
    "FIELDS",
    "Fact",
    "H_CODE_FOR_FIELD",
    "IDENTIFIER_FIELDS",
    "Label",
    "MAX_CANDIDATES_PER_CONNECTOR",
    "PERIPHERAL_FIELDS",
    "ResolvedBy",
    "SOURCE_IDS",
    "STAGES",
    "TaxonomyCode",
    "Verdict",
    "class_of",
    "is_et_al",
    "sort_codes",
    "validate_record",
    "validate_records",
]
