"""Deterministic field matching, early exit and residual labelling."""

from __future__ import annotations

import enum
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol, Sequence

from .channel import BackendContractError, ChannelError, TextChannel, extract_json
from .model import FIELDS, CandidateRecord, CitationRecord, TaxonomyCode
from .normalize import (
    Tables,
    default_tables,
    normalize,
    normalize_name,
    split_name,
    strip_punct,
    base,
)
from .prompts import load_prompt

log = logging.getLogger(__name__)

# url is only ever checked for resolvability
MATCH_FIELDS = tuple(f for f in FIELDS if f != "url")


class Status(str, enum.Enum):
    MATCH = "Match"
    MISSING = "Missing"
    MISMATCH = "Mismatch"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class FieldStatus:
    field: str
    status: Status
    # raw values were identical (no normalization needed)
    identical: bool = False
    # authors matched through the et-al prefix rule
    et_al: bool = False


# ---------------------------------------------------------------------------
# names


def given_compatible(a: Sequence[str], b: Sequence[str]) -> bool:
    """Given-name tokens agree, allowing single-letter initials."""
    if list(a) == list(b):
        return True
    if not a or not b:
        return False
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    if len(short) == len(long_):
        return all(x == y or (len(x) == 1 and y.startswith(x)) or (len(y) == 1 and x.startswith(y)) for x, y in zip(a, b))
    # "M. Chang" for "Ming Wei Chang": initials-only side is a prefix of the other's initials
    if all(len(t) == 1 for t in short):
        return [t[0] for t in long_[: len(short)]] == list(short)
    return False


def names_match(a: str, b: str) -> bool:
    na, nb = normalize_name(a), normalize_name(b)
    if na == nb:
        return True
    ga, sa = split_name(a)
    gb, sb = split_name(b)
    return bool(sa) and sa == sb and given_compatible(ga, gb)


def _compare_authors(cite: CitationRecord, cand: CandidateRecord) -> FieldStatus:
    c = cite.named_authors
    k = cand.named_authors
    if not c or not k:
        return FieldStatus("authors", Status.MISSING)
    if cite.has_et_al:
        ok = len(c) <= len(k) and all(names_match(x, y) for x, y in zip(c, k))
        return FieldStatus("authors", Status.MATCH if ok else Status.MISMATCH, et_al=ok)
    ok = len(c) == len(k) and all(names_match(x, y) for x, y in zip(c, k))
    identical = ok and tuple(c) == tuple(k)
    return FieldStatus("authors", Status.MATCH if ok else Status.MISMATCH, identical=identical)


def compare_field(name: str, cite, cand, tables: Tables | None = None) -> FieldStatus:
    if name == "authors":
        return _compare_authors(cite, cand)
    a, b = cite.get(name), cand.get(name)
    if a is None or b is None:
        return FieldStatus(name, Status.MISSING)
    if name == "year":
        return FieldStatus(name, Status.MATCH if a == b else Status.MISMATCH, identical=a == b)
    same = normalize(name, a, tables) == normalize(name, b, tables)
    return FieldStatus(name, Status.MATCH if same else Status.MISMATCH, identical=same and a == b)


def rule_match(cite, cand, tables: Tables | None = None) -> dict[str, FieldStatus]:
    """Status of every matchable field of ``cite`` against ``cand``."""
    tables = tables or default_tables()
    return {name: compare_field(name, cite, cand, tables) for name in MATCH_FIELDS}


# ---------------------------------------------------------------------------
# profiles and early exit


@dataclass(frozen=True)
class RuleProfile:
    record: CitationRecord
    candidates: tuple[CandidateRecord, ...]
    statuses: tuple[Mapping[str, FieldStatus], ...]
    provided_fields: tuple[str, ...]

    def status(self, index: int, name: str) -> Status:
        return self.statuses[index][name].status

    def n_match(self, index: int) -> int:
        return sum(1 for f in self.provided_fields if self.statuses[index][f].status is Status.MATCH)

    def all_match(self, index: int) -> bool:
        return bool(self.provided_fields) and all(
            self.statuses[index][f].status is Status.MATCH for f in self.provided_fields
        )


def build_profile(record: CitationRecord, candidates: Sequence[CandidateRecord], tables: Tables | None = None) -> RuleProfile:
    tables = tables or default_tables()
    provided = tuple(f for f in record.provided_fields if f in MATCH_FIELDS)
    statuses = tuple(rule_match(record, c, tables) for c in candidates)
    return RuleProfile(record, tuple(candidates), statuses, provided)


@dataclass(frozen=True)
class EarlyExit:
    index: int | None = None
    candidate: CandidateRecord | None = None
    code: TaxonomyCode | None = None
    degenerate: bool = False

    @property
    def fired(self) -> bool:
        return self.index is not None


def early_exit(profile: RuleProfile) -> EarlyExit:
    """First candidate (rank order) matching every provided field.

    An empty provided-field set never exits and is flagged degenerate.
    """
    if not profile.provided_fields:
        return EarlyExit(degenerate=True)
    for i in range(len(profile.candidates)):
        if not profile.all_match(i):
            continue
        st = profile.statuses[i]
        if st["authors"].et_al:
            code = TaxonomyCode.R3
        elif all(st[f].identical for f in profile.provided_fields):
            code = TaxonomyCode.R1
        else:
            code = TaxonomyCode.R2
        return EarlyExit(i, profile.candidates[i], code)
    return EarlyExit()


# ---------------------------------------------------------------------------
# residual labels

AUTHOR_LABELS = ("exact", "r2_initial", "p1_variant", "h2_error")
VENUE_LABELS = ("exact", "alias", "different")
GENERIC_LABELS = ("exact", "normalizable_variant", "candidate_missing", "reference_missing", "contradiction")
MISSING_LABELS = ("candidate_missing", "reference_missing", "both_missing")


@dataclass(frozen=True)
class ResidualLabel:
    field: str
    label: str
    source: str = "rule"
    note: str = ""

    def to_dict(self) -> dict[str, str]:
        out = {"field": self.field, "label": self.label, "source": self.source}
        if self.note:
            out["note"] = self.note
        return out


@dataclass(frozen=True)
class ResidualProfile:
    """Residual labels of one citation against one candidate."""

    candidate_index: int
    labels: Mapping[str, ResidualLabel]
    et_al: bool = False
    provenance: str = "rule"

    def label(self, name: str) -> str:
        return self.labels[name].label

    def items(self):
        return self.labels.items()

    def to_dict(self) -> dict[str, Any]:
        return {
            "candidate_index": self.candidate_index,
            "labels": {k: v.label for k, v in self.labels.items()},
            "et_al": self.et_al,
            "provenance": self.provenance,
        }


class MatcherBackend(Protocol):
    name: str

    def relabel(
        self, record: CitationRecord, candidate: CandidateRecord, statuses: Mapping[str, FieldStatus]
    ) -> Mapping[str, str]: ...


def _pinyin_prefix(a: str, b: str) -> bool:
    short, long_ = sorted((a, b), key=len)
    return len(short) >= 2 and short != long_ and long_.startswith(short)


class DeterministicMatcher:
    """Table- and rule-driven relabelling of author/venue/publisher residuals."""

    name = "deterministic"

    def __init__(self, tables: Tables | None = None):
        self.tables = tables or default_tables()

    def author_pair(self, a: str, b: str) -> str:
        if normalize_name(a) == normalize_name(b):
            return "exact"
        ga, sa = split_name(a)
        gb, sb = split_name(b)
        if sa != sb:
            return "h2_error"
        if given_compatible(ga, gb):
            return "r2_initial"
        if ga and gb:
            first_a, first_b = ga[0], gb[0]
            if self.tables.nickname_pair(first_a, first_b) and ga[1:] == gb[1:]:
                return "p1_variant"
            if _pinyin_prefix(first_a, first_b) and ga[1:] == gb[1:]:
                return "p1_variant"
            # added or dropped middle name
            if first_a == first_b and (ga[1:] == () or gb[1:] == ()):
                return "p1_variant"
        return "h2_error"

    def authors(self, cite: CitationRecord, cand: CandidateRecord) -> str:
        c = list(cite.named_authors)
        k = list(cand.named_authors)
        if cite.has_et_al:
            if len(c) > len(k):
                return "h2_error"
            k = k[: len(c)]
        elif len(c) != len(k):
            return "h2_error"
        if Counter(surname_of(x) for x in c) != Counter(surname_of(y) for y in k):
            return "h2_error"
        labels = [self.author_pair(x, y) for x, y in zip(c, k)]
        for label in ("h2_error", "p1_variant", "r2_initial"):
            if label in labels:
                return label
        return "exact"

    def venue_like(self, name: str, a: str, b: str) -> str:
        if normalize(name, a, self.tables) == normalize(name, b, self.tables):
            return "exact" if strip_punct(base(a)) == strip_punct(base(b)) else "alias"
        if _acronym_of(a, b) or _acronym_of(b, a):
            return "alias"
        return "different"

    def relabel(self, record, candidate, statuses):
        out = {}
        if statuses["authors"].status is not Status.MISSING:
            out["authors"] = self.authors(record, candidate)
        for name in ("venue", "publisher"):
            if statuses[name].status is not Status.MISSING:
                out[name] = self.venue_like(name, record.get(name), candidate.get(name))
        return out


def surname_of(name: str) -> str:
    return split_name(name)[1]


_STOP = {"of", "on", "the", "and", "for", "in", "at", "a", "an", "to", "&"}


def _acronym_of(short: str, long_: str) -> bool:
    """``short`` is a single-token acronym of the significant words of ``long_``."""
    token = re.sub(r"[^A-Za-z]", "", short)
    if " " in short.strip() or len(token) < 2 or not token.isupper():
        return False
    words = [w for w in strip_punct(base(long_)).split() if w not in _STOP and not w.isdigit()]
    words = [w for w in words if w not in ("proceedings", "proc", "annual", "international")]
    return "".join(w[0] for w in words) == token.lower()


class LLMMatcherBackend:
    """Matcher reached over a text channel with the shipped matcher prompt."""

    name = "llm"

    def __init__(self, channel: TextChannel):
        self.channel = channel
        self.prompt = load_prompt("matcher")

    def relabel(self, record, candidate, statuses):
        text = self.prompt.render(
            citation_authors=json.dumps(list(record.authors), ensure_ascii=False),
            candidate_authors=json.dumps(list(candidate.authors), ensure_ascii=False),
            citation_venue=record.venue or "",
            candidate_venue=candidate.venue or "",
            citation_publisher=record.publisher or "",
            candidate_publisher=candidate.publisher or "",
            rule_statuses=json.dumps({k: v.status.value for k, v in statuses.items()}),
        )
        data = extract_json(self.channel.complete(text, system=self.prompt.system))
        if not isinstance(data, Mapping):
            raise BackendContractError("matcher reply must be an object")
        out = {}
        for name, vocab in (("authors", AUTHOR_LABELS), ("venue", VENUE_LABELS), ("publisher", VENUE_LABELS)):
            if statuses[name].status is Status.MISSING:
                continue
            entry = data.get(name)
            label = entry.get("overall") if isinstance(entry, Mapping) else entry
            if label not in vocab:
                raise BackendContractError(f"matcher label {label!r} for {name} not in {vocab}")
            out[name] = label
        return out


def _missing_label(st: FieldStatus, record, candidate) -> str:
    a, b = record.get(st.field), candidate.get(st.field)
    if a is None and b is None:
        return "both_missing"
    return "reference_missing" if a is None else "candidate_missing"


def _rule_label(st: FieldStatus) -> str:
    if st.status is Status.MATCH:
        if st.field == "authors":
            return "exact" if st.identical or st.et_al else "r2_initial"
        if st.field in ("venue", "publisher"):
            return "exact" if st.identical else "alias"
        return "exact" if st.identical else "normalizable_variant"
    if st.field == "authors":
        return "h2_error"
    if st.field in ("venue", "publisher"):
        return "different"
    return "contradiction"


def residual_for(
    profile: RuleProfile,
    index: int,
    backend: MatcherBackend | None = None,
    fallback: DeterministicMatcher | None = None,
) -> ResidualProfile:
    record, cand = profile.record, profile.candidates[index]
    statuses = profile.statuses[index]
    fallback = fallback or DeterministicMatcher()
    relabels: Mapping[str, str] = {}
    provenance = "deterministic"
    needs = any(statuses[f].status is Status.MISMATCH for f in ("authors", "venue", "publisher"))
    if needs:
        if backend is not None and not isinstance(backend, DeterministicMatcher):
            try:
                relabels = backend.relabel(record, cand, statuses)
                provenance = backend.name
            except ChannelError as exc:
                log.warning("matcher backend unreachable (%s); deterministic fallback", exc)
                relabels = fallback.relabel(record, cand, statuses)
                provenance = "deterministic:fallback"
        else:
            relabels = (backend or fallback).relabel(record, cand, statuses)
    labels = {}
    for name in MATCH_FIELDS:
        st = statuses[name]
        if st.status is Status.MISSING:
            labels[name] = ResidualLabel(name, _missing_label(st, record, cand))
        elif st.status is Status.MISMATCH and name in relabels:
            labels[name] = ResidualLabel(name, relabels[name], source=provenance)
        else:
            labels[name] = ResidualLabel(name, _rule_label(st))
    return ResidualProfile(index, labels, et_al=statuses["authors"].et_al, provenance=provenance)


def residual_profile(
    record: CitationRecord,
    candidates: Sequence[CandidateRecord],
    rule: RuleProfile | None = None,
    backend: MatcherBackend | None = None,
    limit: int = 5,
) -> list[ResidualProfile]:
    """Residual labels for the best-ranked candidates (at most ``limit``)."""
    rule = rule or build_profile(record, candidates)
    return [residual_for(rule, i, backend) for i in range(min(limit, len(rule.candidates)))]


__all__ = [
    "AUTHOR_LABELS",
    "DeterministicMatcher",
    "EarlyExit",
    "FieldStatus",
    "GENERIC_LABELS",
    "LLMMatcherBackend",
    "MATCH_FIELDS",
    "MatcherBackend",
    "ResidualLabel",
    "ResidualProfile",
    "RuleProfile",
    "Status",
    "VENUE_LABELS",
    "build_profile",
    "compare_field",
    "early_exit",
    "given_compatible",
    "names_match",
    "residual_for",
    "residual_profile",
    "rule_match",
    "surname_of",
]
