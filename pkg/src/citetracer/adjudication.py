"""Router and the three class-specialist judgers.

Each judger can consult a text backend; whenever the backend is missing,
unreachable, or answers outside its contract, a deterministic judger built
from the residual labels decides instead, so every citation gets a verdict.
"""

from __future__ import annotations

import enum
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol, Sequence

from .cascade.connectors import SOURCE_PRIORITY
from .channel import BackendContractError, ChannelError, TextChannel, extract_json
from .matching import (
    DeterministicMatcher,
    EarlyExit,
    MatcherBackend,
    ResidualLabel,
    ResidualProfile,
    RuleProfile,
    Status,
    build_profile,
    early_exit,
    residual_for,
    surname_of,
)
from .model import (
    CORE_FIELDS,
    H_CODE_FOR_FIELD,
    IDENTIFIER_FIELDS,
    PERIPHERAL_FIELDS,
    CandidateRecord,
    CitationRecord,
    EvidenceBundle,
    Fact,
    Label,
    ResolvedBy,
    TaxonomyCode,
    Verdict,
    sort_codes,
)
from .normalize import default_tables, normalize_arxiv, normalize_doi, normalize_title
from .prompts import load_prompt

log = logging.getLogger(__name__)

T = TaxonomyCode

NEUTRAL = {"exact", "normalizable_variant", "reference_missing", "both_missing"}
BLESSABLE = {"r2_initial", "alias"}
CORE_BAD = {
    "title": {"contradiction", "candidate_missing"},
    "authors": {"h2_error"},
    "venue": {"different"},
    "year": {"contradiction", "candidate_missing"},
}


class Target(str, enum.Enum):
    VALID = "ValidJudger"
    POTENTIAL = "PotentialJudger"
    HALLUCINATED = "HallucinatedJudger"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class JudgerRoute:
    target: Target
    trigger: str


@dataclass(frozen=True)
class Context:
    """Everything a judger looks at for one citation."""

    record: CitationRecord
    bundle: EvidenceBundle
    candidate: CandidateRecord | None = None
    residual: ResidualProfile | None = None
    # identifier facts (unresolvable / conflicting) relevant to this record
    id_problems: tuple[Fact, ...] = ()
    non_academic: tuple[Fact, ...] = ()

    @property
    def evidence_absent(self) -> bool:
        return self.candidate is None

    def label(self, name: str) -> str:
        return self.residual.label(name) if self.residual else "both_missing"

    def labels(self) -> dict[str, str]:
        return {k: v.label for k, v in self.residual.items()} if self.residual else {}

    def issues(self) -> dict[str, str]:
        return {k: v for k, v in self.labels().items() if v not in NEUTRAL}


@dataclass
class Adjudication:
    verdict: Verdict
    route: JudgerRoute | None = None
    candidate: CandidateRecord | None = None
    residual: ResidualProfile | None = None
    early: EarlyExit | None = None
    notes: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# candidate selection


def _priority(c: CandidateRecord) -> int:
    return SOURCE_PRIORITY.index(c.source) if c.source in SOURCE_PRIORITY else len(SOURCE_PRIORITY)


def _title_overlap(a: str | None, b: str | None) -> float:
    ta = set(normalize_title(a).split()) if a else set()
    tb = set(normalize_title(b).split()) if b else set()
    return len(ta & tb) / len(ta | tb) if ta and tb else 0.0


def _id_match(record, cand) -> bool:
    if record.doi and cand.doi and normalize_doi(record.doi) == normalize_doi(cand.doi):
        return True
    return bool(record.arxiv_id and cand.arxiv_id and normalize_arxiv(record.arxiv_id) == normalize_arxiv(cand.arxiv_id))


def relevant(profile: RuleProfile, i: int) -> bool:
    """A candidate plausibly describes the cited work."""
    st = profile.statuses[i]
    cand = profile.candidates[i]
    if st["title"].status is Status.MATCH:
        return True
    if _title_overlap(profile.record.title, cand.title) >= 0.5:
        return True
    return profile.n_match(i) >= 2 and not _id_match(profile.record, cand)


def select_best(profile: RuleProfile) -> int | None:
    """Most Match statuses, then richer metadata source, then rank order."""
    pool = [i for i in range(len(profile.candidates)) if relevant(profile, i)]
    if not pool:
        return None
    return min(pool, key=lambda i: (-profile.n_match(i), _priority(profile.candidates[i]), i))


def corroborate(profile: RuleProfile, best: int, residual: ResidualProfile) -> ResidualProfile:
    """Let other candidates of the same work settle what the best one lacks."""
    same = [
        i
        for i in range(len(profile.candidates))
        if i != best and profile.statuses[i]["title"].status is Status.MATCH
    ]
    if not same:
        return residual
    labels = dict(residual.labels)
    for name, lab in residual.items():
        if lab.label not in ("candidate_missing",):
            continue
        hits = [profile.statuses[i][name].status for i in same]
        if Status.MATCH in hits:
            labels[name] = ResidualLabel(name, "exact", source="corroborated")
        elif Status.MISMATCH in hits:
            bad = "h2_error" if name == "authors" else "different" if name in ("venue", "publisher") else "contradiction"
            labels[name] = ResidualLabel(name, bad, source="corroborated")
    return ResidualProfile(residual.candidate_index, labels, residual.et_al, residual.provenance)


def identifier_problems(record: CitationRecord, bundle: EvidenceBundle, profile: RuleProfile) -> tuple[Fact, ...]:
    """Unresolvable identifiers, plus identifiers that resolve to another work."""
    out = [f for f in bundle.facts_of("unresolvable") if f.field in IDENTIFIER_FIELDS]
    want = normalize_title(record.title) if record.title else None
    for i, cand in enumerate(profile.candidates):
        if cand.source not in ("doi", "arxiv") or not _id_match(record, cand) or not want or not cand.title:
            continue
        if normalize_title(cand.title) != want and _title_overlap(record.title, cand.title) < 0.5:
            fld = "doi" if record.doi and cand.doi and normalize_doi(record.doi) == normalize_doi(cand.doi) else "arxiv_id"
            out.append(Fact("identifier_conflict", field=fld, value=record.get(fld), source=cand.source, detail=cand.title))
    return tuple(out)


# ---------------------------------------------------------------------------
# routing


def route(ctx: Context) -> JudgerRoute:
    if ctx.non_academic:
        return JudgerRoute(Target.POTENTIAL, "non_academic_source")
    if ctx.evidence_absent:
        return JudgerRoute(Target.HALLUCINATED, "evidence_absent")
    if ctx.id_problems:
        return JudgerRoute(Target.HALLUCINATED, ctx.id_problems[0].kind)
    for name, bad in CORE_BAD.items():
        if ctx.label(name) in bad:
            return JudgerRoute(Target.HALLUCINATED, f"{name}:{ctx.label(name)}")
    issues = ctx.issues()
    if all(v in BLESSABLE for v in issues.values()):
        return JudgerRoute(Target.VALID, ",".join(sorted(issues)) or "corroborated")
    if all(v == "p1_variant" or (v == "candidate_missing" and k in PERIPHERAL_FIELDS) for k, v in issues.items()):
        return JudgerRoute(Target.POTENTIAL, ",".join(f"{k}:{v}" for k, v in sorted(issues.items())))
    return JudgerRoute(Target.HALLUCINATED, "mixture")


# ---------------------------------------------------------------------------
# verdict helpers


def _sources(ctx: Context) -> frozenset[str]:
    return frozenset(ctx.candidate.sources) if ctx.candidate else frozenset()


def _fields_for(codes: Sequence[TaxonomyCode], ctx: Context) -> frozenset[str]:
    """Offending fields: every touched field the citation actually got wrong."""
    wrong = {k for k, v in ctx.issues().items() if v not in BLESSABLE}
    wrong |= {f.field for f in ctx.id_problems if f.field}
    if ctx.evidence_absent:
        wrong |= set(ctx.record.provided_fields)
    out = set()
    for code in codes:
        hit = code.touched_fields & wrong
        out |= hit if hit else (code.touched_fields & set(ctx.record.provided_fields)) or code.touched_fields
    return frozenset(out)


def hallucination_codes(ctx: Context) -> tuple[TaxonomyCode, ...]:
    codes: set[TaxonomyCode] = set()
    if ctx.evidence_absent:
        codes |= {H_CODE_FOR_FIELD[f] for f in CORE_FIELDS if ctx.record.get(f)}
    if ctx.id_problems:
        codes.add(T.H5)
    for name, lab in ctx.labels().items():
        if name in CORE_BAD and lab in CORE_BAD[name]:
            codes.add(H_CODE_FOR_FIELD[name])
        elif name == "authors" and lab == "p1_variant" and not surnames_align(ctx):
            codes.add(T.H2)
        elif name in IDENTIFIER_FIELDS and lab in ("contradiction", "candidate_missing"):
            codes.add(T.H5)
        elif name in PERIPHERAL_FIELDS and lab in ("contradiction", "different"):
            codes.add(T.H6)
        elif name in ("authors", "venue") and lab == "candidate_missing":
            codes.add(H_CODE_FOR_FIELD[name])
    return sort_codes(codes)


def potential_codes(ctx: Context) -> tuple[TaxonomyCode, ...]:
    codes = set()
    if ctx.label("authors") == "p1_variant" and surnames_align(ctx):
        codes.add(T.P1)
    if any(ctx.label(f) == "candidate_missing" for f in PERIPHERAL_FIELDS):
        codes.add(T.P3)
    return sort_codes(codes)


def surnames_align(ctx: Context) -> bool:
    """P1 guard: the surname multisets must agree one-to-one."""
    if ctx.candidate is None:
        return False
    c = list(ctx.record.named_authors)
    k = list(ctx.candidate.named_authors)
    if ctx.record.has_et_al:
        k = k[: len(c)]
    if len(c) != len(k):
        return False
    return Counter(surname_of(x) for x in c) == Counter(surname_of(y) for y in k)


def _hallucinated(ctx: Context, codes, reason: str, by: ResolvedBy) -> Verdict:
    return Verdict(Label.HALLUCINATED, codes, _fields_for(codes, ctx), _sources(ctx), reason, by)


def _potential(ctx: Context, codes, reason: str, by: ResolvedBy) -> Verdict:
    fields = set()
    for c in codes:
        if c is T.P1:
            fields.add("authors")
        elif c is T.P3:
            fields |= {f for f in PERIPHERAL_FIELDS if ctx.label(f) == "candidate_missing"} or {
                f for f in PERIPHERAL_FIELDS if ctx.record.get(f)
            }
    return Verdict(Label.POTENTIAL, codes, frozenset(fields), _sources(ctx), reason, by)


# ---------------------------------------------------------------------------
# backends


class JudgerBackend(Protocol):
    name: str

    def judge(self, kind: Target, ctx: Context, valid_reason: str = "") -> Mapping[str, Any]: ...


_ALLOWED = {
    Target.VALID: {"REAL": {T.R2, T.R3}, "ESCALATE": set()},
    Target.POTENTIAL: {"POTENTIAL": {T.P1, T.P2, T.P3}, "HALLUCINATED": {c for c in T if c.label is Label.HALLUCINATED}},
    Target.HALLUCINATED: {"HALLUCINATED": {c for c in T if c.label is Label.HALLUCINATED}, "POTENTIAL": {T.P1, T.P3}},
}


def validate_reply(kind: Target, data: Any) -> tuple[str, tuple[TaxonomyCode, ...], str]:
    """Check a judger reply against its output contract."""
    if not isinstance(data, Mapping):
        raise BackendContractError("judger reply must be a JSON object")
    label = data.get("label")
    allowed = _ALLOWED[kind]
    if label not in allowed:
        raise BackendContractError(f"label {label!r} not allowed for {kind}")
    raw = data.get("taxonomy", [])
    if isinstance(raw, str):
        raw = [raw]
    if not isinstance(raw, list):
        raise BackendContractError("taxonomy must be a list")
    try:
        codes = sort_codes(raw)
    except ValueError as exc:
        raise BackendContractError(str(exc)) from exc
    if any(c not in allowed[label] for c in codes):
        raise BackendContractError(f"codes {codes} inconsistent with label {label}")
    if label != "ESCALATE" and not codes:
        raise BackendContractError(f"label {label} needs at least one code")
    return label, codes, str(data.get("reason", ""))


def _fmt(value) -> str:
    return "" if value is None else str(value)


def _authors(record) -> str:
    return json.dumps(list(record.authors) if record else [], ensure_ascii=False)


def evidence_lines(ctx: Context) -> str:
    lines = []
    for c in ctx.bundle.candidates:
        if c is ctx.candidate:
            continue
        lines.append(f"- [{c.source}] {c.title} ({_fmt(c.venue)}, {_fmt(c.year)})")
    for f in ctx.bundle.facts:
        if f.kind in ("unresolvable", "non_academic_source", "evidence_absent"):
            lines.append(f"- fact {f.kind}: {_fmt(f.field)} {_fmt(f.value)}".rstrip())
    for f in ctx.id_problems:
        if f.kind == "identifier_conflict":
            lines.append(f"- fact identifier_conflict: {f.field} {f.value} resolves to '{f.detail}'")
    return "\n".join(lines) or "(none)"


class LLMJudgerBackend:
    """Judgers reached over a text channel with the shipped prompts."""

    name = "llm"

    def __init__(self, channel: TextChannel):
        self.channel = channel

    def render(self, kind: Target, ctx: Context, valid_reason: str = "") -> tuple[str, str]:
        r, c = ctx.record, ctx.candidate
        common = dict(
            citation_title=_fmt(r.title),
            citation_authors=_authors(r),
            citation_venue=_fmt(r.venue),
            citation_year=_fmt(r.year),
            candidate_title=_fmt(c.title if c else None),
            candidate_authors=_authors(c),
            candidate_venue=_fmt(c.venue if c else None),
            candidate_year=_fmt(c.year if c else None),
            issues=json.dumps({"evidence": "absent"} if ctx.evidence_absent else ctx.issues()),
            evidence_lines=evidence_lines(ctx),
        )
        if kind is Target.VALID:
            prompt = load_prompt("valid_judger")
        elif kind is Target.POTENTIAL:
            prompt = load_prompt("potential_judger")
            common.update(
                citation_location=_fmt(r.location),
                candidate_location=_fmt(c.location if c else None),
                valid_reason=valid_reason or "(none)",
            )
        else:
            prompt = load_prompt("hallucinated_judger")
            common.update(
                citation_doi=_fmt(r.doi),
                citation_arxiv_id=_fmt(r.arxiv_id),
                candidate_doi=_fmt(c.doi if c else None),
                candidate_arxiv_id=_fmt(c.arxiv_id if c else None),
            )
        return prompt.render(**common), prompt.system

    def judge(self, kind, ctx, valid_reason=""):
        text, system = self.render(kind, ctx, valid_reason)
        return extract_json(self.channel.complete(text, system=system))


# ---------------------------------------------------------------------------
# judgers


def _ask(backend: JudgerBackend | None, kind: Target, ctx: Context, valid_reason: str = ""):
    """Backend answer, validated; None means use the deterministic judger."""
    if backend is None:
        return None
    try:
        return validate_reply(kind, backend.judge(kind, ctx, valid_reason))
    except (ChannelError, BackendContractError, ValueError) as exc:
        log.warning("%s backend failed (%s); deterministic fallback", kind, exc)
        return None


def judge_valid(ctx: Context, backend: JudgerBackend | None = None) -> Verdict:
    issues = ctx.issues()
    blessable = all(v in BLESSABLE for v in issues.values()) and not ctx.id_problems and not ctx.evidence_absent
    reply = _ask(backend, Target.VALID, ctx)
    if reply is not None:
        label, codes, reason = reply
        if label == "REAL" and blessable:
            return Verdict(Label.REAL, codes, frozenset(), _sources(ctx), reason, ResolvedBy.VALID_JUDGER)
        return judge_hallucinated(ctx, backend, escalated=reason or "valid judger escalated")
    if blessable:
        codes = {T.R3} if ctx.residual and ctx.residual.et_al else set()
        verbatim = all(v in ("exact", "reference_missing", "both_missing") for v in ctx.labels().values())
        if not codes:
            # fields matched verbatim across corroborating sources count as exact
            codes.add(T.R1 if verbatim else T.R2)
        elif issues:
            codes.add(T.R2)
        reason = "normalizable variants: " + ", ".join(f"{k}={v}" for k, v in sorted(issues.items())) if issues else "all fields corroborated"
        return Verdict(Label.REAL, sort_codes(codes), frozenset(), _sources(ctx), reason, ResolvedBy.VALID_JUDGER)
    return judge_hallucinated(ctx, backend, escalated="residual not normalizable")


def judge_potential(ctx: Context, backend: JudgerBackend | None = None, valid_reason: str = "") -> Verdict:
    if ctx.non_academic:
        host = ctx.non_academic[0].source or ctx.non_academic[0].value
        return Verdict(Label.POTENTIAL, (T.P2,), frozenset(), frozenset({host}) if host else frozenset(),
                       f"non-academic source: {host}", ResolvedBy.POTENTIAL_JUDGER)
    det = potential_codes(ctx)
    explainable = bool(det) and all(
        v == "p1_variant" and T.P1 in det or (v == "candidate_missing" and k in PERIPHERAL_FIELDS)
        for k, v in ctx.issues().items()
    ) and not ctx.id_problems
    reply = _ask(backend, Target.POTENTIAL, ctx, valid_reason)
    if reply is not None:
        label, codes, reason = reply
        # hard rules override the backend: no P1 without aligned surnames,
        # no P3 unless the only gaps are the four peripheral fields
        if label == "POTENTIAL" and explainable and set(codes) <= set(det):
            return _potential(ctx, codes, reason, ResolvedBy.POTENTIAL_JUDGER)
        if label == "HALLUCINATED":
            return _hallucinated(ctx, codes, reason, ResolvedBy.POTENTIAL_JUDGER)
        return judge_hallucinated(ctx, None, escalated="potential reply violated hard rules")
    if explainable:
        reason = "; ".join(
            ["author name variant with aligned surnames"] * (T.P1 in det)
            + ["peripheral fields unverifiable: " + ", ".join(f for f in PERIPHERAL_FIELDS if ctx.label(f) == "candidate_missing")] * (T.P3 in det)
        )
        return _potential(ctx, det, reason, ResolvedBy.POTENTIAL_JUDGER)
    return judge_hallucinated(ctx, backend, escalated="discrepancies not explainable")


def judge_hallucinated(ctx: Context, backend: JudgerBackend | None = None, escalated: str = "") -> Verdict:
    det = hallucination_codes(ctx)
    reply = _ask(backend, Target.HALLUCINATED, ctx)
    if reply is not None:
        label, codes, reason = reply
        if label == "HALLUCINATED":
            return _hallucinated(ctx, codes, reason, ResolvedBy.HALLUCINATED_JUDGER)
        # downgrade only when the deterministic reading finds nothing decisive
        if not det:
            return _potential(ctx, codes, reason, ResolvedBy.HALLUCINATED_JUDGER)
        return _hallucinated(ctx, det, "downgrade refused: " + _describe(ctx, det), ResolvedBy.HALLUCINATED_JUDGER)
    if det:
        return _hallucinated(ctx, det, _describe(ctx, det), ResolvedBy.HALLUCINATED_JUDGER)
    codes = potential_codes(ctx) or (T.P3,)
    reason = "no contradicted field; " + (escalated or "downgraded")
    return _potential(ctx, codes, reason, ResolvedBy.HALLUCINATED_JUDGER)


def _describe(ctx: Context, codes) -> str:
    if ctx.evidence_absent:
        return "no evidence at any stage"
    parts = [f"{k}={v}" for k, v in sorted(ctx.issues().items()) if v not in BLESSABLE]
    parts += [f"{f.kind}:{f.field}" for f in ctx.id_problems]
    return "contradicted: " + ", ".join(parts) if parts else "codes " + ",".join(str(c) for c in codes)


# ---------------------------------------------------------------------------
# the adjudicator


class Adjudicator:
    """Callable ``(record, bundle) -> Adjudication`` for the cascade."""

    def __init__(
        self,
        matcher: MatcherBackend | None = None,
        judger: JudgerBackend | None = None,
        tables=None,
        residual_limit: int = 5,
    ):
        self.tables = tables or default_tables()
        self.matcher = matcher
        self.fallback = DeterministicMatcher(self.tables)
        self.judger = judger
        self.residual_limit = residual_limit

    def __call__(self, record: CitationRecord, bundle: EvidenceBundle) -> Adjudication:
        return self.adjudicate(record, bundle)

    def context(self, record, bundle) -> tuple[Context, RuleProfile, EarlyExit]:
        profile = build_profile(record, bundle.candidates, self.tables)
        early = early_exit(profile)
        best = select_best(profile)
        residual = None
        if best is not None:
            residual = corroborate(profile, best, residual_for(profile, best, self.matcher, self.fallback))
        ctx = Context(
            record,
            bundle,
            profile.candidates[best] if best is not None else None,
            residual,
            identifier_problems(record, bundle, profile),
            tuple(bundle.facts_of("non_academic_source")),
        )
        return ctx, profile, early

    def adjudicate(self, record: CitationRecord, bundle: EvidenceBundle) -> Adjudication:
        ctx, profile, early = self.context(record, bundle)
        if early.fired and not ctx.id_problems:
            verdict = Verdict(
                Label.REAL, (early.code,), frozenset(), frozenset(early.candidate.sources),
                f"every provided field matches {early.candidate.source}", ResolvedBy.RULE_MATCHER,
            )
            return Adjudication(verdict, None, early.candidate, None, early)
        r = route(ctx)
        if r.target is Target.VALID:
            verdict = judge_valid(ctx, self.judger)
        elif r.target is Target.POTENTIAL:
            verdict = judge_potential(ctx, self.judger)
        else:
            verdict = judge_hallucinated(ctx, self.judger)
        notes = ["degenerate: no provided fields"] if early.degenerate else []
        return Adjudication(verdict, r, ctx.candidate, ctx.residual, early, notes)
