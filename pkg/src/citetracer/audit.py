"""Audit runs: ingest one or more bibliographies, verify every citation, write the report.

Each input file counts as one paper. Papers run concurrently up to
``papers``; inside a paper citations run up to ``citations`` at a time, and
the cascade fans scholar queries out up to ``fanout``. Results are always
written in input order, so a replay run is byte-identical whatever the bounds.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .adjudication import Adjudication, Adjudicator, LLMJudgerBackend
from .cascade import (
    Cascade,
    CascadeConfig,
    ConnectorHealth,
    FixtureStore,
    FixtureTransport,
    HttpxTransport,
    JsonWebSearch,
    MemoryCache,
    NullWebSearch,
)
from .channel import HttpTextChannel
from .config import Config
from .ingest import BibSource, IngestError, guess_format, load_source
from .matching import LLMMatcherBackend
from .model import STAGES, CitationRecord, EvidenceBundle, Fact, Label, Verdict
from .normalize import Tables

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGRADED = 3

REPORT_VERSION = 1


class InputError(RuntimeError):
    """The input could not be read at all, or the config is unusable."""


@dataclass
class Runtime:
    cascade: Cascade
    adjudicator: Adjudicator
    cache: MemoryCache | None = None


def build_runtime(cfg: Config, use_backend: bool = True, transport=None) -> Runtime:
    per, default = cfg.rate_policies()
    if transport is None:
        if cfg.fixture_mode == "live":
            transport = HttpxTransport(per, default)
        else:
            inner = None if cfg.fixture_mode == "replay" else HttpxTransport(per, default)
            transport = FixtureTransport(FixtureStore(cfg.fixture_root), cfg.fixture_mode, inner)
    cache = MemoryCache(cfg.cache_path) if cfg.cache_path else None
    web = JsonWebSearch(cfg.web_endpoint, transport) if cfg.web_endpoint else NullWebSearch()
    tables = Tables.load(cfg.venue_tables, cfg.publisher_tables, cfg.nickname_tables)
    matcher = judger = None
    if use_backend and cfg.backend.enabled:
        channel = HttpTextChannel(cfg.backend.endpoint, cfg.backend.model, cfg.backend.timeout, cfg.backend.api_key_env)
        matcher, judger = LLMMatcherBackend(channel), LLMJudgerBackend(channel)
    cascade = Cascade(
        transport,
        cache=cache,
        web=web,
        config=CascadeConfig(cfg.connectors, cfg.fanout, cfg.api_keys(), cfg.timings),
        health=ConnectorHealth(),
    )
    return Runtime(cascade, Adjudicator(matcher, judger, tables), cache)


@dataclass
class CitationResult:
    key: str
    paper: str
    record: CitationRecord
    verdict: Verdict
    bundle: EvidenceBundle
    adjudication: Adjudication | None = None
    timings: dict[str, float] = field(default_factory=dict)
    error: str | None = None

    def to_dict(self, timings: bool = False) -> dict[str, Any]:
        out = {
            "key": self.key,
            "paper": self.paper,
            "record": self.record.to_dict(),
            **self.verdict.to_dict(),
            "stages_tried": list(self.bundle.stages_tried),
            "facts": [f.to_dict() for f in self.bundle.facts],
            "matched": self.adjudication.candidate.to_dict() if self.adjudication and self.adjudication.candidate else None,
            "route": self.adjudication.route.target.value if self.adjudication and self.adjudication.route else None,
        }
        if self.error:
            out["error"] = self.error
        if timings:
            out["timings"] = self.timings
        return out


@dataclass
class AuditReport:
    results: list[CitationResult]
    config_digest: str
    health: dict[str, dict[str, Any]]
    ingest_errors: dict[str, list[IngestError]] = field(default_factory=dict)
    inputs: list[str] = field(default_factory=list)
    timings: bool = False

    @property
    def degraded(self) -> list[str]:
        return sorted(n for n, h in self.health.items() if h["degraded"])

    @property
    def exit_code(self) -> int:
        if any(self.ingest_errors.values()):
            return EXIT_INPUT
        if self.degraded or any(r.error for r in self.results):
            return EXIT_DEGRADED
        return EXIT_OK

    def summary(self) -> dict[str, Any]:
        labels = {l.value: 0 for l in Label}
        codes: dict[str, int] = {}
        resolved: dict[str, int] = {}
        for r in self.results:
            labels[r.verdict.label.value] += 1
            for c in r.verdict.codes:
                codes[c.value] = codes.get(c.value, 0) + 1
            resolved[r.verdict.resolved_by.value] = resolved.get(r.verdict.resolved_by.value, 0) + 1
        return {
            "report_version": REPORT_VERSION,
            "inputs": self.inputs,
            "n": len(self.results),
            "labels": labels,
            "codes": dict(sorted(codes.items())),
            "resolved_by": dict(sorted(resolved.items())),
            "config_digest": self.config_digest,
            "connector_health": self.health,
            "degraded_connectors": self.degraded,
            "ingest_errors": {k: [e.to_dict() for e in v] for k, v in self.ingest_errors.items() if v},
            "exit_code": self.exit_code,
        }

    def lines(self) -> list[str]:
        return [json.dumps(r.to_dict(self.timings), sort_keys=True, ensure_ascii=False) for r in self.results]

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        verdicts, summary = out / "verdicts.jsonl", out / "summary.json"
        verdicts.write_text("".join(line + "\n" for line in self.lines()), encoding="utf-8")
        summary.write_text(json.dumps(self.summary(), indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
        return verdicts, summary

    def predictions(self) -> dict[str, str]:
        return {r.key: r.verdict.primary_code.value for r in self.results}


def _fallback(record: CitationRecord, adjudicate: Callable, exc: Exception):
    # an unexpected failure still yields a verdict: adjudicate an empty, failed bundle
    facts = (
        Fact("stage_failed", STAGES[-1], detail=f"internal error: {exc}"),
        Fact("evidence_absent", STAGES[-1], detail="no candidate at any stage"),
    )
    bundle = EvidenceBundle(stages_tried=STAGES, facts=facts)
    outcome = adjudicate(record, bundle)
    return outcome, bundle


def verify_citation(record: CitationRecord, key: str, paper: str, rt: Runtime) -> CitationResult:
    try:
        res = rt.cascade.run(record, rt.adjudicator)
        return CitationResult(key, paper, record, res.verdict, res.bundle, res.outcome, res.timings)
    except Exception as exc:  # no abstentions, ever
        log.exception("citation %s failed", key)
        outcome, bundle = _fallback(record, rt.adjudicator, exc)
        return CitationResult(key, paper, record, outcome.verdict, bundle, outcome, error=str(exc))


def audit_records(
    papers: Sequence[tuple[str, Sequence[CitationRecord]]],
    rt: Runtime,
    cfg: Config,
) -> list[CitationResult]:
    def one_paper(item) -> list[CitationResult]:
        paper, records = item
        keyed = []
        for i, rec in enumerate(records, start=1):
            keyed.append((rec, rec.source_key or f"{paper}#{i}"))
        if not keyed:
            return []
        with ThreadPoolExecutor(max_workers=min(cfg.citations, len(keyed))) as pool:
            return list(pool.map(lambda rk: verify_citation(rk[0], rk[1], paper, rt), keyed))

    if not papers:
        return []
    with ThreadPoolExecutor(max_workers=min(cfg.papers, len(papers))) as pool:
        per_paper = list(pool.map(one_paper, papers))
    return [r for batch in per_paper for r in batch]


def write_back(results: Sequence[CitationResult], cache: MemoryCache | None) -> int:
    """Add the matched metadata of every Real verdict to the memory cache."""
    if cache is None or not cache.available:
        return 0
    added = 0
    for r in results:
        cand = r.adjudication.candidate if r.adjudication else None
        if r.verdict.label is Label.REAL and cand is not None and cand.title:
            added += cache.add(cand, "verified_run")
    if added:
        cache.save()
    return added


def read_inputs(paths: Sequence[str | Path], fmt: str | None = None, parser=None):
    papers, errors = [], {}
    for p in paths:
        path = Path(p)
        if not path.is_file():
            raise InputError(f"cannot read input {path}")
        try:
            result = load_source(BibSource(path=path, format=fmt or guess_format(path)), parser)
        except (OSError, UnicodeDecodeError) as exc:
            raise InputError(f"cannot read input {path}: {exc}") from exc
        papers.append((path.stem, result.records))
        errors[str(path)] = result.errors
    return papers, errors


def cmd_audit(
    paths: Sequence[str | Path],
    cfg: Config,
    out_dir: str | Path | None = None,
    rt: Runtime | None = None,
    fmt: str | None = None,
    use_backend: bool = True,
    cache_write_back: bool = True,
) -> AuditReport:
    papers, errors = read_inputs(paths, fmt)
    rt = rt or build_runtime(cfg, use_backend)
    results = audit_records(papers, rt, cfg)
    if cache_write_back:
        write_back(results, rt.cache)
    report = AuditReport(
        results,
        cfg.digest(),
        rt.cascade.health.summary(),
        errors,
        [str(p) for p in paths],
        cfg.timings,
    )
    if out_dir is not None:
        report.write(out_dir)
    return report


def read_report(path: str | Path) -> dict[str, str]:
    """Predicted primary codes keyed by citation key, from a verdicts.jsonl file (or its directory)."""
    p = Path(path)
    if p.is_dir():
        p = p / "verdicts.jsonl"
    out: dict[str, str] = {}
    with p.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            data = json.loads(line)
            key = data["key"]
            if key in out:
                raise ValueError(f"{p}:{lineno}: duplicate key {key!r}")
            out[key] = data["codes"][0]
    return out
