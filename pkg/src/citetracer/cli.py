"""Command-line entry point: ``citetracer {audit,synth,score,cache}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .audit import EXIT_INPUT, EXIT_OK, InputError, cmd_audit, read_report
from .bench import SYNTH_CODES, TABLE1_TARGETS, BenchError, emit_benchmark, load_seeds, plant_replay_fixtures, read_labels, read_review_file, synthesize
from .cascade.cache import PROVENANCES, MemoryCache
from .config import ConfigError, load_config
from .metrics import BUCKETS, EvalResult, ScoreError, pct, score

log = logging.getLogger("citetracer")


def parse_target_spec(text: str) -> dict[str, int]:
    """``"H4=5,R1=10"``, ``"all=10"`` or ``"table1"``."""
    text = text.strip()
    if text.lower() == "table1":
        return dict(TABLE1_TARGETS)
    out: dict[str, int] = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        code, sep, n = part.partition("=")
        if not sep:
            raise ValueError(f"bad target {part!r}, expected CODE=N")
        try:
            count = int(n)
        except ValueError:
            raise ValueError(f"bad count in {part!r}") from None
        if code.strip().lower() == "all":
            out.update({c.value: count for c in SYNTH_CODES})
        else:
            out[code.strip().upper()] = count
    return out


def _apply_overrides(cfg, args) -> None:
    if getattr(args, "fixtures", None):
        cfg.fixture_mode = args.fixtures
    if getattr(args, "fixture_root", None):
        cfg.fixture_root = str(args.fixture_root)
    for name in ("papers", "citations", "fanout"):
        if getattr(args, name, None) is not None:
            setattr(cfg, name, getattr(args, name))
    if getattr(args, "connectors", None):
        cfg.connectors = tuple(c.strip() for c in args.connectors.split(",") if c.strip())
    if getattr(args, "disable", None):
        off = {c.strip() for c in args.disable.split(",")}
        cfg.connectors = tuple(c for c in cfg.connectors if c not in off)
    if getattr(args, "cache", None):
        cfg.cache_path = str(args.cache)
    if getattr(args, "backend_endpoint", None):
        cfg.backend.endpoint = args.backend_endpoint
    if getattr(args, "backend_model", None):
        cfg.backend.model = args.backend_model
    if getattr(args, "web_endpoint", None):
        cfg.web_endpoint = args.web_endpoint
    if getattr(args, "timings", False):
        cfg.timings = True
    cfg.validate()


def run_audit(args) -> int:
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        report = cmd_audit(
            args.inputs, cfg, args.out, fmt=args.format,
            use_backend=not args.no_backend, cache_write_back=not args.no_write_back,
        )
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    s = report.summary()
    print(f"{s['n']} citations: " + ", ".join(f"{k} {v}" for k, v in s["labels"].items()))
    if report.degraded:
        print(f"degraded connectors: {', '.join(report.degraded)}", file=sys.stderr)
    for path, errs in report.ingest_errors.items():
        for e in errs:
            where = f" at offset {e.offset}" if e.offset is not None else ""
            print(f"{path}: {e.key or '?'}{where}: {e.message}", file=sys.stderr)
    print(f"report written to {args.out}")
    return report.exit_code


def run_synth(args) -> int:
    try:
        targets = parse_target_spec(args.targets)
        seeds = load_seeds(args.seeds)
        review = read_review_file(args.review) if args.review else None
        result = synthesize(seeds, targets, rng_seed=args.rng_seed, review=review)
        manifest = emit_benchmark(result.entries, args.out, result, args.name)
        if args.fixtures_out:
            n = plant_replay_fixtures([e.record for e in result.entries], seeds, args.fixtures_out)
            print(f"planted {n} replay fixtures in {args.fixtures_out}")
    except (BenchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"{manifest['entries']} entries written to {args.out}")
    for code, n in manifest["counts"].items():
        want = result.targets.get(code, 0)
        flag = "" if n >= want else f" (short of {want})"
        print(f"  {code}: {n}{flag}")
    if any(result.gate_rejections.values()):
        print("gate rejections: " + ", ".join(f"{g} {n}" for g, n in result.gate_rejections.items() if n))
    return EXIT_OK if manifest["entries"] == sum(result.targets.values()) else 1


def format_eval(res: EvalResult) -> str:
    lines = [f"n={res.n} accuracy={pct(res.accuracy):.1f}", "", "class         TP    FP    FN    TN  prec   rec    F1"]
    for name, c in res.classes.items():
        d = c.to_dict()
        lines.append(f"{name:<12}{c.tp:>5}{c.fp:>6}{c.fn:>6}{c.tn:>6}{d['precision']:>6.1f}{d['recall']:>6.1f}{d['f1']:>6.1f}")
    lines += ["", "bucket  hits  supp   TPR   FPR"]
    for b, r in res.buckets.items():
        d = r.to_dict()
        lines.append(f"{b:<6}{r.hits:>6}{r.support:>6}{d['tpr']:>6.1f}{d['fpr']:>6.1f}")
    lines += ["", "confusion (rows true, columns predicted)", "      " + "".join(f"{b:>5}" for b in BUCKETS)]
    for b, row in zip(BUCKETS, res.confusion):
        lines.append(f"{b:<6}" + "".join(f"{v:>5}" for v in row))
    if res.unbucketed:
        lines.append("predictions outside the buckets: " + ", ".join(f"{k} {v}" for k, v in sorted(res.unbucketed.items())))
    return "\n".join(lines)


def run_score(args) -> int:
    try:
        predictions = read_report(args.report)
        labels = read_labels(args.labels)
        res = score(predictions, labels, strict=args.strict)
    except ScoreError as exc:
        print("error: report and labels disagree", file=sys.stderr)
        for k in exc.missing:
            print(f"  missing from report: {k}", file=sys.stderr)
        for k in exc.extra:
            print(f"  not in labels: {k}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError, KeyError, BenchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.json:
        print(json.dumps(res.to_dict(), indent=2, sort_keys=True))
    else:
        print(format_eval(res))
        if res.extra_keys:
            print(f"ignored {len(res.extra_keys)} report keys without a label: {', '.join(res.extra_keys[:20])}")
    if args.out:
        Path(args.out).write_text(json.dumps(res.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def run_cache(args) -> int:
    try:
        path = args.cache or load_config(args.config).cache_path
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not path:
        print("error: no cache path (use --cache or [cache] path)", file=sys.stderr)
        return EXIT_INPUT
    cache = MemoryCache(path)
    if not cache.available:
        print(f"error: cache {path} is unreadable", file=sys.stderr)
        return EXIT_INPUT
    if args.action == "import":
        try:
            with open(args.dump, encoding="utf-8") as fh:
                added, errors = cache.import_dump(fh, args.provenance)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        for e in errors:
            print(f"{args.dump}: {e}", file=sys.stderr)
        cache.save()
        print(f"imported {added} records; cache size {len(cache)}")
        return EXIT_INPUT if errors else EXIT_OK
    if args.action == "stats":
        stats = cache.stats()
        print(f"size {len(cache)}")
        for prov, n in stats.items():
            print(f"  {prov}: {n}")
        return EXIT_OK
    if args.action == "evict":
        if not (args.provenance or args.entry):
            print("error: evict needs --provenance or --entry", file=sys.stderr)
            return EXIT_INPUT
        n = cache.evict(args.provenance, args.entry)
        cache.save()
        print(f"evicted {n}; cache size {len(cache)}")
        return EXIT_OK
    for eid, data in cache.entries():
        if args.provenance and data["provenance"] != args.provenance:
            continue
        print(f"{eid}\t{data['provenance']}\t{data.get('year') or ''}\t{data.get('title') or ''}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="citetracer", description="Audit bibliographies for fabricated or corrupted citations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("audit", help="verify every citation in one or more bibliographies")
    a.add_argument("inputs", nargs="+", type=Path, help=".bib files or plain-text reference lists")
    a.add_argument("-o", "--out", type=Path, required=True, help="report directory")
    a.add_argument("-c", "--config", type=Path)
    a.add_argument("--format", choices=("bibtex", "ref_strings"), help="default: guess from the file suffix")
    a.add_argument("--fixtures", choices=("live", "record", "replay"))
    a.add_argument("--fixture-root", type=Path)
    a.add_argument("--papers", type=int)
    a.add_argument("--citations", type=int)
    a.add_argument("--fanout", type=int)
    a.add_argument("--connectors", help="comma-separated connectors to enable")
    a.add_argument("--disable", help="comma-separated connectors to disable")
    a.add_argument("--cache", type=Path, help="memory cache file (JSONL)")
    a.add_argument("--no-write-back", action="store_true", help="do not add Real verdicts to the cache")
    a.add_argument("--backend-endpoint")
    a.add_argument("--backend-model")
    a.add_argument("--no-backend", action="store_true", help="deterministic fallbacks only")
    a.add_argument("--web-endpoint")
    a.add_argument("--timings", action="store_true", help="include per-stage timings in the report")
    a.set_defaults(func=run_audit)

    s = sub.add_parser("synth", help="synthesize a labeled benchmark from seed entries")
    s.add_argument("-o", "--out", type=Path, required=True)
    s.add_argument("--targets", default="all=10", help='e.g. "H4=5,R1=10", "all=10" or "table1"')
    s.add_argument("--seeds", type=Path, help="seed .bib (default: bundled seeds)")
    s.add_argument("--rng-seed", type=int, default=0)
    s.add_argument("--review", type=Path, help="TSV of key<TAB>approve|reject for P1 tickets")
    s.add_argument("--name", default="benchmark")
    s.add_argument("--fixtures-out", type=Path, help="also plant replay fixtures for the entries here")
    s.set_defaults(func=run_synth)

    sc = sub.add_parser("score", help="score an audit report against ground-truth labels")
    sc.add_argument("report", type=Path, help="verdicts.jsonl or the report directory")
    sc.add_argument("labels", type=Path, help="labels.tsv")
    sc.add_argument("--strict", action="store_true", help="report keys without a label are an error")
    sc.add_argument("--json", action="store_true")
    sc.add_argument("--out", type=Path, help="also write the metrics JSON here")
    sc.set_defaults(func=run_score)

    c = sub.add_parser("cache", help="inspect or maintain the memory cache")
    c.add_argument("--cache", type=Path)
    c.add_argument("-c", "--config", type=Path)
    csub = c.add_subparsers(dest="action", required=True)
    ci = csub.add_parser("import", help="import a JSON-lines metadata dump")
    ci.add_argument("dump", type=Path)
    ci.add_argument("--provenance", choices=PROVENANCES, default="seed_mirror")
    csub.add_parser("stats", help="size and provenance breakdown")
    ce = csub.add_parser("evict")
    ce.add_argument("--provenance", choices=PROVENANCES)
    ce.add_argument("--entry")
    cl = csub.add_parser("list")
    cl.add_argument("--provenance", choices=PROVENANCES)
    c.set_defaults(func=run_cache)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
