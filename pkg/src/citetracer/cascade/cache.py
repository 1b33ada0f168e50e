"""Persistent memory of known-good records, keyed by identifiers and title+year."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from ..model import FIELDS, CandidateRecord, CitationRecord
from ..normalize import normalize_arxiv, normalize_doi, normalize_title

log = logging.getLogger(__name__)

PROVENANCES = ("seed_mirror", "verified_run")


class CacheUnavailable(RuntimeError):
    pass


@dataclass
class DumpError:
    line: int
    offset: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line} (byte {self.offset}): {self.message}"


def title_key(title: str, year: int) -> str:
    digest = hashlib.sha1(normalize_title(title).encode("utf-8")).hexdigest()[:16]
    return f"ty:{digest}:{year}"


def record_keys(record) -> list[str]:
    keys = []
    if record.doi:
        keys.append("doi:" + normalize_doi(record.doi))
    if record.arxiv_id:
        keys.append("arxiv:" + normalize_arxiv(record.arxiv_id))
    if record.title and record.year is not None:
        keys.append(title_key(record.title, record.year))
    return keys


def entry_id(fields: dict) -> str:
    payload = json.dumps({k: fields.get(k) for k in FIELDS}, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:20]


class MemoryCache:
    """JSONL-backed store; one line per cached record.

    Reads and writes share one lock; writes are serialized and the file is
    replaced atomically on ``save``.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._lock = threading.RLock()
        self._entries: dict[str, dict] = {}
        self._index: dict[str, list[str]] = {}
        self.available = True
        if self.path and self.path.exists():
            try:
                self._load()
            except (OSError, ValueError) as exc:
                log.warning("memory cache %s unavailable: %s", self.path, exc)
                self.available = False

    def _load(self) -> None:
        assert self.path is not None
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    data = json.loads(line)
                    self._add(data, data.get("provenance") or "seed_mirror")

    def _add(self, fields: dict, provenance: str) -> bool:
        fields = {k: fields.get(k) for k in FIELDS}
        eid = entry_id(fields)
        if eid in self._entries:
            return False
        cand = CandidateRecord(**fields, source="memory", provenance=provenance)
        self._entries[eid] = {**cand.fields_dict(), "provenance": provenance}
        for key in record_keys(cand):
            self._index.setdefault(key, []).append(eid)
        return True

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def lookup(self, record: CitationRecord) -> list[CandidateRecord]:
        """Exact-key lookups on doi, arxiv id, and (normalized title, year)."""
        if not self.available:
            raise CacheUnavailable(str(self.path))
        with self._lock:
            seen: list[str] = []
            for key in record_keys(record):
                for eid in self._index.get(key, ()):
                    if eid not in seen:
                        seen.append(eid)
            return [self._candidate(eid) for eid in seen]

    def _candidate(self, eid: str) -> CandidateRecord:
        data = dict(self._entries[eid])
        provenance = data.pop("provenance")
        return CandidateRecord(**data, source="memory", provenance=provenance, raw_payload_digest=eid)

    def add(self, record, provenance: str = "verified_run") -> bool:
        if provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        with self._lock:
            return self._add(record.fields_dict(), provenance)

    def entries(self) -> Iterator[tuple[str, dict]]:
        with self._lock:
            items = list(self._entries.items())
        return iter(items)

    def stats(self) -> dict[str, int]:
        with self._lock:
            counts = Counter(e["provenance"] for e in self._entries.values())
        return {p: counts.get(p, 0) for p in PROVENANCES}

    def evict(self, provenance: str | None = None, entry: str | None = None) -> int:
        with self._lock:
            doomed = [
                eid
                for eid, e in self._entries.items()
                if (provenance is None or e["provenance"] == provenance) and (entry is None or eid == entry)
            ]
            for eid in doomed:
                del self._entries[eid]
            for key in list(self._index):
                self._index[key] = [e for e in self._index[key] if e not in doomed]
                if not self._index[key]:
                    del self._index[key]
            return len(doomed)

    def import_dump(self, lines: Iterable[str], provenance: str = "seed_mirror") -> tuple[int, list[DumpError]]:
        """Import a JSON-lines dump (one record per line). Returns (added, errors)."""
        added, errors, offset = 0, [], 0
        for lineno, line in enumerate(lines, start=1):
            start = offset
            offset += len(line.encode("utf-8")) + (0 if line.endswith("\n") else 1)
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                if not isinstance(data, dict):
                    raise ValueError("expected a JSON object")
                unknown = set(data) - set(FIELDS) - {"provenance", "source_key", "key"}
                if unknown:
                    raise ValueError(f"unknown keys {sorted(unknown)}")
                record = CitationRecord(**{k: data.get(k) for k in FIELDS})
                if not record.title:
                    raise ValueError("record has no title")
            except (ValueError, TypeError) as exc:
                errors.append(DumpError(lineno, start, str(exc)))
                continue
            if self.add(record, provenance):
                added += 1
        return added, errors

    def save(self, path: str | Path | None = None) -> None:
        target = Path(path) if path else self.path
        if target is None:
            return
        target.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            lines = [json.dumps(self._entries[eid], ensure_ascii=False, sort_keys=True) for eid in sorted(self._entries)]
        fd, tmp = tempfile.mkstemp(dir=target.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write("".join(line + "\n" for line in lines))
        os.replace(tmp, target)
