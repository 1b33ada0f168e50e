"""A small, fault-tolerant BibTeX reader and writer.

Entries are located by ``@`` at the start of a line and parsed independently,
so one malformed entry never takes its neighbours down with it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

from .latex import latex_to_unicode, unicode_to_latex
from .model import CitationRecord, is_et_al

MONTHS = {
    "jan": "January", "feb": "February", "mar": "March", "apr": "April",
    "may": "May", "jun": "June", "jul": "July", "aug": "August",
    "sep": "September", "oct": "October", "nov": "November", "dec": "December",
}

# Fields kept verbatim (no LaTeX decoding beyond brace stripping).
RAW_FIELDS = {"doi", "url", "eprint", "archiveprefix", "primaryclass", "ee"}

_ENTRY_START = re.compile(r"^[ \t]*@", re.MULTILINE)
_HEAD = re.compile(r"@\s*([A-Za-z]+)\s*([{(])")


class BibtexError(ValueError):
    def __init__(self, message: str, offset: int, key: str | None = None):
        super().__init__(f"{message} (byte offset {offset})")
        self.message = message
        self.offset = offset
        self.key = key


@dataclass
class BibEntry:
    entry_type: str
    key: str
    fields: dict[str, str]
    offset: int = 0
    raw_fields: dict[str, str] = field(default_factory=dict)


@dataclass
class BibParseResult:
    entries: list[BibEntry]
    errors: list[BibtexError]


class _Scanner:
    def __init__(self, text: str, base: int, strings: dict[str, str]):
        self.text = text
        self.pos = 0
        self.base = base
        self.strings = strings

    def error(self, message: str) -> BibtexError:
        return BibtexError(message, self.base)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        self.skip_ws()
        if self.peek() != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def read_name(self) -> str:
        self.skip_ws()
        m = re.compile(r"[^\s,={}()\"#]+").match(self.text, self.pos)
        if not m:
            raise self.error("expected a name")
        self.pos = m.end()
        return m.group(0)

    def read_braced(self) -> str:
        depth = 0
        start = self.pos
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch == "\\":
                self.pos += 2
                continue
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    self.pos += 1
                    return self.text[start + 1 : self.pos - 1]
            self.pos += 1
        raise self.error("unbalanced braces")

    def read_quoted(self) -> str:
        depth = 0
        self.pos += 1
        start = self.pos
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch == "\\":
                self.pos += 2
                continue
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth < 0:
                    raise self.error("unbalanced braces")
            elif ch == '"' and depth == 0:
                self.pos += 1
                return self.text[start : self.pos - 1]
            self.pos += 1
        raise self.error("unterminated quoted value")

    def read_value(self) -> str:
        parts = []
        while True:
            self.skip_ws()
            ch = self.peek()
            if ch == "{":
                parts.append(self.read_braced())
            elif ch == '"':
                parts.append(self.read_quoted())
            elif ch and (ch.isalnum() or ch in "_-.:+/"):
                name = self.read_name()
                if name.isdigit():
                    parts.append(name)
                else:
                    low = name.lower()
                    if low in self.strings:
                        parts.append(self.strings[low])
                    elif low in MONTHS:
                        parts.append(MONTHS[low])
                    else:
                        raise self.error(f"undefined macro {name!r}")
            else:
                raise self.error("expected a field value")
            self.skip_ws()
            if self.peek() == "#":
                self.pos += 1
                continue
            return "".join(parts)


def _parse_chunk(chunk: str, base: int, strings: dict[str, str]) -> BibEntry | None:
    head = _HEAD.match(chunk.lstrip())
    if not head:
        raise BibtexError("malformed entry header", base)
    lead = len(chunk) - len(chunk.lstrip())
    entry_type = head.group(1).lower()
    close = "}" if head.group(2) == "{" else ")"
    if entry_type in ("comment", "preamble"):
        return None
    sc = _Scanner(chunk, base, strings)
    sc.pos = lead + head.end()
    if entry_type == "string":
        name = sc.read_name().lower()
        sc.expect("=")
        strings[name] = sc.read_value()
        sc.expect(close)
        return None
    key = sc.read_name()
    fields: dict[str, str] = {}
    while True:
        sc.skip_ws()
        ch = sc.peek()
        if ch == close:
            sc.pos += 1
            break
        if ch == ",":
            sc.pos += 1
            sc.skip_ws()
            if sc.peek() == close:
                sc.pos += 1
                break
            name = sc.read_name().lower()
            sc.expect("=")
            value = sc.read_value()
            if name in fields:
                raise BibtexError(f"duplicate field {name!r} in {key}", base, key)
            fields[name] = value
            continue
        if not ch:
            raise BibtexError(f"unbalanced braces in entry {key}", base, key)
        raise BibtexError(f"unexpected {ch!r} in entry {key}", base, key)
    trailing = chunk[sc.pos :].strip()
    if any(ch in trailing for ch in "{}="):
        # leftover text usually means a brace closed the entry early
        raise BibtexError(f"unbalanced braces in entry {key}", base, key)
    decoded = {
        name: (" ".join(re.sub(r"[{}]", "", v).split()) if name in RAW_FIELDS else latex_to_unicode(v))
        for name, v in fields.items()
    }
    return BibEntry(entry_type, key, decoded, base, raw_fields=fields)


def read_entries(text: str) -> BibParseResult:
    """Split BibTeX text into entries; collect per-entry errors."""
    starts = [m.start() for m in _ENTRY_START.finditer(text)]
    entries: list[BibEntry] = []
    errors: list[BibtexError] = []
    strings: dict[str, str] = {}
    seen: dict[str, int] = {}
    offset, prev = 0, 0
    for i, start in enumerate(starts):
        end = starts[i + 1] if i + 1 < len(starts) else len(text)
        chunk = text[start:end]
        offset += len(text[prev:start].encode("utf-8"))
        prev = start
        try:
            entry = _parse_chunk(chunk, offset, strings)
        except BibtexError as exc:
            errors.append(exc)
            continue
        if entry is None:
            continue
        folded = entry.key.casefold()
        if folded in seen:
            errors.append(BibtexError(f"duplicate key {entry.key!r}", offset, entry.key))
            continue
        seen[folded] = offset
        entries.append(entry)
    return BibParseResult(entries, errors)


def split_names(value: str) -> list[str]:
    """Split a BibTeX author field on top-level ' and '."""
    names, depth, current = [], 0, []
    tokens = re.split(r"(\s+and\s+|[{}])", value, flags=re.IGNORECASE)
    for tok in tokens:
        if tok == "{":
            depth += 1
        elif tok == "}":
            depth -= 1
        if depth == 0 and re.fullmatch(r"\s+and\s+", tok or "", flags=re.IGNORECASE):
            names.append("".join(current))
            current = []
        else:
            current.append(tok)
    names.append("".join(current))
    return [" ".join(n.split()) for n in names if n.strip()]


def _top_level_split(text: str, sep: str = ",") -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        elif ch == sep and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return [p.strip() for p in parts]


def display_name(name: str) -> str:
    """Flip 'Last, First' (or 'Last, Jr, First') to display order.

    Commas inside braces are part of the name and never flip it.
    """
    parts = _top_level_split(name)
    if len(parts) == 2 and parts[1]:
        name = f"{parts[1]} {parts[0]}"
    elif len(parts) >= 3:
        name = f"{parts[2]} {parts[0]} {parts[1]}"
    return latex_to_unicode(name)


def _authors(raw: str) -> list[str]:
    names = []
    for token in split_names(raw):
        if token.strip().casefold() == "others":
            names.append("et al.")
        else:
            names.append(display_name(token))
    return [n for n in names if n]


_ARXIV_ID = re.compile(r"(\d{4}\.\d{4,5}(?:v\d+)?|[a-z\-]+(?:\.[A-Z]{2})?/\d{7}(?:v\d+)?)")


def entry_to_record(entry: BibEntry) -> CitationRecord:
    f = entry.fields
    venue = f.get("booktitle") or f.get("journal")
    arxiv_id = None
    eprint = f.get("eprint")
    prefix = (f.get("archiveprefix") or "").lower()
    if eprint and (prefix == "arxiv" or _ARXIV_ID.fullmatch(eprint)):
        arxiv_id = eprint
    url = f.get("url")
    if not url and "howpublished" in entry.raw_fields:
        m = re.search(r"\\url\{([^}]*)\}", entry.raw_fields["howpublished"])
        if m:
            url = m.group(1)
    year = f.get("year")
    if year:
        m = re.search(r"\d{4}", year)
        year = int(m.group(0)) if m else None
    raw_author = entry.raw_fields.get("author")
    return CitationRecord(
        title=f.get("title"),
        authors=tuple(_authors(raw_author)) if raw_author else (),
        venue=venue,
        year=year,
        volume=f.get("volume"),
        pages=f.get("pages"),
        publisher=f.get("publisher"),
        location=f.get("address") or f.get("location"),
        doi=f.get("doi"),
        arxiv_id=arxiv_id,
        url=url,
        source_key=entry.key,
    )


def parse_bibtex_text(text: str) -> tuple[list[CitationRecord], list[BibtexError]]:
    result = read_entries(text)
    return [entry_to_record(e) for e in result.entries], result.errors


def _bib_value(value: str, raw: bool = False) -> str:
    return "{" + (value if raw else unicode_to_latex(value)) + "}"


def _bib_author(name: str) -> str:
    if is_et_al(name):
        return "others"
    name = unicode_to_latex(name)
    # protect particles/commas from being re-read as "Last, First"
    return "{" + name + "}" if "," in name else name


def record_to_bibtex(record: CitationRecord, entry_type: str | None = None, extra: dict[str, str] | None = None) -> str:
    """Render one record as a BibTeX entry that parses back to the same fields."""
    if entry_type is None:
        entry_type = "inproceedings" if record.venue and not record.volume else "article"
    venue_key = "booktitle" if entry_type == "inproceedings" else "journal"
    lines = []
    if record.title:
        lines.append(("title", _bib_value(record.title)))
    if record.authors:
        lines.append(("author", "{" + " and ".join(_bib_author(a) for a in record.authors) + "}"))
    if record.venue:
        lines.append((venue_key, _bib_value(record.venue)))
    if record.year is not None:
        lines.append(("year", "{" + str(record.year) + "}"))
    for name, key in (("volume", "volume"), ("pages", "pages"), ("publisher", "publisher"), ("location", "address")):
        value = getattr(record, name)
        if value:
            lines.append((key, _bib_value(value)))
    if record.doi:
        lines.append(("doi", _bib_value(record.doi, raw=True)))
    if record.arxiv_id:
        lines.append(("eprint", _bib_value(record.arxiv_id, raw=True)))
        lines.append(("archiveprefix", "{arXiv}"))
    if record.url:
        lines.append(("url", _bib_value(record.url, raw=True)))
    for name, value in (extra or {}).items():
        lines.append((name, _bib_value(value)))
    body = ",\n".join(f"  {k} = {v}" for k, v in lines)
    key = record.source_key or "entry"
    return f"@{entry_type}{{{key},\n{body}\n}}\n"


def records_to_bibtex(records: Iterable[CitationRecord]) -> str:
    return "\n".join(record_to_bibtex(r) for r in records)

