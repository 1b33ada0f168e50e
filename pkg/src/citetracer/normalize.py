"""Per-field normalizers and the alias/nickname tables they rely on."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

from .model import FIELDS, is_et_al

_WS = re.compile(r"\s+")
_DASHES = "‐‑‒–—―−﹘﹣－"


def base(value: str) -> str:
    """NFKC, case-fold and collapse whitespace; every field starts here."""
    value = unicodedata.normalize("NFKC", value).casefold()
    return _WS.sub(" ", value).strip()


def strip_punct(value: str) -> str:
    out = []
    for ch in value:
        cat = unicodedata.category(ch)
        out.append(" " if cat[0] in "PS" else ch)
    return _WS.sub(" ", "".join(out)).strip()


def strip_diacritics(value: str) -> str:
    decomposed = unicodedata.normalize("NFKD", value)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    # letters that do not decompose
    return stripped.translate(str.maketrans({"ø": "o", "Ø": "O", "ł": "l", "Ł": "L", "ß": "ss", "đ": "d", "ı": "i", "æ": "ae", "œ": "oe"}))


# ---------------------------------------------------------------------------
# tables


def read_pairs(lines: Iterable[str], source: str = "<table>") -> list[tuple[str, str]]:
    """Parse ``alias<TAB>canonical`` lines; '#' starts a comment line."""
    pairs = []
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise ValueError(f"{source}:{lineno}: expected 'alias<TAB>canonical'")
        pairs.append((parts[0].strip(), parts[1].strip()))
    return pairs


def _read_resource(name: str) -> list[tuple[str, str]]:
    text = resources.files("citetracer.data").joinpath(name).read_text("utf-8")
    return read_pairs(text.splitlines(), name)


@dataclass
class Tables:
    """Alias tables keyed by normalized text.

    Canonical entries always map to themselves, so a normalized value is a
    fixed point of the lookup.
    """

    venues: dict[str, str] = field(default_factory=dict)
    publishers: dict[str, str] = field(default_factory=dict)
    nicknames: dict[str, set[str]] = field(default_factory=dict)

    @classmethod
    def load(
        cls,
        venue_files: Iterable[str | Path] = (),
        publisher_files: Iterable[str | Path] = (),
        nickname_files: Iterable[str | Path] = (),
        builtin: bool = True,
    ) -> "Tables":
        tables = cls()
        venue_pairs = _read_resource("venues.tsv") if builtin else []
        publisher_pairs = _read_resource("publishers.tsv") if builtin else []
        nickname_pairs = _read_resource("nicknames.tsv") if builtin else []
        for path in venue_files:
            venue_pairs += read_pairs(Path(path).read_text("utf-8").splitlines(), str(path))
        for path in publisher_files:
            publisher_pairs += read_pairs(Path(path).read_text("utf-8").splitlines(), str(path))
        for path in nickname_files:
            nickname_pairs += read_pairs(Path(path).read_text("utf-8").splitlines(), str(path))
        tables.venues = _alias_map(venue_pairs, _venue_key)
        tables.publishers = _alias_map(publisher_pairs, _publisher_key)
        for nick, formal in nickname_pairs:
            a, b = _name_token(nick), _name_token(formal)
            tables.nicknames.setdefault(a, set()).add(b)
            tables.nicknames.setdefault(b, set()).add(a)
        return tables

    def nickname_pair(self, a: str, b: str) -> bool:
        a, b = _name_token(a), _name_token(b)
        return a != b and b in self.nicknames.get(a, ())


def _alias_map(pairs: list[tuple[str, str]], keyfn) -> dict[str, str]:
    out: dict[str, str] = {}
    for _, canonical in pairs:
        key = keyfn(canonical)
        out[key] = key
    for alias, canonical in pairs:
        out.setdefault(keyfn(alias), keyfn(canonical))
    return out


@lru_cache(maxsize=1)
def default_tables() -> Tables:
    return Tables.load()


# ---------------------------------------------------------------------------
# field pipelines

_YEARISH = re.compile(r"\b(?:19|20)\d{2}\b|'\d{2}\b")
_ORDINAL = re.compile(r"\b\d+(?:st|nd|rd|th)\b")
_NUMBER = re.compile(r"\b\d+\b")
_ARXIV_REF = re.compile(r"\barxiv:\s*\S+|\babs/\S+")
_VENUE_LEAD = re.compile(r"^(?:in\s+)?(?:(?:proceedings|proc)\s+(?:of\s+)?(?:the\s+)?)+")
_ORDINAL_WORDS = re.compile(
    r"\b(?:first|second|third|fourth|fifth|sixth|seventh|eighth|ninth|tenth|eleventh|twelfth|"
    r"thirteenth|fourteenth|fifteenth|sixteenth|seventeenth|eighteenth|nineteenth|twentieth|"
    r"thirtieth|fortieth|fiftieth|sixtieth)\b"
)


def _venue_key(value: str) -> str:
    v = base(value)
    v = _ARXIV_REF.sub(" ", v)
    v = strip_punct(v.replace("'", " '"))
    v = _YEARISH.sub(" ", v)
    v = _ORDINAL.sub(" ", v)
    v = _ORDINAL_WORDS.sub(" ", v)
    v = _NUMBER.sub(" ", v)
    v = _WS.sub(" ", v).strip()
    v = _VENUE_LEAD.sub("", v).strip()
    return v


def _publisher_key(value: str) -> str:
    v = strip_punct(base(value))
    v = re.sub(r"^the\s+", "", v)
    return v


def normalize_venue(value: str, tables: Tables | None = None) -> str:
    tables = tables or default_tables()
    # "(CVPR)"-style parentheticals name the venue outright when known
    for inner in re.findall(r"\(([^()]+)\)", value):
        key = _venue_key(inner)
        if key in tables.venues:
            return tables.venues[key]
    key = _venue_key(re.sub(r"\([^()]*\)", " ", value)) if "(" in value else _venue_key(value)
    if key in tables.venues:
        return tables.venues[key]
    full = _venue_key(value)
    return tables.venues.get(full, full)


def normalize_publisher(value: str, tables: Tables | None = None) -> str:
    tables = tables or default_tables()
    key = _publisher_key(value)
    return tables.publishers.get(key, key)


_PAGES_PREFIX = re.compile(r"^(?:pages?|pp?\.?)\s*")


def normalize_pages(value: str) -> str:
    v = base(value)
    for ch in _DASHES:
        v = v.replace(ch, "-")
    v = _PAGES_PREFIX.sub("", v)
    v = re.sub(r"\s*-+\s*", "-", v).strip()
    m = re.fullmatch(r"(\d+)-(\d+)", v)
    if m:
        start, end = m.groups()
        if len(end) < len(start):
            expanded = start[: len(start) - len(end)] + end
            if int(expanded) >= int(start):
                v = f"{start}-{expanded}"
    return v


_DOI_PREFIX = re.compile(r"^(?:https?://(?:dx\.)?doi\.org/|doi:\s*|doi\.org/)+")


def normalize_doi(value: str) -> str:
    v = base(value).replace(" ", "")
    v = _DOI_PREFIX.sub("", v)
    return v


_ARXIV_PREFIX = re.compile(r"^(?:https?://(?:www\.)?arxiv\.org/(?:abs|pdf)/|arxiv:\s*)+")


def normalize_arxiv(value: str) -> str:
    v = base(value).replace(" ", "")
    v = _ARXIV_PREFIX.sub("", v)
    if v.endswith(".pdf"):
        v = v[:-4]
    return re.sub(r"v\d+$", "", v)


def normalize_year(value: str | int) -> str:
    return "".join(ch for ch in base(str(value)) if ch.isdigit())


def normalize_volume(value: str) -> str:
    v = strip_punct(base(value))
    return re.sub(r"^(?:vol|volume)\s+", "", v)


# names

PARTICLES = frozenset({"van", "von", "der", "den", "de", "del", "della", "di", "da", "du", "dos", "das", "le", "la", "bin", "ibn", "al", "el", "ter", "ten", "zu", "y"})
_DBLP_SUFFIX = re.compile(r"(?:\s+\d{4})+$")


def _name_token(token: str) -> str:
    return strip_diacritics(base(token))


def normalize_name(name: str) -> str:
    """Display-order, accent-free, punctuation-free form of one author name."""
    name = _DBLP_SUFFIX.sub("", unicodedata.normalize("NFKC", name).strip())
    parts = [p.strip() for p in name.split(",")]
    if len(parts) == 2 and parts[1]:
        name = f"{parts[1]} {parts[0]}"
    elif len(parts) >= 3:
        name = f"{parts[2]} {parts[0]} {parts[1]}"
    v = strip_diacritics(base(name)).replace("'", "").replace("’", "")
    v = strip_punct(v.replace(".", ". "))
    return _DBLP_SUFFIX.sub("", v)


def split_name(name: str) -> tuple[tuple[str, ...], str]:
    """(given-name tokens, surname) of a normalized or raw name."""
    tokens = normalize_name(name).split()
    if not tokens:
        return (), ""
    # "Y." is an initial, never the particle "y"
    dotted = {m.casefold() for m in re.findall(r"(?<![^\W\d_])(\w)\.", name)}
    i = len(tokens) - 1
    while i > 0 and tokens[i - 1] in PARTICLES and tokens[i - 1] not in dotted:
        i -= 1
    if i == 0 and len(tokens) > 1:
        i = len(tokens) - 1
    return tuple(tokens[:i]), " ".join(tokens[i:])


def surname(name: str) -> str:
    return split_name(name)[1]


def normalize_authors(names: Iterable[str]) -> tuple[str, ...]:
    return tuple(normalize_name(n) for n in names if not is_et_al(n))


def normalize_title(value: str) -> str:
    return strip_punct(base(value))


def normalize_text(value: str) -> str:
    return strip_punct(base(value))


def normalize(field_name: str, value, tables: Tables | None = None) -> str:
    """Normalize one field value; ``authors`` takes a single name."""
    if field_name not in FIELDS:
        raise KeyError(f"unknown field {field_name!r}")
    if field_name == "year":
        return normalize_year(value)
    if not isinstance(value, str):
        raise TypeError(f"{field_name} value must be text")
    if field_name == "title":
        return normalize_title(value)
    if field_name == "authors":
        return normalize_name(value)
    if field_name == "venue":
        return normalize_venue(value, tables)
    if field_name == "publisher":
        return normalize_publisher(value, tables)
    if field_name == "location":
        return normalize_text(value)
    if field_name == "pages":
        return normalize_pages(value)
    if field_name == "doi":
        return normalize_doi(value)
    if field_name == "arxiv_id":
        return normalize_arxiv(value)
    if field_name == "volume":
        return normalize_volume(value)
    return base(value)  # url


__all__ = [
    "PARTICLES",
    "Tables",
    "base",
    "default_tables",
    "normalize",
    "normalize_arxiv",
    "normalize_authors",
    "normalize_doi",
    "normalize_name",
    "normalize_pages",
    "normalize_publisher",
    "normalize_title",
    "normalize_venue",
    "normalize_year",
    "read_pairs",
    "split_name",
    "strip_diacritics",
    "strip_punct",
    "surname",
]
