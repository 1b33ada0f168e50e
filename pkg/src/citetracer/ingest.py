"""Turn BibTeX files and raw reference strings into citation records."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

from .bibtex import BibtexError, parse_bibtex_text
from .channel import BackendContractError, ChannelError, TextChannel, extract_json
from .model import FIELDS, CitationRecord
from .prompts import load_prompt

log = logging.getLogger(__name__)

FORMATS = ("bibtex", "ref_strings")


@dataclass
class BibSource:
    path: Path | None = None
    text: str | None = None
    format: str = "bibtex"

    def __post_init__(self) -> None:
        if self.format not in FORMATS:
            raise ValueError(f"unknown source format {self.format!r}")
        if (self.path is None) == (self.text is None):
            raise ValueError("give exactly one of path or text")
        if self.path is not None:
            self.path = Path(self.path)

    def read(self) -> str:
        if self.text is not None:
            return self.text
        assert self.path is not None
        return self.path.read_text(encoding="utf-8")

    @property
    def name(self) -> str:
        return str(self.path) if self.path else "<inline>"


@dataclass
class IngestError:
    message: str
    offset: int | None = None
    key: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"message": self.message, "offset": self.offset, "key": self.key}


@dataclass
class IngestResult:
    records: list[CitationRecord]
    errors: list[IngestError] = field(default_factory=list)


def parse_bibtex(src: BibSource) -> IngestResult:
    """One record per BibTeX entry; malformed entries become errors."""
    if src.format != "bibtex":
        raise ValueError(f"parse_bibtex needs a bibtex source, got {src.format}")
    records, errors = parse_bibtex_text(src.read())
    return IngestResult(records, [IngestError(e.message, e.offset, e.key) for e in errors])


# ---------------------------------------------------------------------------
# parser backends


class ParserBackend(Protocol):
    name: str
    concurrent_safe: bool

    def parse(self, raw: str) -> Mapping[str, Any]: ...


def record_from_schema(data: Any, source_key: str | None = None) -> CitationRecord:
    """Validate a parser-backend reply against the exact-key JSON schema."""
    if not isinstance(data, Mapping):
        raise BackendContractError(f"parser output must be a JSON object, got {type(data).__name__}")
    keys = set(data)
    if keys != set(FIELDS):
        extra = sorted(keys - set(FIELDS))
        missing = sorted(set(FIELDS) - keys)
        raise BackendContractError(f"parser keys differ from schema: extra={extra} missing={missing}")
    authors = data["authors"]
    if not isinstance(authors, list) or not all(isinstance(a, str) for a in authors):
        raise BackendContractError("authors must be an array of strings")
    year = data["year"]
    if year is not None and (isinstance(year, bool) or not isinstance(year, int)):
        raise BackendContractError("year must be an integer or null")
    for name in FIELDS:
        if name not in ("authors", "year") and not isinstance(data[name], str):
            raise BackendContractError(f"{name} must be a string")
    return CitationRecord(**{name: data[name] for name in FIELDS}, source_key=source_key)


class LLMParserBackend:
    """Parser reached over a text channel using the shipped parser prompt."""

    name = "llm"

    def __init__(self, channel: TextChannel):
        self.channel = channel
        self.concurrent_safe = getattr(channel, "concurrent_safe", False)
        self.prompt = load_prompt("parser")

    def parse(self, raw: str) -> Mapping[str, Any]:
        reply = self.channel.complete(self.prompt.render(raw_text=raw), system=self.prompt.system)
        return extract_json(reply)


# ---------------------------------------------------------------------------
# rule-based backend

_NUMBERING = re.compile(r"^\s*(?:\[\s*\d+\s*\]|\d{1,4}\.(?=\s))\s*")
_DOI = re.compile(r"(?:https?://(?:dx\.)?doi\.org/|\bdoi:\s*)?\b(10\.\d{4,9}/[^\s,;\"<>]+)", re.I)
_ARXIV = re.compile(
    r"(?:\barXiv:\s*|https?://arxiv\.org/(?:abs|pdf)/)"
    r"(\d{4}\.\d{4,5}(?:v\d+)?|[a-z\-]+(?:\.[A-Z]{2})?/\d{7}(?:v\d+)?)",
    re.I,
)
_URL = re.compile(r"(?:\bURL:?\s*|\bAvailable(?: online)?(?: at)?:?\s*)?<?(https?://[^\s>]+)>?", re.I)
_YEAR = re.compile(r"\b((?:19|20)\d{2})[a-z]?\b")
_RANGE = r"\d+\s*(?:-{1,2}|–|—|‐)\s*\d+"
_PAGES = re.compile(rf"^(?:pp?\.|pages?)\s*({_RANGE}|\d+)$", re.I)
_BARE_RANGE = re.compile(rf"^({_RANGE})$")
_VOLUME = re.compile(r"^(?:vol\.|volume)\s*(\w+)$", re.I)
_VOL_ISSUE_PAGES = re.compile(rf"^(\d+)\s*(?:\((\w+)\))?\s*:\s*({_RANGE}|\d+)$")
_VOL_ISSUE = re.compile(r"^(\d+)\s*\((\w+)\)$")
_ISSUE = re.compile(r"^(?:no\.|number|issue)\s*\w+$", re.I)
_VENUE_TRAILING_VOL = re.compile(r"^(.*\D)\s+(\d+)\s*(?:\((\w+)\))?$")
_LEADING_IN = re.compile(r"^(?:in:?\s+|in\s*:\s*)", re.I)

_PUBLISHER_WORDS = re.compile(
    r"^(?:.*\b(?:Press|Publishing|Publishers|Publications|Verlag|Associates)\b.*"
    r"|Springer(?: Nature| International Publishing)?|Elsevier|Wiley|ACM|IEEE(?: Computer Society)?"
    r"|Association for (?:Computational Linguistics|Computing Machinery)|PMLR|OpenReview(?:\.net)?"
    r"|Curran Associates(?:, Inc\.?)?|Morgan Kaufmann|SIAM|Nature Publishing Group|Taylor & Francis"
    r"|AAAI|USENIX Association|JMLR\.org|MIT)$"
)

_PLACES = {
    "online", "virtual", "virtual event",
    "usa", "u.s.a.", "united states", "canada", "mexico", "brazil", "argentina", "chile", "uk",
    "united kingdom", "england", "scotland", "ireland", "france", "germany", "italy", "spain",
    "portugal", "netherlands", "the netherlands", "belgium", "switzerland", "austria", "sweden",
    "norway", "denmark", "finland", "poland", "czech republic", "hungary", "greece", "turkey",
    "israel", "egypt", "south africa", "india", "china", "prc", "japan", "korea", "south korea",
    "republic of korea", "singapore", "taiwan", "hong kong", "thailand", "vietnam", "malaysia",
    "indonesia", "philippines", "australia", "new zealand", "qatar", "uae", "united arab emirates",
    "saudi arabia", "russia", "ukraine", "romania", "croatia", "slovenia", "estonia", "iceland",
    "al", "ak", "az", "ar", "ca", "co", "ct", "de", "fl", "ga", "hi", "id", "il", "in", "ia", "ks",
    "ky", "la", "me", "md", "ma", "mi", "mn", "ms", "mo", "mt", "ne", "nv", "nh", "nj", "nm", "ny",
    "nc", "nd", "oh", "ok", "or", "pa", "ri", "sc", "sd", "tn", "tx", "ut", "vt", "va", "wa", "wv",
    "wi", "wy", "california", "louisiana", "minnesota", "washington", "massachusetts", "nevada",
    "new york", "texas", "hawaii", "florida", "illinois", "colorado", "oregon", "utah", "georgia",
    "arizona", "pennsylvania", "maryland", "virginia", "michigan", "ohio", "quebec", "ontario",
    "british columbia", "bc", "qc", "on",
}


def _is_place(segment: str) -> bool:
    return segment.strip().strip(".").casefold() in _PLACES


def _is_initials(token: str) -> bool:
    return bool(re.fullmatch(r"(?:[A-Z]\.?\s*-?\s*){1,4}", token.strip()))


def _split_sentences(text: str, limit: int) -> list[str]:
    """Split on sentence ends, never after a single-letter initial."""
    parts = re.split(r"(?<=[.?!])(?<!\b[A-Z]\.)\s+(?=\S)", text, maxsplit=limit)
    return [p for p in parts if p]


def split_author_list(text: str) -> list[str]:
    """Split an author string into names, keeping a trailing et-al marker."""
    text = text.strip().rstrip(",;:").strip()
    marker = None
    m = re.search(r"(?:,?\s*(?:and\s+others|et\.?\s*al\.?|others))\s*$", text, re.I)
    if m:
        marker = re.sub(r"^[,\s]+", "", m.group(0)).strip()
        if marker.casefold() in ("et al", "et. al.", "et.al.", "etal"):
            marker = "et al." if marker.endswith(".") else "et al"
        text = text[: m.start()].strip().rstrip(",")
    elif text.endswith(".") and not re.search(r"\b[A-Z]\.$", text):
        text = text[:-1]
    text = re.sub(r",?\s+(?:and|&)\s+", ", ", text)
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    names: list[str] = []
    # "Surname, I., Surname, I." pairs (LNCS/APA)
    if len(tokens) >= 2 and all(_is_initials(t) for t in tokens[1::2]) and not any(_is_initials(t) for t in tokens[0::2]):
        for surname, initials in zip(tokens[0::2], tokens[1::2]):
            names.append(f"{' '.join(initials.split())} {surname}")
        if len(tokens) % 2:
            names.append(tokens[-1])
    else:
        for tok in tokens:
            # "Afouras T" style: surname followed by bare initials
            m2 = re.fullmatch(r"(\S.*?)\s+((?:[A-Z]\.?){1,3})", tok)
            if m2 and not re.search(r"[a-z]", m2.group(2)) and " " not in m2.group(1) and "." not in m2.group(2):
                names.append(f"{m2.group(2)} {m2.group(1)}")
            else:
                names.append(tok)
    if marker:
        names.append(marker)
    return names


_PARTICLES = {"and", "et", "al", "al.", "van", "von", "der", "den", "de", "del", "la", "le", "da", "di", "du", "dos", "bin", "&"}


def _looks_like_authors(text: str) -> bool:
    """Crude test: every word is capitalised, an initial, or a name particle."""
    text = text.strip().rstrip(".")
    if re.search(r"\bet\.?\s*al\b|\band others\b", text):
        return True
    words = [w.strip(",;") for w in text.split()]
    words = [w for w in words if w]
    if not words:
        return False
    for w in words:
        if w.casefold() in _PARTICLES:
            continue
        if not (w[0].isupper() or _is_initials(w)):
            return False
    return True


_SEG_SPLIT = re.compile(
    r"(,\s+|;\s+|(?<!\bpp)(?<!\bp)(?<!\bvol)(?<!\bVol)(?<!\bno)(?<!\bNo)(?<!\b[A-Z])\.\s+(?=[A-Z0-9(]|pp?\.|pages))"
)


def _segments(rest: str) -> tuple[list[str], list[str]]:
    """Split the tail of a reference; also return the separator before each piece."""
    rest = rest.strip().rstrip(".").strip()
    pieces = _SEG_SPLIT.split(rest)
    out, seps = [], []
    sep = ""
    for k, piece in enumerate(pieces):
        if k % 2:
            sep = piece.rstrip() + " "
            continue
        piece = piece.strip().strip(",").strip()
        # "(2017)" trailing a segment
        m = re.fullmatch(r"(.*?)\s*\(((?:19|20)\d{2})[a-z]?\)", piece)
        if m and m.group(1):
            out.extend([m.group(1).strip(), m.group(2)])
            seps.extend([sep, " "])
        elif piece:
            out.append(piece)
            seps.append(sep)
    return out, seps


def _parse_rest(rest: str, fields: dict[str, Any]) -> None:
    rest = _LEADING_IN.sub("", rest.strip())
    segs, seps = _segments(rest)
    kinds: list[str | None] = [None] * len(segs)
    for i, seg in enumerate(segs):
        s = seg.strip("()").strip()
        if re.fullmatch(r"(?:19|20)\d{2}[a-z]?", s) or re.fullmatch(r"[A-Z][a-z]{2,8}\.?\s+(?:19|20)\d{2}", s):
            if fields["year"] is None:
                fields["year"] = int(_YEAR.search(s).group(1))
            kinds[i] = "year"
        elif (m := _PAGES.match(s)) or (m := _BARE_RANGE.match(s)):
            fields["pages"] = fields["pages"] or m.group(1)
            kinds[i] = "pages"
        elif m := _VOL_ISSUE_PAGES.match(s):
            fields["volume"] = fields["volume"] or m.group(1)
            fields["pages"] = fields["pages"] or m.group(3)
            kinds[i] = "volume"
        elif (m := _VOLUME.match(s)) or (m := _VOL_ISSUE.match(s)):
            fields["volume"] = fields["volume"] or m.group(1)
            kinds[i] = "volume"
        elif _ISSUE.match(s):
            kinds[i] = "issue"
    # venue: the first run of unclassified segments
    venue_parts: list[str] = []
    venue_seps: list[str] = []
    i = 0
    while i < len(segs) and kinds[i] is not None:
        i += 1
    while i < len(segs) and kinds[i] is None:
        if venue_parts and (_is_place(segs[i]) or _PUBLISHER_WORDS.match(segs[i])):
            break
        if venue_parts and i + 1 < len(segs) and _is_place(segs[i + 1]):
            break
        venue_parts.append(segs[i])
        venue_seps.append(seps[i])
        kinds[i] = "venue"
        i += 1
    if venue_parts:
        venue = venue_parts[0] + "".join(sp + part for sp, part in zip(venue_seps[1:], venue_parts[1:]))
        m = _VENUE_TRAILING_VOL.match(venue)
        if m and not fields["volume"] and not re.fullmatch(r"(?:19|20)\d{2}", m.group(2)) and (m.group(3) or kinds[-1] != "venue"):
            venue, fields["volume"] = m.group(1).strip().rstrip(","), m.group(2)
        fields["venue"] = venue
    # publisher and location among the leftovers
    for j, seg in enumerate(segs):
        if kinds[j] is not None:
            continue
        if _PUBLISHER_WORDS.match(seg) and not fields["publisher"]:
            fields["publisher"] = seg
            kinds[j] = "publisher"
        elif _is_place(seg) and not fields["location"]:
            start = j
            if j > 0 and kinds[j - 1] is None and not _PUBLISHER_WORDS.match(segs[j - 1]):
                start = j - 1
            end = j + 1
            while end < len(segs) and kinds[end] is None and _is_place(segs[end]):
                end += 1
            fields["location"] = ", ".join(segs[start:end])
            for k in range(start, end):
                kinds[k] = "location"


class RuleBasedParser:
    """Regex and punctuation heuristics for common bibliography styles.

    Handles plain/natbib (``Authors. Title. Venue, year.``), IEEE (quoted
    titles), ACM (``Authors. Year. Title. Venue.``), LNCS
    (``Surname, I.: Title. In: Venue. pp. (year)``) and APA-like
    ``Authors (year). Title.`` layouts.
    """

    name = "rule"
    concurrent_safe = True

    def parse(self, raw: str) -> dict[str, Any]:
        fields: dict[str, Any] = {name: "" for name in FIELDS}
        fields["authors"] = []
        fields["year"] = None
        text = " ".join(raw.split())
        text = _NUMBERING.sub("", text)

        m = _ARXIV.search(text)
        if m:
            fields["arxiv_id"] = m.group(1)
            text = (text[: m.start()] + text[m.end() :]).strip()
        m = _DOI.search(text)
        if m:
            fields["doi"] = m.group(1).rstrip(".")
            text = (text[: m.start()] + text[m.end() :]).strip()
        m = _URL.search(text)
        if m:
            fields["url"] = m.group(1).rstrip(".,")
            text = (text[: m.start()] + text[m.end() :]).strip()
        text = re.sub(r"\s+([.,;])", r"\1", text)
        text = re.sub(r"\.(?:\s*\.)+", ".", text)
        text = re.sub(r",(?:\s*,)+", ",", text)
        text = re.sub(r"[,;]\s*\.", ".", text).strip()

        authors = title = rest = ""
        quoted = re.search(r"[“\"](.+?)[,.]?[”\"]", text)
        lncs = re.match(r"^(.+?[A-Z]\.(?:\s*,?\s*et al\.?)?)\s*:\s+(.+?[.?!])\s+(.*)$", text)
        acm = re.match(r"^(.+?)\.\s+((?:19|20)\d{2})[a-z]?\.\s+(.+?[.?!])\s+(.*)$", text)
        apa = re.match(r"^(.+?)\s*\(((?:19|20)\d{2})[a-z]?\)\.?\s+(.+?[.?!])\s+(.*)$", text)
        if quoted:
            authors = text[: quoted.start()].strip().rstrip(",")
            title = quoted.group(1)
            rest = text[quoted.end() :].lstrip(",. ")
        elif lncs and "," in lncs.group(1):
            authors, title, rest = lncs.group(1), lncs.group(2), lncs.group(3)
        elif acm and len(acm.group(1)) > 2:
            authors, title, rest = acm.group(1), acm.group(3), acm.group(4)
            fields["year"] = int(acm.group(2))
        elif apa:
            authors, title, rest = apa.group(1), apa.group(3), apa.group(4)
            fields["year"] = int(apa.group(2))
        else:
            parts = _split_sentences(text, 2)
            if len(parts) > 1 and not _looks_like_authors(parts[0]):
                parts = [""] + _split_sentences(text, 1)
            if len(parts) == 1:
                title = parts[0]
            elif len(parts) == 2:
                authors, title = parts
            else:
                authors, title, rest = parts
        title = title.strip().rstrip(".,").strip()
        if authors:
            fields["authors"] = split_author_list(authors)
        fields["title"] = title
        if rest:
            _parse_rest(rest, fields)
        if fields["year"] is None:
            years = _YEAR.findall(rest or "")
            if years:
                fields["year"] = int(years[-1])
        return fields


def parse_ref_string(
    raw: str,
    backend: ParserBackend | None = None,
    source_key: str | None = None,
    fallback: bool = True,
) -> CitationRecord:
    """Parse one reference string through ``backend`` (rule-based by default).

    A backend that cannot be reached falls back to the rule-based parser when
    ``fallback`` is set; a reply that breaks the schema always raises.
    """
    if not raw or not raw.strip():
        raise ValueError("reference string must be non-empty")
    backend = backend or RuleBasedParser()
    try:
        data = backend.parse(raw)
    except ChannelError:
        if not fallback or isinstance(backend, RuleBasedParser):
            raise
        log.warning("parser backend %s unreachable; using rule-based parser", backend.name)
        data = RuleBasedParser().parse(raw)
    return record_from_schema(data, source_key)


def join_fragments(fragments: Sequence[str]) -> str:
    """Join continuation fragments, repairing hyphenation at the seams."""
    out = " ".join(fragments[0].split())
    for frag in fragments[1:]:
        frag = " ".join(frag.split())
        if re.search(r"[A-Za-z]-$", out) and re.match(r"[a-z]", frag):
            out = out[:-1] + frag
        else:
            out = f"{out} {frag}"
    return out


def merge_continuation(
    fragments: Sequence[str],
    backend: ParserBackend | None = None,
    source_key: str | None = None,
) -> CitationRecord:
    if len(fragments) < 2:
        raise ValueError("merge_continuation needs at least two fragments")
    return parse_ref_string(join_fragments(fragments), backend, source_key)


def read_ref_groups(text: str) -> list[list[str]]:
    """Group a ref_strings file into references.

    Blocks are separated by blank lines and each block is one reference whose
    lines are continuation fragments. A file with no blank line at all holds
    one reference per line.
    """
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if all(line.strip() for line in lines):
        return [[line] for line in lines if line.strip()]
    groups: list[list[str]] = []
    current: list[str] = []
    for line in lines:
        if line.strip():
            current.append(line)
        elif current:
            groups.append(current)
            current = []
    if current:
        groups.append(current)
    return groups


def parse_ref_strings(src: BibSource, backend: ParserBackend | None = None) -> IngestResult:
    records, errors = [], []
    for i, group in enumerate(read_ref_groups(src.read()), start=1):
        key = f"ref{i}"
        try:
            if len(group) == 1:
                records.append(parse_ref_string(group[0], backend, key))
            else:
                records.append(merge_continuation(group, backend, key))
        except (BackendContractError, ChannelError, ValueError) as exc:
            errors.append(IngestError(str(exc), None, key))
    return IngestResult(records, errors)


def load_source(src: BibSource, backend: ParserBackend | None = None) -> IngestResult:
    if src.format == "bibtex":
        return parse_bibtex(src)
    return parse_ref_strings(src, backend)


def guess_format(path: Path) -> str:
    return "bibtex" if Path(path).suffix.lower() in (".bib", ".bibtex") else "ref_strings"


__all__ = [
    "BibSource",
    "BibtexError",
    "IngestError",
    "IngestResult",
    "LLMParserBackend",
    "ParserBackend",
    "RuleBasedParser",
    "guess_format",
    "join_fragments",
    "load_source",
    "merge_continuation",
    "parse_bibtex",
    "parse_ref_string",
    "parse_ref_strings",
    "read_ref_groups",
    "record_from_schema",
    "split_author_list",
]

