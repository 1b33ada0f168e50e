"""Clients for the public bibliographic APIs and identifier resolvers.

Every connector builds its request(s), parses the reply into candidate
records, and can render records back into the same wire format so that
fixtures can be planted without a network.
"""

from __future__ import annotations

import html
import json
import re
import xml.etree.ElementTree as ET
from html.parser import HTMLParser
from typing import Any, Iterable, Sequence
from urllib.parse import urlsplit

from ..bibtex import parse_bibtex_text, record_to_bibtex
from ..model import MAX_CANDIDATES_PER_CONNECTOR, CandidateRecord, CitationRecord
from ..normalize import PARTICLES
from .transport import Request, Response, Transport, TransportError

Fixture = tuple[Request, int, str]


def split_display_name(name: str) -> tuple[str, str]:
    """Split 'Laurens van der Maaten' into ('Laurens', 'van der Maaten')."""
    tokens = name.split()
    if len(tokens) < 2:
        return "", name
    i = len(tokens) - 1
    while i > 1 and tokens[i - 1].lower() in PARTICLES:
        i -= 1
    return " ".join(tokens[:i]), " ".join(tokens[i:])


def _first(value: Any) -> Any:
    if isinstance(value, list):
        return value[0] if value else None
    return value


def _year(value: Any) -> int | None:
    if value is None:
        return None
    m = re.search(r"\d{4}", str(value))
    return int(m.group(0)) if m else None


def _candidate(source: str, response: Response | None, **fields: Any) -> CandidateRecord:
    return CandidateRecord(
        **fields,
        source=source,
        retrieved_at=response.retrieved_at if response else None,
        raw_payload_digest=response.digest if response else None,
    )


def _join_pages(first: Any, last: Any) -> str | None:
    if first and last:
        return f"{first}-{last}"
    return str(first) if first else None


def _split_pages(pages: str | None) -> tuple[str | None, str | None]:
    if not pages:
        return None, None
    parts = re.split(r"\s*(?:-{1,2}|–|—)\s*", pages, maxsplit=1)
    return (parts[0], parts[1]) if len(parts) == 2 else (parts[0], None)


class Connector:
    """Base class. Subclasses fill in requests, parse and render."""

    id = ""
    supports_author = False
    by_title = True
    limit = MAX_CANDIDATES_PER_CONNECTOR

    def search_request(self, title: str, author: str | None = None) -> Request | None:
        raise NotImplementedError

    def parse(self, body: str) -> list[dict[str, Any]]:
        raise NotImplementedError

    def render(self, records: Sequence[CitationRecord]) -> str:
        raise NotImplementedError

    def search(self, transport: Transport, title: str, author: str | None = None, record: CitationRecord | None = None) -> list[CandidateRecord]:
        request = self.search_request(title, author if self.supports_author else None)
        if request is None:
            return []
        response = transport.fetch(request)
        if response.status == 404:
            return []
        if not response.ok:
            raise TransportError(f"{self.id}: HTTP {response.status}")
        rows = self.parse(response.body)[: self.limit]
        return [_candidate(self.id, response, **row) for row in rows]

    def fixtures(self, title: str, author: str | None, records: Sequence[CitationRecord], record: CitationRecord | None = None) -> list[Fixture]:
        request = self.search_request(title, author if self.supports_author else None)
        if request is None:
            return []
        return [(request, 200, self.render(list(records)[: self.limit]))]


class CrossrefConnector(Connector):
    id = "crossref"
    supports_author = True
    url = "https://api.crossref.org/works"

    def search_request(self, title, author=None):
        params = {"query.bibliographic": title, "rows": self.limit}
        if author:
            params["query.author"] = author
        return Request.get(self.url, params, connector=self.id)

    @staticmethod
    def item_fields(item: dict) -> dict[str, Any]:
        authors = []
        for a in item.get("author") or []:
            name = " ".join(p for p in (a.get("given"), a.get("family")) if p) or a.get("name")
            if name:
                authors.append(name)
        issued = item.get("issued") or item.get("published-print") or item.get("published") or {}
        parts = (issued.get("date-parts") or [[None]])[0]
        event = item.get("event") or {}
        return {
            "title": _first(item.get("title")),
            "authors": authors,
            "venue": _first(item.get("container-title")),
            "year": _year(parts[0] if parts else None),
            "volume": item.get("volume"),
            "pages": item.get("page"),
            "publisher": item.get("publisher"),
            "location": event.get("location") or item.get("publisher-location"),
            "doi": item.get("DOI"),
        }

    def parse(self, body):
        data = json.loads(body)
        return [self.item_fields(it) for it in (data.get("message") or {}).get("items") or []]

    @staticmethod
    def item_for(r: CitationRecord) -> dict:
        item: dict[str, Any] = {"title": [r.title] if r.title else []}
        item["author"] = [dict(zip(("given", "family"), split_display_name(a))) for a in r.named_authors]
        if r.venue:
            item["container-title"] = [r.venue]
        if r.year:
            item["issued"] = {"date-parts": [[r.year]]}
        for key, value in (("volume", r.volume), ("page", r.pages), ("publisher", r.publisher), ("DOI", r.doi)):
            if value:
                item[key] = value
        if r.location:
            item["event"] = {"location": r.location}
        if r.doi:
            item["URL"] = f"https://doi.org/{r.doi}"
        return item

    def render(self, records):
        items = [self.item_for(r) for r in records]
        return json.dumps({"status": "ok", "message": {"items": items, "total-results": len(items)}}, ensure_ascii=False)


class DblpConnector(Connector):
    id = "dblp"
    url = "https://dblp.org/search/publ/api"

    def search_request(self, title, author=None):
        return Request.get(self.url, {"q": title, "format": "json", "h": self.limit}, connector=self.id)

    def parse(self, body):
        data = json.loads(body)
        hits = (((data.get("result") or {}).get("hits") or {}).get("hit")) or []
        out = []
        for hit in hits:
            info = hit.get("info") or {}
            authors = (info.get("authors") or {}).get("author") or []
            if isinstance(authors, dict):
                authors = [authors]
            title = info.get("title")
            if isinstance(title, str) and title.endswith("."):
                title = title[:-1]
            venue = info.get("venue")
            if isinstance(venue, list):
                venue = venue[0] if venue else None
            out.append(
                {
                    "title": title,
                    "authors": [a.get("text") if isinstance(a, dict) else a for a in authors],
                    "venue": venue,
                    "year": _year(info.get("year")),
                    "volume": info.get("volume"),
                    "pages": info.get("pages"),
                    "doi": info.get("doi"),
                }
            )
        return out

    def render(self, records):
        hits = []
        for i, r in enumerate(records):
            info: dict[str, Any] = {"title": (r.title or "") + ".", "type": "Conference and Workshop Papers"}
            names = r.named_authors
            if names:
                info["authors"] = {"author": [{"@pid": f"00/{i}{j}", "text": a} for j, a in enumerate(names)]}
            for key, value in (("venue", r.venue), ("volume", r.volume), ("pages", r.pages), ("doi", r.doi)):
                if value:
                    info[key] = value
            if r.year:
                info["year"] = str(r.year)
            hits.append({"@score": "1", "@id": str(i), "info": info})
        result = {"result": {"hits": {"@total": str(len(hits)), "@sent": str(len(hits)), "hit": hits}}}
        return json.dumps(result, ensure_ascii=False)


ATOM = "{http://www.w3.org/2005/Atom}"
ARXIV_NS = "{http://arxiv.org/schemas/atom}"


class ArxivConnector(Connector):
    id = "arxiv"
    url = "http://export.arxiv.org/api/query"

    def search_request(self, title, author=None):
        clean = re.sub(r'["]', " ", title)
        return Request.get(self.url, {"search_query": f'ti:"{clean}"', "max_results": self.limit}, connector=self.id)

    def id_request(self, arxiv_id: str) -> Request:
        return Request.get(self.url, {"id_list": arxiv_id, "max_results": 1}, connector=self.id)

    def parse(self, body):
        try:
            root = ET.fromstring(body)
        except ET.ParseError:
            return []
        out = []
        for entry in root.findall(f"{ATOM}entry"):
            ident = (entry.findtext(f"{ATOM}id") or "").strip()
            if "api/errors" in ident:
                continue
            title = " ".join((entry.findtext(f"{ATOM}title") or "").split())
            m = re.search(r"arxiv\.org/abs/(.+)$", ident)
            out.append(
                {
                    "title": title or None,
                    "authors": [" ".join((a.findtext(f"{ATOM}name") or "").split()) for a in entry.findall(f"{ATOM}author")],
                    "year": _year(entry.findtext(f"{ATOM}published")),
                    "arxiv_id": m.group(1) if m else None,
                    "doi": entry.findtext(f"{ARXIV_NS}doi"),
                }
            )
        return out

    def render(self, records):
        entries = []
        for r in records:
            authors = "".join(f"<author><name>{html.escape(a)}</name></author>" for a in r.named_authors)
            doi = f"<arxiv:doi>{html.escape(r.doi)}</arxiv:doi>" if r.doi else ""
            published = f"<published>{r.year}-01-01T00:00:00Z</published>" if r.year else ""
            entries.append(
                f"<entry><id>http://arxiv.org/abs/{html.escape(r.arxiv_id or '')}</id>"
                f"<title>{html.escape(r.title or '')}</title>{published}{authors}{doi}</entry>"
            )
        return (
            '<?xml version="1.0" encoding="UTF-8"?>'
            '<feed xmlns="http://www.w3.org/2005/Atom" xmlns:arxiv="http://arxiv.org/schemas/atom">'
            f"<title>arXiv Query</title>{''.join(entries)}</feed>"
        )

    def lookup(self, transport: Transport, arxiv_id: str) -> tuple[CandidateRecord | None, Response]:
        response = transport.fetch(self.id_request(arxiv_id))
        if not response.ok:
            return None, response
        rows = self.parse(response.body)
        if not rows:
            return None, response
        return _candidate(self.id, response, **rows[0]), response


class SemanticScholarConnector(Connector):
    id = "semanticscholar"
    url = "https://api.semanticscholar.org/graph/v1/paper/search"
    FIELDS = "title,authors,venue,year,externalIds,journal"

    def __init__(self, api_key: str | None = None):
        self.api_key = api_key

    def search_request(self, title, author=None):
        headers = {"x_api_key": self.api_key} if self.api_key else {}
        return Request.get(self.url, {"query": title, "limit": self.limit, "fields": self.FIELDS}, connector=self.id, **headers)

    def parse(self, body):
        data = json.loads(body)
        out = []
        for paper in data.get("data") or []:
            journal = paper.get("journal") or {}
            ids = paper.get("externalIds") or {}
            pages = journal.get("pages")
            out.append(
                {
                    "title": paper.get("title"),
                    "authors": [a.get("name") for a in paper.get("authors") or [] if a.get("name")],
                    "venue": paper.get("venue") or journal.get("name"),
                    "year": paper.get("year"),
                    "volume": journal.get("volume"),
                    "pages": pages.strip() if isinstance(pages, str) else None,
                    "doi": ids.get("DOI"),
                    "arxiv_id": ids.get("ArXiv"),
                }
            )
        return out

    def render(self, records):
        data = []
        for i, r in enumerate(records):
            paper: dict[str, Any] = {
                "paperId": f"{i:040d}",
                "title": r.title,
                "authors": [{"authorId": str(j), "name": a} for j, a in enumerate(r.named_authors)],
                "venue": r.venue or "",
                "year": r.year,
                "externalIds": {k: v for k, v in (("DOI", r.doi), ("ArXiv", r.arxiv_id)) if v},
            }
            if r.volume or r.pages:
                paper["journal"] = {k: v for k, v in (("name", r.venue), ("volume", r.volume), ("pages", r.pages)) if v}
            data.append(paper)
        return json.dumps({"total": len(data), "offset": 0, "data": data}, ensure_ascii=False)


class OpenAlexConnector(Connector):
    id = "openalex"
    url = "https://api.openalex.org/works"

    def search_request(self, title, author=None):
        return Request.get(self.url, {"search": title, "per-page": self.limit}, connector=self.id)

    def parse(self, body):
        data = json.loads(body)
        out = []
        for work in data.get("results") or []:
            loc = work.get("primary_location") or {}
            source = loc.get("source") or {}
            biblio = work.get("biblio") or {}
            doi = work.get("doi")
            if doi:
                doi = re.sub(r"^https?://doi\.org/", "", doi)
            out.append(
                {
                    "title": work.get("display_name") or work.get("title"),
                    "authors": [
                        (a.get("author") or {}).get("display_name")
                        for a in work.get("authorships") or []
                        if (a.get("author") or {}).get("display_name")
                    ],
                    "venue": source.get("display_name"),
                    "year": work.get("publication_year"),
                    "volume": biblio.get("volume"),
                    "pages": _join_pages(biblio.get("first_page"), biblio.get("last_page")),
                    "publisher": source.get("host_organization_name"),
                    "doi": doi,
                }
            )
        return out

    def render(self, records):
        results = []
        for i, r in enumerate(records):
            first, last = _split_pages(r.pages)
            work: dict[str, Any] = {
                "id": f"https://openalex.org/W{i}",
                "display_name": r.title,
                "publication_year": r.year,
                "doi": f"https://doi.org/{r.doi}" if r.doi else None,
                "authorships": [{"author": {"display_name": a}} for a in r.named_authors],
                "biblio": {"volume": r.volume, "first_page": first, "last_page": last},
            }
            if r.venue or r.publisher:
                work["primary_location"] = {"source": {"display_name": r.venue, "host_organization_name": r.publisher}}
            results.append(work)
        return json.dumps({"meta": {"count": len(results)}, "results": results}, ensure_ascii=False)


class AclAnthologyConnector(Connector):
    """Lookup by anthology id only; the anthology has no title search API."""

    id = "aclanthology"
    by_title = False
    base = "https://aclanthology.org"

    @staticmethod
    def anthology_id(record: CitationRecord) -> str | None:
        if record.doi:
            m = re.match(r"(?:https?://doi\.org/)?10\.18653/v1/(.+)$", record.doi.strip(), re.I)
            if m:
                return m.group(1)
        if record.url:
            m = re.match(r"https?://(?:www\.)?aclanthology\.org/([^/]+?)(?:\.pdf|/)?$", record.url.strip())
            if m:
                return m.group(1)
        return None

    def id_request(self, anthology_id: str) -> Request:
        return Request.get(f"{self.base}/{anthology_id}.bib", connector=self.id)

    def search_request(self, title, author=None):
        return None

    def parse(self, body):
        records, _ = parse_bibtex_text(body)
        return [{k: v for k, v in r.fields_dict().items() if v not in ("", [], None)} for r in records]

    def render(self, records):
        return "\n".join(record_to_bibtex(r.with_fields(url=None, arxiv_id=None)) for r in records)

    def search(self, transport, title, author=None, record=None):
        ident = self.anthology_id(record) if record else None
        if not ident:
            return []
        response = transport.fetch(self.id_request(ident))
        if not response.ok:
            return []
        return [_candidate(self.id, response, **row) for row in self.parse(response.body)[: self.limit]]

    def fixtures(self, title, author, records, record=None):
        ident = self.anthology_id(record) if record else None
        if not ident:
            return []
        if not records:
            return [(self.id_request(ident), 404, "Not Found")]
        return [(self.id_request(ident), 200, self.render(list(records)[:1]))]


class EuropePmcConnector(Connector):
    id = "europepmc"
    url = "https://www.ebi.ac.uk/europepmc/webservices/rest/search"

    def search_request(self, title, author=None):
        clean = title.replace('"', " ")
        params = {"query": f'TITLE:"{clean}"', "format": "json", "pageSize": self.limit, "resultType": "core"}
        return Request.get(self.url, params, connector=self.id)

    def parse(self, body):
        data = json.loads(body)
        out = []
        for res in (data.get("resultList") or {}).get("result") or []:
            authors = []
            for a in (res.get("authorList") or {}).get("author") or []:
                if a.get("firstName") and a.get("lastName"):
                    authors.append(f"{a['firstName']} {a['lastName']}")
                elif a.get("fullName"):
                    authors.append(a["fullName"])
            info = res.get("journalInfo") or {}
            title = res.get("title")
            if isinstance(title, str) and title.endswith("."):
                title = title[:-1]
            out.append(
                {
                    "title": title,
                    "authors": authors,
                    "venue": ((info.get("journal") or {}).get("title")) or res.get("journalTitle"),
                    "year": _year(res.get("pubYear")),
                    "volume": info.get("volume") or res.get("journalVolume"),
                    "pages": res.get("pageInfo"),
                    "doi": res.get("doi"),
                }
            )
        return out

    def render(self, records):
        results = []
        for r in records:
            res: dict[str, Any] = {"title": (r.title or "") + ".", "pubYear": str(r.year) if r.year else None}
            res["authorList"] = {
                "author": [dict(zip(("firstName", "lastName"), split_display_name(a))) for a in r.named_authors]
            }
            res["journalInfo"] = {"volume": r.volume, "journal": {"title": r.venue}}
            if r.pages:
                res["pageInfo"] = r.pages
            if r.doi:
                res["doi"] = r.doi
            results.append(res)
        return json.dumps({"hitCount": len(results), "resultList": {"result": results}}, ensure_ascii=False)


class PubmedConnector(Connector):
    """Two-step e-utilities query: esearch for ids, esummary for records."""

    id = "pubmed"
    esearch = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/esearch.fcgi"
    esummary = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/esummary.fcgi"

    def search_request(self, title, author=None):
        clean = title.replace('"', " ")
        return Request.get(self.esearch, {"db": "pubmed", "term": f"{clean}[Title]", "retmode": "json", "retmax": self.limit}, connector=self.id)

    def summary_request(self, ids: Sequence[str]) -> Request:
        return Request.get(self.esummary, {"db": "pubmed", "id": ",".join(ids), "retmode": "json"}, connector=self.id)

    @staticmethod
    def display(name: str) -> str:
        # "van der Maaten L" -> "L. van der Maaten"
        m = re.fullmatch(r"(.+?)\s+([A-Z]{1,3})", name.strip())
        if not m:
            return name
        initials = " ".join(f"{ch}." for ch in m.group(2))
        return f"{initials} {m.group(1)}"

    @staticmethod
    def medline(name: str) -> str:
        given, family = split_display_name(name)
        initials = "".join(t[0].upper() for t in re.split(r"[\s.\-]+", given) if t)
        return f"{family} {initials}".strip()

    def parse(self, body):
        data = json.loads(body)
        result = data.get("result") or {}
        out = []
        for uid in result.get("uids") or []:
            doc = result.get(uid) or {}
            doi = next((a.get("value") for a in doc.get("articleids") or [] if a.get("idtype") == "doi"), None)
            title = doc.get("title")
            if isinstance(title, str) and title.endswith("."):
                title = title[:-1]
            out.append(
                {
                    "title": title,
                    "authors": [self.display(a.get("name", "")) for a in doc.get("authors") or [] if a.get("name")],
                    "venue": doc.get("fulljournalname") or doc.get("source"),
                    "year": _year(doc.get("pubdate")),
                    "volume": doc.get("volume") or None,
                    "pages": doc.get("pages") or None,
                    "doi": doi,
                }
            )
        return out

    def render(self, records):
        result: dict[str, Any] = {"uids": []}
        for i, r in enumerate(records):
            uid = str(30000000 + i)
            result["uids"].append(uid)
            doc: dict[str, Any] = {
                "uid": uid,
                "title": (r.title or "") + ".",
                "authors": [{"name": self.medline(a), "authtype": "Author"} for a in r.named_authors],
                "fulljournalname": r.venue or "",
                "pubdate": str(r.year) if r.year else "",
                "volume": r.volume or "",
                "pages": r.pages or "",
                "articleids": [{"idtype": "doi", "value": r.doi}] if r.doi else [],
            }
            result[uid] = doc
        return json.dumps({"result": result}, ensure_ascii=False)

    def search(self, transport, title, author=None, record=None):
        response = transport.fetch(self.search_request(title))
        if not response.ok:
            raise TransportError(f"{self.id}: HTTP {response.status}")
        ids = ((json.loads(response.body).get("esearchresult") or {}).get("idlist")) or []
        ids = ids[: self.limit]
        if not ids:
            return []
        summary = transport.fetch(self.summary_request(ids))
        if not summary.ok:
            raise TransportError(f"{self.id}: HTTP {summary.status}")
        return [_candidate(self.id, summary, **row) for row in self.parse(summary.body)[: self.limit]]

    def fixtures(self, title, author, records, record=None):
        records = list(records)[: self.limit]
        ids = [str(30000000 + i) for i in range(len(records))]
        out: list[Fixture] = [
            (self.search_request(title), 200, json.dumps({"esearchresult": {"count": str(len(ids)), "idlist": ids}}))
        ]
        if ids:
            out.append((self.summary_request(ids), 200, self.render(records)))
        return out


# ---------------------------------------------------------------------------
# identifier and URL resolution


class DoiResolver:
    """DOI content negotiation returning CSL JSON."""

    source = "doi"
    base = "https://doi.org/"
    accept = "application/vnd.citationstyles.csl+json"

    def request(self, doi: str) -> Request:
        doi = re.sub(r"^(?:https?://(?:dx\.)?doi\.org/|doi:\s*)", "", doi.strip(), flags=re.I)
        return Request.get(self.base + doi, connector="doi", Accept=self.accept)

    def parse(self, body: str) -> dict[str, Any]:
        item = json.loads(body)
        fields = CrossrefConnector.item_fields(item)
        fields["location"] = item.get("event-place") or item.get("publisher-place") or fields.get("location")
        return fields

    def render(self, r: CitationRecord) -> str:
        item = CrossrefConnector.item_for(r)
        item["type"] = "paper-conference" if r.venue and not r.volume else "article-journal"
        item["title"] = r.title
        item["container-title"] = r.venue
        item.pop("event", None)
        if r.location:
            item["event-place"] = r.location
        return json.dumps(item, ensure_ascii=False)

    def resolve(self, transport: Transport, doi: str) -> tuple[CandidateRecord | None, Response]:
        response = transport.fetch(self.request(doi))
        if not response.ok:
            return None, response
        try:
            fields = self.parse(response.body)
        except (ValueError, AttributeError):
            return None, response
        return _candidate(self.source, response, **fields), response


class _MetaParser(HTMLParser):
    def __init__(self) -> None:
        super().__init__()
        self.meta: list[tuple[str, str]] = []

    def handle_starttag(self, tag, attrs):
        if tag != "meta":
            return
        d = {k.lower(): v for k, v in attrs if v is not None}
        name = (d.get("name") or d.get("property") or "").lower()
        if name.startswith("citation_") and "content" in d:
            self.meta.append((name, d["content"].strip()))


class UrlMetaResolver:
    """Fetch a landing page and read its ``citation_*`` meta tags."""

    source = "url"

    def request(self, url: str) -> Request:
        return Request.get(url, connector="url")

    @staticmethod
    def parse(body: str) -> dict[str, Any] | None:
        parser = _MetaParser()
        try:
            parser.feed(body)
        except Exception:  # malformed markup: keep whatever was read
            pass
        meta: dict[str, list[str]] = {}
        for k, v in parser.meta:
            meta.setdefault(k, []).append(v)

        def one(*keys: str) -> str | None:
            for k in keys:
                if meta.get(k):
                    return meta[k][0]
            return None

        title = one("citation_title")
        if not title:
            return None
        authors = []
        for a in meta.get("citation_author", []):
            parts = [p.strip() for p in a.split(",")]
            authors.append(f"{parts[1]} {parts[0]}" if len(parts) == 2 else a)
        return {
            "title": title,
            "authors": authors,
            "venue": one("citation_conference_title", "citation_journal_title", "citation_inbook_title"),
            "year": _year(one("citation_publication_date", "citation_date", "citation_year", "citation_online_date")),
            "volume": one("citation_volume"),
            "pages": _join_pages(one("citation_firstpage"), one("citation_lastpage")),
            "publisher": one("citation_publisher"),
            "doi": one("citation_doi"),
            "arxiv_id": one("citation_arxiv_id"),
        }

    @staticmethod
    def render(r: CitationRecord) -> str:
        tags = [("citation_title", r.title)]
        tags += [("citation_author", a) for a in r.named_authors]
        first, last = _split_pages(r.pages)
        tags += [
            ("citation_conference_title", r.venue),
            ("citation_publication_date", str(r.year) if r.year else None),
            ("citation_volume", r.volume),
            ("citation_firstpage", first),
            ("citation_lastpage", last),
            ("citation_publisher", r.publisher),
            ("citation_doi", r.doi),
            ("citation_arxiv_id", r.arxiv_id),
        ]
        meta = "".join(f'<meta name="{k}" content="{html.escape(v)}">' for k, v in tags if v)
        return f"<html><head>{meta}</head><body></body></html>"

    def resolve(self, transport: Transport, url: str) -> tuple[CandidateRecord | None, Response]:
        response = transport.fetch(self.request(url))
        if not response.ok:
            return None, response
        fields = self.parse(response.body)
        if fields is None:
            return None, response
        return _candidate(self.source, response, url=url, **fields), response


def host_of(url: str) -> str:
    return (urlsplit(url.strip()).hostname or "").lower()


def make_connectors(ids: Iterable[str] | None = None, api_keys: dict[str, str] | None = None) -> dict[str, Connector]:
    api_keys = api_keys or {}
    every: dict[str, Connector] = {
        "crossref": CrossrefConnector(),
        "dblp": DblpConnector(),
        "openalex": OpenAlexConnector(),
        "semanticscholar": SemanticScholarConnector(api_keys.get("semanticscholar")),
        "arxiv": ArxivConnector(),
        "aclanthology": AclAnthologyConnector(),
        "europepmc": EuropePmcConnector(),
        "pubmed": PubmedConnector(),
    }
    if ids is None:
        return every
    wanted = list(ids)
    unknown = set(wanted) - set(every)
    if unknown:
        raise ValueError(f"unknown connectors: {sorted(unknown)}")
    return {k: v for k, v in every.items() if k in wanted}


# Priority used for merging and tie-breaking: richest structured metadata first.
SOURCE_PRIORITY = ("crossref", "dblp", "openalex", "semanticscholar", "arxiv", "aclanthology", "europepmc", "pubmed", "doi", "url", "memory", "web")
