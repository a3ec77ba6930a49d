"""Incident catalogs, article fetching/cleaning, parsed-document loading.

This is the retrieval half of the pipeline: it loads the human-annotated
incident CSV, applies the vague-victim row filter, turns raw article HTML
into clean text, and reads the enriched CoNLL-U documents produced by the
preprocess adapter.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import html.parser
import json
import logging
import re
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional
from urllib import robotparser

import requests

from .conllu import ParsedDocument, iter_documents, load_parsed_document, load_parsed_documents  # noqa: F401
from .errors import (
    EmptyAfterCleaningError,
    FetchDeniedError,
    FetchTimeoutError,
    FixtureMissingError,
    MalformedCsvError,
    MissingColumnError,
)

log = logging.getLogger(__name__)

LOGICAL_COLUMNS = ("date", "target", "attacker", "attack_type", "industry", "country", "link")
DEFAULT_SCHEMA = {name: name for name in LOGICAL_COLUMNS}

USER_AGENT = "cyberkg/0.1 (+research crawler; single-url fetcher)"


def _load_patterns(name: str) -> list[str]:
    text = resources.files("cyberkg.data").joinpath(name).read_text(encoding="utf-8")
    return [ln.strip().casefold() for ln in text.splitlines()
            if ln.strip() and not ln.startswith("#")]


def load_country_table() -> dict[str, str]:
    """Alias (casefolded) -> ISO alpha-2 code, including code -> code."""
    table: dict[str, str] = {}
    text = resources.files("cyberkg.data").joinpath("country_codes.txt").read_text(encoding="utf-8")
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        code, _, aliases = line.partition(":")
        code = code.strip().upper()
        table[code.casefold()] = code
        for alias in aliases.split("|"):
            alias = alias.strip().casefold()
            if alias:
                table[alias] = code
    return table


def normalize_country(token: str, table: Optional[dict[str, str]] = None) -> str:
    """Map a country cell token to an ISO code; unknown tokens kept verbatim."""
    if table is None:
        table = load_country_table()
    key = token.strip().casefold()
    if key in table:
        return table[key]
    if re.fullmatch(r"[A-Za-z]{2}", token.strip()):
        return token.strip().upper()
    log.warning("unrecognized country token kept verbatim: %r", token)
    return token.strip()


@dataclass
class IncidentRecord:
    id: str
    date: dt.date
    target_label: str
    attacker_label: str
    attack_type: str
    target_industry: str
    country_codes: list[str]
    url: str


@dataclass
class RejectedRow:
    row_number: int       # 1-based data row index, header excluded
    reason: str
    row: dict[str, str]


@dataclass
class CleanText:
    doc_id: str
    text: str
    source_url: str


def _parse_date(value: str, date_order: str) -> dt.date:
    value = value.strip()
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        pass
    m = re.fullmatch(r"(\d{1,2})/(\d{1,2})/(\d{4})", value)
    if m:
        a, b, year = int(m.group(1)), int(m.group(2)), int(m.group(3))
        day, month = (a, b) if date_order == "DMY" else (b, a)
        return dt.date(year, month, day)
    raise ValueError(f"unparseable date {value!r}")


def split_countries(cell: str, table: Optional[dict[str, str]] = None) -> list[str]:
    """Split multi-country cells on ',' and '/', trim, normalize known names."""
    if table is None:
        table = load_country_table()
    tokens = [t.strip() for t in re.split(r"[,/]", cell) if t.strip()]
    return [normalize_country(t, table) for t in tokens]


def load_incidents(
    path: str | Path,
    schema: Optional[dict[str, str]] = None,
    date_order: str = "DMY",
) -> tuple[list[IncidentRecord], list[RejectedRow]]:
    """Load the incident CSV.

    ``schema`` maps logical column names (date, target, attacker, attack_type,
    industry, country, link, optionally id) to header names. Rows whose date
    does not parse land in the rejects list with a reason instead of being
    dropped.
    """
    schema = dict(DEFAULT_SCHEMA, **(schema or {}))
    if date_order not in ("DMY", "MDY"):
        raise ValueError("date_order must be DMY or MDY")
    table = load_country_table()
    records: list[IncidentRecord] = []
    rejects: list[RejectedRow] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        try:
            reader = csv.DictReader(fh)
            header = reader.fieldnames
            if header is None:
                raise MalformedCsvError(f"{path}: empty file, no header row")
            for logical in LOGICAL_COLUMNS:
                if schema[logical] not in header:
                    raise MissingColumnError(
                        f"{path}: column {schema[logical]!r} (for {logical!r}) not in header"
                    )
            id_column = schema.get("id")
            for i, row in enumerate(reader, start=1):
                raw_date = (row.get(schema["date"]) or "").strip()
                try:
                    date = _parse_date(raw_date, date_order)
                except ValueError:
                    rejects.append(RejectedRow(i, "InvalidDate", dict(row)))
                    continue
                rec_id = (row.get(id_column) or "").strip() if id_column else ""
                records.append(
                    IncidentRecord(
                        id=rec_id or f"row{i}",
                        date=date,
                        target_label=(row.get(schema["target"]) or "").strip(),
                        attacker_label=(row.get(schema["attacker"]) or "").strip(),
                        attack_type=(row.get(schema["attack_type"]) or "").strip(),
                        target_industry=(row.get(schema["industry"]) or "").strip(),
                        country_codes=split_countries(row.get(schema["country"]) or "", table),
                        url=(row.get(schema["link"]) or "").strip(),
                    )
                )
        except csv.Error as exc:
            raise MalformedCsvError(f"{path}: {exc}") from exc
    return records, rejects


def filter_incidents(
    records: list[IncidentRecord],
    extra_vague_victims: Optional[list[str]] = None,
    extra_vague_countries: Optional[list[str]] = None,
) -> tuple[list[IncidentRecord], list[tuple[IncidentRecord, str]]]:
    """Omit rows whose victim is not specifically reported.

    Returns (kept, omitted) with omission reasons; kept and omitted partition
    the input.
    """
    victim_patterns = _load_patterns("vague_victims.txt") + [
        p.casefold() for p in (extra_vague_victims or [])
    ]
    country_patterns = set(_load_patterns("vague_countries.txt")) | {
        p.casefold() for p in (extra_vague_countries or [])
    }
    kept: list[IncidentRecord] = []
    omitted: list[tuple[IncidentRecord, str]] = []
    for rec in records:
        label = rec.target_label.casefold()
        if not label or any(p in label for p in victim_patterns):
            omitted.append((rec, "VagueVictim"))
            continue
        if any(c.casefold() in country_patterns for c in rec.country_codes):
            omitted.append((rec, "VagueCountry"))
            continue
        kept.append(rec)
    return kept, omitted


# --- text cleaning ----------------------------------------------------------

_SKIP_ELEMENTS = frozenset(
    "script style noscript head title nav header footer aside form button svg iframe template".split()
)
_BLOCK_ELEMENTS = frozenset(
    "p div br li ul ol h1 h2 h3 h4 h5 h6 table tr td th section article blockquote pre hr main".split()
)
_URL_RE = re.compile(r"(?:https?://|www\.)\S+")
_SENTENCE_PUNCT_RE = re.compile(r"[.!?]")


class _BlockExtractor(html.parser.HTMLParser):
    """Collect visible text grouped into block-level chunks."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.blocks: list[str] = [""]
        self._skip_depth = 0

    def _break(self) -> None:
        if self.blocks[-1].strip():
            self.blocks.append("")

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_ELEMENTS:
            self._skip_depth += 1
        if tag in _BLOCK_ELEMENTS:
            self._break()

    def handle_endtag(self, tag):
        if tag in _SKIP_ELEMENTS and self._skip_depth > 0:
            self._skip_depth -= 1
        if tag in _BLOCK_ELEMENTS:
            self._break()

    def handle_data(self, data):
        if self._skip_depth == 0:
            self.blocks[-1] += data


def _looks_like_boilerplate(block: str, patterns: list[str]) -> bool:
    lowered = block.casefold()
    if any(p in lowered for p in patterns):
        return True
    # nav crumbs and menus: short and never end a sentence
    if not _SENTENCE_PUNCT_RE.search(block) and len(block.split()) <= 6:
        return True
    return False


def clean_text(html_text: str, url: str, doc_id: Optional[str] = None) -> CleanText:
    """Strip markup, scripts, URLs and boilerplate; normalize whitespace."""
    extractor = _BlockExtractor()
    extractor.feed(html_text)
    extractor.close()
    patterns = _load_patterns("boilerplate.txt")
    kept: list[str] = []
    for block in extractor.blocks:
        block = _URL_RE.sub(" ", block)
        block = " ".join(block.split())
        if not block or _looks_like_boilerplate(block, patterns):
            continue
        kept.append(block)
    text = " ".join(kept)
    if not text:
        raise EmptyAfterCleaningError(f"nothing but boilerplate in {url or '<input>'}")
    if doc_id is None:
        doc_id = hashlib.sha256(url.encode("utf-8")).hexdigest()[:12]
    return CleanText(doc_id=doc_id, text=text, source_url=url)


# --- article fetching --------------------------------------------------------

def url_key(url: str) -> str:
    return hashlib.sha256(url.encode("utf-8")).hexdigest()


@dataclass
class _HostGate:
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_fetch: float = 0.0


_host_gates: dict[str, _HostGate] = {}
_gates_lock = threading.Lock()


def _gate_for(host: str) -> _HostGate:
    with _gates_lock:
        return _host_gates.setdefault(host, _HostGate())


def _robots_allows(url: str, timeout: float) -> bool:
    parts = urllib.parse.urlsplit(url)
    robots_url = f"{parts.scheme}://{parts.netloc}/robots.txt"
    try:
        resp = requests.get(robots_url, timeout=timeout, headers={"User-Agent": USER_AGENT})
    except requests.RequestException:
        return True  # unreachable robots file does not forbid fetching
    if resp.status_code >= 400:
        return True
    parser = robotparser.RobotFileParser()
    parser.parse(resp.text.splitlines())
    return parser.can_fetch(USER_AGENT, url)


def save_fixture(url: str, body: str, fixture_dir: str | Path,
                 status: int = 200, content_type: str = "text/html") -> Path:
    """Record a response so later runs can stay offline."""
    fixture_dir = Path(fixture_dir)
    fixture_dir.mkdir(parents=True, exist_ok=True)
    key = url_key(url)
    (fixture_dir / f"{key}.body").write_text(body, encoding="utf-8")
    meta = {"url": url, "status": status, "content_type": content_type}
    (fixture_dir / f"{key}.meta").write_text(
        json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8"
    )
    return fixture_dir / f"{key}.body"


def fetch_article(
    url: str,
    mode: str = "fixture",
    fixture_dir: Optional[str | Path] = None,
    timeout: float = 10.0,
    min_delay: float = 1.0,
) -> str:
    """Return the article body for ``url``.

    Fixture mode reads ``<sha256(url)>.body`` from the fixture store. Live
    mode checks robots.txt, serializes fetches per host with ``min_delay``
    seconds between requests, and decodes the body as UTF-8.
    """
    if mode == "fixture":
        if fixture_dir is None:
            raise FixtureMissingError("fixture mode needs a fixture_dir")
        body_path = Path(fixture_dir) / f"{url_key(url)}.body"
        if not body_path.exists():
            raise FixtureMissingError(f"no stored response for {url}")
        return body_path.read_text(encoding="utf-8")
    if mode != "live":
        raise ValueError(f"unknown fetch mode {mode!r}")

    if not _robots_allows(url, timeout):
        raise FetchDeniedError(f"robots.txt disallows {url}")
    host = urllib.parse.urlsplit(url).netloc
    gate = _gate_for(host)
    with gate.lock:
        wait = gate.last_fetch + min_delay - time.monotonic()
        if wait > 0:
            time.sleep(wait)
        try:
            resp = requests.get(url, timeout=timeout, headers={"User-Agent": USER_AGENT})
        except requests.Timeout as exc:
            raise FetchTimeoutError(f"timeout fetching {url}") from exc
        except requests.RequestException as exc:
            raise FetchTimeoutError(f"fetch failed for {url}: {exc}") from exc
        finally:
            gate.last_fetch = time.monotonic()
    return resp.content.decode("utf-8", errors="replace")
