"""Entity linking against a Spotlight-compatible annotator plus SPARQL facts.

All responses are cached on disk keyed by a request hash; the cache doubles
as the fixture store, so the default offline mode replays recorded responses
bit-exactly. Live mode retries transient failures and then records the
response into the same cache.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
import urllib.parse
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import requests

from .conllu import ParsedDocument
from .errors import (
    FixtureMissingError,
    MalformedResponseError,
    ServiceUnavailableError,
)
from .extraction import EntityIndex, EntityScore
from .ingest import load_country_table, normalize_country

log = logging.getLogger(__name__)

DEFAULT_SPOTLIGHT_URL = "https://api.dbpedia-spotlight.org/en/annotate"
DEFAULT_SPARQL_URL = "https://dbpedia.org/sparql"

PREDICATE_FAMILIES = {
    "http://dbpedia.org/ontology/industry": "industries",
    "http://dbpedia.org/property/locationCountry": "countries",
    "http://dbpedia.org/ontology/product": "products",
    "http://dbpedia.org/ontology/parentCompany": "parent",
}


@dataclass(frozen=True)
class Annotation:
    surface_form: str
    uri: str
    offset: int
    similarity_score: float
    types: tuple[str, ...]


@dataclass
class LinkedEntity:
    canonical_name: str
    uri: Optional[str] = None
    industries: list[str] = field(default_factory=list)
    countries: list[str] = field(default_factory=list)
    products: list[str] = field(default_factory=list)
    parent: Optional[str] = None

    @property
    def linked(self) -> bool:
        return self.uri is not None


def request_key(method: str, url: str, params: dict[str, str]) -> str:
    canonical = json.dumps([method, url, sorted(params.items())], ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def uri_label(uri: str) -> str:
    """Human label from a DBpedia resource URI."""
    tail = uri.rstrip("/").rsplit("/", 1)[-1]
    return urllib.parse.unquote(tail).replace("_", " ")


class LinkingClient:
    def __init__(
        self,
        spotlight_url: str = DEFAULT_SPOTLIGHT_URL,
        sparql_url: str = DEFAULT_SPARQL_URL,
        confidence: float = 0.5,
        timeout: float = 10.0,
        retries: int = 3,
        cache_dir: Optional[str | Path] = None,
        offline: bool = True,
    ) -> None:
        self.spotlight_url = spotlight_url
        self.sparql_url = sparql_url
        self.confidence = confidence
        self.timeout = timeout
        self.retries = retries
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.offline = offline
        self._country_table = load_country_table()

    # --- transport ---------------------------------------------------------

    def _cache_path(self, key: str) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{key}.json"

    def _request(self, method: str, url: str, params: dict[str, str]) -> dict:
        key = request_key(method, url, params)
        path = self._cache_path(key)
        if path is not None and path.exists():
            try:
                return json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise MalformedResponseError(f"cached response {path} is not JSON") from exc
        if self.offline:
            raise FixtureMissingError(f"no recorded response for {method} {url} ({key})")
        last_error: Optional[str] = None
        for attempt in range(self.retries):
            try:
                if method == "POST":
                    resp = requests.post(
                        url, data=params, timeout=self.timeout,
                        headers={"Accept": "application/json"},
                    )
                else:
                    resp = requests.get(
                        url, params=params, timeout=self.timeout,
                        headers={"Accept": "application/json"},
                    )
            except requests.RequestException as exc:
                last_error = str(exc)
                time.sleep(min(2.0 ** attempt, 5.0))
                continue
            if resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                time.sleep(min(2.0 ** attempt, 5.0))
                continue
            if resp.status_code != 200:
                raise ServiceUnavailableError(f"{url} answered HTTP {resp.status_code}")
            try:
                parsed = json.loads(resp.text)
            except json.JSONDecodeError as exc:
                raise MalformedResponseError(f"{url} returned non-JSON body") from exc
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(resp.text, encoding="utf-8")
            return parsed
        raise ServiceUnavailableError(
            f"{url} unavailable after {self.retries} attempts ({last_error})"
        )

    # --- annotation ----------------------------------------------------------

    def annotate_text(self, text: str, confidence: Optional[float] = None) -> list[Annotation]:
        """Spotlight-style annotation of the full document text."""
        conf = self.confidence if confidence is None else confidence
        payload = {"text": text, "confidence": f"{conf:g}"}
        body = self._request("POST", self.spotlight_url, payload)
        resources = body.get("Resources")
        if resources is None:
            return []
        annotations = []
        for res in resources:
            try:
                surface = res["@surfaceForm"]
                uri = res["@URI"]
                offset = int(res["@offset"])
                score = float(res.get("@similarityScore", 0.0))
                types = tuple(t for t in str(res.get("@types", "")).split(",") if t)
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedResponseError(f"bad resource entry: {res!r}") from exc
            if not uri or offset < 0 or offset >= max(len(text), 1):
                raise MalformedResponseError(f"annotation out of range: {res!r}")
            annotations.append(Annotation(surface, uri, offset, score, types))
        return annotations

    # --- facts ------------------------------------------------------------------

    def fetch_entity_facts(self, uri: str) -> LinkedEntity:
        """One query over the four ontology predicate families."""
        values = " ".join(f"<{p}>" for p in PREDICATE_FAMILIES)
        query = (
            "SELECT ?p ?o WHERE { "
            f"<{uri}> ?p ?o . VALUES ?p {{ {values} }} "
            "}"
        )
        body = self._request(
            "GET", self.sparql_url,
            {"query": query, "format": "application/sparql-results+json"},
        )
        entity = LinkedEntity(canonical_name=uri_label(uri), uri=uri)
        try:
            bindings = body["results"]["bindings"]
        except (KeyError, TypeError) as exc:
            raise MalformedResponseError("SPARQL response missing results.bindings") from exc
        collected: dict[str, list[str]] = {"industries": [], "countries": [], "products": []}
        parent: Optional[str] = None
        for binding in bindings:
            predicate = binding.get("p", {}).get("value")
            obj = binding.get("o", {})
            family = PREDICATE_FAMILIES.get(predicate)
            if family is None:
                continue
            lang = obj.get("xml:lang")
            if obj.get("type") == "literal" and lang not in (None, "en"):
                continue
            value = obj.get("value", "")
            label = uri_label(value) if obj.get("type") == "uri" else value
            if not label:
                continue
            if family == "parent":
                if parent is None:
                    parent = label
            elif family == "countries":
                collected[family].append(normalize_country(label, self._country_table))
            else:
                collected[family].append(label)
        entity.industries = sorted(set(collected["industries"]))
        entity.countries = sorted(set(collected["countries"]))
        entity.products = sorted(set(collected["products"]))
        entity.parent = parent
        return entity

    def enrich(self, entities: list[LinkedEntity]) -> list[LinkedEntity]:
        """Fill fact lists for linked entities, leaving unlinked ones empty."""
        for entity in entities:
            if entity.uri is None:
                continue
            facts = self.fetch_entity_facts(entity.uri)
            entity.industries = facts.industries
            entity.countries = facts.countries
            entity.products = facts.products
            entity.parent = facts.parent
        return entities


def link_entities(
    ranked: list[EntityScore],
    annotations: list[Annotation],
    document: ParsedDocument,
) -> list[LinkedEntity]:
    """Attach each ranked entity to the best-overlapping annotation.

    Overlap is judged in character space of the canonical document text; the
    annotation with the highest similarity score wins, ties broken by longer
    surface form. Entities with no overlapping annotation stay unlinked but
    are never dropped.
    """
    index = EntityIndex(document)
    char_spans = document.token_char_spans()
    out: list[LinkedEntity] = []
    for score in ranked:
        mentions = index.mention_spans(score.entity)
        ranges: list[tuple[int, int]] = []
        for si, s, e in mentions:
            start = char_spans[(si, s)][0]
            end = char_spans[(si, e)][1]
            ranges.append((start, end))
        best: Optional[Annotation] = None
        for ann in annotations:
            a_start, a_end = ann.offset, ann.offset + len(ann.surface_form)
            if not any(a_start < r_end and r_start < a_end for r_start, r_end in ranges):
                continue
            if best is None or (ann.similarity_score, len(ann.surface_form)) > (
                best.similarity_score, len(best.surface_form)
            ):
                best = ann
        out.append(
            LinkedEntity(canonical_name=score.entity.text, uri=best.uri if best else None)
        )
    return out
