"""Composable pipeline CLI.

Stages mirror the processing order: ingest -> extract -> link -> build-graph
-> risk -> analyze. Each stage reads the previous stage's artifact files from
the run directory, so stages are individually resumable, and every stage
writes a manifest of input/output hashes plus the resolved-config hash.

Exit codes: 0 success, 2 configuration error, 3 missing stage input,
4 pipeline data error, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import datetime as dt
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .analysis import logreg_fit, pca_fit, report
from .config import PipelineConfig, load_config
from .conllu import ParsedDocument, iter_documents
from .errors import (
    ConfigError,
    CyberkgError,
    EmptyAfterCleaningError,
    FixtureMissingError,
    NoEntitiesError,
    StageInputMissingError,
)
from .extraction import (
    AttackTriple,
    EntityIndex,
    EntityMention,
    EntityScore,
    default_attack_lexicon,
    extract_document,
    load_attack_lexicon,
    load_hearst_patterns,
    load_light_verbs,
)
from .graph import (
    KnowledgeGraph,
    add_incident,
    export_graph,
    graph_stats,
    import_graph,
    project_centrals,
    resolve_nodes,
    write_merge_report,
)
from .ingest import (
    IncidentRecord,
    clean_text,
    fetch_article,
    filter_incidents,
    load_incidents,
)
from .linking import LinkedEntity, LinkingClient, link_entities
from .risk import (
    build_calendar,
    build_samples,
    read_samples_csv,
    standardize,
    write_risk_series_csv,
    write_samples_csv,
)

log = logging.getLogger("cyberkg")

STAGES = ("ingest", "extract", "link", "build-graph", "risk", "analyze")


# --- manifest helpers ---------------------------------------------------------

def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _hash_tree(paths: list[Path]) -> dict[str, str]:
    out: dict[str, str] = {}
    for path in paths:
        if path.is_dir():
            for child in sorted(path.rglob("*")):
                if child.is_file():
                    out[str(child)] = _sha256_file(child)
        elif path.is_file():
            out[str(path)] = _sha256_file(path)
    return dict(sorted(out.items()))


def _write_manifest(cfg: PipelineConfig, stage: str, inputs: list[Path], outputs: list[Path]) -> None:
    manifest_dir = cfg.output_dir / "manifest"
    manifest_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "stage": stage,
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "inputs": _hash_tree(inputs),
        "outputs": _hash_tree(outputs),
    }
    (manifest_dir / f"{stage}.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _require(path: Path, stage: str, producer: str) -> Path:
    if not path.exists():
        raise StageInputMissingError(
            f"stage {stage!r} needs {path} (run {producer!r} first)"
        )
    return path


def _jsonl_write(path: Path, rows: list[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def _jsonl_read(path: Path) -> list[dict]:
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


# --- shared loaders -------------------------------------------------------------

def _record_to_json(rec: IncidentRecord) -> dict:
    return {
        "id": rec.id,
        "date": rec.date.isoformat(),
        "target": rec.target_label,
        "attacker": rec.attacker_label,
        "attack_type": rec.attack_type,
        "industry": rec.target_industry,
        "country_codes": rec.country_codes,
        "url": rec.url,
    }


def _record_from_json(obj: dict) -> IncidentRecord:
    return IncidentRecord(
        id=obj["id"],
        date=dt.date.fromisoformat(obj["date"]),
        target_label=obj["target"],
        attacker_label=obj["attacker"],
        attack_type=obj["attack_type"],
        target_industry=obj["industry"],
        country_codes=list(obj["country_codes"]),
        url=obj["url"],
    )


def _load_parsed_corpus(cfg: PipelineConfig) -> list[ParsedDocument]:
    docs: list[ParsedDocument] = []
    for path in sorted(cfg.parsed_dir.glob("*.conllu")):
        docs.extend(iter_documents(path))
    docs.sort(key=lambda d: d.doc_id)
    return docs


def _extraction_resources(cfg: PipelineConfig):
    lexicon = (
        load_attack_lexicon(cfg.lexicon_file) if cfg.lexicon_file else default_attack_lexicon()
    )
    light_verbs = load_light_verbs(cfg.light_verbs_file) if cfg.light_verbs_file else load_light_verbs()
    hearst = load_hearst_patterns(cfg.hearst_file) if cfg.hearst_file else load_hearst_patterns()
    return lexicon, light_verbs, hearst


# --- stages --------------------------------------------------------------------

def stage_ingest(cfg: PipelineConfig) -> None:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    records, rejects = load_incidents(cfg.incidents_csv, cfg.columns or None, cfg.date_order)
    kept, omitted = filter_incidents(records)
    _jsonl_write(out / "incidents.jsonl", [_record_to_json(r) for r in kept])
    _jsonl_write(
        out / "omitted.jsonl",
        [dict(_record_to_json(r), reason=reason) for r, reason in omitted],
    )
    _jsonl_write(
        out / "rejects.jsonl",
        [{"row_number": r.row_number, "reason": r.reason, "row": r.row} for r in rejects],
    )

    cleaned_dir = out / "cleaned"
    cleaned_dir.mkdir(exist_ok=True)
    fetch_report: list[dict] = []
    for rec in kept:
        if not rec.url or cfg.article_fixtures is None:
            continue
        try:
            body = fetch_article(
                rec.url,
                mode=cfg.fetch_mode,
                fixture_dir=cfg.article_fixtures,
                timeout=cfg.fetch_timeout,
                min_delay=cfg.fetch_min_delay,
            )
            cleaned = clean_text(body, rec.url, doc_id=rec.id)
            (cleaned_dir / f"{rec.id}.txt").write_text(cleaned.text + "\n", encoding="utf-8")
            fetch_report.append({"id": rec.id, "url": rec.url, "status": "fetched"})
        except FixtureMissingError:
            fetch_report.append({"id": rec.id, "url": rec.url, "status": "fixture_missing"})
        except EmptyAfterCleaningError:
            fetch_report.append({"id": rec.id, "url": rec.url, "status": "empty_after_cleaning"})
    _jsonl_write(out / "fetch_report.jsonl", sorted(fetch_report, key=lambda r: r["id"]))

    _write_manifest(
        cfg, "ingest",
        inputs=[cfg.incidents_csv] + ([cfg.article_fixtures] if cfg.article_fixtures else []),
        outputs=[out / "incidents.jsonl", out / "omitted.jsonl", out / "rejects.jsonl",
                 out / "fetch_report.jsonl", cleaned_dir],
    )


def stage_extract(cfg: PipelineConfig) -> None:
    out = cfg.output_dir
    incidents_path = _require(out / "incidents.jsonl", "extract", "ingest")
    incidents = {obj["id"]: _record_from_json(obj) for obj in _jsonl_read(incidents_path)}
    docs = _load_parsed_corpus(cfg)
    lexicon, light_verbs, hearst = _extraction_resources(cfg)

    def work(doc: ParsedDocument):
        incident = incidents.get(doc.doc_id)
        try:
            return doc.doc_id, extract_document(doc, incident, lexicon, light_verbs, hearst), None
        except (NoEntitiesError, ValueError) as exc:
            return doc.doc_id, None, str(exc)

    if cfg.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(work, docs))
    else:
        results = [work(doc) for doc in docs]

    rows, errors = [], []
    for doc_id, extraction, error in results:
        if extraction is not None:
            rows.append(extraction.to_json_obj())
        else:
            errors.append({"doc_id": doc_id, "error": error})
    with (out / "extraction.jsonl").open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    _jsonl_write(out / "extraction_errors.jsonl", errors)

    _write_manifest(
        cfg, "extract",
        inputs=[incidents_path, cfg.parsed_dir],
        outputs=[out / "extraction.jsonl", out / "extraction_errors.jsonl"],
    )


def stage_link(cfg: PipelineConfig) -> None:
    out = cfg.output_dir
    extraction_path = _require(out / "extraction.jsonl", "link", "extract")
    extractions = _jsonl_read(extraction_path)
    docs = {doc.doc_id: doc for doc in _load_parsed_corpus(cfg)}
    client = LinkingClient(
        spotlight_url=cfg.spotlight_url,
        sparql_url=cfg.sparql_url,
        confidence=cfg.confidence,
        timeout=cfg.linking_timeout,
        retries=cfg.linking_retries,
        cache_dir=cfg.linking_cache,
        offline=cfg.linking_offline,
    )
    rows = []
    for entry in extractions:
        doc = docs[entry["doc_id"]]
        annotations = client.annotate_text(doc.text())
        index = EntityIndex(doc)
        by_text: dict[str, EntityMention] = {}
        for mention in sorted(index.stats, key=lambda m: m.key()):
            by_text.setdefault(mention.text, mention)
        shells = []
        for item in entry["ranking"]:
            mention = by_text.get(item["entity"], EntityMention(item["entity"], "MISC"))
            shells.append(
                EntityScore(
                    entity=mention,
                    target_score=item["target_score"],
                    frequency=item["frequency"],
                    first_order=item["first_order"],
                    compound=item["compound"],
                )
            )
        linked = link_entities(shells, annotations, doc)
        client.enrich(linked)
        rows.append(
            {
                "doc_id": entry["doc_id"],
                "entities": [
                    {
                        "entity": le.canonical_name,
                        "uri": le.uri,
                        "linked": le.linked,
                        "industries": le.industries,
                        "countries": le.countries,
                        "products": le.products,
                        "parent": le.parent,
                    }
                    for le in linked
                ],
            }
        )
    _jsonl_write(out / "linked.jsonl", rows)
    _write_manifest(
        cfg, "link",
        inputs=[extraction_path, cfg.parsed_dir]
               + ([cfg.linking_cache] if cfg.linking_cache else []),
        outputs=[out / "linked.jsonl"],
    )


def stage_build_graph(cfg: PipelineConfig) -> None:
    out = cfg.output_dir
    extraction_path = _require(out / "extraction.jsonl", "build-graph", "extract")
    linked_path = _require(out / "linked.jsonl", "build-graph", "link")
    incidents_path = _require(out / "incidents.jsonl", "build-graph", "ingest")
    incidents = {obj["id"]: _record_from_json(obj) for obj in _jsonl_read(incidents_path)}
    linked_by_doc = {obj["doc_id"]: obj["entities"] for obj in _jsonl_read(linked_path)}

    graph = KnowledgeGraph()
    for entry in _jsonl_read(extraction_path):
        doc_id = entry["doc_id"]
        at = entry["attack_triple"]
        attack = AttackTriple(
            target=at["target"],
            attacker=at["attacker"],
            date=dt.date.fromisoformat(at["date"]),
            doc_id=doc_id,
        )
        facts = None
        for item in linked_by_doc.get(doc_id, []):
            if item["entity"] == attack.target:
                facts = LinkedEntity(
                    canonical_name=item["entity"],
                    uri=item["uri"],
                    industries=list(item["industries"]),
                    countries=list(item["countries"]),
                    products=list(item["products"]),
                    parent=item["parent"],
                )
                break
        add_incident(graph, attack, facts, incidents.get(doc_id))

    merges = resolve_nodes(graph, cfg.similarity_threshold)
    write_merge_report(merges, out / "merges.csv")
    violations = graph.check_ontology()
    if violations:
        raise CyberkgError("ontology violations: " + "; ".join(violations))

    formats = set(cfg.export_formats) | {"jsonl"}   # jsonl is the stage interface
    outputs = [out / "merges.csv", out / "stats.json"]
    for fmt in sorted(formats):
        suffix = {"graphml": "graphml", "dot": "dot", "jsonl": "jsonl"}[fmt]
        outputs.append(export_graph(graph, fmt, out / f"graph.{suffix}"))
    (out / "stats.json").write_text(
        json.dumps(graph_stats(graph), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_manifest(
        cfg, "build-graph",
        inputs=[extraction_path, linked_path, incidents_path],
        outputs=outputs,
    )


def stage_risk(cfg: PipelineConfig) -> None:
    out = cfg.output_dir
    graph_path = _require(out / "graph.jsonl", "risk", "build-graph")
    graph = import_graph("jsonl", graph_path)
    attack_dates = [e.date for e in graph.edges if e.relation == "attackedBy" and e.date]
    if not attack_dates:
        raise CyberkgError("graph holds no dated attack edges")
    start = cfg.start_date or min(attack_dates)
    end = cfg.end_date or max(attack_dates)
    calendar = build_calendar(graph, start, end)
    projection = project_centrals(graph)
    samples = build_samples(graph, projection, calendar, cfg.seed)
    standardize(samples)
    write_samples_csv(samples, out / "samples.csv")
    write_risk_series_csv(graph, calendar, out / "risk_series.csv")
    _write_manifest(
        cfg, "risk",
        inputs=[graph_path],
        outputs=[out / "samples.csv", out / "risk_series.csv"],
    )


def stage_analyze(cfg: PipelineConfig) -> None:
    out = cfg.output_dir
    samples_path = _require(out / "samples.csv", "analyze", "risk")
    z_rows, labels = read_samples_csv(samples_path)
    pca = pca_fit(z_rows, k=2)
    model, eval_report = logreg_fit(
        z_rows, labels,
        split=cfg.split, seed=cfg.analysis_seed, tol=cfg.tol, max_iter=cfg.max_iter,
    )
    report(
        pca, model, eval_report, z_rows, labels,
        out_dir=out, formats=cfg.report_formats, figures=cfg.figures,
    )
    outputs = [out / "pc_scores.csv"]
    for fmt, name in (("json", "report.json"), ("markdown", "report.md")):
        if fmt in cfg.report_formats:
            outputs.append(out / name)
    if cfg.figures:
        outputs.append(out / "figures")
    _write_manifest(cfg, "analyze", inputs=[samples_path], outputs=outputs)


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "extract": stage_extract,
    "link": stage_link,
    "build-graph": stage_build_graph,
    "risk": stage_risk,
    "analyze": stage_analyze,
}


def run_stage(stage: str, cfg: PipelineConfig) -> None:
    if stage == "all":
        for name in STAGES:
            log.info("running stage %s", name)
            _STAGE_FUNCS[name](cfg)
    else:
        log.info("running stage %s", stage)
        _STAGE_FUNCS[stage](cfg)


# --- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyberkg",
        description="Mine cyber-incident reports into a knowledge graph with risk scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one pipeline stage or all of them")
    run.add_argument("stage", choices=STAGES + ("all",))
    run.add_argument("--config", required=True, help="TOML-like pipeline config file")
    run.add_argument("--seed", type=int, default=None, help="override risk and analysis seeds")
    run.add_argument("--jobs", type=int, default=None, help="intra-stage parallelism")
    run.add_argument(
        "--fixture-only", action="store_true",
        help="force offline fixture mode for fetching and linking",
    )
    run.add_argument(
        "--format", dest="fmt", default=None,
        choices=("graphml", "dot", "jsonl", "json", "markdown"),
        help="restrict graph export or report format",
    )
    run.add_argument("--verbose", action="store_true")
    return parser


def _apply_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.analysis_seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.fixture_only:
        cfg.fetch_mode = "fixture"
        cfg.linking_offline = True
    if args.fmt in ("graphml", "dot", "jsonl"):
        cfg.export_formats = (args.fmt,)
    elif args.fmt in ("json", "markdown"):
        cfg.report_formats = (args.fmt,)
    return cfg


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        cfg.validate()
        run_stage(args.stage, cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except StageInputMissingError as exc:
        log.error("%s", exc)
        return 3
    except CyberkgError as exc:
        log.error("%s", exc)
        return 4
    except Exception:  # pragma: no cover - last resort
        log.exception("unexpected failure")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
