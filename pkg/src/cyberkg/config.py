"""Pipeline configuration: a TOML-like key/value file with documented keys.

The sandbox targets Python 3.10 (no tomllib), so a small reader handles the
subset this project documents: ``[section]`` headers, ``key = value`` lines,
quoted strings, ints, floats, booleans and flat lists. CLI flags override
file values.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError

_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_.-]+)\]$")
_KEY_RE = re.compile(r"^([A-Za-z0-9_]+)\s*=\s*(.+)$")


def _parse_value(raw: str, lineno: int) -> Any:
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        if not inner:
            return []
        return [_parse_value(part.strip(), lineno) for part in inner.split(",")]
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    raise ConfigError(f"line {lineno}: cannot parse value {raw!r} (quote strings)")


def read_config_file(path: str | Path) -> dict[str, dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    sections: dict[str, dict[str, Any]] = {}
    current = sections.setdefault("", {})
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip() if not raw.strip().startswith("#") else ""
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            current = sections.setdefault(m.group(1), {})
            continue
        m = _KEY_RE.match(line)
        if m:
            current[m.group(1)] = _parse_value(m.group(2), lineno)
            continue
        raise ConfigError(f"line {lineno}: cannot parse {raw!r}")
    return sections


@dataclass
class PipelineConfig:
    # paths
    incidents_csv: Path
    parsed_dir: Path
    output_dir: Path
    article_fixtures: Optional[Path] = None
    linking_cache: Optional[Path] = None
    lexicon_file: Optional[Path] = None
    light_verbs_file: Optional[Path] = None
    hearst_file: Optional[Path] = None
    # ingest
    date_order: str = "DMY"
    columns: dict[str, str] = field(default_factory=dict)
    fetch_mode: str = "fixture"
    fetch_timeout: float = 10.0
    fetch_min_delay: float = 1.0
    # linking
    spotlight_url: str = "https://api.dbpedia-spotlight.org/en/annotate"
    sparql_url: str = "https://dbpedia.org/sparql"
    confidence: float = 0.5
    linking_offline: bool = True
    linking_timeout: float = 10.0
    linking_retries: int = 3
    # graph
    similarity_threshold: float = 0.92
    export_formats: tuple[str, ...] = ("graphml", "dot", "jsonl")
    # risk
    start_date: Optional[dt.date] = None
    end_date: Optional[dt.date] = None
    seed: int = 7
    # analysis
    split: float = 0.6
    analysis_seed: int = 7
    tol: float = 1e-8
    max_iter: int = 100
    report_formats: tuple[str, ...] = ("json", "markdown")
    figures: bool = True
    # execution
    jobs: int = 1

    def validate(self) -> None:
        if not self.incidents_csv.exists():
            raise ConfigError(f"incidents_csv does not exist: {self.incidents_csv}")
        if not self.parsed_dir.is_dir():
            raise ConfigError(f"parsed_dir is not a directory: {self.parsed_dir}")
        if self.article_fixtures and not self.article_fixtures.is_dir():
            raise ConfigError(f"article_fixtures is not a directory: {self.article_fixtures}")
        if self.linking_cache and not self.linking_cache.is_dir():
            raise ConfigError(f"linking_cache is not a directory: {self.linking_cache}")
        for name in ("lexicon_file", "light_verbs_file", "hearst_file"):
            value = getattr(self, name)
            if value and not Path(value).exists():
                raise ConfigError(f"{name} does not exist: {value}")
        if self.date_order not in ("DMY", "MDY"):
            raise ConfigError("ingest.date_order must be DMY or MDY")
        if self.fetch_mode not in ("fixture", "live"):
            raise ConfigError("fetch.mode must be fixture or live")
        if not 0.0 <= self.confidence <= 1.0:
            raise ConfigError("linking.confidence must be in [0, 1]")
        if not 0.0 < self.similarity_threshold <= 1.0:
            raise ConfigError("graph.similarity_threshold must be in (0, 1]")
        if not 0.0 < self.split < 1.0:
            raise ConfigError("analysis.split must be in (0, 1)")
        if self.max_iter < 1 or self.linking_retries < 1 or self.jobs < 1:
            raise ConfigError("max_iter, retries and jobs must be positive")
        if self.start_date and self.end_date and self.end_date < self.start_date:
            raise ConfigError("risk.end_date before risk.start_date")
        for fmt in self.export_formats:
            if fmt not in ("graphml", "dot", "jsonl"):
                raise ConfigError(f"unknown graph export format {fmt!r}")
        for fmt in self.report_formats:
            if fmt not in ("json", "markdown"):
                raise ConfigError(f"unknown report format {fmt!r}")

    def as_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for key, value in vars(self).items():
            if isinstance(value, Path):
                out[key] = str(value)
            elif isinstance(value, dt.date):
                out[key] = value.isoformat()
            elif isinstance(value, tuple):
                out[key] = list(value)
            else:
                out[key] = value
        return out

    def config_hash(self) -> str:
        canonical = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _opt_path(value: Any) -> Optional[Path]:
    return Path(value) if value else None


def _opt_date(value: Any, key: str) -> Optional[dt.date]:
    if not value:
        return None
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise ConfigError(f"{key} is not an ISO date: {value!r}") from None


def load_config(path: str | Path) -> PipelineConfig:
    sections = read_config_file(path)
    paths = sections.get("paths", {})
    ingest = sections.get("ingest", {})
    fetch = sections.get("fetch", {})
    linking = sections.get("linking", {})
    graph = sections.get("graph", {})
    risk = sections.get("risk", {})
    analysis = sections.get("analysis", {})
    run = sections.get("run", {})

    for required in ("incidents_csv", "parsed_dir", "output_dir"):
        if required not in paths:
            raise ConfigError(f"[paths] {required} is required")

    columns = {
        key[len("column_"):]: str(value)
        for key, value in ingest.items()
        if key.startswith("column_")
    }

    try:
        cfg = PipelineConfig(
            incidents_csv=Path(paths["incidents_csv"]),
            parsed_dir=Path(paths["parsed_dir"]),
            output_dir=Path(paths["output_dir"]),
            article_fixtures=_opt_path(paths.get("article_fixtures")),
            linking_cache=_opt_path(paths.get("linking_cache")),
            lexicon_file=_opt_path(paths.get("lexicon_file")),
            light_verbs_file=_opt_path(paths.get("light_verbs_file")),
            hearst_file=_opt_path(paths.get("hearst_file")),
            date_order=str(ingest.get("date_order", "DMY")),
            columns=columns,
            fetch_mode=str(fetch.get("mode", "fixture")),
            fetch_timeout=float(fetch.get("timeout", 10.0)),
            fetch_min_delay=float(fetch.get("min_delay", 1.0)),
            spotlight_url=str(linking.get("spotlight_url", PipelineConfig.spotlight_url)),
            sparql_url=str(linking.get("sparql_url", PipelineConfig.sparql_url)),
            confidence=float(linking.get("confidence", 0.5)),
            linking_offline=bool(linking.get("offline", True)),
            linking_timeout=float(linking.get("timeout", 10.0)),
            linking_retries=int(linking.get("retries", 3)),
            similarity_threshold=float(graph.get("similarity_threshold", 0.92)),
            export_formats=tuple(graph.get("export_formats", ["graphml", "dot", "jsonl"])),
            start_date=_opt_date(risk.get("start_date"), "risk.start_date"),
            end_date=_opt_date(risk.get("end_date"), "risk.end_date"),
            seed=int(risk.get("seed", 7)),
            split=float(analysis.get("split", 0.6)),
            analysis_seed=int(analysis.get("seed", 7)),
            tol=float(analysis.get("tol", 1e-8)),
            max_iter=int(analysis.get("max_iter", 100)),
            report_formats=tuple(analysis.get("report_formats", ["json", "markdown"])),
            figures=bool(analysis.get("figures", True)),
            jobs=int(run.get("jobs", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    return cfg
