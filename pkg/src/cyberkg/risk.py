"""Time-decay risk over the knowledge graph.

Attacks are binned into integer day indices per central node. A central's
risk at day t is the sum of e^(i-t) over recorded attack days i <= t. An
entity's risk vector averages central risk over its first-neighbor countries
and industries and over their projection neighbors (second neighbors),
giving the four variables fed to PCA and the classifier.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import (
    CentralEntityError,
    DateOutOfRangeError,
    EmptyCalendarError,
    TooFewSamplesError,
)
from .graph import CENTRAL_KINDS, KnowledgeGraph, Projection, classify_central

log = logging.getLogger(__name__)

ATTACK = "attack"
NON_ATTACK = "non_attack"


@dataclass
class AttackCalendar:
    start: dt.date
    end: dt.date
    days: dict[int, list[int]] = field(default_factory=dict)   # central id -> sorted day indices

    @property
    def horizon(self) -> int:
        return (self.end - self.start).days

    def day_index(self, date: dt.date) -> int:
        return (date - self.start).days


def build_calendar(graph: KnowledgeGraph, start: dt.date, end: dt.date) -> AttackCalendar:
    """One day-index entry per attackedBy edge per central neighbor of the
    attacked entity; multiplicity preserved."""
    if end < start:
        raise ValueError("end date before start date")
    calendar = AttackCalendar(start=start, end=end)
    centrals = classify_central(graph)
    adj = graph.neighbor_map()
    for edge in graph.edges:
        if edge.relation != "attackedBy":
            continue
        assert edge.date is not None
        if edge.date < start or edge.date > end:
            raise DateOutOfRangeError(
                f"attack dated {edge.date} outside [{start}, {end}]"
            )
        day = (edge.date - start).days
        for central in adj[edge.src]:
            if central in centrals:
                calendar.days.setdefault(central, []).append(day)
    for days in calendar.days.values():
        days.sort()
    return calendar


def central_risk(calendar: AttackCalendar, central: int, t: int) -> float:
    """Sum of decaying exponentials over attacks recorded up to day t."""
    if t < 0:
        raise ValueError("day index must be non-negative")
    days = calendar.days.get(central)
    if days is None:
        log.warning("central %s has no calendar entries; risk 0", central)
        return 0.0
    return sum(math.exp(i - t) for i in days if i <= t)


@dataclass(frozen=True)
class RiskVector:
    C_bar: float
    I_bar: float
    c_bar: float
    i_bar: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.C_bar, self.I_bar, self.c_bar, self.i_bar)


def _mean_risk(calendar: AttackCalendar, nodes: set[int], t: int) -> float:
    if not nodes:
        return 0.0
    return sum(central_risk(calendar, c, t) for c in nodes) / len(nodes)


def entity_risk(
    graph: KnowledgeGraph,
    projection: Projection,
    calendar: AttackCalendar,
    entity: int,
    t: int,
) -> RiskVector:
    """Four-variable risk vector (C̄, Ī, c̄, ī) for a non-central node.

    First neighbors are the entity's adjacent centrals; second neighbors are
    their projection neighbors, deduplicated and excluding the first
    neighbors. Empty sets contribute 0.
    """
    node = graph.nodes[entity]
    if node.kind in CENTRAL_KINDS:
        raise CentralEntityError(f"{node.label!r} is a central node")
    firsts = {c for c in graph.neighbors(entity) if graph.nodes[c].kind in CENTRAL_KINDS}
    first_countries = {c for c in firsts if graph.nodes[c].kind == "country"}
    first_industries = {c for c in firsts if graph.nodes[c].kind == "industry"}
    seconds: set[int] = set()
    for c in firsts:
        seconds |= projection.neighbors(c)
    seconds -= firsts
    second_countries = {c for c in seconds if graph.nodes[c].kind == "country"}
    second_industries = {c for c in seconds if graph.nodes[c].kind == "industry"}
    return RiskVector(
        C_bar=_mean_risk(calendar, first_countries, t),
        I_bar=_mean_risk(calendar, first_industries, t),
        c_bar=_mean_risk(calendar, second_countries, t),
        i_bar=_mean_risk(calendar, second_industries, t),
    )


@dataclass
class RiskSample:
    entity: int
    entity_label: str
    day: int                       # evaluation day: attack day - 1, or the sampled day
    vector: RiskVector
    label: str                     # attack | non_attack
    z_vector: Optional[tuple[float, float, float, float]] = None


def build_samples(
    graph: KnowledgeGraph,
    projection: Projection,
    calendar: AttackCalendar,
    seed: int,
) -> list[RiskSample]:
    """Balanced attack / non-attack samples.

    Attack samples are evaluated the day before each recorded attack; each is
    paired with a uniformly sampled earlier day that is not one of the same
    entity's attack days (up to 100 draws, else the pair is dropped and
    logged). Day-0 attacks have no previous step and are dropped.
    """
    events: dict[int, set[int]] = {}
    for edge in graph.edges:
        if edge.relation == "attackedBy":
            assert edge.date is not None
            events.setdefault(edge.src, set()).add(calendar.day_index(edge.date))
    if not events:
        raise EmptyCalendarError("no attackedBy edges to sample from")

    rng = random.Random(seed)
    samples: list[RiskSample] = []
    ordered = sorted(events, key=lambda nid: (graph.nodes[nid].label, nid))
    for entity in ordered:
        attack_days = events[entity]
        label = graph.nodes[entity].label
        for day in sorted(attack_days):
            if day == 0:
                log.info("dropping day-0 attack on %s (no previous step)", label)
                continue
            non_attack_day = None
            for _ in range(100):
                candidate = rng.randrange(0, day)
                if candidate not in attack_days:
                    non_attack_day = candidate
                    break
            if non_attack_day is None:
                log.info("dropping attack pair for %s at day %d (no free day)", label, day)
                continue
            samples.append(
                RiskSample(
                    entity=entity,
                    entity_label=label,
                    day=day - 1,
                    vector=entity_risk(graph, projection, calendar, entity, day - 1),
                    label=ATTACK,
                )
            )
            samples.append(
                RiskSample(
                    entity=entity,
                    entity_label=label,
                    day=non_attack_day,
                    vector=entity_risk(graph, projection, calendar, entity, non_attack_day),
                    label=NON_ATTACK,
                )
            )
    return samples


@dataclass
class Standardization:
    means: tuple[float, float, float, float]
    stds: tuple[float, float, float, float]
    degenerate: tuple[bool, bool, bool, bool]   # std == 0, z forced to 0


def standardize(samples: list[RiskSample]) -> Standardization:
    """Attach standard scores computed over the full assembled dataset."""
    if len(samples) < 2:
        raise TooFewSamplesError("standardization needs at least 2 samples")
    columns = list(zip(*(s.vector.as_tuple() for s in samples)))
    means = tuple(sum(col) / len(col) for col in columns)
    stds = tuple(
        math.sqrt(sum((x - m) ** 2 for x in col) / len(col))
        for col, m in zip(columns, means)
    )
    degenerate = tuple(sd == 0.0 for sd in stds)
    if any(degenerate):
        log.warning("degenerate components (zero std): %s", degenerate)
    for sample in samples:
        sample.z_vector = tuple(
            0.0 if sd == 0.0 else (x - m) / sd
            for x, m, sd in zip(sample.vector.as_tuple(), means, stds)
        )
    return Standardization(means=means, stds=stds, degenerate=degenerate)


# --- CSV interfaces -----------------------------------------------------------

SAMPLE_COLUMNS = ["entity", "day", "C_bar", "I_bar", "c_bar", "i_bar", "zC", "zI", "zc", "zi", "label"]


def write_samples_csv(samples: list[RiskSample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SAMPLE_COLUMNS)
        for s in samples:
            z = s.z_vector or (0.0, 0.0, 0.0, 0.0)
            writer.writerow(
                [s.entity_label, s.day]
                + [f"{x:.12g}" for x in s.vector.as_tuple()]
                + [f"{x:.12g}" for x in z]
                + [s.label]
            )


def read_samples_csv(path: str | Path) -> tuple[list[list[float]], list[str]]:
    """Return (z-vectors, labels) for the analysis stage."""
    z_rows: list[list[float]] = []
    labels: list[str] = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            z_rows.append([float(row[c]) for c in ("zC", "zI", "zc", "zi")])
            labels.append(row["label"])
    return z_rows, labels


def write_risk_series_csv(
    graph: KnowledgeGraph, calendar: AttackCalendar, path: str | Path
) -> None:
    """Daily risk series for every central node that saw at least one attack."""
    centrals = sorted(calendar.days, key=lambda nid: (graph.nodes[nid].label, nid))
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["central", "day", "risk"])
        for central in centrals:
            label = graph.nodes[central].label
            for day in range(calendar.horizon + 1):
                writer.writerow([label, day, f"{central_risk(calendar, central, day):.12g}"])
