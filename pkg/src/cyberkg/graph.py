"""Ontology-typed knowledge graph over incidents and linked facts.

Five node kinds (entity, country, industry, product, attacker) and five
relations. attackedBy is a dated multi-edge; the four fact relations are
simple set-valued edges. Country and industry nodes are the central nodes;
the projection links two centrals whenever they share an adjacent entity,
with uniform unit weights.
"""

from __future__ import annotations

import datetime as dt
import json
import re
import xml.etree.ElementTree as ET
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import KindConflictError
from .extraction import AttackTriple
from .ingest import IncidentRecord
from .similarity import similarity

KINDS = ("entity", "country", "industry", "product", "attacker")

# relation -> (source kind, destination kind, carries a date)
RELATIONS: dict[str, tuple[str, str, bool]] = {
    "attackedBy": ("entity", "attacker", True),
    "hasCountry": ("entity", "country", False),
    "hasIndustry": ("entity", "industry", False),
    "hasProduct": ("entity", "product", False),
    "hasParent": ("entity", "entity", False),
}

EDGE_COLORS = {
    "attackedBy": "red",
    "hasCountry": "blue",
    "hasIndustry": "green",
    "hasProduct": "purple",
    "hasParent": "turquoise",
}

CENTRAL_KINDS = frozenset({"country", "industry"})


@dataclass
class Node:
    id: int
    kind: str
    label: str
    uri: Optional[str] = None
    aliases: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if not self.label:
            raise ValueError("node label must be non-empty")
        self.aliases.add(self.label)


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    relation: str
    date: Optional[dt.date] = None
    provenance: Optional[str] = None


class KnowledgeGraph:
    def __init__(self) -> None:
        self.nodes: dict[int, Node] = {}
        self.edges: list[Edge] = []
        self._index: dict[tuple[str, str], int] = {}
        self._fact_seen: set[tuple[int, int, str]] = set()
        self._label_counts: dict[int, Counter] = {}
        self._next_id = 0

    # --- construction -----------------------------------------------------

    def get_or_create(self, kind: str, label: str, uri: Optional[str] = None) -> int:
        label = label.strip()
        key = (kind, label)
        node_id = self._index.get(key)
        if node_id is None:
            node_id = self._next_id
            self._next_id += 1
            self.nodes[node_id] = Node(id=node_id, kind=kind, label=label, uri=uri)
            self._index[key] = node_id
            self._label_counts[node_id] = Counter()
        node = self.nodes[node_id]
        if uri is not None and node.uri is None:
            node.uri = uri
        self._label_counts[node_id][label] += 1
        return node_id

    def add_node(self, node: Node) -> None:
        """Insert a fully-specified node (used by importers)."""
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node
        self._index[(node.kind, node.label)] = node.id
        self._label_counts[node.id] = Counter({node.label: 1})
        self._next_id = max(self._next_id, node.id + 1)

    def add_edge(
        self,
        relation: str,
        src: int,
        dst: int,
        date: Optional[dt.date] = None,
        provenance: Optional[str] = None,
    ) -> bool:
        """Add an edge, enforcing the endpoint-kind table.

        Fact edges deduplicate on (src, dst, relation); dated attackedBy
        edges always append. Returns True if an edge was added.
        """
        if relation not in RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        src_kind, dst_kind, dated = RELATIONS[relation]
        for node_id, want in ((src, src_kind), (dst, dst_kind)):
            node = self.nodes.get(node_id)
            if node is None:
                raise KeyError(f"node {node_id} not in graph")
            if node.kind != want:
                raise KindConflictError(
                    f"{relation} needs a {want} endpoint, "
                    f"but {node.label!r} exists as {node.kind}"
                )
        if dated and date is None:
            raise ValueError(f"{relation} edges carry a date")
        if not dated and date is not None:
            raise ValueError(f"{relation} edges carry no date")
        if not dated:
            key = (src, dst, relation)
            if key in self._fact_seen:
                return False
            self._fact_seen.add(key)
        self.edges.append(Edge(src, dst, relation, date, provenance))
        return True

    # --- queries ------------------------------------------------------------

    def find(self, kind: str, label: str) -> Optional[int]:
        return self._index.get((kind, label))

    def neighbors(self, node_id: int) -> set[int]:
        out: set[int] = set()
        for e in self.edges:
            if e.src == node_id:
                out.add(e.dst)
            elif e.dst == node_id:
                out.add(e.src)
        return out

    def neighbor_map(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {nid: set() for nid in self.nodes}
        for e in self.edges:
            adj[e.src].add(e.dst)
            adj[e.dst].add(e.src)
        return adj

    def degree(self, node_id: int) -> int:
        return sum(1 for e in self.edges if e.src == node_id) + sum(
            1 for e in self.edges if e.dst == node_id
        )

    def check_ontology(self) -> list[str]:
        """Full-scan endpoint-kind audit; returns human-readable violations."""
        problems = []
        for i, e in enumerate(self.edges):
            src_kind, dst_kind, dated = RELATIONS[e.relation]
            if self.nodes[e.src].kind != src_kind or self.nodes[e.dst].kind != dst_kind:
                problems.append(f"edge {i}: {e.relation} endpoint kinds violated")
            if dated != (e.date is not None):
                problems.append(f"edge {i}: {e.relation} date presence violated")
        return problems


def add_incident(
    graph: KnowledgeGraph,
    attack: AttackTriple,
    target_facts: Optional["LinkedFacts"] = None,
    incident: Optional[IncidentRecord] = None,
) -> KnowledgeGraph:
    """Insert one incident: target entity, attacker, dated attackedBy edge,
    and the union of DBpedia facts and dataset annotations."""
    uri = target_facts.uri if target_facts is not None else None
    target = graph.get_or_create("entity", attack.target, uri=uri)
    attacker = graph.get_or_create("attacker", attack.attacker)
    graph.add_edge("attackedBy", target, attacker, date=attack.date, provenance=attack.doc_id)

    industries: list[tuple[str, Optional[str]]] = []
    countries: list[tuple[str, Optional[str]]] = []
    products: list[tuple[str, Optional[str]]] = []
    parents: list[tuple[str, Optional[str]]] = []
    if target_facts is not None:
        industries += [(v, attack.doc_id) for v in target_facts.industries]
        countries += [(v, attack.doc_id) for v in target_facts.countries]
        products += [(v, attack.doc_id) for v in target_facts.products]
        if target_facts.parent:
            parents.append((target_facts.parent, attack.doc_id))
    if incident is not None:
        if incident.target_industry:
            industries.append((incident.target_industry, incident.id))
        countries += [(c, incident.id) for c in incident.country_codes]

    for label, prov in industries:
        graph.add_edge("hasIndustry", target, graph.get_or_create("industry", label), provenance=prov)
    for label, prov in countries:
        graph.add_edge("hasCountry", target, graph.get_or_create("country", label), provenance=prov)
    for label, prov in products:
        graph.add_edge("hasProduct", target, graph.get_or_create("product", label), provenance=prov)
    for label, prov in parents:
        graph.add_edge("hasParent", target, graph.get_or_create("entity", label), provenance=prov)
    return graph


# LinkedFacts is structurally the linking module's LinkedEntity; declared here
# as a protocol-ish dataclass to keep graph importable without linking.
@dataclass
class LinkedFacts:
    uri: Optional[str] = None
    industries: list[str] = field(default_factory=list)
    countries: list[str] = field(default_factory=list)
    products: list[str] = field(default_factory=list)
    parent: Optional[str] = None


# --- node resolution ---------------------------------------------------------

class _UnionFind:
    def __init__(self, items: list[int]):
        self.parent = {i: i for i in items}

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the smaller id as root for determinism
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


@dataclass(frozen=True)
class MergeRecord:
    kind: str
    kept_label: str
    merged_label: str
    similarity: float


def resolve_nodes(graph: KnowledgeGraph, similarity_threshold: float = 0.92) -> list[MergeRecord]:
    """Join sufficiently similar nodes within each kind (union-find closure).

    The canonical label of a merged node is its most frequent surface form;
    all other labels become aliases. Edges are re-pointed; fact edges that
    become duplicates collapse. Returns one record per absorbed node.
    """
    if not 0.0 < similarity_threshold <= 1.0:
        raise ValueError("similarity threshold must be in (0, 1]")
    by_kind: dict[str, list[int]] = {}
    for nid, node in graph.nodes.items():
        by_kind.setdefault(node.kind, []).append(nid)

    uf = _UnionFind(list(graph.nodes))
    pair_sim: dict[tuple[int, int], float] = {}
    for kind, ids in by_kind.items():
        ids.sort()
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                sim = similarity(graph.nodes[a].label, graph.nodes[b].label)
                if sim >= similarity_threshold:
                    uf.union(a, b)
                    pair_sim[(a, b)] = sim

    groups: dict[int, list[int]] = {}
    for nid in graph.nodes:
        groups.setdefault(uf.find(nid), []).append(nid)

    report: list[MergeRecord] = []
    id_map: dict[int, int] = {}
    new_nodes: dict[int, Node] = {}
    new_index: dict[tuple[str, str], int] = {}
    new_counts: dict[int, Counter] = {}
    for root in sorted(groups):
        members = sorted(groups[root])
        counts: Counter = Counter()
        for nid in members:
            counts.update(graph._label_counts[nid])
        canonical = min(counts, key=lambda lbl: (-counts[lbl], lbl))
        uri = next((graph.nodes[n].uri for n in members if graph.nodes[n].uri), None)
        aliases: set[str] = set()
        for nid in members:
            aliases |= graph.nodes[nid].aliases
        keep = Node(id=root, kind=graph.nodes[root].kind, label=canonical, uri=uri, aliases=aliases)
        new_nodes[root] = keep
        new_index[(keep.kind, keep.label)] = root
        new_counts[root] = counts
        for nid in members:
            id_map[nid] = root
            if nid != root or graph.nodes[nid].label != canonical:
                if graph.nodes[nid].label != canonical:
                    sim = pair_sim.get((min(root, nid), max(root, nid)))
                    if sim is None:
                        sim = similarity(canonical, graph.nodes[nid].label)
                    report.append(
                        MergeRecord(keep.kind, canonical, graph.nodes[nid].label, round(sim, 6))
                    )

    new_edges: list[Edge] = []
    fact_seen: set[tuple[int, int, str]] = set()
    for e in graph.edges:
        src, dst = id_map[e.src], id_map[e.dst]
        dated = RELATIONS[e.relation][2]
        if not dated:
            key = (src, dst, e.relation)
            if key in fact_seen:
                continue
            fact_seen.add(key)
        new_edges.append(Edge(src, dst, e.relation, e.date, e.provenance))

    graph.nodes = new_nodes
    graph.edges = new_edges
    graph._index = new_index
    graph._fact_seen = fact_seen
    graph._label_counts = new_counts
    return report


# --- centrals and projection ----------------------------------------------------

def classify_central(graph: KnowledgeGraph) -> set[int]:
    """Central nodes are exactly the country and industry nodes."""
    return {nid for nid, node in graph.nodes.items() if node.kind in CENTRAL_KINDS}


@dataclass
class Projection:
    nodes: set[int]
    edges: set[tuple[int, int]]        # stored with u < v, uniform unit weight

    def neighbors(self, node_id: int) -> set[int]:
        out = set()
        for u, v in self.edges:
            if u == node_id:
                out.add(v)
            elif v == node_id:
                out.add(u)
        return out


def project_centrals(graph: KnowledgeGraph) -> Projection:
    """Link two centrals iff some entity node is adjacent to both."""
    centrals = classify_central(graph)
    adj = graph.neighbor_map()
    edges: set[tuple[int, int]] = set()
    for nid, node in graph.nodes.items():
        if node.kind != "entity":
            continue
        shared = sorted(c for c in adj[nid] if c in centrals)
        for i, u in enumerate(shared):
            for v in shared[i + 1:]:
                edges.add((u, v))
    return Projection(nodes=centrals, edges=edges)


# --- stats ------------------------------------------------------------------------

PAPER_SCALE_REFERENCE = {
    "nodes": 12966,
    "edges": 18476,
    "attack_triples": 6825,
    "connected_components": 1,
    "note": "values reported for the authors' 2017-2021 dataset; shown for "
            "comparison only and not reproducible without that crawl",
}


def graph_stats(graph: KnowledgeGraph, top_k: int = 5) -> dict:
    nodes_by_kind = Counter(node.kind for node in graph.nodes.values())
    edges_by_relation = Counter(e.relation for e in graph.edges)
    degree = Counter()
    for e in graph.edges:
        degree[e.src] += 1
        degree[e.dst] += 1
    top_by_kind: dict[str, list[dict]] = {}
    for kind in KINDS:
        ranked = sorted(
            (n for n in graph.nodes.values() if n.kind == kind),
            key=lambda n: (-degree[n.id], n.label),
        )[:top_k]
        top_by_kind[kind] = [{"label": n.label, "degree": degree[n.id]} for n in ranked]

    adj = graph.neighbor_map()
    seen: set[int] = set()
    components = 0
    for nid in graph.nodes:
        if nid in seen:
            continue
        components += 1
        queue = deque([nid])
        seen.add(nid)
        while queue:
            cur = queue.popleft()
            for nxt in adj[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)

    return {
        "nodes": len(graph.nodes),
        "edges": len(graph.edges),
        "nodes_by_kind": {k: nodes_by_kind.get(k, 0) for k in KINDS},
        "edges_by_relation": {r: edges_by_relation.get(r, 0) for r in RELATIONS},
        "attack_triples": edges_by_relation.get("attackedBy", 0),
        "top_degree_by_kind": top_by_kind,
        "connected_components": components,
        "paper_scale_reference": PAPER_SCALE_REFERENCE,
    }


# --- export / import ----------------------------------------------------------------

_GRAPHML_NODE_KEYS = (("d0", "kind"), ("d1", "label"), ("d2", "uri"), ("d3", "aliases"))
_GRAPHML_EDGE_KEYS = (("d4", "relation"), ("d5", "date"), ("d6", "provenance"))


def _sorted_aliases(node: Node) -> list[str]:
    return sorted(node.aliases)


def export_graph(graph: KnowledgeGraph, fmt: str, path: str | Path) -> Path:
    path = Path(path)
    if fmt == "graphml":
        _write_graphml(graph, path)
    elif fmt == "dot":
        _write_dot(graph, path)
    elif fmt == "jsonl":
        _write_jsonl(graph, path)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return path


def import_graph(fmt: str, path: str | Path) -> KnowledgeGraph:
    path = Path(path)
    if fmt == "graphml":
        return _read_graphml(path)
    if fmt == "dot":
        return _read_dot(path)
    if fmt == "jsonl":
        return _read_jsonl(path)
    raise ValueError(f"unknown import format {fmt!r}")


def _write_graphml(graph: KnowledgeGraph, path: Path) -> None:
    root = ET.Element("graphml", xmlns="http://graphml.graphdrawing.org/xmlns")
    for key_id, name in _GRAPHML_NODE_KEYS:
        ET.SubElement(root, "key", id=key_id, attrib={"for": "node", "attr.name": name, "attr.type": "string"})
    for key_id, name in _GRAPHML_EDGE_KEYS:
        ET.SubElement(root, "key", id=key_id, attrib={"for": "edge", "attr.name": name, "attr.type": "string"})
    g = ET.SubElement(root, "graph", id="G", edgedefault="directed")
    for nid in sorted(graph.nodes):
        node = graph.nodes[nid]
        el = ET.SubElement(g, "node", id=f"n{nid}")
        values = {
            "kind": node.kind,
            "label": node.label,
            "uri": node.uri or "",
            "aliases": "|".join(_sorted_aliases(node)),
        }
        for key_id, name in _GRAPHML_NODE_KEYS:
            data = ET.SubElement(el, "data", key=key_id)
            data.text = values[name]
    for e in graph.edges:
        el = ET.SubElement(g, "edge", source=f"n{e.src}", target=f"n{e.dst}")
        values = {
            "relation": e.relation,
            "date": e.date.isoformat() if e.date else "",
            "provenance": e.provenance or "",
        }
        for key_id, name in _GRAPHML_EDGE_KEYS:
            data = ET.SubElement(el, "data", key=key_id)
            data.text = values[name]
    ET.indent(root)
    tree = ET.ElementTree(root)
    tree.write(path, encoding="utf-8", xml_declaration=True)


def _read_graphml(path: Path) -> KnowledgeGraph:
    ns = {"g": "http://graphml.graphdrawing.org/xmlns"}
    tree = ET.parse(path)
    root = tree.getroot()
    key_names = {}
    for key in root.findall("g:key", ns):
        key_names[key.get("id")] = key.get("attr.name")
    graph = KnowledgeGraph()
    g = root.find("g:graph", ns)
    for el in g.findall("g:node", ns):
        values = {key_names[d.get("key")]: (d.text or "") for d in el.findall("g:data", ns)}
        nid = int(el.get("id")[1:])
        aliases = set(values.get("aliases", "").split("|")) - {""}
        graph.add_node(
            Node(
                id=nid,
                kind=values["kind"],
                label=values["label"],
                uri=values.get("uri") or None,
                aliases=aliases,
            )
        )
    for el in g.findall("g:edge", ns):
        values = {key_names[d.get("key")]: (d.text or "") for d in el.findall("g:data", ns)}
        date = dt.date.fromisoformat(values["date"]) if values.get("date") else None
        graph.add_edge(
            values["relation"],
            int(el.get("source")[1:]),
            int(el.get("target")[1:]),
            date=date,
            provenance=values.get("provenance") or None,
        )
    return graph


def _dot_quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _write_dot(graph: KnowledgeGraph, path: Path) -> None:
    lines = ["digraph knowledge_graph {"]
    for nid in sorted(graph.nodes):
        node = graph.nodes[nid]
        attrs = [
            f"label={_dot_quote(node.label)}",
            f"kind={_dot_quote(node.kind)}",
            f"uri={_dot_quote(node.uri or '')}",
            f"aliases={_dot_quote('|'.join(_sorted_aliases(node)))}",
        ]
        lines.append(f"  n{nid} [{', '.join(attrs)}];")
    for e in graph.edges:
        attrs = [
            f"relation={_dot_quote(e.relation)}",
            f"color={_dot_quote(EDGE_COLORS[e.relation])}",
            f"date={_dot_quote(e.date.isoformat() if e.date else '')}",
            f"provenance={_dot_quote(e.provenance or '')}",
        ]
        lines.append(f"  n{e.src} -> n{e.dst} [{', '.join(attrs)}];")
    lines.append("}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


_DOT_NODE_RE = re.compile(r"^\s*n(\d+) \[(.*)\];$")
_DOT_EDGE_RE = re.compile(r"^\s*n(\d+) -> n(\d+) \[(.*)\];$")
_DOT_ATTR_RE = re.compile(r'(\w+)="((?:[^"\\]|\\.)*)"')


def _dot_attrs(raw: str) -> dict[str, str]:
    return {
        m.group(1): m.group(2).replace('\\"', '"').replace("\\\\", "\\")
        for m in _DOT_ATTR_RE.finditer(raw)
    }


def _read_dot(path: Path) -> KnowledgeGraph:
    graph = KnowledgeGraph()
    edges: list[tuple[int, int, dict[str, str]]] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        m = _DOT_EDGE_RE.match(line)
        if m:
            edges.append((int(m.group(1)), int(m.group(2)), _dot_attrs(m.group(3))))
            continue
        m = _DOT_NODE_RE.match(line)
        if m:
            attrs = _dot_attrs(m.group(2))
            aliases = set(attrs.get("aliases", "").split("|")) - {""}
            graph.add_node(
                Node(
                    id=int(m.group(1)),
                    kind=attrs["kind"],
                    label=attrs["label"],
                    uri=attrs.get("uri") or None,
                    aliases=aliases,
                )
            )
    for src, dst, attrs in edges:
        date = dt.date.fromisoformat(attrs["date"]) if attrs.get("date") else None
        graph.add_edge(attrs["relation"], src, dst, date=date, provenance=attrs.get("provenance") or None)
    return graph


def _write_jsonl(graph: KnowledgeGraph, path: Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for nid in sorted(graph.nodes):
            node = graph.nodes[nid]
            fh.write(
                json.dumps(
                    {
                        "type": "node",
                        "id": nid,
                        "kind": node.kind,
                        "label": node.label,
                        "uri": node.uri,
                        "aliases": _sorted_aliases(node),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
        for e in graph.edges:
            fh.write(
                json.dumps(
                    {
                        "type": "edge",
                        "src": e.src,
                        "dst": e.dst,
                        "relation": e.relation,
                        "date": e.date.isoformat() if e.date else None,
                        "provenance": e.provenance,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def _read_jsonl(path: Path) -> KnowledgeGraph:
    graph = KnowledgeGraph()
    edges = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if obj["type"] == "node":
            graph.add_node(
                Node(
                    id=obj["id"],
                    kind=obj["kind"],
                    label=obj["label"],
                    uri=obj.get("uri"),
                    aliases=set(obj.get("aliases", [])),
                )
            )
        elif obj["type"] == "edge":
            edges.append(obj)
    for obj in edges:
        date = dt.date.fromisoformat(obj["date"]) if obj.get("date") else None
        graph.add_edge(obj["relation"], obj["src"], obj["dst"], date=date, provenance=obj.get("provenance"))
    return graph


def write_merge_report(report: list[MergeRecord], path: str | Path) -> None:
    import csv

    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "kept_label", "merged_label", "similarity"])
        for rec in report:
            writer.writerow([rec.kind, rec.kept_label, rec.merged_label, f"{rec.similarity:.6f}"])
