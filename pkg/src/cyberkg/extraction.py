"""SVO triple extraction, target scoring and entity ranking.

Per document: phrases are carved out of each dependency-parsed sentence, the
sentence tree is collapsed into a coarse tree over those phrases, triples are
generated from predicate nodes and labeled active/passive, coref clusters map
subjects and objects onto named entities, attack-lexicon hits increment
per-entity target scores, and entities are ranked by a compound of min-max
normalized target score, mention frequency and reversed first-mention order.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .conllu import ParsedDocument, Sentence
from .errors import (
    EmptyCorpusError,
    NoEntitiesError,
    OverlappingPhrasesError,
    UnknownSeedError,
)
from .ingest import IncidentRecord
from .similarity import similarity

NOMINAL_POS = frozenset({"NOUN", "PROPN", "PRON"})
VERBAL_POS = frozenset({"VERB", "AUX"})
VP_RUN_POS = frozenset({"VERB", "AUX", "ADP", "PART", "ADJ", "ADV"})
CHUNK_CHILD_RELS = frozenset({"det", "amod", "compound", "nummod"})

SUBJECT_RELS = frozenset({"nsubj", "nsubj:pass", "csubj", "csubj:pass", "nsubjpass", "csubjpass"})
OBJECT_RELS = frozenset({"obj", "dobj", "iobj", "obl:agent", "agent"})
PASSIVE_AUX_RELS = frozenset({"aux:pass", "auxpass"})
PASSIVE_SUBJECT_RELS = frozenset({"nsubj:pass", "nsubjpass", "csubj:pass", "csubjpass"})

UNKNOWN_ATTACKER = "UNKNOWN"

_POS_KIND = {"ADP": "adposition", "ADV": "adverb", "ADJ": "adjective"}


# --- phrases ----------------------------------------------------------------

@dataclass(frozen=True)
class Phrase:
    kind: str                     # noun|verb|adposition|adverb|adjective
    start: int                    # 1-based, inclusive
    end: int
    head_token: int
    lemma_seq: tuple[str, ...]
    form_seq: tuple[str, ...]
    deprel_seq: tuple[str, ...]

    @property
    def text(self) -> str:
        return " ".join(self.form_seq)

    def covers(self, index: int) -> bool:
        return self.start <= index <= self.end


@dataclass(frozen=True)
class LightVerbEntry:
    verb: str
    noun: str
    adp: str


_LV_TOKEN_RE = re.compile(r"<(vb|nn|adp):([^>]+)>")


def load_light_verbs(path: Optional[str | Path] = None) -> list[LightVerbEntry]:
    if path is None:
        text = resources.files("cyberkg.data").joinpath("light_verbs.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    entries = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = _LV_TOKEN_RE.findall(line)
        if len(parts) != 3 or [p[0] for p in parts] != ["vb", "nn", "adp"]:
            raise ValueError(f"bad light-verb entry: {line!r}")
        entries.append(LightVerbEntry(parts[0][1], parts[1][1], parts[2][1]))
    return entries


def _light_verb_spans(sentence: Sentence, entries: list[LightVerbEntry]) -> list[tuple[int, int]]:
    """Token spans (start, end) of light-verb matches, leftmost first."""
    spans: list[tuple[int, int]] = []
    toks = sentence.tokens
    i = 0
    while i < len(toks) - 2:
        v, n, a = toks[i], toks[i + 1], toks[i + 2]
        hit = (
            v.upos in VERBAL_POS
            and n.upos == "NOUN"
            and a.upos == "ADP"
            and any(
                v.lemma.casefold() == e.verb
                and n.lemma.casefold() == e.noun
                and a.lemma.casefold() == e.adp
                for e in entries
            )
        )
        if hit:
            spans.append((v.index, a.index))
            i += 3
        else:
            i += 1
    return spans


def _make_phrase(sentence: Sentence, kind: str, start: int, end: int, head: int) -> Phrase:
    toks = [sentence.token(i) for i in range(start, end + 1)]
    return Phrase(
        kind=kind,
        start=start,
        end=end,
        head_token=head,
        lemma_seq=tuple(t.lemma for t in toks),
        form_seq=tuple(t.form for t in toks),
        deprel_seq=tuple(t.deprel for t in toks),
    )


def extract_phrases(
    sentence: Sentence,
    light_verbs: Optional[list[LightVerbEntry]] = None,
) -> list[Phrase]:
    """Verb phrases, base noun chunks and lone ADP/ADV/ADJ tokens.

    Verb phrases are maximal runs over {VERB, AUX, ADP, PART, ADJ, ADV}
    containing at least one verb/auxiliary; boundary tokens whose dependency
    head lies outside the run are shed (a passive agent's "by" belongs to the
    noun, a particle belongs to the verb). Light-verb constructions extend the
    run through their noun.
    """
    if light_verbs is None:
        light_verbs = load_light_verbs()
    n = len(sentence.tokens)
    lv_member: set[int] = set()
    for s, e in _light_verb_spans(sentence, light_verbs):
        lv_member.update(range(s, e + 1))

    claimed: set[int] = set()
    phrases: list[Phrase] = []

    # 1. verb phrases
    i = 1
    while i <= n:
        tok = sentence.token(i)
        if i in claimed or (tok.upos not in VP_RUN_POS and i not in lv_member):
            i += 1
            continue
        j = i
        while j + 1 <= n and (sentence.token(j + 1).upos in VP_RUN_POS or (j + 1) in lv_member):
            j += 1
        run = list(range(i, j + 1))
        i = j + 1
        if not any(sentence.token(k).upos in VERBAL_POS for k in run):
            continue
        # shed boundary tokens attached outside the run (light-verb members stay)
        changed = True
        while changed and len(run) > 1:
            changed = False
            for edge in (0, -1):
                if len(run) == 1:
                    break
                k = run[edge]
                tk = sentence.token(k)
                if tk.upos in VERBAL_POS or k in lv_member:
                    continue
                if not (run[0] <= tk.head <= run[-1]):
                    run.pop(edge)
                    changed = True
        verbs = [k for k in run if sentence.token(k).upos == "VERB"]
        auxes = [k for k in run if sentence.token(k).upos == "AUX"]
        head = verbs[-1] if verbs else auxes[-1]
        phrases.append(_make_phrase(sentence, "verb", run[0], run[-1], head))
        claimed.update(run)

    # 2. base noun chunks around unclaimed nominal heads
    for tok in sentence.tokens:
        if tok.index in claimed or tok.upos not in NOMINAL_POS:
            continue
        head_tok = sentence.token(tok.head) if tok.head > 0 else None
        if (
            head_tok is not None
            and tok.deprel in CHUNK_CHILD_RELS
            and head_tok.upos in NOMINAL_POS
            and head_tok.index not in claimed
        ):
            continue  # belongs to the larger chunk built around its head
        members = {tok.index}
        frontier = [tok.index]
        while frontier:
            idx = frontier.pop()
            for child in sentence.children(idx):
                if child.deprel in CHUNK_CHILD_RELS and child.index not in claimed:
                    members.add(child.index)
                    frontier.append(child.index)
        # restrict to the contiguous run around the head
        start = tok.index
        while start - 1 >= 1 and (start - 1) in members:
            start -= 1
        end = tok.index
        while end + 1 <= n and (end + 1) in members:
            end += 1
        phrases.append(_make_phrase(sentence, "noun", start, end, tok.index))
        claimed.update(range(start, end + 1))

    # 3. lone adpositions, adverbs, adjectives
    for tok in sentence.tokens:
        if tok.index not in claimed and tok.upos in _POS_KIND:
            phrases.append(_make_phrase(sentence, _POS_KIND[tok.upos], tok.index, tok.index, tok.index))
            claimed.add(tok.index)

    phrases.sort(key=lambda p: p.start)
    return phrases


# --- Hearst patterns ----------------------------------------------------------

@dataclass(frozen=True)
class HearstPattern:
    elements: tuple[str, ...]     # "HYPER" | "HYPO" | literal token


def load_hearst_patterns(path: Optional[str | Path] = None) -> list[HearstPattern]:
    if path is None:
        text = resources.files("cyberkg.data").joinpath("hearst_patterns.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    patterns = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        elements = tuple(line.split())
        slots = [e for e in elements if e in ("HYPER", "HYPO")]
        if sorted(slots) != ["HYPER", "HYPO"]:
            raise ValueError(f"pattern needs exactly one HYPER and one HYPO: {line!r}")
        patterns.append(HearstPattern(elements))
    return patterns


def _chunk_label(sentence: Sentence, start: int, end: int) -> str:
    forms = [
        sentence.token(i).form
        for i in range(start, end + 1)
        if sentence.token(i).upos != "DET"
    ]
    return " ".join(forms)


def apply_hearst_patterns(
    document: ParsedDocument,
    patterns: Optional[list[HearstPattern]] = None,
    light_verbs: Optional[list[LightVerbEntry]] = None,
) -> list[tuple[str, str]]:
    """(hypernym, hyponym) noun links matched from the bundled pattern list."""
    if patterns is None:
        patterns = load_hearst_patterns()
    links: list[tuple[str, str]] = []
    for sentence in document.sentences:
        chunks = [p for p in extract_phrases(sentence, light_verbs) if p.kind == "noun"]
        covering: dict[int, Phrase] = {}
        for c in chunks:
            for i in range(c.start, c.end + 1):
                covering[i] = c
        n = len(sentence.tokens)
        for first in chunks:
            for pattern in patterns:
                # a slot matches the chunk covering the position; the label is
                # trimmed to start there, so "other" in "and other retailers"
                # can serve as a pattern literal even inside the chunk
                slots: dict[str, tuple[int, int]] = {pattern.elements[0]: (first.start, first.end)}
                pos = first.end + 1
                ok = True
                for element in pattern.elements[1:]:
                    if element in ("HYPER", "HYPO"):
                        chunk = covering.get(pos)
                        if chunk is None:
                            ok = False
                            break
                        slots[element] = (pos, chunk.end)
                        pos = chunk.end + 1
                    else:
                        if pos > n or sentence.token(pos).form.casefold() != element.casefold():
                            ok = False
                            break
                        pos += 1
                if not ok:
                    continue
                links.append(
                    (_chunk_label(sentence, *slots["HYPER"]),
                     _chunk_label(sentence, *slots["HYPO"]))
                )
                # conjunction continuation: "X such as A, B and C"
                if pattern.elements[-1] in ("HYPER", "HYPO"):
                    tail_slot = pattern.elements[-1]
                    while pos <= n:
                        form = sentence.token(pos).form.casefold()
                        if form in (",", "and", "or"):
                            nxt = covering.get(pos + 1)
                            if nxt is not None and nxt.start == pos + 1:
                                pair = dict(slots)
                                pair[tail_slot] = (nxt.start, nxt.end)
                                links.append(
                                    (_chunk_label(sentence, *pair["HYPER"]),
                                     _chunk_label(sentence, *pair["HYPO"]))
                                )
                                pos = nxt.end + 1
                                continue
                        break
                break  # first matching pattern wins for this chunk
    return links


# --- coarse tree --------------------------------------------------------------

@dataclass
class CoarseNode:
    start: int
    end: int
    kind: str                     # phrase kind, or token UPOS for uncovered tokens
    text: str
    lemmas: tuple[str, ...]
    deprels: tuple[str, ...]
    phrase: Optional[Phrase] = None
    heads: tuple[int, ...] = ()   # token-level heads, aligned with the span

    @property
    def is_nominal(self) -> bool:
        return self.kind == "noun" or (self.phrase is None and self.kind in NOMINAL_POS)

    @property
    def is_predicate(self) -> bool:
        return self.kind == "verb"

    def governs_case_into(self, other: "CoarseNode") -> bool:
        """True if this node holds an adposition whose head sits in ``other``.

        Light-verb predicates end in an adposition ("gained access to"); the
        nominal that adposition marks is the predicate's complement even
        though its relation label is oblique.
        """
        for deprel, head in zip(self.deprels, self.heads):
            if deprel == "case" and other.start <= head <= other.end:
                return True
        return False


@dataclass
class CoarseTree:
    nodes: list[CoarseNode]
    edges: list[tuple[int, int, str]]      # (parent node, child node, deprel)
    root: int
    hearst: list[tuple[str, str]] = field(default_factory=list)

    def children(self, node: int) -> list[tuple[int, str]]:
        return [(c, rel) for p, c, rel in self.edges if p == node]


def build_coarse_tree(
    sentence: Sentence,
    phrases: list[Phrase],
    hearst: Optional[list[tuple[str, str]]] = None,
) -> CoarseTree:
    """Collapse phrase spans into single nodes, keeping crossing dep edges."""
    ordered = sorted(phrases, key=lambda p: p.start)
    for a, b in zip(ordered, ordered[1:]):
        if b.start <= a.end:
            raise OverlappingPhrasesError(
                f"phrases overlap at tokens {b.start}..{a.end}"
            )
    nodes: list[CoarseNode] = []
    token_node: dict[int, int] = {}
    covered: set[int] = set()
    for p in ordered:
        covered.update(range(p.start, p.end + 1))
    cursor = 0
    for tok in sentence.tokens:
        if tok.index in token_node:
            continue
        if cursor < len(ordered) and ordered[cursor].start == tok.index:
            p = ordered[cursor]
            cursor += 1
            heads = tuple(sentence.token(i).head for i in range(p.start, p.end + 1))
            nodes.append(
                CoarseNode(p.start, p.end, p.kind, p.text, p.lemma_seq, p.deprel_seq,
                           phrase=p, heads=heads)
            )
            for i in range(p.start, p.end + 1):
                token_node[i] = len(nodes) - 1
        elif tok.index not in covered:
            nodes.append(
                CoarseNode(tok.index, tok.index, tok.upos, tok.form, (tok.lemma,),
                           (tok.deprel,), heads=(tok.head,))
            )
            token_node[tok.index] = len(nodes) - 1
    edges: list[tuple[int, int, str]] = []
    seen: set[tuple[int, int]] = set()
    root = -1
    for tok in sentence.tokens:
        child_node = token_node[tok.index]
        if tok.head == 0:
            root = child_node
            continue
        parent_node = token_node[tok.head]
        if parent_node != child_node and (parent_node, child_node) not in seen:
            seen.add((parent_node, child_node))
            edges.append((parent_node, child_node, tok.deprel))
    return CoarseTree(nodes=nodes, edges=edges, root=root, hearst=list(hearst or []))


# --- triples -------------------------------------------------------------------

@dataclass(frozen=True)
class EntityMention:
    text: str
    label: str

    def key(self) -> tuple[str, str]:
        return (self.text, self.label)


@dataclass
class TripleSlot:
    text: str
    node: int
    span: tuple[int, int]
    role_label: str
    entity: Optional[EntityMention] = None

    def display(self) -> str:
        return self.entity.text if self.entity else self.text


@dataclass
class SvoTriple:
    subject: Optional[TripleSlot]
    predicate: TripleSlot
    object: Optional[TripleSlot]
    voice: str                    # active|passive
    sentence_index: int
    predicate_lemmas: tuple[str, ...] = ()
    predicate_deprels: tuple[str, ...] = ()


def label_voice(triple: SvoTriple) -> str:
    """Passive iff the predicate holds a passive auxiliary or the subject a
    passive-subject label."""
    if any(rel in PASSIVE_AUX_RELS for rel in triple.predicate_deprels):
        return "passive"
    if triple.subject is not None and triple.subject.role_label in PASSIVE_SUBJECT_RELS:
        return "passive"
    return "active"


def generate_triples(tree: CoarseTree, sentence_index: int = 0) -> list[SvoTriple]:
    """One triple per (subject, predicate, object) combination per predicate.

    Verb conjunct chains inherit the subject/object sets of their nearest
    conjunct ancestor when their own slot is empty.
    """
    predicates = [i for i, node in enumerate(tree.nodes) if node.is_predicate]
    own_subj: dict[int, list[tuple[int, str]]] = {}
    own_obj: dict[int, list[tuple[int, str]]] = {}
    conj_parent: dict[int, int] = {}
    for p in predicates:
        own_subj[p] = []
        own_obj[p] = []
        pred_node = tree.nodes[p]
        for child, rel in tree.children(p):
            node = tree.nodes[child]
            if rel in SUBJECT_RELS and node.is_nominal:
                own_subj[p].append((child, rel))
            elif rel in OBJECT_RELS and node.is_nominal:
                own_obj[p].append((child, rel))
            elif (
                rel in ("obl", "nmod")
                and node.is_nominal
                and pred_node.governs_case_into(node)
            ):
                # light-verb complement: the marking adposition sits in the predicate
                own_obj[p].append((child, rel))
            elif rel == "conj" and node.is_predicate:
                conj_parent[child] = p

    def inherited(p: int, table: dict[int, list[tuple[int, str]]]) -> list[tuple[int, str]]:
        cur = p
        seen = set()
        while cur not in seen:
            seen.add(cur)
            if table.get(cur):
                return table[cur]
            if cur not in conj_parent:
                return []
            cur = conj_parent[cur]
        return []

    triples: list[SvoTriple] = []
    for p in predicates:
        node = tree.nodes[p]
        subjects = inherited(p, own_subj)
        objects = inherited(p, own_obj)
        if not subjects and not objects:
            continue

        def slot(entry: Optional[tuple[int, str]]) -> Optional[TripleSlot]:
            if entry is None:
                return None
            idx, rel = entry
            n = tree.nodes[idx]
            return TripleSlot(text=n.text, node=idx, span=(n.start, n.end), role_label=rel)

        pred_slot_proto = (node.text, p, (node.start, node.end))
        for s_entry in subjects or [None]:
            for o_entry in objects or [None]:
                if s_entry is not None and o_entry is not None and s_entry[0] == o_entry[0]:
                    continue
                triple = SvoTriple(
                    subject=slot(s_entry),
                    predicate=TripleSlot(*pred_slot_proto, role_label="root"),
                    object=slot(o_entry),
                    voice="active",
                    sentence_index=sentence_index,
                    predicate_lemmas=node.lemmas,
                    predicate_deprels=node.deprels,
                )
                triple.voice = label_voice(triple)
                triples.append(triple)
    return triples


# --- entity collection and attachment -------------------------------------------

@dataclass
class EntityStats:
    entity: EntityMention
    frequency: int
    first_order: int


class EntityIndex:
    """Document-wide named entities, their mentions, and a span resolver."""

    def __init__(self, document: ParsedDocument):
        self.doc = document
        # sentence-local token offsets -> document-level order
        self._sent_offset: list[int] = []
        total = 0
        for sent in document.sentences:
            self._sent_offset.append(total)
            total += len(sent.tokens)

        ner_spans: list[tuple[int, int, int, EntityMention]] = []  # (sent, start, end, entity)
        for si, sent in enumerate(document.sentences):
            for label, s, e in sent.ner_spans():
                text = " ".join(sent.token(i).form for i in range(s, e + 1))
                ner_spans.append((si, s, e, EntityMention(text, label)))

        clusters: dict[int, list[tuple[int, int, int]]] = {}
        for si, sent in enumerate(document.sentences):
            for cid, s, e in sent.coref_mentions():
                clusters.setdefault(cid, []).append((si, s, e))

        # cluster -> entity: most frequent NER-labeled mention, tie -> earliest
        self.cluster_entity: dict[int, EntityMention] = {}
        for cid, mentions in sorted(clusters.items()):
            counts: dict[EntityMention, int] = {}
            first_seen: dict[EntityMention, int] = {}
            for si, s, e in mentions:
                for nsi, ns, ne, ent in ner_spans:
                    if nsi == si and not (ne < s or ns > e):
                        counts[ent] = counts.get(ent, 0) + 1
                        order = self._sent_offset[si] + s - 1
                        first_seen.setdefault(ent, order)
                        break
            if counts:
                best = min(counts, key=lambda ent: (-counts[ent], first_seen[ent]))
                self.cluster_entity[cid] = best

        # entity -> mentions (NER spans plus mentions of mapped clusters)
        mention_map: dict[EntityMention, list[tuple[int, int, int]]] = {}
        for si, s, e, ent in ner_spans:
            mention_map.setdefault(ent, []).append((si, s, e))
        for cid, mentions in sorted(clusters.items()):
            ent = self.cluster_entity.get(cid)
            if ent is None:
                continue
            mention_map.setdefault(ent, []).extend(mentions)

        self.stats: dict[EntityMention, EntityStats] = {}
        self._mentions: dict[EntityMention, list[tuple[int, int, int]]] = {}
        for ent, mentions in mention_map.items():
            merged = self._merge_overlapping(mentions)
            first = min(self._sent_offset[si] + s - 1 for si, s, e in merged)
            self.stats[ent] = EntityStats(ent, frequency=len(merged), first_order=first)
            self._mentions[ent] = merged

        self._ner_spans = ner_spans
        self._clusters = clusters

    def mention_spans(self, entity: EntityMention) -> list[tuple[int, int, int]]:
        """Merged (sentence, start, end) mention spans of an entity."""
        return list(self._mentions.get(entity, []))

    @staticmethod
    def _merge_overlapping(mentions: list[tuple[int, int, int]]) -> list[tuple[int, int, int]]:
        out: list[tuple[int, int, int]] = []
        for si, s, e in sorted(set(mentions)):
            if out and out[-1][0] == si and s <= out[-1][2]:
                prev = out.pop()
                out.append((si, min(prev[1], s), max(prev[2], e)))
            else:
                out.append((si, s, e))
        return out

    def resolve(self, sentence_index: int, span: tuple[int, int]) -> Optional[EntityMention]:
        """Entity for a phrase span: its coref cluster's entity if any,
        else a directly overlapping NER span's entity."""
        s, e = span
        sent = self.doc.sentences[sentence_index]
        for cid, cs, ce in sent.coref_mentions():
            if not (ce < s or cs > e) and cid in self.cluster_entity:
                return self.cluster_entity[cid]
        for nsi, ns, ne, ent in self._ner_spans:
            if nsi == sentence_index and not (ne < s or ns > e):
                return ent
        return None

    def entities(self) -> list[EntityStats]:
        return sorted(self.stats.values(), key=lambda st: (st.first_order, st.entity.key()))


def attach_entities(
    document: ParsedDocument,
    triples: list[SvoTriple],
    index: Optional[EntityIndex] = None,
) -> list[SvoTriple]:
    """Replace subject/object phrases with the named entities of their
    coref clusters (or directly overlapping NER spans)."""
    if index is None:
        index = EntityIndex(document)
    for triple in triples:
        for slot in (triple.subject, triple.object):
            if slot is not None:
                slot.entity = index.resolve(triple.sentence_index, slot.span)
    return triples


# --- attack lexicon and scoring ---------------------------------------------------

@dataclass(frozen=True)
class AttackLexicon:
    tokens: frozenset[str]

    def __contains__(self, token: str) -> bool:
        return token.casefold() in self.tokens

    def hit(self, lemmas: tuple[str, ...], forms: tuple[str, ...] = ()) -> bool:
        """Lexicon matched on lemma or lowercase surface form."""
        return any(x.casefold() in self.tokens for x in (*lemmas, *forms))


_VOWELS = "aeiou"


def _regular_inflections(seed: str) -> set[str]:
    forms = {seed}
    if seed.endswith(("s", "x", "z", "ch", "sh")):
        forms.add(seed + "es")
    elif seed.endswith("y") and len(seed) > 1 and seed[-2] not in _VOWELS:
        forms.add(seed[:-1] + "ies")
    else:
        forms.add(seed + "s")
    if seed.endswith("e"):
        forms.add(seed + "d")
        forms.add(seed[:-1] + "ing")
    elif seed.endswith("y") and len(seed) > 1 and seed[-2] not in _VOWELS:
        forms.add(seed[:-1] + "ied")
        forms.add(seed + "ing")
    else:
        forms.add(seed + "ed")
        forms.add(seed + "ing")
    return forms


def load_inflection_table(path: Optional[str | Path] = None) -> dict[str, set[str]]:
    if path is None:
        text = resources.files("cyberkg.data").joinpath("attack_inflections.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    table: dict[str, set[str]] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        seed, _, forms = line.partition(":")
        table[seed.strip()] = set(forms.split())
    return table


DEFAULT_SEEDS = tuple(sorted(load_inflection_table().keys()))


def expand_attack_lexicon(
    seeds: list[str],
    inflection_table: Optional[str | Path | dict[str, set[str]]] = None,
) -> AttackLexicon:
    """Lexicon = seeds plus all listed inflections.

    Seeds absent from the table fall back to regular verb morphology; seeds
    that are not plain lowercase words raise UnknownSeedError.
    """
    if isinstance(inflection_table, dict):
        table = inflection_table
    else:
        table = load_inflection_table(inflection_table)
    tokens: set[str] = set()
    for seed in seeds:
        if seed in table:
            tokens.add(seed)
            tokens.update(table[seed])
        elif re.fullmatch(r"[a-z]+", seed):
            tokens.update(_regular_inflections(seed))
        else:
            raise UnknownSeedError(f"cannot inflect seed {seed!r}")
    return AttackLexicon(frozenset(tokens))


def load_attack_lexicon(path: str | Path) -> AttackLexicon:
    """Flat lexicon file: one token per line, '#' comments."""
    tokens = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            tokens.add(line.casefold())
    return AttackLexicon(frozenset(tokens))


def default_attack_lexicon() -> AttackLexicon:
    return expand_attack_lexicon(list(DEFAULT_SEEDS))


def _predicate_hits(triple: SvoTriple, lexicon: AttackLexicon) -> bool:
    forms = tuple(triple.predicate.text.split())
    return lexicon.hit(triple.predicate_lemmas, forms)


def score_targets(
    triples: list[SvoTriple], lexicon: AttackLexicon
) -> dict[tuple[str, str], int]:
    """Attack-token rule: active voice scores the object entity, passive
    voice scores the subject entity, +1 per triple."""
    scores: dict[tuple[str, str], int] = {}
    for triple in triples:
        if not _predicate_hits(triple, lexicon):
            continue
        slot = triple.object if triple.voice == "active" else triple.subject
        if slot is not None and slot.entity is not None:
            key = slot.entity.key()
            scores[key] = scores.get(key, 0) + 1
    return scores


# --- ranking --------------------------------------------------------------------

@dataclass(frozen=True)
class EntityScore:
    entity: EntityMention
    target_score: int
    frequency: int
    first_order: int
    compound: float


def _minmax(values: list[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def rank_entities(
    document: ParsedDocument,
    scores: dict[tuple[str, str], int],
    index: Optional[EntityIndex] = None,
) -> list[EntityScore]:
    """Descending compound = minmax(score) + minmax(freq) + minmax(reversed order)."""
    if index is None:
        index = EntityIndex(document)
    stats = index.entities()
    if not stats:
        raise NoEntitiesError(f"no named entities in {document.doc_id}")
    raw_scores = [float(scores.get(st.entity.key(), 0)) for st in stats]
    raw_freq = [float(st.frequency) for st in stats]
    raw_order = [float(st.first_order) for st in stats]
    mm_score = _minmax(raw_scores)
    mm_freq = _minmax(raw_freq)
    mm_rev_order = _minmax([-x for x in raw_order])
    ranked = [
        EntityScore(
            entity=st.entity,
            target_score=int(raw_scores[i]),
            frequency=st.frequency,
            first_order=st.first_order,
            compound=mm_score[i] + mm_freq[i] + mm_rev_order[i],
        )
        for i, st in enumerate(stats)
    ]
    ranked.sort(
        key=lambda es: (-es.compound, -es.target_score, es.first_order, es.entity.key())
    )
    return ranked


# --- attack triple -----------------------------------------------------------------

@dataclass
class AttackTriple:
    target: str
    attacker: str
    date: dt.date
    doc_id: str
    rank_of_target: int = 1


def select_attack_triple(
    document: ParsedDocument,
    ranked: list[EntityScore],
    triples: list[SvoTriple],
    incident: Optional[IncidentRecord] = None,
    lexicon: Optional[AttackLexicon] = None,
) -> AttackTriple:
    """Target = rank-1 entity; attacker from triple evidence, then the
    incident annotation, then UNKNOWN."""
    if not ranked:
        raise NoEntitiesError("empty ranking")
    if lexicon is None:
        lexicon = default_attack_lexicon()
    target = ranked[0].entity

    def best_candidate(voice: str, slot_of_target: str, attacker_slot: str) -> Optional[str]:
        best: Optional[str] = None
        best_order = -1
        for triple in triples:
            if triple.voice != voice or not _predicate_hits(triple, lexicon):
                continue
            tslot = getattr(triple, slot_of_target)
            aslot = getattr(triple, attacker_slot)
            if tslot is None or aslot is None or tslot.entity != target:
                continue
            if triple.sentence_index > best_order:
                best_order = triple.sentence_index
                best = aslot.display()
        return best

    attacker = best_candidate("active", "object", "subject")
    if attacker is None:
        attacker = best_candidate("passive", "subject", "object")
    if attacker is None and incident is not None and incident.attacker_label:
        attacker = incident.attacker_label
    if attacker is None:
        attacker = UNKNOWN_ATTACKER

    date = incident.date if incident is not None else document.date
    if date is None:
        raise ValueError(f"no date available for {document.doc_id}")
    return AttackTriple(
        target=target.text, attacker=attacker, date=date, doc_id=document.doc_id
    )


# --- per-document pipeline -----------------------------------------------------------

@dataclass
class DocumentExtraction:
    doc_id: str
    triples: list[SvoTriple]
    ranking: list[EntityScore]
    attack: AttackTriple
    hearst: list[tuple[str, str]]

    def to_json_obj(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "triples": [
                {
                    "subj": t.subject.display() if t.subject else None,
                    "pred": t.predicate.text,
                    "obj": t.object.display() if t.object else None,
                    "voice": t.voice,
                    "sentence": t.sentence_index,
                }
                for t in self.triples
            ],
            "ranking": [
                {
                    "entity": es.entity.text,
                    "target_score": es.target_score,
                    "frequency": es.frequency,
                    "first_order": es.first_order,
                    "compound": round(es.compound, 10),
                }
                for es in self.ranking
            ],
            "attack_triple": {
                "target": self.attack.target,
                "attacker": self.attack.attacker,
                "date": self.attack.date.isoformat(),
            },
        }


def extract_document(
    document: ParsedDocument,
    incident: Optional[IncidentRecord] = None,
    lexicon: Optional[AttackLexicon] = None,
    light_verbs: Optional[list[LightVerbEntry]] = None,
    hearst_patterns: Optional[list[HearstPattern]] = None,
) -> DocumentExtraction:
    """Run the full extraction stack over one parsed document."""
    if lexicon is None:
        lexicon = default_attack_lexicon()
    if light_verbs is None:
        light_verbs = load_light_verbs()
    hearst = apply_hearst_patterns(document, hearst_patterns, light_verbs)
    index = EntityIndex(document)
    triples: list[SvoTriple] = []
    for si, sentence in enumerate(document.sentences):
        phrases = extract_phrases(sentence, light_verbs)
        tree = build_coarse_tree(sentence, phrases, hearst=None)
        triples.extend(generate_triples(tree, sentence_index=si))
    attach_entities(document, triples, index)
    scores = score_targets(triples, lexicon)
    ranking = rank_entities(document, scores, index)
    attack = select_attack_triple(document, ranking, triples, incident, lexicon)
    return DocumentExtraction(
        doc_id=document.doc_id, triples=triples, ranking=ranking, attack=attack, hearst=hearst
    )


# --- ranking evaluation ----------------------------------------------------------------

def evaluate_ranking(
    corpus: list[tuple[ParsedDocument, str]],
    k: int,
    mode: str = "compound",
    match_threshold: float = 0.92,
    lexicon: Optional[AttackLexicon] = None,
    light_verbs: Optional[list[LightVerbEntry]] = None,
) -> float:
    """Fraction of documents whose gold target is in the top-k entities.

    ``mode`` "compound" uses the full compound score; "frequency" ranks by
    mention frequency alone (the paper's baseline comparison).
    """
    if not corpus:
        raise EmptyCorpusError("no documents to evaluate")
    if lexicon is None:
        lexicon = default_attack_lexicon()
    hits = 0
    for document, gold in corpus:
        index = EntityIndex(document)
        triples: list[SvoTriple] = []
        for si, sentence in enumerate(document.sentences):
            phrases = extract_phrases(sentence, light_verbs)
            tree = build_coarse_tree(sentence, phrases)
            triples.extend(generate_triples(tree, sentence_index=si))
        attach_entities(document, triples, index)
        scores = score_targets(triples, lexicon)
        ranked = rank_entities(document, scores, index)
        if mode == "frequency":
            ranked = sorted(
                ranked, key=lambda es: (-es.frequency, es.first_order, es.entity.key())
            )
        elif mode != "compound":
            raise ValueError(f"unknown ranking mode {mode!r}")
        top = ranked[:k]
        if any(similarity(gold, es.entity.text) >= match_threshold for es in top):
            hits += 1
    return hits / len(corpus)
