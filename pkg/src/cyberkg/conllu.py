"""Reader, validator and writer for the enriched CoNLL-U dialect.

Standard 10 columns. The MISC column carries pipe-separated annotations
``NER=<LABEL>:<B|I>`` and ``Coref=<uint>``. Documents are delimited by
``# newdoc id = <doc_id>`` lines, sentences by blank lines. A document may
carry a ``# date = YYYY-MM-DD`` comment used as a fallback incident date.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from .errors import FormatError, InvariantError

N_COLUMNS = 10

_NER_RE = re.compile(r"^NER=([A-Za-z_]+):([BI])$")
_COREF_RE = re.compile(r"^Coref=(\d+)$")


@dataclass(frozen=True)
class Token:
    index: int                      # 1-based, sentence-local
    form: str
    lemma: str
    upos: str
    head: int                       # 0 = sentence root
    deprel: str
    ner_label: Optional[str] = None
    ner_pos: Optional[str] = None   # "B" or "I"
    coref: Optional[int] = None


@dataclass
class Sentence:
    tokens: list[Token]
    sent_id: Optional[str] = None
    text: Optional[str] = None

    def __len__(self) -> int:
        return len(self.tokens)

    def token(self, index: int) -> Token:
        """1-based lookup."""
        return self.tokens[index - 1]

    def root_index(self) -> int:
        for tok in self.tokens:
            if tok.head == 0:
                return tok.index
        raise InvariantError("sentence has no root")

    def children(self, index: int) -> list[Token]:
        return [t for t in self.tokens if t.head == index]

    def ner_spans(self) -> list[tuple[str, int, int]]:
        """Contiguous (label, start, end) spans, 1-based inclusive."""
        spans: list[tuple[str, int, int]] = []
        open_label, open_start = None, 0
        for tok in self.tokens:
            if tok.ner_pos == "B":
                if open_label is not None:
                    spans.append((open_label, open_start, tok.index - 1))
                open_label, open_start = tok.ner_label, tok.index
            elif tok.ner_pos == "I":
                pass  # contiguity validated at load time
            else:
                if open_label is not None:
                    spans.append((open_label, open_start, tok.index - 1))
                    open_label = None
        if open_label is not None:
            spans.append((open_label, open_start, self.tokens[-1].index))
        return spans

    def coref_mentions(self) -> list[tuple[int, int, int]]:
        """Maximal runs of a shared cluster id as (cluster, start, end)."""
        mentions: list[tuple[int, int, int]] = []
        cur, start = None, 0
        for tok in self.tokens:
            if tok.coref != cur:
                if cur is not None:
                    mentions.append((cur, start, tok.index - 1))
                cur, start = tok.coref, tok.index
        if cur is not None:
            mentions.append((cur, start, self.tokens[-1].index))
        return mentions


@dataclass
class ParsedDocument:
    doc_id: str
    sentences: list[Sentence]
    date: Optional[dt.date] = None
    comments: dict[str, str] = field(default_factory=dict)

    def text(self) -> str:
        """Canonical document text: token forms joined by single spaces."""
        return " ".join(" ".join(t.form for t in s.tokens) for s in self.sentences)

    def token_char_spans(self) -> dict[tuple[int, int], tuple[int, int]]:
        """(sentence_idx, token_idx) -> [start, end) offsets in text()."""
        spans: dict[tuple[int, int], tuple[int, int]] = {}
        pos = 0
        for si, sent in enumerate(self.sentences):
            for tok in sent.tokens:
                spans[(si, tok.index)] = (pos, pos + len(tok.form))
                pos += len(tok.form) + 1
        return spans


def _parse_misc(misc: str, lineno: int) -> tuple[Optional[str], Optional[str], Optional[int]]:
    ner_label = ner_pos = None
    coref = None
    if misc == "_":
        return None, None, None
    for item in misc.split("|"):
        m = _NER_RE.match(item)
        if m:
            ner_label, ner_pos = m.group(1), m.group(2)
            continue
        m = _COREF_RE.match(item)
        if m:
            coref = int(m.group(1))
            continue
        raise FormatError(f"line {lineno}: unknown MISC annotation {item!r}")
    return ner_label, ner_pos, coref


def _parse_token(line: str, lineno: int) -> Token:
    cols = line.split("\t")
    if len(cols) != N_COLUMNS:
        raise FormatError(f"line {lineno}: expected {N_COLUMNS} columns, got {len(cols)}")
    try:
        index = int(cols[0])
    except ValueError:
        raise FormatError(f"line {lineno}: non-integer token id {cols[0]!r}") from None
    try:
        head = int(cols[6])
    except ValueError:
        raise FormatError(f"line {lineno}: non-integer head {cols[6]!r}") from None
    ner_label, ner_pos, coref = _parse_misc(cols[9], lineno)
    return Token(
        index=index,
        form=cols[1],
        lemma=cols[2],
        upos=cols[3],
        head=head,
        deprel=cols[7],
        ner_label=ner_label,
        ner_pos=ner_pos,
        coref=coref,
    )


def _validate_sentence(sent: Sentence, lineno: int) -> None:
    """Enforce tree and span invariants; lineno points at the sentence start."""
    n = len(sent.tokens)
    for i, tok in enumerate(sent.tokens, start=1):
        if tok.index != i:
            raise FormatError(f"line {lineno}: token ids not sequential at {tok.index}")
    roots = [t for t in sent.tokens if t.head == 0]
    if len(roots) > 1:
        raise InvariantError(f"line {lineno}: multiple roots in sentence")
    if not roots:
        raise InvariantError(f"line {lineno}: sentence has no root")
    for tok in sent.tokens:
        if tok.head < 0 or tok.head > n:
            raise InvariantError(
                f"line {lineno}: dangling head {tok.head} in {n}-token sentence"
            )
        if tok.head == tok.index:
            raise InvariantError(f"line {lineno}: token {tok.index} is its own head")
    # acyclicity: every token must reach the root
    for tok in sent.tokens:
        seen = set()
        cur = tok.index
        while cur != 0:
            if cur in seen:
                raise InvariantError(f"line {lineno}: head cycle at token {tok.index}")
            seen.add(cur)
            cur = sent.token(cur).head
    # NER B/I contiguity
    prev: Optional[Token] = None
    for tok in sent.tokens:
        if tok.ner_pos == "I":
            if prev is None or prev.ner_pos not in ("B", "I") or prev.ner_label != tok.ner_label:
                raise InvariantError(
                    f"line {lineno}: NER continuation without opening span at token {tok.index}"
                )
        if (tok.ner_label is None) != (tok.ner_pos is None):
            raise FormatError(f"line {lineno}: incomplete NER annotation at token {tok.index}")
        prev = tok


def iter_documents(path: str | Path) -> Iterator[ParsedDocument]:
    """Yield validated documents from an enriched CoNLL-U file."""
    doc: Optional[ParsedDocument] = None
    pending: list[Token] = []
    pending_line = 0
    sent_meta: dict[str, str] = {}

    def flush_sentence() -> None:
        nonlocal pending, sent_meta
        if not pending:
            sent_meta = {}
            return
        if doc is None:
            raise FormatError(f"line {pending_line}: token outside any '# newdoc id' block")
        sent = Sentence(pending, sent_id=sent_meta.get("sent_id"), text=sent_meta.get("text"))
        _validate_sentence(sent, pending_line)
        doc.sentences.append(sent)
        pending, sent_meta = [], {}

    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line.startswith("# newdoc id = "):
                flush_sentence()
                if doc is not None:
                    yield doc
                doc = ParsedDocument(doc_id=line[len("# newdoc id = "):].strip(), sentences=[])
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    key, value = key.strip(), value.strip()
                    if key in ("sent_id", "text"):
                        sent_meta[key] = value
                    elif doc is not None and not doc.sentences and not pending:
                        doc.comments[key] = value
                        if key == "date":
                            try:
                                doc.date = dt.date.fromisoformat(value)
                            except ValueError:
                                raise FormatError(f"line {lineno}: bad document date {value!r}") from None
                continue
            if not line.strip():
                flush_sentence()
                continue
            if not pending:
                pending_line = lineno
            pending.append(_parse_token(line, lineno))
    flush_sentence()
    if doc is not None:
        yield doc


def load_parsed_documents(path: str | Path) -> list[ParsedDocument]:
    docs = list(iter_documents(path))
    if not docs:
        raise FormatError(f"{path}: no '# newdoc id' block found")
    return docs


def load_parsed_document(path: str | Path) -> ParsedDocument:
    """Load a file that holds exactly one document."""
    docs = load_parsed_documents(path)
    if len(docs) != 1:
        raise FormatError(f"{path}: expected a single document, found {len(docs)}")
    return docs[0]


def _misc_field(tok: Token) -> str:
    parts = []
    if tok.ner_label is not None:
        parts.append(f"NER={tok.ner_label}:{tok.ner_pos}")
    if tok.coref is not None:
        parts.append(f"Coref={tok.coref}")
    return "|".join(parts) if parts else "_"


def write_documents(docs: list[ParsedDocument], path: str | Path) -> None:
    lines: list[str] = []
    for doc in docs:
        lines.append(f"# newdoc id = {doc.doc_id}")
        for key, value in doc.comments.items():
            lines.append(f"# {key} = {value}")
        for sent in doc.sentences:
            if sent.sent_id:
                lines.append(f"# sent_id = {sent.sent_id}")
            if sent.text:
                lines.append(f"# text = {sent.text}")
            for tok in sent.tokens:
                lines.append(
                    "\t".join(
                        (
                            str(tok.index), tok.form, tok.lemma, tok.upos, "_", "_",
                            str(tok.head), tok.deprel, "_", _misc_field(tok),
                        )
                    )
                )
            lines.append("")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
