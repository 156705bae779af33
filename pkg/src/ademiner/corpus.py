"""Corpus ingestion: CoNLL tagging data, JSONL documents, relation candidates.

The entity scheme is fixed to two labels, ADE and Drug, tagged with the IOB
scheme (O, B-ADE, I-ADE, B-Drug, I-Drug). Malformed IOB (an I-X that does
not continue an X chunk) is repaired by promoting it to B-X; repairs are
counted and reported, never silently absorbed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ademiner.errors import (
    ConfigurationError,
    ConsistencyError,
    DataFormatError,
    DependencyStructureError,
    SpanAlignmentError,
    SpanError,
)
from ademiner.tokenization import Token, tokenize

logger = logging.getLogger(__name__)

ENTITY_LABELS = ("ADE", "Drug")
TAGSET = ("O", "B-ADE", "I-ADE", "B-Drug", "I-Drug")
RELATION_LABELS = ("Negative", "Positive")
CLASS_LABELS = ("NEG", "ADE")


@dataclass(frozen=True, order=True)
class EntitySpan:
    """Half-open token span [start, end) carrying an entity label."""

    start: int
    end: int
    label: str

    def __post_init__(self):
        if self.label not in ENTITY_LABELS:
            raise SpanError(f"unknown entity label {self.label!r}, expected one of {ENTITY_LABELS}")
        if not 0 <= self.start < self.end:
            raise SpanError(f"invalid span boundaries [{self.start}, {self.end})")

    def overlaps(self, other):
        return self.start < other.end and other.start < self.end


def validate_dep_heads(heads):
    """Heads must form a single-rooted forest: indices or -1, no cycles."""
    n = len(heads)
    roots = 0
    for i, h in enumerate(heads):
        if h == -1:
            roots += 1
        elif not 0 <= h < n:
            raise DependencyStructureError(f"head of token {i} is {h}, outside [0, {n})")
        if h == i:
            raise DependencyStructureError(f"token {i} is its own head")
    if n and roots == 0:
        raise DependencyStructureError("no root token (-1 head) present")
    for i in range(n):
        seen = set()
        node = i
        while node != -1:
            if node in seen:
                raise DependencyStructureError(f"cycle through token {node}")
            seen.add(node)
            node = heads[node]


@dataclass
class Document:
    """A tokenized text with optional gold annotations."""

    doc_id: str
    tokens: list
    text: str | None = None
    gold_class: str | None = None
    gold_spans: list | None = None
    gold_relations: list | None = None
    dep_heads: list | None = None

    def __post_init__(self):
        if self.gold_class is not None and self.gold_class not in CLASS_LABELS:
            raise DataFormatError(f"unknown document class {self.gold_class!r}")
        if self.gold_spans is not None:
            for span in self.gold_spans:
                if span.end > len(self.tokens):
                    raise SpanError(f"span {span} exceeds document length {len(self.tokens)}")
        if self.dep_heads is not None:
            if len(self.dep_heads) != len(self.tokens):
                raise DependencyStructureError(
                    f"{len(self.dep_heads)} heads for {len(self.tokens)} tokens")
            validate_dep_heads(self.dep_heads)

    def token_texts(self):
        return [t.text for t in self.tokens]

    def span_text(self, span):
        if self.text is not None:
            return self.text[self.tokens[span.start].start:self.tokens[span.end - 1].end]
        return " ".join(t.text for t in self.tokens[span.start:span.end])


@dataclass(frozen=True)
class RelationCandidate:
    """An (ADE span, Drug span) pair within one document."""

    ade: EntitySpan
    drug: EntitySpan
    doc_id: str
    label: str = "Unlabeled"

    def __post_init__(self):
        if self.ade.label != "ADE":
            raise SpanError(f"relation candidate ade slot has label {self.ade.label!r}")
        if self.drug.label != "Drug":
            raise SpanError(f"relation candidate drug slot has label {self.drug.label!r}")
        if self.label not in RELATION_LABELS + ("Unlabeled",):
            raise SpanError(f"unknown relation label {self.label!r}")


@dataclass
class CorpusStats:
    n_sentences: int = 0
    n_tokens: int = 0
    n_entities: dict = field(default_factory=lambda: {label: 0 for label in ENTITY_LABELS})
    n_positive_relations: int = 0
    n_negative_relations: int = 0

    def to_dict(self):
        return {
            "sentences": self.n_sentences,
            "tokens": self.n_tokens,
            "entities": dict(self.n_entities),
            "positive_relations": self.n_positive_relations,
            "negative_relations": self.n_negative_relations,
        }


# ---------------------------------------------------------------------------
# IOB encode / decode


def decode_iob(tags, repair=True):
    """Tags -> spans. Returns (spans, repair_count).

    An I-X that does not continue an X chunk is promoted to B-X when
    ``repair`` is set; otherwise it raises.
    """
    spans = []
    repairs = 0
    current_start = None
    current_label = None

    def close(end):
        nonlocal current_start, current_label
        if current_label is not None:
            spans.append(EntitySpan(current_start, end, current_label))
        current_start = current_label = None

    for i, tag in enumerate(tags):
        if tag == "O":
            close(i)
            continue
        if "-" not in tag:
            raise DataFormatError(f"malformed tag {tag!r} at position {i}")
        prefix, label = tag.split("-", 1)
        if label not in ENTITY_LABELS or prefix not in ("B", "I"):
            raise DataFormatError(f"unknown tag {tag!r} at position {i}")
        if prefix == "B":
            close(i)
            current_start, current_label = i, label
        else:  # I-
            if current_label == label:
                continue
            if not repair:
                raise DataFormatError(f"dangling {tag!r} at position {i}")
            repairs += 1
            close(i)
            current_start, current_label = i, label
    close(len(tags))
    return spans, repairs


def encode_iob(spans, length):
    """Spans -> tags; overlapping spans cannot be expressed and raise."""
    tags = ["O"] * length
    for span in sorted(spans):
        if span.end > length:
            raise SpanError(f"span {span} exceeds sequence length {length}")
        for i in range(span.start, span.end):
            if tags[i] != "O":
                raise SpanError(f"overlapping spans at token {i}: IOB cannot encode overlap")
            tags[i] = ("B-" if i == span.start else "I-") + span.label
    return tags


def iob_to_bioes(tags):
    """Conversion target only; training always uses IOB."""
    spans, _ = decode_iob(list(tags))
    out = ["O"] * len(tags)
    for span in spans:
        if span.end - span.start == 1:
            out[span.start] = f"S-{span.label}"
        else:
            out[span.start] = f"B-{span.label}"
            for i in range(span.start + 1, span.end - 1):
                out[i] = f"I-{span.label}"
            out[span.end - 1] = f"E-{span.label}"
    return out


# ---------------------------------------------------------------------------
# CoNLL


def _synthetic_tokens(words):
    tokens = []
    pos = 0
    for word in words:
        tokens.append(Token(word, pos, pos + len(word)))
        pos += len(word) + 1
    return tokens


def read_conll(path):
    """Token-per-line file with a trailing tag column; blank lines separate
    sentences. Returns documents with decoded gold spans; IOB repairs are
    counted and logged."""
    path = Path(path)
    documents = []
    words, tags, tag_lines = [], [], []
    total_repairs = 0

    def flush(line_no):
        nonlocal total_repairs
        if not words:
            return
        try:
            spans, repairs = decode_iob(tags)
        except DataFormatError as exc:
            raise DataFormatError(str(exc), line=tag_lines[0]) from exc
        total_repairs += repairs
        tokens = _synthetic_tokens(words)
        documents.append(Document(
            doc_id=f"{path.name}#{len(documents)}",
            tokens=tokens,
            text=" ".join(words),
            gold_spans=spans,
        ))
        words.clear()
        tags.clear()
        tag_lines.clear()

    with path.open("r", encoding="utf-8") as handle:
        line_no = 0
        for line_no, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                flush(line_no)
                continue
            if stripped.startswith("-DOCSTART-"):
                flush(line_no)
                continue
            columns = stripped.split()
            if len(columns) < 2:
                raise DataFormatError(f"missing tag column in {stripped!r}", line=line_no)
            tag = columns[-1]
            if tag != "O" and not (tag.startswith(("B-", "I-")) and tag[2:] in ENTITY_LABELS):
                raise DataFormatError(f"unknown tag {tag!r}", line=line_no)
            words.append(columns[0])
            tags.append(tag)
            tag_lines.append(line_no)
        flush(line_no + 1)
    if total_repairs:
        logger.warning("%s: repaired %d dangling I- tags", path, total_repairs)
    return documents


def write_conll(documents, path):
    """Inverse of read_conll on the tag level: round-trips spans exactly."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for doc in documents:
            if doc.gold_spans is None:
                raise SpanError(f"document {doc.doc_id} has no gold spans to encode")
            tags = encode_iob(doc.gold_spans, len(doc.tokens))
            for token, tag in zip(doc.tokens, tags):
                handle.write(f"{token.text}\t{tag}\n")
            handle.write("\n")


# ---------------------------------------------------------------------------
# JSONL documents


def _map_char_span(tokens, start, end, label, what="span"):
    starts = {t.start: i for i, t in enumerate(tokens)}
    ends = {t.end: i + 1 for i, t in enumerate(tokens)}
    if start not in starts or end not in ends:
        raise SpanAlignmentError(
            f"{what} [{start}, {end}, {label!r}] does not align with token boundaries")
    return EntitySpan(starts[start], ends[end], label)


def doc_from_json(record, doc_id):
    text = record.get("text")
    if not isinstance(text, str):
        raise DataFormatError("record is missing a string 'text' field")
    tokens = tokenize(text)
    gold_spans = None
    if "spans" in record:
        gold_spans = [
            _map_char_span(tokens, int(s), int(e), str(lbl))
            for s, e, lbl in record["spans"]
        ]
    gold_relations = None
    if "relations" in record:
        span_by_offsets = {}
        for s, e, lbl in record.get("spans", []):
            span_by_offsets[(int(s), int(e))] = _map_char_span(tokens, int(s), int(e), str(lbl))
        gold_relations = []
        for ade_off, drug_off, rel_label in record["relations"]:
            ade = span_by_offsets.get(tuple(ade_off))
            drug = span_by_offsets.get(tuple(drug_off))
            if ade is None or drug is None:
                raise DataFormatError(
                    f"relation references offsets {ade_off}/{drug_off} not listed in 'spans'")
            if rel_label not in RELATION_LABELS:
                raise DataFormatError(f"unknown relation label {rel_label!r}")
            gold_relations.append((ade, drug, rel_label))
    return Document(
        doc_id=str(record.get("doc_id", doc_id)),
        tokens=tokens,
        text=text,
        gold_class=record.get("label"),
        gold_spans=gold_spans,
        gold_relations=gold_relations,
        dep_heads=list(record["dep_heads"]) if record.get("dep_heads") is not None else None,
    )


def read_jsonl_docs(path):
    """One JSON object per line: text, optional label / spans / relations /
    dep_heads. Character-offset spans are mapped onto token spans."""
    documents = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid JSON: {exc.msg}", line=line_no)
            try:
                documents.append(doc_from_json(record, doc_id=f"doc{line_no}"))
            except DataFormatError as exc:
                if exc.line is None:
                    raise type(exc)(str(exc), line=line_no) from exc
                raise
    return documents


# ---------------------------------------------------------------------------
# relation candidates


def generate_relation_candidates(doc, spans=None):
    """Cartesian product of ADE x Drug spans within one document."""
    spans = doc.gold_spans if spans is None else spans
    if not spans:
        return []
    ades = sorted(s for s in spans if s.label == "ADE")
    drugs = sorted(s for s in spans if s.label == "Drug")
    return [
        RelationCandidate(ade=a, drug=d, doc_id=doc.doc_id)
        for a in ades for d in drugs
    ]


def sample_negative_relations(doc, positive_pairs, spans=None):
    """All non-annotated ADE x Drug pairs of the document, labeled Negative."""
    candidates = generate_relation_candidates(doc, spans=spans)
    candidate_keys = {(c.ade, c.drug) for c in candidates}
    positives = set()
    for pair in positive_pairs:
        ade, drug = pair[0], pair[1]
        if (ade, drug) not in candidate_keys:
            raise ConsistencyError(
                f"positive pair ({ade}, {drug}) is not an ADE x Drug pair of document {doc.doc_id}")
        positives.add((ade, drug))
    return [
        RelationCandidate(ade=c.ade, drug=c.drug, doc_id=c.doc_id, label="Negative")
        for c in candidates if (c.ade, c.drug) not in positives
    ]


def labeled_candidates(doc):
    """Positive candidates from gold relations plus sampled negatives."""
    if doc.gold_relations is None:
        return []
    positives = [
        RelationCandidate(ade=a, drug=d, doc_id=doc.doc_id, label="Positive")
        for a, d, label in doc.gold_relations if label == "Positive"
    ]
    negatives = sample_negative_relations(doc, [(c.ade, c.drug) for c in positives])
    return positives + negatives


def write_candidates_jsonl(candidates, path):
    """Candidate exchange format: one object per pair with token-index spans."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for cand in candidates:
            handle.write(json.dumps({
                "doc_id": cand.doc_id,
                "ade": [cand.ade.start, cand.ade.end],
                "drug": [cand.drug.start, cand.drug.end],
                "label": cand.label,
            }, sort_keys=True) + "\n")


def read_candidates_jsonl(path):
    candidates = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid JSON: {exc.msg}", line=line_no)
            try:
                candidates.append(RelationCandidate(
                    ade=EntitySpan(*record["ade"], "ADE"),
                    drug=EntitySpan(*record["drug"], "Drug"),
                    doc_id=str(record["doc_id"]),
                    label=record.get("label", "Unlabeled"),
                ))
            except (KeyError, TypeError, SpanError) as exc:
                raise DataFormatError(f"bad candidate record: {exc}", line=line_no)
    return candidates


# ---------------------------------------------------------------------------
# statistics and folds


def corpus_stats(documents):
    stats = CorpusStats()
    stats.n_sentences = len(documents)
    for doc in documents:
        stats.n_tokens += len(doc.tokens)
        for span in doc.gold_spans or []:
            stats.n_entities[span.label] += 1
        for _, _, label in doc.gold_relations or []:
            if label == "Positive":
                stats.n_positive_relations += 1
            else:
                stats.n_negative_relations += 1
    return stats


@dataclass(frozen=True)
class FoldSplit:
    train: tuple
    dev: tuple
    test: tuple


def kfold_split(documents, k=10, seed=0, dev_fraction=0.1):
    """Deterministic k-fold partition with a seeded dev cut from each train."""
    n = len(documents)
    if k < 2:
        raise ConfigurationError(f"k must be at least 2, got {k}")
    if n < k:
        raise ConfigurationError(f"cannot split {n} documents into {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    folds = np.array_split(order, k)
    splits = []
    for i, test_idx in enumerate(folds):
        rest = np.concatenate([f for j, f in enumerate(folds) if j != i])
        dev_rng = np.random.default_rng((seed, i))
        shuffled = rest[dev_rng.permutation(len(rest))]
        n_dev = int(round(dev_fraction * len(rest)))
        splits.append(FoldSplit(
            train=tuple(int(x) for x in shuffled[n_dev:]),
            dev=tuple(int(x) for x in shuffled[:n_dev]),
            test=tuple(int(x) for x in test_idx),
        ))
    return splits
