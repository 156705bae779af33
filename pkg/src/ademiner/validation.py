"""Input validation helpers shared by the estimators."""

from __future__ import annotations

from ademiner.corpus import Document, RelationCandidate
from ademiner.errors import ShapeError, TrainingError


def check_documents(docs, require_class=False, require_spans=False):
    docs = list(docs)
    if not docs:
        raise TrainingError("empty document list")
    for doc in docs:
        if not isinstance(doc, Document):
            raise TypeError(f"expected Document, got {type(doc).__name__}")
        if require_class and doc.gold_class is None:
            raise TrainingError(f"document {doc.doc_id} has no gold class label")
        if require_spans and doc.gold_spans is None:
            raise TrainingError(f"document {doc.doc_id} has no gold entity spans")
    return docs


def check_both_classes(labels, class_names):
    present = set(labels)
    missing = [c for c in class_names if c not in present]
    if missing:
        raise TrainingError(f"training data contains no {missing} examples; need every class")


def check_candidates(candidates, require_labels=False):
    candidates = list(candidates)
    if not candidates:
        raise TrainingError("empty candidate list")
    for cand in candidates:
        if not isinstance(cand, RelationCandidate):
            raise TypeError(f"expected RelationCandidate, got {type(cand).__name__}")
        if require_labels and cand.label == "Unlabeled":
            raise TrainingError("candidate without a Positive/Negative label")
    return candidates


def check_store(store, expected_dim=None):
    if store is None:
        raise ShapeError("an EmbeddingStore is required (pass embeddings=...)")
    if expected_dim is not None and store.dim != expected_dim:
        raise ShapeError(f"embedding store has dim {store.dim}, model expects {expected_dim}")
    return store
