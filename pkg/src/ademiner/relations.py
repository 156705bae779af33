"""Relation classifier over crafted (ADE, Drug) pair features.

Each candidate pair becomes one fixed-length vector: both span mean
embeddings, their cosine similarity, signed normalized token distance,
syntactic distance (dependency path length when heads are available,
boundary token distance otherwise) with an availability flag, and the mean
embeddings of up to 25 context tokens on each side of each entity (100
vicinity tokens per pair in total). The vector can be zero-padded to a
declared length so one model shape serves several embedding sizes.
"""

from __future__ import annotations

import logging
from collections import deque

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

import ademiner.nn as nn
from ademiner.corpus import RELATION_LABELS
from ademiner.errors import ConfigurationError, DependencyStructureError, SpanError
from ademiner.validation import check_both_classes, check_candidates, check_store

logger = logging.getLogger(__name__)

IMBALANCE_WARN_RATIO = 0.1


def span_embedding(doc, span, store):
    """Mean embedding of the tokens inside [start, end)."""
    if span.end > len(doc.tokens):
        raise SpanError(f"span {span} exceeds document {doc.doc_id} length {len(doc.tokens)}")
    return store.embed_document([t.text for t in doc.tokens[span.start:span.end]])


def semantic_similarity(v1, v2):
    """Cosine similarity; defined as 0.0 when either vector is zero."""
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    if v1.shape != v2.shape:
        raise ConfigurationError(f"cosine needs equal dims, got {v1.shape} vs {v2.shape}")
    n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
    if n1 == 0.0 or n2 == 0.0:
        return 0.0
    return float(np.clip(v1 @ v2 / (n1 * n2), -1.0, 1.0))


def _span_head(span, head_choice="last"):
    return span.end - 1 if head_choice == "last" else span.start


def _boundary_distance(a, b):
    if a.overlaps(b):
        return 0
    return b.start - a.end if b.start >= a.end else a.start - b.end


def syntactic_distance(doc, span_a, span_b, head_choice="last"):
    """(distance, dep_available) between two spans of one document.

    With dependency heads: length of the shortest undirected path between
    the spans' head tokens (flag 1). Without: absolute token distance
    between the nearest span boundaries (flag 0).
    """
    for span in (span_a, span_b):
        if span.end > len(doc.tokens):
            raise SpanError(f"span {span} exceeds document {doc.doc_id}")
    if doc.dep_heads is None:
        return _boundary_distance(span_a, span_b), 0
    heads = doc.dep_heads
    adjacency = [[] for _ in heads]
    for child, parent in enumerate(heads):
        if parent != -1:
            if not 0 <= parent < len(heads):
                raise DependencyStructureError(f"head {parent} out of range")
            adjacency[child].append(parent)
            adjacency[parent].append(child)
    start = _span_head(span_a, head_choice)
    goal = _span_head(span_b, head_choice)
    if start == goal:
        return 0, 1
    seen = {start}
    queue = deque([(start, 0)])
    while queue:
        node, dist = queue.popleft()
        for nxt in adjacency[node]:
            if nxt == goal:
                return dist + 1, 1
            if nxt not in seen:
                seen.add(nxt)
                queue.append((nxt, dist + 1))
    raise DependencyStructureError(
        f"tokens {start} and {goal} are not connected in document {doc.doc_id}")


def _context_mean(doc, store, start, stop):
    """Mean embedding of tokens in [start, stop); zeros when empty."""
    start = max(start, 0)
    stop = min(stop, len(doc.tokens))
    if start >= stop:
        return np.zeros(store.dim, dtype=np.float32)
    return store.embed_document([t.text for t in doc.tokens[start:stop]])


def feature_length(dim, declared_length=None):
    exact = 6 * dim + 4
    if declared_length is None:
        return exact
    if declared_length < exact:
        raise ConfigurationError(
            f"declared feature length {declared_length} is below the required {exact}")
    return declared_length


def build_features(doc, candidate, store, context_window=25, head_choice="last",
                   declared_length=None):
    """Fixed-length feature vector for one candidate pair."""
    ade, drug = candidate.ade, candidate.drug
    ade_vec = span_embedding(doc, ade, store)
    drug_vec = span_embedding(doc, drug, store)
    n_tokens = max(len(doc.tokens), 1)

    gap = _boundary_distance(ade, drug)
    sign = 1.0 if drug.start >= ade.start else -1.0
    linear = sign * gap / n_tokens
    syn_dist, dep_flag = syntactic_distance(doc, ade, drug, head_choice)

    parts = [
        ade_vec,
        drug_vec,
        np.array([semantic_similarity(ade_vec, drug_vec)], dtype=np.float32),
        np.array([linear], dtype=np.float32),
        np.array([syn_dist / n_tokens], dtype=np.float32),
        np.array([float(dep_flag)], dtype=np.float32),
        _context_mean(doc, store, ade.start - context_window, ade.start),
        _context_mean(doc, store, ade.end, ade.end + context_window),
        _context_mean(doc, store, drug.start - context_window, drug.start),
        _context_mean(doc, store, drug.end, drug.end + context_window),
    ]
    vector = np.concatenate(parts).astype(np.float32)
    total = feature_length(store.dim, declared_length)
    if total > vector.size:
        vector = np.concatenate([vector, np.zeros(total - vector.size, dtype=np.float32)])
    return vector


class RelationClassifier(BaseEstimator):
    """FCNN over pair features; classes are (Negative, Positive).

    Defaults follow the tuned settings for this stage: dropout 0.5, batch
    size 8, learning rate 1e-4, Adam, up to 50 epochs. Ties at exactly
    equal probabilities resolve to Negative so the model never invents a
    causality claim at ambivalence.
    """

    def __init__(self, embeddings=None, hidden_sizes=(256, 64), learning_rate=0.0001,
                 decay_po=0.0, batch_size=8, epochs=50, dropout_rate=0.5,
                 context_window=25, head_choice="last", declared_length=None,
                 leaky_slope=0.01, seed=0):
        self.embeddings = embeddings
        self.hidden_sizes = hidden_sizes
        self.learning_rate = learning_rate
        self.decay_po = decay_po
        self.batch_size = batch_size
        self.epochs = epochs
        self.dropout_rate = dropout_rate
        self.context_window = context_window
        self.head_choice = head_choice
        self.declared_length = declared_length
        self.leaky_slope = leaky_slope
        self.seed = seed

    # -- features ------------------------------------------------------------

    def build_features(self, doc, candidate):
        store = check_store(self.embeddings)
        return build_features(doc, candidate, store, context_window=self.context_window,
                              head_choice=self.head_choice, declared_length=self.declared_length)

    def _feature_matrix(self, candidates, documents):
        return np.stack([self.build_features(documents[c.doc_id], c) for c in candidates])

    # -- training ------------------------------------------------------------

    def fit(self, candidates, y=None, documents=None, dev_candidates=None):
        candidates = check_candidates(candidates, require_labels=y is None)
        if documents is None:
            raise ConfigurationError("fit needs documents={doc_id: Document} for feature building")
        store = check_store(self.embeddings)
        labels = list(y) if y is not None else [c.label for c in candidates]
        check_both_classes(labels, RELATION_LABELS)
        counts = {label: labels.count(label) for label in RELATION_LABELS}
        minority = min(counts.values())
        majority = max(counts.values())
        if minority / majority < IMBALANCE_WARN_RATIO:
            logger.warning("relation training data is heavily imbalanced: %s", counts)

        config = nn.TrainConfig(
            learning_rate=self.learning_rate, decay_po=self.decay_po,
            batch_size=self.batch_size, epochs=self.epochs,
            dropout_rate=self.dropout_rate, seed=self.seed)
        rng = np.random.default_rng(self.seed)
        self.input_dim_ = feature_length(store.dim, self.declared_length)
        self.classes_ = RELATION_LABELS
        model = nn.MLP(rng, self.input_dim_, tuple(self.hidden_sizes), len(RELATION_LABELS),
                       slope=self.leaky_slope)
        optimizer = nn.Adam(model.params(), config)

        features = self._feature_matrix(candidates, documents)
        targets = np.array([RELATION_LABELS.index(l) for l in labels])

        best_f1, best_state = -1.0, None
        self.model_ = model
        for epoch in range(config.epochs):
            order = rng.permutation(len(candidates))
            epoch_loss = 0.0
            for start in range(0, len(candidates), config.batch_size):
                batch = order[start:start + config.batch_size]
                if len(batch) == 1 and start > 0:
                    continue  # singleton remainder cannot batch-normalize
                x = nn.Tensor(features[batch])
                logits = model(x, training=len(batch) > 1,
                               dropout_rate=config.dropout_rate, rng=rng)
                loss = nn.softmax_cross_entropy(logits, targets[batch])
                optimizer.zero_grad()
                loss.backward()
                optimizer.step(epoch)
                epoch_loss += float(loss.data) * len(batch)
            message = f"epoch {epoch}: train loss {epoch_loss / len(candidates):.4f}"
            if dev_candidates:
                f1 = self._dev_macro_f1(dev_candidates, documents)
                message += f", dev macro F1 {f1:.4f}"
                if f1 > best_f1:
                    best_f1 = f1
                    best_state = {k: v.copy() for k, v in model.state_arrays().items()}
            logger.info("re %s", message)
        if best_state is not None:
            model.load_state_arrays(best_state)
        return self

    def _dev_macro_f1(self, dev_candidates, documents):
        from ademiner.evaluation import relation_report

        predicted = self.predict(dev_candidates, documents=documents)
        return relation_report([c.label for c in dev_candidates], predicted)["macro"]["f1"]

    # -- inference -----------------------------------------------------------

    def predict_proba(self, candidates, documents=None):
        check_is_fitted(self, "model_")
        if documents is None:
            raise ConfigurationError("predict needs documents={doc_id: Document}")
        check_store(self.embeddings)
        if not candidates:
            return np.zeros((0, len(RELATION_LABELS)), dtype=np.float32)
        features = self._feature_matrix(candidates, documents)
        with nn.no_grad():
            logits = self.model_(nn.Tensor(features), training=False)
            return nn.softmax(logits, axis=1).data

    def predict(self, candidates, documents=None):
        probs = self.predict_proba(candidates, documents=documents)
        # argmax picks the lower index on exact ties, i.e. Negative
        return [RELATION_LABELS[i] for i in probs.argmax(axis=1)]

    def classify_relation(self, doc, candidate):
        """(label, probabilities) for one candidate pair."""
        probs = self.predict_proba([candidate], documents={candidate.doc_id: doc})[0]
        return RELATION_LABELS[int(probs.argmax())], probs
