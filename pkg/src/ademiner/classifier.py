"""Binary ADE/NEG document classifier over averaged word embeddings.

The whole document collapses to a single mean embedding vector which a
small fully connected network maps to two classes. Ties at exactly equal
probabilities resolve to NEG, so ambiguous documents are never flagged.
"""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

import ademiner.nn as nn
from ademiner.corpus import CLASS_LABELS
from ademiner.validation import check_both_classes, check_documents, check_store

logger = logging.getLogger(__name__)


def _batches(n, batch_size, rng):
    """Shuffled index batches; a trailing singleton folds into its neighbor
    so batch norm always sees at least two rows."""
    order = rng.permutation(n)
    bounds = list(range(0, n, batch_size))
    batches = [order[b:b + batch_size] for b in bounds]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


class DocumentClassifier(BaseEstimator):
    """FCNN over the document mean embedding; classes are (NEG, ADE).

    Defaults follow the tuned settings for this stage: dropout 0.2,
    batch size 8, learning rate 3e-4 with per-epoch decay lr/(1+po*e),
    Adam, up to 30 epochs. Hidden widths are this project's own choice.
    """

    def __init__(self, embeddings=None, hidden_sizes=(128, 64), learning_rate=0.0003,
                 decay_po=0.005, batch_size=8, epochs=30, dropout_rate=0.2,
                 leaky_slope=0.01, class_weighting=False, seed=0):
        self.embeddings = embeddings
        self.hidden_sizes = hidden_sizes
        self.learning_rate = learning_rate
        self.decay_po = decay_po
        self.batch_size = batch_size
        self.epochs = epochs
        self.dropout_rate = dropout_rate
        self.leaky_slope = leaky_slope
        self.class_weighting = class_weighting
        self.seed = seed

    # -- training ----------------------------------------------------------

    def _features(self, docs):
        store = check_store(self.embeddings)
        return np.stack([store.embed_document(d.token_texts()) for d in docs])

    def fit(self, docs, y=None, dev_docs=None):
        docs = check_documents(docs, require_class=y is None)
        labels = list(y) if y is not None else [d.gold_class for d in docs]
        check_both_classes(labels, CLASS_LABELS)
        store = check_store(self.embeddings)

        config = nn.TrainConfig(
            learning_rate=self.learning_rate, decay_po=self.decay_po,
            batch_size=self.batch_size, epochs=self.epochs,
            dropout_rate=self.dropout_rate, seed=self.seed)
        rng = np.random.default_rng(self.seed)
        model = nn.MLP(rng, store.dim, tuple(self.hidden_sizes), len(CLASS_LABELS),
                       slope=self.leaky_slope)
        optimizer = nn.Adam(model.params(), config)

        features = self._features(docs)
        targets = np.array([CLASS_LABELS.index(l) for l in labels])
        sample_weights = None
        if self.class_weighting:
            freq = np.bincount(targets, minlength=len(CLASS_LABELS)).astype(np.float64)
            inv = len(targets) / (len(CLASS_LABELS) * np.maximum(freq, 1.0))
            sample_weights = inv[targets].astype(np.float32)

        for epoch in range(config.epochs):
            epoch_loss = 0.0
            batches = _batches(len(docs), config.batch_size, rng)
            for batch in batches:
                x = nn.Tensor(features[batch])
                x = nn.dropout(x, config.dropout_rate, rng, training=True)
                logits = model(x, training=True, dropout_rate=config.dropout_rate, rng=rng)
                weights = sample_weights[batch] if sample_weights is not None else None
                loss = nn.softmax_cross_entropy(logits, targets[batch], weights=weights)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step(epoch)
                epoch_loss += float(loss.data) * len(batch)
            message = f"epoch {epoch}: train loss {epoch_loss / len(docs):.4f}"
            if dev_docs:
                message += f", dev loss {self._dev_loss(model, dev_docs):.4f}"
            logger.info("classifier %s", message)

        self.model_ = model
        self.classes_ = CLASS_LABELS
        self.input_dim_ = store.dim
        self.n_features_in_ = store.dim
        return self

    def _dev_loss(self, model, dev_docs):
        features = self._features(dev_docs)
        targets = np.array([CLASS_LABELS.index(d.gold_class) for d in dev_docs])
        with nn.no_grad():
            logits = model(nn.Tensor(features), training=False)
            return float(nn.softmax_cross_entropy(logits, targets).data)

    # -- inference ----------------------------------------------------------

    def predict_proba(self, docs):
        check_is_fitted(self, "model_")
        store = check_store(self.embeddings, expected_dim=self.input_dim_)
        features = np.stack([store.embed_document(d.token_texts()) for d in docs]) \
            if docs else np.zeros((0, store.dim), dtype=np.float32)
        with nn.no_grad():
            logits = self.model_(nn.Tensor(features), training=False)
            probs = nn.softmax(logits, axis=1).data
        return probs

    def predict(self, docs):
        probs = self.predict_proba(docs)
        # argmax picks the lower index on exact ties, i.e. NEG
        return [CLASS_LABELS[i] for i in probs.argmax(axis=1)]

    def classify(self, doc):
        """(label, probabilities) for a single document."""
        probs = self.predict_proba([doc])[0]
        return CLASS_LABELS[int(probs.argmax())], probs

    def evaluate(self, docs):
        from ademiner.errors import EvaluationError
        from ademiner.evaluation import classification_report

        docs = check_documents(docs)
        gold = [d.gold_class for d in docs]
        if any(g is None for g in gold):
            raise EvaluationError("evaluation requires gold class labels on every document")
        return classification_report(gold, self.predict(docs))
