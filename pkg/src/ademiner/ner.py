"""BiLSTM sequence tagger with character-convolution features.

Per token: the word vector is concatenated with a 25-dim character feature
(char embeddings -> width-3 convolution -> max over time, case preserved),
the sequence runs through a bidirectional LSTM, and a linear projection
scores the five IOB tags. Decoding is greedy per-token argmax followed by
IOB repair; there is no transition model.
"""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

import ademiner.nn as nn
from ademiner.corpus import TAGSET, decode_iob, encode_iob
from ademiner.errors import EmptySequenceError
from ademiner.validation import check_documents, check_store

logger = logging.getLogger(__name__)

UNKNOWN_CHAR = 0


class _NerNet(nn.Module):
    def __init__(self, rng, n_chars, char_dim, char_filters, char_kernel, word_dim, hidden):
        scale = 1.0 / np.sqrt(char_dim)
        self.char_emb = nn.Tensor(
            rng.uniform(-scale, scale, size=(n_chars, char_dim)).astype(np.float32),
            requires_grad=True)
        self.conv_w = nn.Tensor(nn.glorot(rng, (char_kernel, char_dim, char_filters)),
                                requires_grad=True)
        self.conv_b = nn.Tensor(np.zeros(char_filters, dtype=np.float32), requires_grad=True)
        self.bilstm = nn.BiLstm(rng, word_dim + char_filters, hidden)
        self.proj = nn.Dense(rng, 2 * hidden, len(TAGSET))


class NerTagger(BaseEstimator):
    """IOB tagger for ADE/Drug spans.

    Defaults follow the tuned settings for this stage: LSTM state size 200,
    dropout 0.5, batch size 8 sentences, learning rate 1e-3 with per-epoch
    decay lr/(1+po*e), Adam, up to 35 epochs. Word embeddings stay frozen
    unless ``freeze_embeddings`` is switched off; dropout can be placed on
    the BiLSTM input, its output, or both.
    """

    def __init__(self, embeddings=None, lstm_size=200, char_dim=16, char_filters=25,
                 char_kernel=3, learning_rate=0.001, decay_po=0.005, batch_size=8,
                 epochs=35, dropout_rate=0.5, dropout_input=True, dropout_output=True,
                 freeze_embeddings=True, leaky_slope=0.01, seed=0):
        self.embeddings = embeddings
        self.lstm_size = lstm_size
        self.char_dim = char_dim
        self.char_filters = char_filters
        self.char_kernel = char_kernel
        self.learning_rate = learning_rate
        self.decay_po = decay_po
        self.batch_size = batch_size
        self.epochs = epochs
        self.dropout_rate = dropout_rate
        self.dropout_input = dropout_input
        self.dropout_output = dropout_output
        self.freeze_embeddings = freeze_embeddings
        self.leaky_slope = leaky_slope
        self.seed = seed

    # -- character features --------------------------------------------------

    def _char_ids(self, token_text):
        if not token_text:
            raise EmptySequenceError("cannot featurize an empty token")
        return np.array([self.char_vocab_.get(ch, UNKNOWN_CHAR) for ch in token_text],
                        dtype=np.intp)

    def _char_feature(self, token_text, cache=None):
        """(1, F) tensor of pooled character-convolution features."""
        if cache is not None and token_text in cache:
            return cache[token_text]
        net = self.model_
        emb = nn.gather_rows(net.char_emb, self._char_ids(token_text))
        conv = nn.conv1d(emb, net.conv_w, net.conv_b)
        feat = nn.reshape(nn.max_over_time(conv), (1, self.char_filters))
        if cache is not None:
            cache[token_text] = feat
        return feat

    def char_features(self, token_text):
        """Pooled char-feature vector for one token, as a numpy array."""
        check_is_fitted(self, "model_")
        with nn.no_grad():
            return self._char_feature(token_text).data[0]

    # -- forward -------------------------------------------------------------

    def _word_matrix(self, doc):
        store = check_store(self.embeddings)
        if self.freeze_embeddings:
            return store.embed_tokens(doc.token_texts())
        rows = []
        for text in doc.token_texts():
            idx = self.word_vocab_.get(text)
            if idx is None:
                idx = self.word_vocab_.get(text.lower())
            rows.append(idx)
        return rows

    def _word_step(self, docs, word_data, t):
        """(B, dim) word vectors at position t (zero rows past each end)."""
        if self.freeze_embeddings:
            batch = np.zeros((len(docs), self.input_word_dim_), dtype=np.float32)
            for i, (doc, mat) in enumerate(zip(docs, word_data)):
                if t < len(doc.tokens):
                    batch[i] = mat[t]
            return nn.Tensor(batch)
        parts = []
        store = self.embeddings
        for doc, rows in zip(docs, word_data):
            if t >= len(doc.tokens):
                parts.append(nn.Tensor(np.zeros((1, self.input_word_dim_), dtype=np.float32)))
            elif rows[t] is None:
                vec = store.lookup(doc.tokens[t].text)[None, :]
                parts.append(nn.Tensor(vec))
            else:
                parts.append(nn.gather_rows(self.word_emb_, [rows[t]]))
        return nn.concat(parts, axis=0)

    def _forward(self, docs, training, rng):
        """Per-position logits over a padded batch; returns (logits, mask)."""
        net = self.model_
        max_len = max(len(d.tokens) for d in docs)
        word_data = [self._word_matrix(d) for d in docs]
        char_cache = {}
        zero_feat = nn.Tensor(np.zeros((1, self.char_filters), dtype=np.float32))
        steps, masks = [], []
        for t in range(max_len):
            chars = [
                self._char_feature(d.tokens[t].text, char_cache) if t < len(d.tokens) else zero_feat
                for d in docs
            ]
            x = nn.concat([self._word_step(docs, word_data, t), nn.concat(chars, axis=0)], axis=1)
            if training and self.dropout_input:
                x = nn.dropout(x, self.dropout_rate, rng, training=True)
            steps.append(x)
            masks.append(np.array([[1.0 if t < len(d.tokens) else 0.0] for d in docs],
                                  dtype=np.float32))
        hidden = net.bilstm.run(steps, masks)
        logits = []
        for h in hidden:
            if training and self.dropout_output:
                h = nn.dropout(h, self.dropout_rate, rng, training=True)
            logits.append(net.proj(h))
        return logits, masks

    def _batch_loss(self, docs, tag_ids, training, rng):
        logits, masks = self._forward(docs, training, rng)
        total_tokens = float(sum(len(d.tokens) for d in docs))
        loss = None
        for t, (step_logits, mask) in enumerate(zip(logits, masks)):
            labels = np.array([ids[t] if t < len(ids) else 0 for ids in tag_ids])
            step_loss = nn.softmax_cross_entropy(
                step_logits, labels, weights=mask[:, 0], normalizer=total_tokens)
            loss = step_loss if loss is None else nn.add(loss, step_loss)
        return loss

    # -- training ------------------------------------------------------------

    def fit(self, docs, y=None, dev_docs=None):
        docs = check_documents(docs, require_spans=True)
        store = check_store(self.embeddings)
        for doc in docs:
            if not doc.tokens:
                raise EmptySequenceError(f"document {doc.doc_id} has no tokens")

        chars = sorted({ch for d in docs for t in d.tokens for ch in t.text})
        self.char_vocab_ = {ch: i + 1 for i, ch in enumerate(chars)}  # 0 = unknown
        self.input_word_dim_ = store.dim
        self.tagset_ = TAGSET

        config = nn.TrainConfig(
            learning_rate=self.learning_rate, decay_po=self.decay_po,
            batch_size=self.batch_size, epochs=self.epochs,
            dropout_rate=self.dropout_rate, seed=self.seed)
        rng = np.random.default_rng(self.seed)
        self.model_ = _NerNet(rng, len(self.char_vocab_) + 1, self.char_dim,
                              self.char_filters, self.char_kernel, store.dim, self.lstm_size)
        params = self.model_.params()
        if not self.freeze_embeddings:
            words = sorted({t.text for d in docs for t in d.tokens})
            self.word_vocab_ = {w: i for i, w in enumerate(words)}
            matrix = np.stack([store.lookup(w) for w in words]) if words else \
                np.zeros((0, store.dim), dtype=np.float32)
            self.word_emb_ = nn.Tensor(matrix, requires_grad=True)
            params["word_emb"] = self.word_emb_
        optimizer = nn.Adam(params, config)

        tag_ids = [
            [TAGSET.index(tag) for tag in encode_iob(d.gold_spans, len(d.tokens))]
            for d in docs
        ]
        best_f1, best_state = -1.0, None
        for epoch in range(config.epochs):
            order = rng.permutation(len(docs))
            epoch_loss = 0.0
            for start in range(0, len(docs), config.batch_size):
                batch_idx = order[start:start + config.batch_size]
                batch_docs = [docs[i] for i in batch_idx]
                loss = self._batch_loss(batch_docs, [tag_ids[i] for i in batch_idx],
                                        training=True, rng=rng)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step(epoch)
                epoch_loss += float(loss.data) * sum(len(d.tokens) for d in batch_docs)
            message = f"epoch {epoch}: train loss {epoch_loss / sum(len(d.tokens) for d in docs):.4f}"
            if dev_docs:
                f1 = self._dev_strict_f1(dev_docs)
                message += f", dev strict F1 {f1:.4f}"
                if f1 > best_f1:
                    best_f1 = f1
                    best_state = {k: v.copy() for k, v in self.model_.state_arrays().items()}
            logger.info("ner %s", message)
        if best_state is not None:
            self.model_.load_state_arrays(best_state)
        return self

    def _dev_strict_f1(self, dev_docs):
        from ademiner.evaluation import evaluate_entities

        predicted = self.predict(dev_docs)
        report = evaluate_entities([d.gold_spans for d in dev_docs], predicted)
        return report.block("strict")["macro"]["f1"]

    # -- inference -----------------------------------------------------------

    def tag_logits(self, doc):
        """(L, n_tags) score matrix for one document."""
        check_is_fitted(self, "model_")
        if not doc.tokens:
            raise EmptySequenceError(f"document {doc.doc_id} has no tokens")
        with nn.no_grad():
            logits, _ = self._forward([doc], training=False, rng=None)
            return np.concatenate([step.data for step in logits], axis=0)

    @staticmethod
    def decode_tags(logits):
        """Greedy argmax (ties to the lowest index, O first) plus IOB repair."""
        tags = [TAGSET[i] for i in np.asarray(logits).argmax(axis=1)]
        spans, _ = decode_iob(tags)
        return spans

    def predict(self, docs):
        """Entity spans per document."""
        return [self.decode_tags(self.tag_logits(doc)) if doc.tokens else []
                for doc in docs]

    def predict_tags(self, doc):
        return [TAGSET[i] for i in self.tag_logits(doc).argmax(axis=1)]
