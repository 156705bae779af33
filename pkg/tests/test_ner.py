import numpy as np
import pytest

import ademiner.nn as nn
from ademiner.corpus import TAGSET, EntitySpan, encode_iob
from ademiner.errors import EmptySequenceError, TrainingError
from ademiner.evaluation import evaluate_entities
from ademiner.ner import NerTagger
from helpers import doc_from_text, ner_template_corpus


@pytest.fixture(scope="module")
def trained():
    docs, store = ner_template_corpus(20, seed=0)
    tagger = NerTagger(embeddings=store, seed=0).fit(docs)
    return docs, store, tagger


def test_defaults_match_stage_settings():
    tagger = NerTagger()
    assert tagger.lstm_size == 200
    assert tagger.dropout_rate == 0.5
    assert tagger.learning_rate == 0.001
    assert tagger.batch_size == 8
    assert 25 <= tagger.epochs <= 35
    assert tagger.char_filters == 25 and tagger.char_kernel == 3


def test_template_corpus_reaches_perfect_strict_f1(trained):
    docs, _, tagger = trained
    report = evaluate_entities([d.gold_spans for d in docs], tagger.predict(docs))
    assert report.block("strict")["macro"]["f1"] == 1.0


def test_tag_logits_shape(trained):
    docs, _, tagger = trained
    for doc in docs[:3]:
        assert tagger.tag_logits(doc).shape == (len(doc.tokens), 5)


def test_char_features_deterministic_and_case_sensitive(trained):
    _, _, tagger = trained
    a = tagger.char_features("Advil")
    b = tagger.char_features("Advil")
    c = tagger.char_features("advil")
    np.testing.assert_array_equal(a, b)
    assert a.shape == (25,)
    assert not np.array_equal(a, c)


def test_char_features_single_char(trained):
    _, _, tagger = trained
    assert tagger.char_features("x").shape == (25,)


def test_char_features_empty_token_rejected(trained):
    _, _, tagger = trained
    with pytest.raises(EmptySequenceError):
        tagger.char_features("")


class TestDecodeTags:
    def test_decode_basic(self):
        logits = np.zeros((4, 5))
        for i, tag in enumerate(["B-ADE", "I-ADE", "O", "B-Drug"]):
            logits[i, TAGSET.index(tag)] = 5.0
        assert NerTagger.decode_tags(logits) == [EntitySpan(0, 2, "ADE"), EntitySpan(3, 4, "Drug")]

    def test_decode_repairs_dangling_inside(self):
        logits = np.zeros((2, 5))
        logits[1, TAGSET.index("I-ADE")] = 5.0
        logits[0, TAGSET.index("O")] = 5.0
        assert NerTagger.decode_tags(logits) == [EntitySpan(1, 2, "ADE")]

    def test_uniform_logits_decode_to_all_o(self):
        assert NerTagger.decode_tags(np.zeros((6, 5))) == []

    def test_fuzzed_logits_always_yield_wellformed_spans(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            length = int(rng.integers(1, 12))
            spans = NerTagger.decode_tags(rng.normal(size=(length, 5)))
            for span in spans:
                assert 0 <= span.start < span.end <= length
            for a, b in zip(spans, spans[1:]):
                assert a.end <= b.start  # non-overlapping, textual order

    def test_repair_idempotent_on_valid_sequences(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            length = int(rng.integers(1, 10))
            spans = []
            pos = 0
            while pos < length:
                if rng.random() < 0.5:
                    end = min(length, pos + int(rng.integers(1, 3)))
                    spans.append(EntitySpan(pos, end, "ADE" if rng.random() < 0.5 else "Drug"))
                    pos = end
                else:
                    pos += 1
            tags = encode_iob(spans, length)
            logits = np.zeros((length, 5))
            for i, tag in enumerate(tags):
                logits[i, TAGSET.index(tag)] = 3.0
            assert NerTagger.decode_tags(logits) == spans


def test_predicted_spans_never_overlap(trained):
    docs, _, tagger = trained
    for spans in tagger.predict(docs):
        for a, b in zip(spans, spans[1:]):
            assert a.end <= b.start


def test_inference_deterministic(trained):
    docs, _, tagger = trained
    assert tagger.predict(docs[:5]) == tagger.predict(docs[:5])


def test_doc_without_entities_trains(trained):
    docs, store, _ = trained
    extra = docs + [doc_from_text("after taking after", doc_id="bg", gold_spans=[])]
    tagger = NerTagger(embeddings=store, epochs=1, seed=0).fit(extra)
    assert tagger.predict([extra[-1]]) is not None


def test_empty_corpus_rejected():
    _, store = ner_template_corpus(2)
    with pytest.raises(TrainingError):
        NerTagger(embeddings=store).fit([])


def test_loss_strictly_decreases_over_first_steps():
    docs, store = ner_template_corpus(8, seed=3)
    tagger = NerTagger(embeddings=store, epochs=1, seed=0, dropout_rate=0.0)
    tagger.fit(docs[:1])  # initialize model structures cheaply
    rng = np.random.default_rng(0)
    tag_ids = [[TAGSET.index(t) for t in encode_iob(d.gold_spans, len(d.tokens))] for d in docs]
    config = nn.TrainConfig(learning_rate=0.001, epochs=1, dropout_rate=0.0)
    params = tagger.model_.params()
    optimizer = nn.Adam(params, config)
    losses = []
    for _ in range(5):
        loss = tagger._batch_loss(docs, tag_ids, training=True, rng=rng)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step(epoch=0)
        losses.append(float(loss.data))
    assert all(a > b for a, b in zip(losses, losses[1:])), losses


def test_gradients_flow_to_char_conv_filters():
    # finite-difference check on a 3-token document, float64 shadow mode
    docs, store = ner_template_corpus(2, seed=5)
    tagger = NerTagger(embeddings=store, lstm_size=4, char_dim=3, char_filters=4,
                       epochs=1, seed=0, dropout_rate=0.0)
    tagger.fit(docs)
    doc = docs[0]
    assert len(doc.tokens) == 3
    for p in tagger.model_.params().values():
        p.data = p.data.astype(np.float64)
        p.zero_grad()  # fit() leaves the last step's gradients behind
    tag_ids = [[TAGSET.index(t) for t in encode_iob(doc.gold_spans, len(doc.tokens))]]

    def loss_value():
        return float(tagger._batch_loss([doc], tag_ids, training=False, rng=None).data)

    loss = tagger._batch_loss([doc], tag_ids, training=False, rng=None)
    loss.backward()
    conv_w = tagger.model_.conv_w
    analytic = conv_w.grad.copy()
    h = 1e-4
    flat = conv_w.data.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = loss_value()
        flat[i] = orig - h
        minus = loss_value()
        flat[i] = orig
        numeric[i] = (plus - minus) / (2 * h)
    rel = np.abs(analytic.reshape(-1) - numeric) / np.maximum(np.abs(numeric), 1.0)
    assert rel.max() <= 1e-4


def test_unfrozen_embeddings_update():
    docs, store = ner_template_corpus(6, seed=7)
    tagger = NerTagger(embeddings=store, lstm_size=8, epochs=2, seed=0,
                       freeze_embeddings=False)
    tagger.fit(docs)
    original = np.stack([store.lookup(w) for w in sorted(tagger.word_vocab_)])
    assert not np.array_equal(tagger.word_emb_.data, original)
    # and inference still works, including on unseen tokens
    assert tagger.predict([doc_from_text("drugname0 caused reaction0"),
                           doc_from_text("unseen caused mystery")]) is not None


def test_dev_checkpoint_is_kept():
    docs, store = ner_template_corpus(12, seed=9)
    tagger = NerTagger(embeddings=store, epochs=6, seed=0)
    tagger.fit(docs[:8], dev_docs=docs[8:])
    report = evaluate_entities([d.gold_spans for d in docs[8:]], tagger.predict(docs[8:]))
    assert report.block("strict")["macro"]["f1"] >= 0.0  # smoke: checkpoint restored
