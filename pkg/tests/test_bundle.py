import numpy as np
import pytest

from ademiner.bundle import (
    ModelBundle,
    bundle_from_estimator,
    estimator_from_bundle,
    load_bundle,
    load_estimator,
    save_bundle,
    save_estimator,
)
from ademiner.classifier import DocumentClassifier
from ademiner.embeddings import EmbeddingStore
from ademiner.errors import BundleCorruptionError, BundleError, ConfigurationError
from ademiner.ner import NerTagger
from ademiner.relations import RelationClassifier
from helpers import (
    distance_relation_corpus,
    doc_index,
    ner_template_corpus,
    separable_classification_corpus,
)


@pytest.fixture(scope="module")
def fitted_stages():
    cls_docs, cls_store = separable_classification_corpus(12, seed=0)
    clf = DocumentClassifier(embeddings=cls_store, epochs=2, seed=0).fit(cls_docs)
    ner_docs, ner_store = ner_template_corpus(6, seed=0)
    tagger = NerTagger(embeddings=ner_store, lstm_size=8, epochs=1, seed=0).fit(ner_docs)
    re_docs, cands, re_store = distance_relation_corpus(8, seed=0)
    rel = RelationClassifier(embeddings=re_store, epochs=1, seed=0).fit(
        cands, documents=doc_index(re_docs))
    return {
        "classifier": (clf, cls_store, cls_docs),
        "ner": (tagger, ner_store, ner_docs),
        "re": (rel, re_store, (re_docs, cands)),
    }


@pytest.mark.parametrize("stage", ["classifier", "ner", "re"])
def test_save_load_save_is_byte_identical(stage, fitted_stages, tmp_path):
    estimator, store, _ = fitted_stages[stage]
    first = tmp_path / "first.bundle"
    second = tmp_path / "second.bundle"
    save_estimator(estimator, first)
    save_bundle(load_bundle(first), second)
    assert first.read_bytes() == second.read_bytes()


@pytest.mark.parametrize("stage", ["classifier", "ner", "re"])
def test_roundtrip_preserves_parameters_bitwise(stage, fitted_stages, tmp_path):
    estimator, store, _ = fitted_stages[stage]
    path = tmp_path / "m.bundle"
    save_estimator(estimator, path)
    loaded = load_estimator(path, embeddings=store)
    original = estimator.model_.state_arrays()
    restored = loaded.model_.state_arrays()
    assert set(original) == set(restored)
    for name in original:
        assert original[name].tobytes() == restored[name].tobytes(), name


def test_loaded_classifier_predicts_identically(fitted_stages, tmp_path):
    clf, store, docs = fitted_stages["classifier"]
    path = tmp_path / "c.bundle"
    save_estimator(clf, path)
    loaded = load_estimator(path, embeddings=store)
    np.testing.assert_array_equal(clf.predict_proba(docs), loaded.predict_proba(docs))


def test_loaded_ner_predicts_identically(fitted_stages, tmp_path):
    tagger, store, docs = fitted_stages["ner"]
    path = tmp_path / "n.bundle"
    save_estimator(tagger, path)
    loaded = load_estimator(path, embeddings=store)
    assert tagger.predict(docs) == loaded.predict(docs)


def test_loaded_re_predicts_identically(fitted_stages, tmp_path):
    rel, store, (docs, cands) = fitted_stages["re"]
    path = tmp_path / "r.bundle"
    save_estimator(rel, path)
    loaded = load_estimator(path, embeddings=store)
    np.testing.assert_array_equal(
        rel.predict_proba(cands, documents=doc_index(docs)),
        loaded.predict_proba(cands, documents=doc_index(docs)))


def test_truncated_file_is_corruption_error(fitted_stages, tmp_path):
    clf, _, _ = fitted_stages["classifier"]
    path = tmp_path / "t.bundle"
    save_estimator(clf, path)
    data = path.read_bytes()
    path.write_bytes(data[:len(data) // 2])
    with pytest.raises(BundleCorruptionError):
        load_bundle(path)


def test_flipped_byte_is_corruption_error(fitted_stages, tmp_path):
    clf, _, _ = fitted_stages["classifier"]
    path = tmp_path / "f.bundle"
    save_estimator(clf, path)
    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(BundleCorruptionError):
        load_bundle(path)


def test_version_mismatch_refused(fitted_stages, tmp_path):
    clf, _, _ = fitted_stages["classifier"]
    path = tmp_path / "v.bundle"
    save_estimator(clf, path)
    data = bytearray(path.read_bytes())
    data[7] = 99  # version byte follows the 7-byte magic
    import hashlib
    body = bytes(data[:-32])
    data[-32:] = hashlib.sha256(body).digest()
    path.write_bytes(bytes(data))
    with pytest.raises(BundleError, match="version"):
        load_bundle(path)


def test_not_a_bundle(tmp_path):
    path = tmp_path / "x.bundle"
    path.write_bytes(b"definitely not a bundle with some padding bytes here...")
    with pytest.raises(BundleError):
        load_bundle(path)


def test_unknown_stage_kind_rejected():
    with pytest.raises(BundleError, match="stage"):
        ModelBundle({"stage": "parser"}, {})


def test_dim_mismatch_refused(fitted_stages, tmp_path):
    clf, _, _ = fitted_stages["classifier"]
    path = tmp_path / "d.bundle"
    save_estimator(clf, path)
    wrong = EmbeddingStore(100, {}, np.zeros((0, 100)))
    with pytest.raises(ConfigurationError, match="dim"):
        load_estimator(path, embeddings=wrong)


def test_manifest_carries_config_echo(fitted_stages, tmp_path):
    clf, _, _ = fitted_stages["classifier"]
    bundle = bundle_from_estimator(clf)
    assert bundle.manifest["config"]["epochs"] == 2
    assert bundle.manifest["config"]["seed"] == 0
    assert "embeddings" not in bundle.manifest["config"]
    assert bundle.manifest["labels"] == ["NEG", "ADE"]
