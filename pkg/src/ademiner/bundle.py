"""Single-file model bundles: canonical JSON manifest + float32 payload.

Layout: 7-byte magic, 1-byte format version, u64 manifest length, the
manifest JSON (sorted keys, compact separators), every tensor's raw
little-endian float32 bytes in manifest order, and a trailing sha256 over
all preceding bytes. The manifest travels with the bundle unchanged, so
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import datetime
import hashlib
import json
from pathlib import Path

import numpy as np

from ademiner.errors import BundleCorruptionError, BundleError, ConfigurationError

MAGIC = b"ADEBNDL"
FORMAT_VERSION = 1
STAGES = ("classifier", "ner", "re")


class ModelBundle:
    """Manifest plus a name -> float32 array map."""

    def __init__(self, manifest, tensors):
        if manifest.get("stage") not in STAGES:
            raise BundleError(f"unknown stage kind {manifest.get('stage')!r}")
        self.manifest = manifest
        self.tensors = tensors

    @property
    def stage(self):
        return self.manifest["stage"]

    @property
    def embedding_dim(self):
        return self.manifest["embedding_dim"]

    @classmethod
    def create(cls, stage, config, tensors, embedding_dim, labels, extra=None, created=None):
        arrays = {name: np.ascontiguousarray(arr, dtype="<f4") for name, arr in tensors.items()}
        manifest = {
            "format_version": FORMAT_VERSION,
            "stage": stage,
            "config": config,
            "embedding_dim": int(embedding_dim),
            "labels": list(labels),
            "extra": extra or {},
            "created": created or datetime.datetime.now(datetime.timezone.utc)
            .strftime("%Y-%m-%dT%H:%M:%SZ"),
            "tensors": [
                {"name": name, "shape": list(arr.shape)}
                for name, arr in sorted(arrays.items())
            ],
        }
        return cls(manifest, arrays)


def save_bundle(bundle, path):
    manifest_blob = json.dumps(bundle.manifest, sort_keys=True,
                               separators=(",", ":")).encode("utf-8")
    body = bytearray()
    body += MAGIC
    body.append(bundle.manifest["format_version"])
    body += len(manifest_blob).to_bytes(8, "little")
    body += manifest_blob
    for entry in bundle.manifest["tensors"]:
        arr = bundle.tensors[entry["name"]]
        if list(arr.shape) != entry["shape"]:
            raise BundleError(f"tensor {entry['name']!r} shape {arr.shape} does not match "
                              f"its manifest entry {entry['shape']}")
        body += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    digest = hashlib.sha256(bytes(body)).digest()
    with Path(path).open("wb") as handle:
        handle.write(bytes(body))
        handle.write(digest)
    return path


def load_bundle(path):
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 1 + 8 + 32:
        raise BundleCorruptionError(f"{path}: file too short to be a model bundle")
    if raw[:len(MAGIC)] != MAGIC:
        raise BundleError(f"{path}: not a model bundle (bad magic)")
    version = raw[len(MAGIC)]
    if version != FORMAT_VERSION:
        raise BundleError(f"{path}: format version {version} is not supported "
                          f"(this build reads version {FORMAT_VERSION})")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise BundleCorruptionError(f"{path}: checksum mismatch, bundle is corrupt")
    offset = len(MAGIC) + 1
    manifest_len = int.from_bytes(raw[offset:offset + 8], "little")
    offset += 8
    try:
        manifest = json.loads(raw[offset:offset + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleCorruptionError(f"{path}: unreadable manifest: {exc}")
    offset += manifest_len
    tensors = {}
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * 4
        chunk = body[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise BundleCorruptionError(f"{path}: truncated payload for tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(entry["shape"]).copy()
        offset += nbytes
    if offset != len(body):
        raise BundleCorruptionError(f"{path}: {len(body) - offset} trailing payload bytes")
    return ModelBundle(manifest, tensors)


# ---------------------------------------------------------------------------
# estimator <-> bundle


def _check_dim(bundle, store):
    if store is not None and store.dim != bundle.embedding_dim:
        raise ConfigurationError(
            f"bundle was trained with embedding dim {bundle.embedding_dim}, "
            f"store provides dim {store.dim}")


def bundle_from_estimator(estimator):
    """Snapshot a fitted estimator into a ModelBundle."""
    from ademiner.classifier import DocumentClassifier
    from ademiner.ner import NerTagger
    from ademiner.relations import RelationClassifier

    config = {k: v for k, v in estimator.get_params().items() if k != "embeddings"}
    config = {k: (list(v) if isinstance(v, tuple) else v) for k, v in config.items()}
    if isinstance(estimator, DocumentClassifier):
        return ModelBundle.create(
            "classifier", config, estimator.model_.state_arrays(),
            estimator.input_dim_, estimator.classes_)
    if isinstance(estimator, NerTagger):
        tensors = estimator.model_.state_arrays()
        extra = {"char_vocab": estimator.char_vocab_}
        if not estimator.freeze_embeddings:
            tensors["word_emb"] = estimator.word_emb_.data
            extra["word_vocab"] = estimator.word_vocab_
        return ModelBundle.create(
            "ner", config, tensors, estimator.input_word_dim_, estimator.tagset_, extra=extra)
    if isinstance(estimator, RelationClassifier):
        return ModelBundle.create(
            "re", config, estimator.model_.state_arrays(),
            estimator.embeddings.dim, estimator.classes_)
    raise BundleError(f"cannot bundle a {type(estimator).__name__}")


def estimator_from_bundle(bundle, embeddings=None):
    """Rebuild a fitted estimator from a bundle plus an embedding store."""
    import ademiner.nn as nn
    from ademiner.classifier import DocumentClassifier
    from ademiner.ner import NerTagger
    from ademiner.relations import RelationClassifier, feature_length

    _check_dim(bundle, embeddings)
    config = dict(bundle.manifest["config"])
    for key in ("hidden_sizes",):
        if key in config and isinstance(config[key], list):
            config[key] = tuple(config[key])
    rng = np.random.default_rng(0)  # structure only; weights come from the bundle

    if bundle.stage == "classifier":
        est = DocumentClassifier(embeddings=embeddings, **config)
        est.input_dim_ = bundle.embedding_dim
        est.n_features_in_ = bundle.embedding_dim
        est.classes_ = tuple(bundle.manifest["labels"])
        est.model_ = nn.MLP(rng, bundle.embedding_dim, est.hidden_sizes, len(est.classes_),
                            slope=est.leaky_slope)
        est.model_.load_state_arrays(bundle.tensors)
        return est
    if bundle.stage == "ner":
        est = NerTagger(embeddings=embeddings, **config)
        est.char_vocab_ = dict(bundle.manifest["extra"]["char_vocab"])
        est.input_word_dim_ = bundle.embedding_dim
        est.tagset_ = tuple(bundle.manifest["labels"])
        from ademiner.ner import _NerNet

        est.model_ = _NerNet(rng, len(est.char_vocab_) + 1, est.char_dim, est.char_filters,
                             est.char_kernel, bundle.embedding_dim, est.lstm_size)
        est.model_.load_state_arrays(
            {k: v for k, v in bundle.tensors.items() if k != "word_emb"})
        if not est.freeze_embeddings:
            est.word_vocab_ = dict(bundle.manifest["extra"]["word_vocab"])
            est.word_emb_ = nn.Tensor(bundle.tensors["word_emb"], requires_grad=True)
        return est
    if bundle.stage == "re":
        est = RelationClassifier(embeddings=embeddings, **config)
        est.input_dim_ = feature_length(bundle.embedding_dim, est.declared_length)
        est.classes_ = tuple(bundle.manifest["labels"])
        est.model_ = nn.MLP(rng, est.input_dim_, est.hidden_sizes, len(est.classes_),
                            slope=est.leaky_slope)
        est.model_.load_state_arrays(bundle.tensors)
        return est
    raise BundleError(f"unknown stage kind {bundle.stage!r}")


def save_estimator(estimator, path):
    return save_bundle(bundle_from_estimator(estimator), path)


def load_estimator(path, embeddings=None):
    return estimator_from_bundle(load_bundle(path), embeddings=embeddings)
