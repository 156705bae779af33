"""Pretrained word-vector store with total lookup.

Vectors load from the common text format ("token v1 ... vD" per line, with
an optional "V D" header) into one contiguous float32 matrix. Lookup never
fails: exact match first, then lowercase, then the out-of-vocabulary policy
(zero vector by default; a deterministic hashed-bucket table is available
for taggers where collapsing every unknown token to zero hurts).
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from ademiner.errors import ConfigurationError, DataFormatError, ShapeError

logger = logging.getLogger(__name__)

OOV_POLICIES = ("zeros", "hashed-bucket")


class EmbeddingStore:
    """Immutable token -> vector map; safe for concurrent lookups."""

    def __init__(self, dim, vocab, matrix, oov_policy="zeros", n_buckets=1000, bucket_seed=0):
        if oov_policy not in OOV_POLICIES:
            raise ConfigurationError(f"unknown OOV policy {oov_policy!r}, expected one of {OOV_POLICIES}")
        if dim < 1:
            raise ConfigurationError(f"embedding dim must be positive, got {dim}")
        matrix = np.asarray(matrix, dtype=np.float32).reshape(len(vocab), dim)
        self.dim = int(dim)
        self.vocab = dict(vocab)
        self.matrix = matrix
        self.oov_policy = oov_policy
        self._zero = np.zeros(dim, dtype=np.float32)
        if oov_policy == "hashed-bucket":
            rng = np.random.default_rng(bucket_seed)
            scale = 1.0 / np.sqrt(dim)
            self._buckets = rng.uniform(-scale, scale, size=(n_buckets, dim)).astype(np.float32)
        else:
            self._buckets = None

    def __len__(self):
        return len(self.vocab)

    def __contains__(self, token):
        return token in self.vocab

    def lookup(self, token):
        """Vector for a token: exact case, then lowercase, then OOV policy."""
        idx = self.vocab.get(token)
        if idx is None:
            idx = self.vocab.get(token.lower())
        if idx is not None:
            return self.matrix[idx]
        if self._buckets is None:
            return self._zero
        digest = hashlib.md5(token.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:8], "little") % len(self._buckets)
        return self._buckets[bucket]

    def embed_tokens(self, tokens):
        """(L, dim) matrix of token vectors."""
        if not tokens:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([self.lookup(t) for t in tokens])

    def embed_document(self, tokens):
        """Mean of the token vectors; the zero vector for an empty document."""
        if not tokens:
            return self._zero.copy()
        return self.embed_tokens(tokens).mean(axis=0).astype(np.float32)


def load_vectors(path, expected_dim=None, oov_policy="zeros"):
    """Parse a text vector file into an EmbeddingStore.

    Duplicate tokens keep their first occurrence (a warning reports the
    count); a dimension that differs between lines is a format error naming
    the offending line.
    """
    path = Path(path)
    vocab = {}
    rows = []
    dim = None
    duplicates = 0
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if line_no == 1 and len(parts) == 2 and parts[0].isdigit() and parts[1].isdigit():
                continue  # "V D" header
            token, values = parts[0], parts[1:]
            if not values:
                raise DataFormatError(f"no vector values for token {token!r}", line=line_no)
            if dim is None:
                dim = len(values)
                if expected_dim is not None and dim != expected_dim:
                    raise ShapeError(f"vector file has dim {dim}, expected {expected_dim}")
            elif len(values) != dim:
                raise DataFormatError(
                    f"token {token!r} has {len(values)} values, expected {dim}", line=line_no)
            if token in vocab:
                duplicates += 1
                continue
            try:
                vector = np.array([float(v) for v in values], dtype=np.float32)
            except ValueError as exc:
                raise DataFormatError(f"non-numeric value for token {token!r}: {exc}", line=line_no)
            vocab[token] = len(rows)
            rows.append(vector)
    if duplicates:
        logger.warning("%s: %d duplicate tokens ignored (first occurrence kept)", path, duplicates)
    if dim is None:
        if expected_dim is None:
            raise DataFormatError(f"{path} is empty and no expected_dim was given")
        dim = expected_dim
    matrix = np.stack(rows) if rows else np.zeros((0, dim), dtype=np.float32)
    store = EmbeddingStore(dim, vocab, matrix, oov_policy=oov_policy)
    store.duplicate_count = duplicates
    return store


_CACHE_MAGIC = b"ADEVECS1"


def save_cache(store, path):
    """Binary cache: JSON manifest + little-endian float32 matrix."""
    manifest = {
        "dim": store.dim,
        "vocab": store.vocab,
        "oov_policy": store.oov_policy,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as handle:
        handle.write(_CACHE_MAGIC)
        handle.write(len(blob).to_bytes(8, "little"))
        handle.write(blob)
        handle.write(np.ascontiguousarray(store.matrix, dtype="<f4").tobytes())


def load_cache(path):
    with Path(path).open("rb") as handle:
        magic = handle.read(8)
        if magic != _CACHE_MAGIC:
            raise DataFormatError(f"{path} is not an embedding cache file")
        size = int.from_bytes(handle.read(8), "little")
        manifest = json.loads(handle.read(size).decode("utf-8"))
        matrix = np.frombuffer(handle.read(), dtype="<f4").reshape(len(manifest["vocab"]), manifest["dim"])
    return EmbeddingStore(manifest["dim"], manifest["vocab"], matrix, oov_policy=manifest["oov_policy"])
