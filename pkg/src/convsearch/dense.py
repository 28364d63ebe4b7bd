"""Dense retrieval: pluggable text encoders and exact dot-product search.

Search is always an exact full scan; at the corpus sizes this package
targets, approximate indexes would only add a reproducibility variable.
The built-in encoder is a seeded random projection of hashed token counts.
It carries no semantics, but it is deterministic and dimension-compatible,
which lets every pipeline path run without model checkpoints.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .errors import ConvSearchError
from .ranking import RankedList

EMBEDDING_DIM = 128
ENCODER_SEED = 13
BUILTIN_ENCODER_ID = "hashed-bag-v1"

_WORD_RE = re.compile(r"[a-z0-9]+")
_token_vectors: dict[str, np.ndarray] = {}


def _token_vector(token: str) -> np.ndarray:
    vec = _token_vectors.get(token)
    if vec is None:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        token_key = int.from_bytes(digest[:8], "big")
        rng = np.random.default_rng([ENCODER_SEED, token_key])
        vec = rng.standard_normal(EMBEDDING_DIM)
        _token_vectors[token] = vec
    return vec


class HashedBagEncoder:
    """Deterministic stand-in encoder: sum of seeded per-token projections.

    Texts with identical token multisets map to identical vectors; the empty
    text maps to the zero vector.
    """

    identifier = BUILTIN_ENCODER_ID
    dim = EMBEDDING_DIM

    def encode(self, text: str) -> np.ndarray:
        out = np.zeros(EMBEDDING_DIM)
        for token in _WORD_RE.findall(text.lower()):
            out += _token_vector(token)
        return out

    def encode_many(self, texts: list[str]) -> np.ndarray:
        return np.stack([self.encode(t) for t in texts]) if texts else \
            np.zeros((0, EMBEDDING_DIM))


class VectorStore:
    """Passage-id to embedding map with a fixed dimension per encoder."""

    def __init__(self, ids: list[str], matrix: np.ndarray, encoder_id: str):
        if matrix.ndim != 2 or matrix.shape[0] != len(ids):
            raise ValueError("vector matrix shape does not match the id list")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("embeddings must have finite components")
        self.ids = list(ids)
        self.matrix = matrix
        self.encoder_id = encoder_id

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def build(cls, corpus: Corpus, encoder) -> "VectorStore":
        """Encode every passage's raw (unanalyzed) text exactly once."""
        ids = list(corpus.passages)
        texts = [corpus.raw_text(pid) for pid in ids]
        matrix = encoder.encode_many(texts)
        return cls(ids, matrix, encoder.identifier)

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.save(directory / "vectors.npy", self.matrix)
        (directory / "manifest.json").write_text(
            json.dumps({"ids": self.ids, "encoder_id": self.encoder_id,
                        "dim": self.dim}, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "VectorStore":
        directory = Path(directory)
        meta = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        matrix = np.load(directory / "vectors.npy")
        store = cls(meta["ids"], matrix, meta["encoder_id"])
        if store.dim != meta["dim"]:
            raise ConvSearchError("stored vector dimension disagrees with manifest")
        return store


def dense_search(query_vector: np.ndarray, store: VectorStore, k: int = 1000,
                 turn_id: str = "", run_tag: str = "dense") -> RankedList:
    """Exact top-k by dot product, descending, ties by ascending passage id."""
    query_vector = np.asarray(query_vector, dtype=float)
    if query_vector.shape != (store.dim,):
        raise ConvSearchError(
            f"query dimension {query_vector.shape} does not match store dimension ({store.dim},)"
        )
    scores = store.matrix @ query_vector
    order = sorted(range(len(store.ids)),
                   key=lambda i: (-scores[i], store.ids[i]))[:k]
    entries = [(store.ids[i], float(scores[i])) for i in order]
    return RankedList(turn_id, entries, run_tag)
