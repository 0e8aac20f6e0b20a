"""Deterministic text embeddings: signed feature hashing of character
3-grams, L2-normalized. A frozen, dependency-free stand-in for an LLM
encoder with the same interface (embed text, measure distance), so a real
encoder can be swapped in behind `embed`/`distance`.
"""

from __future__ import annotations

from dataclasses import dataclass
from hashlib import blake2b

import numpy as np

DEFAULT_DIM = 256
DEFAULT_SEED = 1729

# gram -> (hash, sign) per seed; the gram vocabulary of the move grammar is
# tiny, so this effectively makes embedding a few dict lookups per call
_gram_cache: dict[tuple[int, str], tuple[int, int]] = {}
_vector_cache: dict[tuple[int, int, str], np.ndarray] = {}
_VECTOR_CACHE_MAX = 500_000


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray
    source_kind: str = "state"  # state | move | goal

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def _gram_hash(gram: str, seed: int) -> tuple[int, int]:
    key = (seed, gram)
    cached = _gram_cache.get(key)
    if cached is None:
        digest = blake2b(gram.encode("utf-8"), digest_size=8,
                         key=seed.to_bytes(8, "little", signed=False)).digest()
        h = int.from_bytes(digest, "big")
        cached = (h >> 1, 1 if h & 1 else -1)
        _gram_cache[key] = cached
    return cached


def embed(text: str, d: int = DEFAULT_DIM, seed: int = DEFAULT_SEED,
          kind: str = "state") -> Embedding:
    """Hash character 3-grams of `text` into d signed buckets, L2-normalized.

    Deterministic across processes and platforms given (text, d, seed).
    Inputs with no 3-grams map to the unit vector e1.
    """
    if d < 8:
        raise ValueError(f"embedding dimension must be >= 8, got {d}")
    cache_key = (seed, d, text)
    vec = _vector_cache.get(cache_key)
    if vec is None:
        vec = np.zeros(d)
        for i in range(len(text) - 2):
            h, sign = _gram_hash(text[i:i + 3], seed)
            vec[h % d] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec[0] = 1.0
        else:
            vec /= norm
        if len(_vector_cache) >= _VECTOR_CACHE_MAX:
            _vector_cache.clear()
        _vector_cache[cache_key] = vec
    return Embedding(vec, kind)


def distance(z1: Embedding, z2: Embedding, kind: str = "cosine",
             M: np.ndarray | None = None) -> float:
    """Cosine distance 1 - <z1,z2>, or the learned form ||M (z1-z2)||^2."""
    if z1.dim != z2.dim:
        raise ValueError(f"dimension mismatch: {z1.dim} vs {z2.dim}")
    if kind == "cosine":
        return float(1.0 - np.dot(z1.values, z2.values))
    if kind == "learned":
        if M is None:
            raise ValueError("learned distance requires a projection matrix")
        if M.shape[1] != z1.dim:
            raise ValueError(f"projection expects dim {M.shape[1]}, got {z1.dim}")
        diff = M @ (z1.values - z2.values)
        return float(np.dot(diff, diff))
    raise ValueError(f"unknown distance kind {kind!r}")
