"""Deterministic text embedding providers and vector-space helpers.

The hashed bag-of-words embedder is the offline stand-in for neural sentence
encoders: every component of the pipeline that needs a vector (retrieval
queries and documents, cluster salience, summary alignment, the reference
scorer's embedding channel) can run without model weights.
"""
from __future__ import annotations

import hashlib
import logging
import math
import string

import numpy as np

logger = logging.getLogger(__name__)

_STRIP_CHARS = string.punctuation + string.whitespace


def _hash_token(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace tokens with edge punctuation stripped."""
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_STRIP_CHARS)
        if tok:
            out.append(tok)
    return out


class HashedBowEmbedder:
    """Signed feature-hashing bag-of-words embedder with L2 normalization.

    Token hashes are derived from blake2b so vectors are stable across
    processes and runs. With ``sublinear=True`` term frequencies are damped
    to 1 + log(tf), the weighting used for sentence-alignment similarity.
    """

    def __init__(self, dim: int = 768, sublinear: bool = False):
        if dim < 1:
            raise ValueError("embedding dimension must be >= 1")
        self.dim = dim
        self.sublinear = sublinear

    @property
    def fingerprint(self) -> str:
        kind = "hashed-bow-sublinear" if self.sublinear else "hashed-bow"
        return f"{kind}:dim={self.dim}"

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        counts: dict[str, int] = {}
        for tok in tokenize(text):
            counts[tok] = counts.get(tok, 0) + 1
        for tok, tf in counts.items():
            h = _hash_token(tok)
            idx = h % self.dim
            sign = 1.0 if (h >> 62) & 1 else -1.0
            weight = 1.0 + math.log(tf) if self.sublinear else float(tf)
            vec[idx] += sign * weight
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return vec

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float64)
        return np.stack([self.embed(t) for t in texts])


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; identical arrays are exactly 1.0, zero norms give 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if np.array_equal(a, b):
        if not np.any(a):
            return 0.0
        return 1.0
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cosine similarity; zero-norm operands give distance 0 with a warning."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.array_equal(a, b):
        return 0.0
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        logger.warning("cosine_distance over zero-norm embedding; returning 0.0")
        return 0.0
    return 1.0 - float(np.dot(a, b) / (na * nb))
