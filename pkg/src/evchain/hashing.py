"""Hashed n-gram text features: the desk-scale stand-in for a pretrained encoder."""
from __future__ import annotations

import re
from hashlib import blake2b

import numpy as np

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


class FeatureHasher:
    """Signed feature hashing over token n-grams.

    Each n-gram is hashed with a seeded 64-bit hash; the bucket is the hash
    modulo ``dim`` and the sign comes from the top hash bit, so colliding
    n-grams cancel in expectation while repeated n-grams add coherently.
    Deterministic given (dim, ngram_orders, seed).
    """

    def __init__(self, dim: int = 4096, ngram_orders: tuple[int, ...] = (1, 2),
                 seed: int = 0):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        if not ngram_orders or any(n < 1 for n in ngram_orders):
            raise ValueError("ngram_orders must be positive integers")
        self.dim = int(dim)
        self.ngram_orders = tuple(int(n) for n in ngram_orders)
        self.seed = int(seed)
        self._key = (self.seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
        # n-gram -> (bucket, sign); bounded by corpus vocabulary in practice
        self._gram_cache: dict[str, tuple[int, int]] = {}

    def config(self) -> dict:
        return {"dim": self.dim, "ngram_orders": list(self.ngram_orders),
                "seed": self.seed}

    @classmethod
    def from_config(cls, cfg: dict) -> "FeatureHasher":
        return cls(dim=cfg["dim"], ngram_orders=tuple(cfg["ngram_orders"]),
                   seed=cfg["seed"])

    def _bucket_sign(self, gram: str) -> tuple[int, int]:
        hit = self._gram_cache.get(gram)
        if hit is None:
            h = int.from_bytes(
                blake2b(gram.encode("utf-8"), digest_size=8, key=self._key).digest(),
                "little")
            hit = (h % self.dim, 1 if h >> 63 else -1)
            self._gram_cache[gram] = hit
        return hit

    def featurize_sparse(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        """Sparse signed n-gram counts: (sorted bucket indices, float values)."""
        tokens = tokenize(text)
        acc: dict[int, int] = {}
        for order in self.ngram_orders:
            if order == 1:
                grams = tokens
            else:
                grams = [" ".join(tokens[i:i + order])
                         for i in range(len(tokens) - order + 1)]
            for gram in grams:
                bucket, sign = self._bucket_sign(gram)
                acc[bucket] = acc.get(bucket, 0) + sign
        idx = np.array(sorted(acc), dtype=np.int64)
        val = np.array([acc[i] for i in idx], dtype=np.float64)
        keep = val != 0.0
        return idx[keep], val[keep]

    def featurize(self, text: str) -> np.ndarray:
        """Dense signed n-gram count vector of length ``dim``."""
        vec = np.zeros(self.dim, dtype=np.float64)
        idx, val = self.featurize_sparse(text)
        vec[idx] = val
        return vec


class FeatureCache:
    """Per-run memo of featurize_sparse results, keyed by raw text."""

    def __init__(self, hasher: FeatureHasher):
        self.hasher = hasher
        self._memo: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def __call__(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        hit = self._memo.get(text)
        if hit is None:
            hit = self.hasher.featurize_sparse(text)
            self._memo[text] = hit
        return hit
