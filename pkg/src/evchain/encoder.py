"""Trainable text encoder: hashed n-gram features through a linear projection,
L2-normalized.  Two independent instances (question side, evidence side) form
the dual-encoder screening model; their cosine is the matching score.
"""
from __future__ import annotations

import numpy as np

from .hashing import FeatureCache, FeatureHasher
from .serialize import load_tensors, save_tensors

ZERO_NORM_EPS = 1e-12


class TextEncoder:
    """Projects hashed text features to a unit-norm embedding.

    Parameters are stored as float32 so that serialization (32-bit payload)
    round-trips bit-exactly; arithmetic upcasts to float64.
    """

    def __init__(self, hasher: FeatureHasher, projection: np.ndarray,
                 role: str = "question"):
        if role not in ("question", "evidence"):
            raise ValueError(f"unknown encoder role {role!r}")
        if projection.ndim != 2 or projection.shape[0] != hasher.dim:
            raise ValueError("projection must have shape (hasher.dim, embed_dim)")
        if not np.all(np.isfinite(projection)):
            raise ValueError("projection contains non-finite values")
        self.hasher = hasher
        self.projection = np.asarray(projection, dtype=np.float32)
        self.role = role
        self._features = FeatureCache(hasher)

    @property
    def embed_dim(self) -> int:
        return self.projection.shape[1]

    @classmethod
    def init_random(cls, hasher: FeatureHasher, embed_dim: int,
                    rng: np.random.Generator, role: str = "question",
                    scale: float | None = None) -> "TextEncoder":
        if scale is None:
            scale = 1.0 / np.sqrt(hasher.dim)
        proj = rng.normal(0.0, scale, size=(hasher.dim, embed_dim))
        return cls(hasher, proj.astype(np.float32), role=role)

    def embed(self, text: str) -> np.ndarray:
        """Unit-norm embedding of ``text``; all-zeros for degenerate input."""
        idx, val = self._features(text)
        return project_and_normalize(self.projection, idx, val)

    def save(self, path: str) -> None:
        save_tensors(path, {"projection": self.projection},
                     {"kind": "text_encoder", "role": self.role,
                      "hasher": self.hasher.config()})

    @classmethod
    def load(cls, path: str) -> "TextEncoder":
        tensors, meta = load_tensors(path)
        hasher = FeatureHasher.from_config(meta["hasher"])
        return cls(hasher, tensors["projection"], role=meta["role"])


def project_and_normalize(projection: np.ndarray, idx: np.ndarray,
                          val: np.ndarray) -> np.ndarray:
    if len(idx) == 0:
        return np.zeros(projection.shape[1], dtype=np.float64)
    v = val @ projection[idx].astype(np.float64)
    norm = np.linalg.norm(v)
    if norm <= ZERO_NORM_EPS:
        return np.zeros(projection.shape[1], dtype=np.float64)
    return v / norm


def is_zero_embedding(vec: np.ndarray) -> bool:
    return not vec.any()


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of unit vectors, 0.0 if either side is the zero embedding,
    clamped to [-1, 1] against rounding."""
    if is_zero_embedding(a) or is_zero_embedding(b):
        return 0.0
    return float(min(1.0, max(-1.0, float(np.dot(a, b)))))
