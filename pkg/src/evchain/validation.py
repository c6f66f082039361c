"""Input-validation helpers shared by the estimator layer."""
from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError


def check_fitted(estimator, attribute: str) -> None:
    if getattr(estimator, attribute, None) is None:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first")


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_pool(pool) -> None:
    if not pool:
        raise ValueError("candidate pool must be non-empty")


def check_positive(value, name: str) -> None:
    if value < 1:
        raise ValueError(f"{name} must be >= 1, got {value}")
