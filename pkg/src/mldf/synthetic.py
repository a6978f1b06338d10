"""Synthetic multi-label data for tests and quick experiments."""
from __future__ import annotations

import numpy as np

from .dataset import DatasetBundle


def make_independent(m: int, n_labels: int, features_per_label: int = 2, noise: float = 0.5,
                     n_noise_features: int = 2, seed: int = 0) -> DatasetBundle:
    """Labels that are mutually independent.

    Label ``j`` depends only on its own block of ``features_per_label``
    features plus private noise; feature blocks are independent, so the
    labels are too.
    """
    rng = np.random.default_rng(seed)
    d = n_labels * features_per_label + n_noise_features
    X = rng.normal(size=(m, d))
    Y = np.zeros((m, n_labels), dtype=np.int8)
    for j in range(n_labels):
        block = X[:, j * features_per_label:(j + 1) * features_per_label]
        Y[:, j] = block.sum(axis=1) + noise * rng.normal(size=m) > 0
    return DatasetBundle(X, Y, name="independent")


def make_correlated(m: int, d: int = 20, n_labels: int = 6, n_latent: int = 3,
                    noise: float = 0.7, seed: int = 0) -> DatasetBundle:
    """Labels driven by shared latent factors of the features, hence correlated."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(m, d))
    W = rng.normal(size=(d, n_latent)) / np.sqrt(d)
    Z = np.tanh(X @ W * 2.0)
    A = rng.normal(size=(n_latent, n_labels))
    bias = rng.normal(scale=0.5, size=n_labels) - 0.3
    logits = Z @ A + bias + noise * rng.normal(size=(m, n_labels))
    Y = (logits > 0).astype(np.int8)
    # keep every label two-sided
    for j in range(n_labels):
        if Y[:, j].all() or not Y[:, j].any():
            Y[rng.integers(m), j] ^= 1
    return DatasetBundle(X, Y, name="correlated")
