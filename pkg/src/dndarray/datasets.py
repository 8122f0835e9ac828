"""Seeded synthetic datasets for benchmarks and verification.

Every generator draws the full global array from the seed and then keeps
this rank's chunk, so content never depends on the rank count or split.
"""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from .ndcore import DndArray, array, random_uniform
from .transport import Communicator

# benchmark shapes loosely modelled on the datasets the method was evaluated on
SUSY_FEATURES = 18  # tall-skinny particle-physics table
EURAD_FEATURES = 100  # air-quality regression features
CITYSCAPES_SHAPE = (300, 1000)  # short-fat image feature matrix


def uniform(shape, split=0, seed=0, comm: Optional[Communicator] = None) -> DndArray:
    return random_uniform(shape, split=split, seed=seed, comm=comm)


def blobs(n: int, m: int, centers: int = 8, spread: float = 0.5, split=0, seed=0,
          comm: Optional[Communicator] = None) -> DndArray:
    """Gaussian clouds around ``centers`` uniformly placed points in ``[0, 10)^m``."""
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.0, 10.0, size=(centers, m))
    labels = rng.integers(0, centers, size=n)
    data = means[labels] + spread * rng.standard_normal((n, m))
    return array(data, split=split, comm=comm)


def regression(n: int, m: int, split=0, seed=0, noise: float = 0.1, density: float = 0.3,
               comm: Optional[Communicator] = None) -> Tuple[DndArray, DndArray]:
    """``(X, y)`` with an all-ones bias column 0 and ``m - 1`` standardised features.

    A ``density`` fraction of the true feature weights is nonzero.
    """
    if m < 1:
        raise ValueError("regression data needs at least the bias column")
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((n, m - 1))
    if n > 1:
        features = (features - features.mean(axis=0)) / features.std(axis=0)
    x = np.hstack([np.ones((n, 1)), features])
    w = np.zeros(m)
    w[0] = rng.normal()
    active = rng.random(m - 1) < density
    w[1:][active] = rng.normal(scale=2.0, size=int(active.sum()))
    y = x @ w + noise * rng.standard_normal(n)
    return array(x, split=split, comm=comm), array(y, split=0, comm=comm)
