"""Synthetic datasets: uniform, clustered and geometric integer points."""
from __future__ import annotations

import numpy as np

from .core import COORD_LIMIT, Dataset, DatasetError, MAX_DIM

DISTRIBUTIONS = ("uniform", "clustered", "geometric")
N_CLASSES = 4


def generate(n: int, d: int, k: int = 1, seed: int = 0, distribution: str = "uniform") -> Dataset:
    """``n`` labelled points in [0, 2^30)^d.

    Ids encode the machine of origin: point j gets origin ``j % k`` and
    local index ``j // k``, id = origin * 2^32 + local index.
    """
    if n < 0 or n >= 2**32 * max(k, 1):
        raise DatasetError(f"invalid point count {n}")
    if not 1 <= d <= MAX_DIM:
        raise DatasetError(f"dimension must be in 1..{MAX_DIM}, got {d}")
    if k < 1:
        raise DatasetError(f"invalid origin count k={k}")
    rng = np.random.default_rng([seed, n, d])
    hi = COORD_LIMIT
    if distribution == "uniform":
        coords = rng.integers(0, hi, size=(n, d))
    elif distribution == "clustered":
        centers = rng.integers(hi // 8, hi - hi // 8, size=(8, d))
        which = rng.integers(0, len(centers), size=n)
        noise = rng.normal(0.0, hi / 512, size=(n, d))
        coords = np.clip(np.rint(centers[which] + noise), 0, hi - 1).astype(np.int64)
    elif distribution == "geometric":
        coords = np.minimum(rng.geometric(1e-3, size=(n, d)) - 1, hi - 1)
    else:
        raise DatasetError(f"unknown distribution {distribution!r}")
    j = np.arange(n, dtype=np.int64)
    ids = (j % k) * 2**32 + j // k
    labels = rng.integers(0, N_CLASSES, size=n)
    return Dataset(ids, coords.astype(np.int64).reshape(n, d), labels, d=d)


def random_query(d: int, seed: int = 0, trial: int = 0) -> list[int]:
    rng = np.random.default_rng([seed, trial, d, 0x51])
    return rng.integers(0, COORD_LIMIT, size=d).tolist()
