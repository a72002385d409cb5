"""Deterministic sampling utilities.

Every random draw in the package goes through a counter-based Philox
generator keyed by a master seed plus a tuple of string tags, so results
are reproducible and independent of evaluation order or worker count.
"""
from __future__ import annotations

import hashlib

import numpy as np

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def _key(seed: int, tags: tuple) -> np.ndarray:
    h = hashlib.blake2b(digest_size=16)  # Philox key width is 2x uint64
    h.update(str(int(seed)).encode())
    for t in tags:
        h.update(b"/")
        h.update(str(t).encode())
    return np.frombuffer(h.digest(), dtype=np.uint64)


def generator(seed: int, *tags) -> np.random.Generator:
    """Philox generator keyed by (seed, tags)."""
    return np.random.Generator(np.random.Philox(key=_key(seed, tags)))


def halton(count: int, dim: int, skip: int = 20) -> np.ndarray:
    """Radical-inverse Halton points in [0,1)^dim, shape (count, dim)."""
    if dim > len(_PRIMES):
        raise ValueError(f"halton supports dim <= {len(_PRIMES)}")
    out = np.empty((count, dim))
    idx = np.arange(skip + 1, skip + count + 1, dtype=np.int64)
    for j in range(dim):
        b = _PRIMES[j]
        i = idx.copy()
        f = np.ones(count)
        r = np.zeros(count)
        while np.any(i > 0):
            f = f / b
            r = r + f * (i % b)
            i = i // b
        out[:, j] = r
    return out


def sphere_directions(count: int, dim: int, seed: int, *tags) -> np.ndarray:
    """Seeded unit vectors on the Euclidean sphere, shape (count, dim)."""
    g = generator(seed, "sphere-dirs", *tags)
    v = g.standard_normal((count, dim))
    n = np.linalg.norm(v, axis=1, keepdims=True)
    n[n == 0] = 1.0
    return v / n
