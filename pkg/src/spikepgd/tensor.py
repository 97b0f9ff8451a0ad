"""Array helpers: norms, the relative-change metric and a seeded random source.

Tensors are plain ``numpy.ndarray`` objects in float64.
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float64


def as_tensor(a) -> np.ndarray:
    return np.asarray(a, dtype=DTYPE)


def frobenius_norm(a) -> float:
    """Square root of the sum of squared entries."""
    a = as_tensor(a)
    return float(np.sqrt(np.sum(a * a)))


def relative_change(a_t, a_prev) -> float:
    """``||a_t - a_prev|| / ||a_t||`` with Frobenius norms.

    A vanished ``a_t`` gives 0 when nothing changed and ``inf`` otherwise, so a
    gate comparing against this value always fires in that case.
    """
    a_t = as_tensor(a_t)
    a_prev = as_tensor(a_prev)
    if a_t.shape != a_prev.shape:
        raise ValueError(f"shape mismatch: {a_t.shape} vs {a_prev.shape}")
    num = frobenius_norm(a_t - a_prev)
    den = frobenius_norm(a_t)
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


def batch_relative_change(a_t, a_prev) -> np.ndarray:
    """Per-example :func:`relative_change` over the leading axis."""
    a_t = as_tensor(a_t)
    a_prev = as_tensor(a_prev)
    if a_t.shape != a_prev.shape:
        raise ValueError(f"shape mismatch: {a_t.shape} vs {a_prev.shape}")
    n = a_t.shape[0]
    diff = (a_t - a_prev).reshape(n, -1)
    flat = a_t.reshape(n, -1)
    num = np.sqrt(np.sum(diff * diff, axis=1))
    den = np.sqrt(np.sum(flat * flat, axis=1))
    out = np.empty(n, dtype=DTYPE)
    zero = den == 0.0
    out[~zero] = num[~zero] / den[~zero]
    out[zero] = np.where(num[zero] == 0.0, 0.0, np.inf)
    return out


class SeededRandom:
    """Deterministic random source backed by numpy's PCG64.

    ``fork`` derives independent child streams from integer keys, which keeps
    per-batch draws reproducible regardless of the order they are requested in.
    """

    def __init__(self, seed: int = 0, _key: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self._key = tuple(_key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self._key)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def fork(self, *key: int) -> "SeededRandom":
        return SeededRandom(self.seed, self._key + tuple(int(k) for k in key))

    def uniform(self, lo: float, hi: float, shape) -> np.ndarray:
        return uniform(self, lo, hi, shape)

    def normal(self, shape, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=shape).astype(DTYPE)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, lo: int, hi: int, shape=None):
        return self._gen.integers(lo, hi, size=shape)

    def __repr__(self) -> str:
        return f"SeededRandom(seed={self.seed}, key={self._key})"


def uniform(rng: SeededRandom, lo: float, hi: float, shape) -> np.ndarray:
    """Entries drawn from ``[lo, hi)``; ``lo == hi`` yields a constant tensor."""
    if lo > hi:
        raise ValueError(f"lo ({lo}) > hi ({hi})")
    u = rng._gen.random(size=shape)
    out = lo + (hi - lo) * u
    # rounding in lo + (hi-lo)*u can land exactly on hi
    if hi > lo:
        out = np.minimum(out, np.nextafter(hi, lo))
    return np.asarray(out, dtype=DTYPE)
