"""Seeded latent draws.

Every batch is addressed by a ``(seed, stream)`` pair. The pair is turned into
an independent Philox substream via :class:`numpy.random.SeedSequence`, so the
same pair always reproduces the same values and distinct streams never share
state. Normals are produced by pushing uniforms through the normal quantile,
which keeps common random numbers aligned across parameter values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .generators.normal import inv_norm_cdf

__all__ = [
    "LatentDraws",
    "brownian_increments",
    "generator",
    "sample_standard_normal",
    "sample_uniform",
]

_TWO53 = float(2**53)


@dataclass(frozen=True, eq=False)
class LatentDraws:
    """Read-only batch of latent samples.

    Attributes
    ----------
    values : ndarray
        ``(n, q)`` draws, or ``(paths, steps, dims)`` Brownian increments.
    seed, stream : int
        Address of the substream the values came from. Both are ``-1`` for
        draws wrapped from a user-supplied array.
    """

    values: np.ndarray
    seed: int = -1
    stream: int = -1

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.n

    def subset(self, idx) -> "LatentDraws":
        return LatentDraws(self.values[idx], self.seed, self.stream)


def generator(seed: int, stream: int, *subkey: int) -> np.random.Generator:
    """Philox generator for the substream ``(seed, stream, *subkey)``."""
    key = (int(stream),) + tuple(int(k) for k in subkey)
    if int(seed) < 0 or min(key) < 0:
        raise ValueError("seed and stream must be non-negative integers")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def _uniforms(gen: np.random.Generator, size) -> np.ndarray:
    # 53-bit grid shifted by half a cell: never 0 or 1
    ints = gen.integers(0, 2**53, size=size, dtype=np.int64)
    return (ints.astype(float) + 0.5) / _TWO53


def _check_count(name: str, value: int) -> int:
    if int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def sample_uniform(n: int, seed: int, stream: int = 0, q: int = 1) -> LatentDraws:
    """``(n, q)`` uniforms on the open unit interval."""
    n, q = _check_count("n", n), _check_count("q", q)
    return LatentDraws(_uniforms(generator(seed, stream), (n, q)), int(seed), int(stream))


def sample_standard_normal(n: int, q: int, seed: int, stream: int = 0) -> LatentDraws:
    """``(n, q)`` independent standard normals."""
    n, q = _check_count("n", n), _check_count("q", q)
    z = inv_norm_cdf(_uniforms(generator(seed, stream), (n, q)))
    return LatentDraws(z, int(seed), int(stream))


def brownian_increments(steps: int, paths: int, dt: float, dims: int, seed: int,
                        stream: int = 0) -> LatentDraws:
    """Brownian increments with variance ``dt``, shaped ``(paths, steps, dims)``."""
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive, got {dt!r}")
    steps, paths, dims = (_check_count(k, v) for k, v in
                          (("steps", steps), ("paths", paths), ("dims", dims)))
    z = inv_norm_cdf(_uniforms(generator(seed, stream), (paths, steps, dims)))
    return LatentDraws(z * math.sqrt(dt), int(seed), int(stream))
