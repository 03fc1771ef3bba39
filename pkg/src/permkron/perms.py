"""Permutations as index bijections.

A permutation acts on vectors by ``(J x)[i] = x[sigma[i]]``. Production code
never materializes the corresponding 0/1 matrix; ``to_matrix`` exists only
for oracle comparisons. Random permutations are drawn with numpy's PCG64
generator (``numpy.random.default_rng``), whose ``permutation`` method is a
Fisher-Yates shuffle, so a seed pins the draw exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dense


@dataclass(frozen=True)
class Permutation:
    sigma: np.ndarray  # int64 bijection on 0..size-1

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.int64)
        object.__setattr__(self, "sigma", sigma)
        if sigma.ndim != 1 or sigma.size == 0:
            raise ValueError("permutation map must be a non-empty 1-D index array")
        seen = np.zeros(sigma.size, dtype=bool)
        if sigma.min() < 0 or sigma.max() >= sigma.size:
            raise ValueError("permutation indices out of range")
        seen[sigma] = True
        if not seen.all():
            raise ValueError("permutation map is not a bijection")

    @property
    def size(self) -> int:
        return int(self.sigma.size)


def identity(m: int) -> Permutation:
    return Permutation(np.arange(m, dtype=np.int64))


def apply(p: Permutation, x) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != p.size:
        raise ValueError(f"length {x.shape[-1]} does not match permutation size {p.size}")
    return x[..., p.sigma]


def compose(p2: Permutation, p1: Permutation) -> Permutation:
    """Permutation acting like p1 then p2: apply(compose(p2, p1), x) == apply(p2, apply(p1, x))."""
    if p1.size != p2.size:
        raise ValueError(f"size mismatch: {p2.size} vs {p1.size}")
    return Permutation(p1.sigma[p2.sigma])


def inverse(p: Permutation) -> Permutation:
    inv = np.empty(p.size, dtype=np.int64)
    inv[p.sigma] = np.arange(p.size, dtype=np.int64)
    return Permutation(inv)


def commutation(rows: int, cols: int) -> Permutation:
    """Permutation sending vec(X) to vec(X.T) for every rows x cols matrix X."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be at least 1")
    sigma = np.arange(rows * cols, dtype=np.int64).reshape(cols, rows).T.ravel()
    return Permutation(sigma)


def random_permutation(m: int, seed) -> Permutation:
    """Uniform draw from the symmetric group on m elements.

    ``seed`` may be an int or a ``numpy.random.Generator``; the generator is
    PCG64 and the shuffle is Fisher-Yates, so results are reproducible.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return Permutation(rng.permutation(m).astype(np.int64))


def to_matrix(p: Permutation, entry_limit: int = dense.ORACLE_ENTRY_LIMIT) -> np.ndarray:
    """Materialize the 0/1 matrix with matmul(to_matrix(p), x) == apply(p, x)."""
    if p.size * p.size > entry_limit:
        raise ValueError(f"permutation matrix of side {p.size} exceeds the oracle limit")
    out = np.zeros((p.size, p.size), dtype=np.float64)
    out[np.arange(p.size), p.sigma] = 1.0
    return out
