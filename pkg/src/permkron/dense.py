"""Dense float64 kernels: products, vectorization, Kronecker oracle, activations.

Matrices are plain 2-D numpy arrays and vectors are 1-D arrays, always in
64-bit precision. ``vec`` stacks columns, so ``vec(X)[j * rows + i] == X[i, j]``,
and ``mat`` is its exact inverse. The Kronecker product exists only so tests
can materialize small dense references; production code never calls it.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

# Largest entry count any oracle-only materialization may produce.
ORACLE_ENTRY_LIMIT = 1 << 24

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def as_matrix(a) -> np.ndarray:
    """Coerce to a finite float64 2-D array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    return m


def as_vector(a) -> np.ndarray:
    """Coerce to a finite float64 1-D array."""
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite entries")
    return v


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def transpose(a) -> np.ndarray:
    return as_matrix(a).T.copy()


def vec(x) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return as_matrix(x).flatten(order="F")


def mat(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of ``vec``: reshape a vector into a column-stacked matrix."""
    v = as_vector(v)
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape length {v.size} into {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def kron(a, b, entry_limit: int = ORACLE_ENTRY_LIMIT) -> np.ndarray:
    """Kronecker product, guarded so it is only usable at oracle scale."""
    a = as_matrix(a)
    b = as_matrix(b)
    entries = a.size * b.size
    if entries > entry_limit:
        raise ValueError(
            f"kron would materialize {entries} entries, above the limit {entry_limit}"
        )
    return np.kron(a, b)


def gelu(x):
    """Exact GELU, t * Phi(t) with the Gaussian CDF (no tanh approximation)."""
    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x):
    """Derivative of exact GELU: Phi(t) + t * N(t)."""
    x = np.asarray(x, dtype=np.float64)
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


def layer_norm(x, gain, bias, eps: float = 1e-5) -> np.ndarray:
    """Normalize each row over its columns, then rescale and shift.

    ``gain`` and ``bias`` are per-column vectors. The variance is the biased
    (1/cols) estimate and ``eps`` keeps constant rows finite.
    """
    x = as_matrix(x)
    gain = as_vector(gain)
    bias = as_vector(bias)
    if gain.size != x.shape[1] or bias.size != x.shape[1]:
        raise ValueError(
            f"gain/bias lengths {gain.size}/{bias.size} do not match {x.shape[1]} columns"
        )
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = x.mean(axis=1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    return centered / np.sqrt(var + eps) * gain + bias
