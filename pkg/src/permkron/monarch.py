"""Monarch matrices and their weight-shared mixing-block form.

A Monarch matrix on n = b*b coordinates is ``P^T L P R`` where L and R are
block diagonal with b blocks of side b and P is the square commutation
permutation. ``monarch_apply`` runs the factors block-wise so the n x n
matrix is never formed. A mixing block with a linear middle activation,
``H = act(W X V)`` with square S = C = b, is exactly the weight-shared case
where every L block is V^T and every R block is W.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from . import dense, perms


@dataclass(frozen=True)
class MonarchSpec:
    left_blocks: np.ndarray   # (b, b, b): b square blocks of side b
    right_blocks: np.ndarray

    def __post_init__(self):
        lb = np.asarray(self.left_blocks, dtype=np.float64)
        rb = np.asarray(self.right_blocks, dtype=np.float64)
        object.__setattr__(self, "left_blocks", lb)
        object.__setattr__(self, "right_blocks", rb)
        if lb.ndim != 3 or lb.shape[0] != lb.shape[1] or lb.shape[1] != lb.shape[2]:
            raise ValueError(f"left blocks must be (b, b, b), got {lb.shape}")
        if rb.shape != lb.shape:
            raise ValueError(f"left/right block shapes differ: {lb.shape} vs {rb.shape}")

    @property
    def block_side(self) -> int:
        return int(self.left_blocks.shape[0])

    @property
    def n(self) -> int:
        b = self.block_side
        return b * b


def monarch_materialize(spec: MonarchSpec, entry_limit: int = dense.ORACLE_ENTRY_LIMIT) -> np.ndarray:
    """Dense n x n Monarch matrix. Oracle only."""
    n = spec.n
    if n * n > entry_limit:
        raise ValueError(f"monarch matrix with {n * n} entries exceeds the limit {entry_limit}")
    b = spec.block_side
    pc = perms.to_matrix(perms.commutation(b, b))
    left = block_diag(*spec.left_blocks)
    right = block_diag(*spec.right_blocks)
    return pc.T @ left @ pc @ right


def monarch_apply(spec: MonarchSpec, x) -> np.ndarray:
    """Apply the Monarch matrix block-wise: right blocks, permute, left blocks, permute back."""
    x = dense.as_vector(x)
    b = spec.block_side
    if x.size != spec.n:
        raise ValueError(f"input length {x.size} does not match n = {spec.n}")
    jc = perms.commutation(b, b)
    chunks = x.reshape(b, b)  # row l is the l-th length-b chunk
    y = np.einsum("lij,lj->li", spec.right_blocks, chunks).reshape(-1)
    y = perms.apply(jc, y)
    z = np.einsum("lij,lj->li", spec.left_blocks, y.reshape(b, b)).reshape(-1)
    return perms.apply(perms.inverse(jc), z)


def mixer_as_monarch(w, v) -> MonarchSpec:
    """Weight-shared Monarch equivalent of the linear-middle block H = act(W X V).

    Requires square W and V of equal side; every left block is V^T and every
    right block is W.
    """
    w = dense.as_matrix(w)
    v = dense.as_matrix(v)
    if w.shape[0] != w.shape[1] or v.shape[0] != v.shape[1] or w.shape[0] != v.shape[0]:
        raise ValueError(
            f"requires square W and V of equal side, got {w.shape} and {v.shape}"
        )
    b = w.shape[0]
    return MonarchSpec(
        left_blocks=np.broadcast_to(v.T, (b, b, b)).copy(),
        right_blocks=np.broadcast_to(w, (b, b, b)).copy(),
    )


def monarch_chain_apply(specs, x, activation=dense.gelu) -> np.ndarray:
    """act(M_L ... M_2 M_1 x); the inner applications stay linear."""
    if not specs:
        raise ValueError("need at least one Monarch factor")
    n = specs[0].n
    out = dense.as_vector(x)
    for spec in specs:
        if spec.n != n:
            raise ValueError("all Monarch factors must share the same dimension")
        out = monarch_apply(spec, out)
    return activation(out)
