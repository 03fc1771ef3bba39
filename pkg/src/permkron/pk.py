"""Permuted block-diagonal (PK) layers.

A PK layer computes ``act(J2 (I_{n1} kron W) J1 x)`` without ever holding the
wide matrix: the inner block-diagonal product collapses to one small matmul
``W @ mat(y)``. ``effective_weight`` materializes the implied dense weight for
oracle comparisons only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dense, perms

ACTIVATIONS = ("gelu", "linear")


def activation_fn(name: str):
    if name == "gelu":
        return dense.gelu
    if name == "linear":
        return lambda x: x
    raise ValueError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class PKLayerSpec:
    """One PK layer: n1 blocks, input block width n2, output block width k.

    ``weight`` is k x n2 (square k == n2 in the plain mixing case, k == gamma * n2
    in expansion layers), ``perm_in`` permutes the length n1*n2 input and
    ``perm_out`` the length n1*k output.
    """

    n1: int
    n2: int
    k: int
    weight: np.ndarray
    perm_in: perms.Permutation
    perm_out: perms.Permutation
    activation: str = "gelu"

    def __post_init__(self):
        object.__setattr__(self, "weight", dense.as_matrix(self.weight))
        if min(self.n1, self.n2, self.k) < 1:
            raise ValueError("n1, n2, k must be positive")
        if self.weight.shape != (self.k, self.n2):
            raise ValueError(
                f"weight shape {self.weight.shape} does not match (k, n2) = {(self.k, self.n2)}"
            )
        if self.perm_in.size != self.n1 * self.n2:
            raise ValueError(
                f"input permutation size {self.perm_in.size} != n1*n2 = {self.n1 * self.n2}"
            )
        if self.perm_out.size != self.n1 * self.k:
            raise ValueError(
                f"output permutation size {self.perm_out.size} != n1*k = {self.n1 * self.k}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def in_width(self) -> int:
        return self.n1 * self.n2

    @property
    def out_width(self) -> int:
        return self.n1 * self.k


def square_spec(weight, n1: int, perm_in, perm_out, activation: str = "gelu") -> PKLayerSpec:
    """Spec for the square case k == n2."""
    weight = dense.as_matrix(weight)
    n2 = weight.shape[1]
    return PKLayerSpec(n1, n2, weight.shape[0], weight, perm_in, perm_out, activation)


def pk_forward(spec: PKLayerSpec, x) -> np.ndarray:
    """Memory-friendly forward pass; never touches an in_width x in_width matrix."""
    x = dense.as_vector(x)
    if x.size != spec.in_width:
        raise ValueError(f"input length {x.size} != n1*n2 = {spec.in_width}")
    y = perms.apply(spec.perm_in, x)
    z = dense.vec(spec.weight @ dense.mat(y, spec.n2, spec.n1))
    return activation_fn(spec.activation)(perms.apply(spec.perm_out, z))


def effective_weight(spec: PKLayerSpec, entry_limit: int = dense.ORACLE_ENTRY_LIMIT) -> np.ndarray:
    """Dense (n1*k) x (n1*n2) matrix the layer implicitly multiplies by. Oracle only."""
    entries = spec.out_width * spec.in_width
    if entries > entry_limit:
        raise ValueError(f"effective weight has {entries} entries, above the limit {entry_limit}")
    blocks = dense.kron(np.eye(spec.n1), spec.weight, entry_limit=entry_limit)
    return perms.to_matrix(spec.perm_out) @ blocks @ perms.to_matrix(spec.perm_in)


def nnz(spec: PKLayerSpec) -> int:
    """Structural nonzero count n1 * k * n2, independent of the permutations."""
    return spec.n1 * spec.k * spec.n2
