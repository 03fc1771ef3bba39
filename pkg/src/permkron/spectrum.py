"""Singular-value analysis of sparse random weights.

A masked Gaussian weight at budget ``omega`` and scaling exponent ``a`` has
width m = omega^((1+a)/2) and density p = omega^(-a), so the expected nonzero
count m^2 p stays at omega while the matrix widens and thins. Spectra are
normalized by c, the mean diagonal entry of the Gram matrix Q = Z Z^T, which
pins trace(Q/c) to the dimension; for a dense square Gaussian the largest
normalized singular value approaches the Marchenko-Pastur edge 2, and for a
(gamma*m) x m Gaussian it approaches 1 + sqrt(gamma).

The eigensolver is a cyclic Jacobi iteration written here, so the library
carries no external solver; numpy appears in tests only as an independent
reference. Permuted block-diagonal weights need no solver at all: the wide
matrix J2 (I kron W) J1 repeats each singular value of W once per block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dense, perms, pk

DENSE_WIDTH_CAP = 4096  # largest side any dense materialization may have


def _round_robin_rounds(n: int):
    """Tournament schedule: n-1 rounds of disjoint index pairs covering every
    (p, q) pair exactly once per sweep. Odd n gets a bye via padding."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps = []
        qs = []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if max(a, b) < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps), np.array(qs)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def symmetric_eigen(a, max_sweeps: int = 100, tol_factor: float = 1e-12):
    """Eigendecomposition of a symmetric matrix by Jacobi rotations.

    One sweep visits every index pair once, in round-robin order so that each
    round's disjoint rotations apply as one batched orthogonal update (row
    phase, then column phase). Returns (eigenvalues, eigenvectors) with
    eigenvalues sorted descending and eigenvectors in matching columns.
    Sweeps stop once the off-diagonal Frobenius mass falls below
    tol_factor * ||A||_F; raises if the input is not symmetric or the sweep
    cap is hit first.
    """
    a = dense.as_matrix(a)
    n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError(f"matrix is not square: {a.shape}")
    if n > 1 and np.abs(a - a.T).max() >= 1e-10 * max(1.0, np.abs(a).max()):
        raise ValueError("matrix is not symmetric")
    work = 0.5 * (a + a.T)
    vecs_t = np.eye(n)  # row i accumulates the i-th eigenvector
    norm = np.linalg.norm(work)
    if n == 1 or norm == 0.0:
        return work.diagonal().copy(), vecs_t.T
    threshold = tol_factor * norm
    rounds = _round_robin_rounds(n)

    for sweep in range(max_sweeps):
        off = np.linalg.norm(work - np.diag(work.diagonal()))
        if off <= threshold:
            break
        # early sweeps skip rotations far below the current off-diagonal
        # scale; later sweeps rotate everything that is left
        rotate_above = 0.2 * off / (n * n) if sweep < 3 else 0.0
        for all_p, all_q in rounds:
            apq = work[all_p, all_q]
            active = np.abs(apq) > rotate_above
            if not active.any():
                continue
            p = all_p[active]
            q = all_q[active]
            apq = apq[active]
            app = work[p, p]
            aqq = work[q, q]
            tau = (aqq - app) / (2.0 * apq)
            t = np.where(tau == 0.0, 1.0,
                         np.sign(tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau)))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            cc = c[:, None]
            ss = s[:, None]
            # row phase: J^T A (pairs are disjoint, so rows update independently)
            rp = work[p, :]
            rq = work[q, :]
            work[p, :] = cc * rp - ss * rq
            work[q, :] = ss * rp + cc * rq
            # column phase: (J^T A) J
            cp = work[:, p]
            cq = work[:, q]
            work[:, p] = cp * c[None, :] - cq * s[None, :]
            work[:, q] = cp * s[None, :] + cq * c[None, :]
            # each rotation zeroes its own pair exactly
            work[p, q] = 0.0
            work[q, p] = 0.0
            vp = vecs_t[p, :]
            vq = vecs_t[q, :]
            vecs_t[p, :] = cc * vp - ss * vq
            vecs_t[q, :] = ss * vp + cc * vq
    else:
        raise RuntimeError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")

    values = work.diagonal().copy()
    order = np.argsort(values)[::-1]
    return values[order], vecs_t.T[:, order]


def singular_values(z) -> np.ndarray:
    """Sorted singular values via the smaller Gram matrix, clamped at zero."""
    z = dense.as_matrix(z)
    gram = z @ z.T if z.shape[0] <= z.shape[1] else z.T @ z
    values, _ = symmetric_eigen(gram)
    return np.sqrt(np.clip(values, 0.0, None))


def mp_scaling(omega: float, a: float):
    """(width m, density p) for the budget-preserving scaling m^2 p = omega."""
    if omega <= 0 or a < 0:
        raise ValueError("require omega > 0 and a >= 0")
    m = int(np.floor(omega ** ((1.0 + a) / 2.0) + 0.5))
    return m, float(omega) ** (-a)


def sparse_random_weight(omega: float, a: float, seed,
                         width_cap: int = DENSE_WIDTH_CAP) -> np.ndarray:
    """Dense m x m draw of Z = M * W, W standard Gaussian, mask Bernoulli(p).

    The weight draw comes first, then the mask, from one PCG64 stream.
    """
    m, p = mp_scaling(omega, a)
    if m > width_cap:
        raise ValueError(f"width {m} exceeds the dense cap {width_cap}")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((m, m))
    mask = rng.random((m, m)) < p
    return w * mask


def sparse_random_triplets(omega: float, a: float, seed):
    """Sparse draw of the same law as ``sparse_random_weight`` at any width.

    The nonzero count is Binomial(m^2, p), positions uniform without
    replacement, values standard Gaussian, which is exactly the entrywise
    Bernoulli-mask law; the stream differs from the dense constructor, so
    the two are distribution-equal, not bit-equal. Returns (m, rows, cols,
    values).
    """
    m, p = mp_scaling(omega, a)
    rng = np.random.default_rng(seed)
    count = int(rng.binomial(m * m, p)) if p < 1.0 else m * m
    flat = rng.choice(m * m, size=count, replace=False)
    values = rng.standard_normal(count)
    return m, flat // m, flat % m, values


def _triplet_matvec(rows, cols, values, n_rows, v):
    return np.bincount(rows, weights=values * v[cols], minlength=n_rows)


def largest_singular_value_triplets(m, rows, cols, values, iterations: int = 2000,
                                    tol: float = 1e-12, start_seed: int = 0) -> float:
    """Power iteration on Z^T Z without materializing Z. Deterministic per start seed."""
    if len(values) == 0:
        return 0.0
    v = np.random.default_rng(start_seed).standard_normal(m)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iterations):
        zv = _triplet_matvec(rows, cols, values, m, v)
        v_next = _triplet_matvec(cols, rows, values, m, zv)
        norm = np.linalg.norm(v_next)
        if norm == 0.0:
            return 0.0
        v = v_next / norm
        new_sigma = np.linalg.norm(_triplet_matvec(rows, cols, values, m, v))
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1.0):
            return float(new_sigma)
        sigma = new_sigma
    return float(sigma)


@dataclass(frozen=True)
class SpectrumReport:
    singular_values: np.ndarray  # normalized, sorted descending
    largest: float
    rows: int
    cols: int
    seed: int | None = None
    a: float | None = None
    omega: float | None = None
    m: int | None = None
    p: float | None = None
    trials: int = 1


def normalized_spectrum(z, seed=None, a=None, omega=None) -> SpectrumReport:
    """Singular values of Z scaled by sqrt(c), c the mean diagonal of Q = Z Z^T.

    After scaling, the mean squared singular value is 1 and trace(Q/c)
    equals the row count by construction.
    """
    z = dense.as_matrix(z)
    c = float((z * z).sum()) / z.shape[0]
    if c == 0.0:
        raise ValueError("cannot normalize an all-zero matrix")
    values = singular_values(z) / np.sqrt(c)
    m, p = (None, None)
    if omega is not None and a is not None:
        m, p = mp_scaling(omega, a)
    return SpectrumReport(
        singular_values=values,
        largest=float(values[0]),
        rows=z.shape[0],
        cols=z.shape[1],
        seed=seed,
        a=a,
        omega=omega,
        m=m,
        p=p,
    )


def largest_normalized_singular_value(omega: float, a: float, seed,
                                      start_seed: int = 0) -> float:
    """Top normalized singular value under the (m, p) scaling, at any width."""
    m, rows, cols, values = sparse_random_triplets(omega, a, seed)
    total = float((values * values).sum())
    if total == 0.0:
        return 0.0
    c = total / m
    sigma = largest_singular_value_triplets(m, rows, cols, values, start_seed=start_seed)
    return sigma / np.sqrt(c)


def pk_spectrum(w, n1: int, perm_in: perms.Permutation | None = None,
                perm_out: perms.Permutation | None = None) -> np.ndarray:
    """Singular values of J2 (I_{n1} kron W) J1: those of W, each n1 times.

    The permutations are accepted (and validated for size) because they are
    part of the wide matrix, but they cannot change its singular values.
    """
    w = dense.as_matrix(w)
    if n1 < 1:
        raise ValueError("n1 must be positive")
    if perm_in is not None and perm_in.size != n1 * w.shape[1]:
        raise ValueError("input permutation size mismatch")
    if perm_out is not None and perm_out.size != n1 * w.shape[0]:
        raise ValueError("output permutation size mismatch")
    base = singular_values(w)
    return np.sort(np.repeat(base, n1))[::-1]


def a_sweep(omega: float, a_values, trials: int, seed: int):
    """Largest normalized singular value per (a, trial); rows for the harness.

    Trial t of exponent a uses the derived seed [seed, t, index(a)], so seed
    sets line up across the sweep.
    """
    rows = []
    for t in range(trials):
        for i, a in enumerate(a_values):
            value = largest_normalized_singular_value(omega, a, [seed, t, i])
            rows.append({"a": float(a), "trial": t, "largest": float(value)})
    return rows
