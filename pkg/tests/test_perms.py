import itertools

import numpy as np
import pytest
from scipy.stats import chi2

from permkron import dense, perms


def test_apply_identity_and_reversal():
    x = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(perms.apply(perms.identity(3), x), x)
    rev = perms.Permutation(np.array([2, 1, 0]))
    assert np.array_equal(perms.apply(rev, x), np.array([3.0, 2.0, 1.0]))


def test_apply_inverse_round_trip(rng):
    p = perms.random_permutation(9, 3)
    x = rng.standard_normal(9)
    assert np.array_equal(perms.apply(p, perms.apply(perms.inverse(p), x)), x)


def test_apply_length_mismatch():
    with pytest.raises(ValueError, match="size"):
        perms.apply(perms.identity(3), np.ones(4))


def test_bijection_validation():
    with pytest.raises(ValueError, match="bijection"):
        perms.Permutation(np.array([0, 0, 2]))
    with pytest.raises(ValueError, match="range"):
        perms.Permutation(np.array([0, 3]))


def test_compose_with_identity_and_inverse():
    p = perms.random_permutation(6, 0)
    assert np.array_equal(perms.compose(p, perms.identity(6)).sigma, p.sigma)
    assert np.array_equal(perms.compose(p, perms.inverse(p)).sigma,
                          perms.identity(6).sigma)


def test_compose_matches_sequential_application(rng):
    # full S_3 group table, checked against the materialized matrix product
    elements = [perms.Permutation(np.array(s)) for s in itertools.permutations(range(3))]
    x = rng.standard_normal(3)
    for p1 in elements:
        for p2 in elements:
            combined = perms.compose(p2, p1)
            assert np.array_equal(perms.apply(combined, x),
                                  perms.apply(p2, perms.apply(p1, x)))
            m = perms.to_matrix(p2) @ perms.to_matrix(p1)
            assert np.array_equal(perms.to_matrix(combined), m)


def test_inverse_examples():
    assert np.array_equal(perms.inverse(perms.identity(4)).sigma, np.arange(4))
    rev = perms.Permutation(np.array([2, 1, 0]))
    assert np.array_equal(perms.inverse(rev).sigma, rev.sigma)
    p = perms.random_permutation(7, 11)
    assert np.array_equal(perms.compose(p, perms.inverse(p)).sigma, np.arange(7))


def test_commutation_transposes_vec(rng):
    assert np.array_equal(perms.commutation(1, 5).sigma, np.arange(5))
    jc = perms.commutation(2, 2)
    assert np.array_equal(perms.apply(jc, np.array([1.0, 3.0, 2.0, 4.0])),
                          np.array([1.0, 2.0, 3.0, 4.0]))
    for s in range(1, 6):
        for c in range(1, 6):
            x = rng.standard_normal((s, c))
            got = perms.apply(perms.commutation(s, c), dense.vec(x))
            assert np.array_equal(got, dense.vec(x.T))
            both = perms.compose(perms.commutation(c, s), perms.commutation(s, c))
            assert np.array_equal(both.sigma, np.arange(s * c))


def test_random_permutation_determinism():
    assert np.array_equal(perms.random_permutation(20, 5).sigma,
                          perms.random_permutation(20, 5).sigma)
    assert np.array_equal(perms.random_permutation(1, 0).sigma, np.array([0]))


def _chi_square_uniformity(draws):
    # 24000 draws over S_4; compare against enumerated permutations
    universe = {s: 0 for s in itertools.permutations(range(4))}
    for sigma in draws:
        universe[tuple(int(i) for i in sigma)] += 1
    expected = len(draws) / 24
    stat = sum((count - expected) ** 2 / expected for count in universe.values())
    return stat


def test_random_permutation_uniformity():
    rng = np.random.default_rng(777)
    draws = [perms.random_permutation(4, rng).sigma for _ in range(24000)]
    stat = _chi_square_uniformity(draws)
    assert stat < chi2.ppf(0.99, 23)


def test_random_composition_closure_uniformity():
    # composing a fresh random permutation with a fixed one stays uniform
    fixed = perms.Permutation(np.array([2, 0, 3, 1]))
    rng = np.random.default_rng(778)
    draws = [perms.compose(perms.random_permutation(4, rng), fixed).sigma
             for _ in range(24000)]
    stat = _chi_square_uniformity(draws)
    assert stat < chi2.ppf(0.99, 23)


def test_to_matrix():
    assert np.array_equal(perms.to_matrix(perms.identity(3)), np.eye(3))
    rev = perms.Permutation(np.array([2, 1, 0]))
    assert np.array_equal(perms.to_matrix(rev), np.fliplr(np.eye(3)))
    p = perms.random_permutation(12, 4)
    x = np.random.default_rng(0).standard_normal(12)
    assert np.array_equal(perms.to_matrix(p) @ x, perms.apply(p, x))


def test_to_matrix_is_group_homomorphism():
    rng = np.random.default_rng(9)
    for m in (2, 7, 64):
        p1 = perms.random_permutation(m, rng)
        p2 = perms.random_permutation(m, rng)
        assert np.array_equal(perms.to_matrix(perms.compose(p2, p1)),
                              perms.to_matrix(p2) @ perms.to_matrix(p1))
        assert np.array_equal(perms.to_matrix(perms.inverse(p1)),
                              perms.to_matrix(p1).T)


def test_to_matrix_size_limit():
    with pytest.raises(ValueError, match="limit"):
        perms.to_matrix(perms.identity(100), entry_limit=100)


def test_permutation_commutes_with_entrywise_gelu(rng):
    p = perms.random_permutation(40, 2)
    x = rng.standard_normal(40)
    assert np.array_equal(perms.apply(p, dense.gelu(x)), dense.gelu(perms.apply(p, x)))
