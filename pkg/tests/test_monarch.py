import numpy as np
import pytest

from permkron import dense, monarch


def _identity_spec(b):
    eye = np.broadcast_to(np.eye(b), (b, b, b)).copy()
    return monarch.MonarchSpec(eye, eye.copy())


def test_identity_blocks_materialize_to_identity():
    spec = _identity_spec(3)
    assert np.array_equal(monarch.monarch_materialize(spec), np.eye(9))
    x = np.arange(9, dtype=float)
    assert np.array_equal(monarch.monarch_apply(spec, x), x)


def test_materialize_matches_explicit_four_by_four():
    left = np.array([[[1.0, 2.0], [3.0, 4.0]], [[5.0, 6.0], [7.0, 8.0]]])
    right = np.array([[[1.0, 0.0], [0.0, 1.0]], [[2.0, 0.0], [0.0, 2.0]]])
    spec = monarch.MonarchSpec(left, right)
    # by-hand product with explicitly typed factors
    pc = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    bd_left = np.zeros((4, 4))
    bd_left[:2, :2] = left[0]
    bd_left[2:, 2:] = left[1]
    bd_right = np.zeros((4, 4))
    bd_right[:2, :2] = right[0]
    bd_right[2:, 2:] = right[1]
    expected = pc.T @ bd_left @ pc @ bd_right
    assert np.abs(monarch.monarch_materialize(spec) - expected).max() < 1e-14


def test_factor_nonzero_bound(rng):
    # each block-diagonal factor carries at most n * sqrt(n) nonzeros
    b = 4
    spec = monarch.MonarchSpec(rng.standard_normal((b, b, b)),
                               rng.standard_normal((b, b, b)))
    n = spec.n
    for blocks in (spec.left_blocks, spec.right_blocks):
        factor_nnz = sum(np.count_nonzero(blk) for blk in blocks)
        assert factor_nnz <= n * b
        assert factor_nnz == n * b  # random blocks are fully dense


def test_weight_shared_factor_nonzeros(rng):
    # the shared-block factors of a mixing block each carry side^3 nonzeros
    side = 5
    w = rng.standard_normal((side, side))
    v = rng.standard_normal((side, side))
    spec = monarch.mixer_as_monarch(w, v)
    for blocks in (spec.left_blocks, spec.right_blocks):
        assert sum(np.count_nonzero(blk) for blk in blocks) == side**3


def test_apply_matches_materialize(rng):
    b = 4
    spec = monarch.MonarchSpec(rng.standard_normal((b, b, b)),
                               rng.standard_normal((b, b, b)))
    dense_m = monarch.monarch_materialize(spec)
    worst = 0.0
    for _ in range(50):
        x = rng.standard_normal(16)
        worst = max(worst, float(np.abs(monarch.monarch_apply(spec, x) - dense_m @ x).max()))
    assert worst < 1e-12


def test_apply_bilinearity(rng):
    b = 3
    spec = monarch.MonarchSpec(rng.standard_normal((b, b, b)),
                               rng.standard_normal((b, b, b)))
    scaled = monarch.MonarchSpec(2.0 * spec.left_blocks, 2.0 * spec.right_blocks)
    x = rng.standard_normal(9)
    assert np.allclose(monarch.monarch_apply(scaled, x),
                       4.0 * monarch.monarch_apply(spec, x), atol=1e-12)


def test_apply_length_mismatch(rng):
    spec = _identity_spec(2)
    with pytest.raises(ValueError, match="length"):
        monarch.monarch_apply(spec, np.ones(5))


def test_mixing_block_correspondence(rng):
    for side in range(2, 9):
        w = rng.standard_normal((side, side))
        v = rng.standard_normal((side, side))
        spec = monarch.mixer_as_monarch(w, v)
        # weight sharing: every block equals the shared matrix
        assert all(np.array_equal(blk, v.T) for blk in spec.left_blocks)
        assert all(np.array_equal(blk, w) for blk in spec.right_blocks)
        for _ in range(20):
            x_matrix = rng.standard_normal((side, side))
            reference = dense.vec(dense.gelu(w @ x_matrix @ v))
            got = dense.gelu(monarch.monarch_apply(spec, dense.vec(x_matrix)))
            assert np.abs(got - reference).max() < 1e-12


def test_identity_weights_give_identity():
    spec = monarch.mixer_as_monarch(np.eye(3), np.eye(3))
    assert np.array_equal(monarch.monarch_materialize(spec), np.eye(9))


def test_nonlinear_middle_breaks_correspondence(rng):
    w = rng.standard_normal((4, 4))
    v = rng.standard_normal((4, 4))
    spec = monarch.mixer_as_monarch(w, v)
    smallest = np.inf
    for _ in range(20):
        x_matrix = rng.standard_normal((4, 4))
        nonlinear = dense.vec(dense.gelu(dense.gelu(w @ x_matrix) @ v))
        got = dense.gelu(monarch.monarch_apply(spec, dense.vec(x_matrix)))
        smallest = min(smallest, float(np.abs(got - nonlinear).max()))
    assert smallest >= 1e-3


def test_mixer_as_monarch_rejects_non_square(rng):
    with pytest.raises(ValueError, match="square"):
        monarch.mixer_as_monarch(rng.standard_normal((3, 4)), rng.standard_normal((4, 4)))
    with pytest.raises(ValueError, match="square"):
        monarch.mixer_as_monarch(rng.standard_normal((3, 3)), rng.standard_normal((4, 4)))


def test_chain_apply(rng):
    b = 3
    specs = [monarch.MonarchSpec(rng.standard_normal((b, b, b)),
                                 rng.standard_normal((b, b, b))) for _ in range(2)]
    x = rng.standard_normal(9)
    single = monarch.monarch_chain_apply([specs[0]], x)
    assert np.allclose(single, dense.gelu(monarch.monarch_apply(specs[0], x)), atol=1e-14)

    ident = _identity_spec(3)
    assert np.allclose(monarch.monarch_chain_apply([ident, ident], x), dense.gelu(x),
                       atol=1e-14)

    chained = monarch.monarch_chain_apply(specs, x)
    product = (monarch.monarch_materialize(specs[1])
               @ monarch.monarch_materialize(specs[0]))
    assert np.abs(chained - dense.gelu(product @ x)).max() < 1e-12


def test_chain_dimension_mismatch(rng):
    with pytest.raises(ValueError, match="dimension"):
        monarch.monarch_chain_apply([_identity_spec(2), _identity_spec(3)], np.ones(4))
    with pytest.raises(ValueError, match="factor"):
        monarch.monarch_chain_apply([], np.ones(4))
