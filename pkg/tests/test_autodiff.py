"""Finite-difference verification of every adjoint rule."""

import numpy as np
import pytest

from permkron import autodiff as ad


def _fd_gradients(build, values, step=1e-6):
    """Central finite differences of build(leaves)->scalar wrt each array."""
    grads = {}
    for name in values:
        arr = values[name]
        flat = arr.reshape(-1)
        g = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            tape = ad.Tape()
            up = build({k: tape.leaf(v, k) for k, v in values.items()}, tape).value
            flat[i] = orig - step
            tape = ad.Tape()
            down = build({k: tape.leaf(v, k) for k, v in values.items()}, tape).value
            flat[i] = orig
            g[i] = (up - down) / (2 * step)
        grads[name] = g.reshape(arr.shape)
    return grads


def _check(build, values, tol=1e-5):
    tape = ad.Tape()
    leaves = {k: tape.leaf(v, k) for k, v in values.items()}
    tape.backward(build(leaves, tape))
    fd = _fd_gradients(build, values)
    for name, leaf in leaves.items():
        got = tape.gradient(leaf)
        ref = fd[name]
        scale = max(float(np.abs(ref).max()), 1e-8)
        assert np.abs(got - ref).max() / scale < tol, name


def test_add_sub_mul_scale(rng):
    values = {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal((3, 4))}

    def build(lv, tape):
        out = ad.add(lv["a"], lv["b"])
        out = ad.sub(out, ad.mul(lv["a"], lv["b"]))
        return ad.sum_all(ad.scale(out, 1.7))

    _check(build, values)


def test_add_broadcast_bias(rng):
    values = {"x": rng.standard_normal((4, 3)), "bias": rng.standard_normal(3)}
    probe = rng.standard_normal((4, 3))

    def build(lv, tape):
        return ad.sum_all(ad.mul(ad.add(lv["x"], lv["bias"]), tape.constant(probe)))

    _check(build, values)


def test_matmul_2d(rng):
    values = {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal((4, 2))}
    probe = rng.standard_normal((3, 2))

    def build(lv, tape):
        return ad.sum_all(ad.mul(ad.matmul(lv["a"], lv["b"]), tape.constant(probe)))

    _check(build, values)


def test_matmul_broadcast_batch(rng):
    # (k, n) @ (B, n, m) exercises gradient reduction over the broadcast axis
    values = {"w": rng.standard_normal((3, 4))}
    batch = rng.standard_normal((5, 4, 2))
    probe = rng.standard_normal((5, 3, 2))

    def build(lv, tape):
        return ad.sum_all(ad.mul(ad.matmul(lv["w"], tape.constant(batch)),
                                 tape.constant(probe)))

    _check(build, values)


def test_transpose_reshape_permute(rng):
    sigma = np.random.default_rng(3).permutation(12)
    inv = np.argsort(sigma)
    values = {"x": rng.standard_normal((3, 4))}
    probe = rng.standard_normal(12)

    def build(lv, tape):
        flat = ad.reshape(ad.transpose_last2(lv["x"]), (12,))
        flat = ad.permute_last(flat, sigma, inv)
        return ad.sum_all(ad.mul(flat, tape.constant(probe)))

    _check(build, values)


def test_permutation_adjoint_is_inverse_permutation(rng):
    sigma = np.random.default_rng(5).permutation(8)
    inv = np.argsort(sigma)
    x = rng.standard_normal(8)
    probe = rng.standard_normal(8)
    tape = ad.Tape()
    leaf = tape.leaf(x, "x")
    out = ad.permute_last(leaf, sigma, inv)
    tape.backward(ad.sum_all(ad.mul(out, tape.constant(probe))))
    assert np.array_equal(tape.gradient(leaf), probe[inv])


def test_gelu(rng):
    values = {"x": rng.standard_normal((20,))}

    def build(lv, tape):
        return ad.sum_all(ad.gelu(lv["x"]))

    _check(build, values)


def test_layer_norm_full_jacobian(rng):
    values = {
        "x": rng.standard_normal((4, 6)),
        "g": rng.standard_normal(6),
        "b": rng.standard_normal(6),
    }
    probe = rng.standard_normal((4, 6))

    def build(lv, tape):
        out = ad.layer_norm(lv["x"], lv["g"], lv["b"])
        return ad.sum_all(ad.mul(out, tape.constant(probe)))

    _check(build, values)


def test_mean_axis(rng):
    values = {"x": rng.standard_normal((3, 5, 2))}
    probe = rng.standard_normal((3, 2))

    def build(lv, tape):
        return ad.sum_all(ad.mul(ad.mean_axis(lv["x"], 1), tape.constant(probe)))

    _check(build, values)


def test_softmax_cross_entropy_op(rng):
    values = {"logits": rng.standard_normal((4, 5))}
    labels = np.array([0, 4, 2, 2])

    def build(lv, tape):
        return ad.softmax_cross_entropy_op(lv["logits"], labels)

    _check(build, values)


def test_softmax_cross_entropy_closed_forms():
    loss, grad = ad.softmax_cross_entropy(np.zeros((1, 7)), np.array([3]))
    assert loss == pytest.approx(np.log(7.0))
    # dominant correct-class logit drives the loss to zero
    logits = np.zeros((1, 4))
    logits[0, 1] = 60.0
    loss, _ = ad.softmax_cross_entropy(logits, np.array([1]))
    assert loss < 1e-20
    with pytest.raises(ValueError, match="label"):
        ad.softmax_cross_entropy(np.zeros((1, 3)), np.array([3]))


def test_quadratic_gradient_closed_form(rng):
    # d/dW of ||W x||^2 / 2 is (W x) x^T
    w = rng.standard_normal((4, 3))
    x = rng.standard_normal((3, 1))
    tape = ad.Tape()
    wv = tape.leaf(w, "w")
    y = ad.matmul(wv, tape.constant(x))
    tape.backward(ad.scale(ad.sum_all(ad.mul(y, y)), 0.5))
    assert np.abs(tape.gradient(wv) - (w @ x) @ x.T).max() < 1e-12


def test_masked_weights_get_exact_zero_gradient(rng):
    mask = (rng.random((4, 4)) < 0.5).astype(float)
    w = rng.standard_normal((4, 4))
    tape = ad.Tape()
    wv = tape.leaf(w, "w")
    masked = ad.mul(wv, tape.constant(mask))
    out = ad.matmul(masked, tape.constant(rng.standard_normal((4, 2))))
    tape.backward(ad.sum_all(ad.mul(out, tape.constant(rng.standard_normal((4, 2))))))
    g = tape.gradient(wv)
    assert np.all(g[mask == 0.0] == 0.0)
    assert np.any(g[mask == 1.0] != 0.0)


def test_tape_replay_guard(rng):
    tape = ad.Tape()
    leaf = tape.leaf(rng.standard_normal(3), "x")
    loss = ad.sum_all(leaf)
    tape.backward(loss)
    with pytest.raises(ad.TapeError, match="replayed"):
        tape.backward(loss)


def test_unrecorded_parameter_guard(rng):
    tape_a = ad.Tape()
    tape_b = ad.Tape()
    leaf_b = tape_b.leaf(rng.standard_normal(3), "stray")
    tape_a.backward(ad.sum_all(tape_a.leaf(rng.standard_normal(3), "x")))
    with pytest.raises(ad.TapeError, match="not recorded"):
        tape_a.gradient(leaf_b)


def test_backward_requires_scalar_root(rng):
    tape = ad.Tape()
    leaf = tape.leaf(rng.standard_normal(3), "x")
    with pytest.raises(ad.TapeError, match="scalar"):
        tape.backward(leaf)


def test_unused_leaf_gets_zero_gradient(rng):
    tape = ad.Tape()
    used = tape.leaf(rng.standard_normal(3), "used")
    unused = tape.leaf(rng.standard_normal(4), "unused")
    tape.backward(ad.sum_all(used))
    assert np.array_equal(tape.gradient(unused), np.zeros(4))
