"""Reverse-mode differentiation over numpy arrays.

A ``Tape`` records every primitive application in order; ``Tape.backward``
seeds the scalar root with 1 and replays the adjoint rules in reverse,
accumulating gradients on leaf variables. Values are arbitrary-shape float64
arrays, so a leading batch axis rides along for free; ``matmul`` follows
numpy broadcasting and sums gradients back over broadcast axes.

Adjoint rules worth spelling out:
  * permutation of the last axis: the gradient is the inverse permutation of
    the upstream gradient;
  * layer_norm: full Jacobian, including the mean and variance paths;
  * gelu: exact derivative Phi(t) + t * N(t) of t * Phi(t);
  * masked weights (Hadamard with a constant 0/1 mask) receive exactly-zero
    gradient on the masked entries.
"""

from __future__ import annotations

import numpy as np

from . import dense


class TapeError(RuntimeError):
    pass


class Var:
    """Handle to one recorded array. Leaves carry gradients after backward()."""

    __slots__ = ("tape", "value", "grad", "requires", "_bwd", "name")

    def __init__(self, tape, value, requires, bwd=None, name=None):
        self.tape = tape
        self.value = value
        self.grad = None
        self.requires = requires
        self._bwd = bwd
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad = self.grad + g


class Tape:
    """Ordered record of primitive applications; replayable exactly once."""

    def __init__(self):
        self._nodes: list[Var] = []
        self._replayed = False

    def leaf(self, value, name=None) -> Var:
        v = Var(self, np.asarray(value, dtype=np.float64), requires=True, name=name)
        self._nodes.append(v)
        return v

    def constant(self, value, name=None) -> Var:
        v = Var(self, np.asarray(value, dtype=np.float64), requires=False, name=name)
        self._nodes.append(v)
        return v

    def _record(self, value, parents, bwd) -> Var:
        requires = any(p.requires for p in parents)
        v = Var(self, value, requires, bwd if requires else None)
        self._nodes.append(v)
        return v

    def backward(self, root: Var):
        """Fill ``grad`` on every recorded variable reachable from ``root``."""
        if self._replayed:
            raise TapeError("tape has already been replayed")
        if root.tape is not self:
            raise TapeError("root does not belong to this tape")
        if root.value.ndim != 0:
            raise TapeError("backward requires a scalar root")
        self._replayed = True
        root.grad = np.asarray(1.0)
        for var in reversed(self._nodes):
            if var.grad is not None and var._bwd is not None:
                var._bwd(var.grad)

    def named_leaves(self) -> dict:
        """Trainable leaf variables by name, in recording order."""
        return {v.name: v for v in self._nodes
                if v.requires and v._bwd is None and v.name is not None}

    def gradient(self, leaf: Var) -> np.ndarray:
        if leaf.tape is not self:
            raise TapeError(f"parameter {leaf.name!r} was not recorded on this tape")
        if not self._replayed:
            raise TapeError("backward() has not run")
        if leaf.grad is None:
            return np.zeros_like(leaf.value)
        return leaf.grad


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Var, b: Var) -> Var:
    value = a.value + b.value

    def bwd(g):
        if a.requires:
            a._accumulate(_unbroadcast(g, a.value.shape))
        if b.requires:
            b._accumulate(_unbroadcast(g, b.value.shape))

    return a.tape._record(value, (a, b), bwd)


def sub(a: Var, b: Var) -> Var:
    value = a.value - b.value

    def bwd(g):
        if a.requires:
            a._accumulate(_unbroadcast(g, a.value.shape))
        if b.requires:
            b._accumulate(-_unbroadcast(g, b.value.shape))

    return a.tape._record(value, (a, b), bwd)


def mul(a: Var, b: Var) -> Var:
    value = a.value * b.value

    def bwd(g):
        if a.requires:
            a._accumulate(_unbroadcast(g * b.value, a.value.shape))
        if b.requires:
            b._accumulate(_unbroadcast(g * a.value, b.value.shape))

    return a.tape._record(value, (a, b), bwd)


def scale(a: Var, factor: float) -> Var:
    value = a.value * factor

    def bwd(g):
        if a.requires:
            a._accumulate(g * factor)

    return a.tape._record(value, (a,), bwd)


def _swap(x):
    return np.swapaxes(x, -1, -2)


def matmul(a: Var, b: Var) -> Var:
    value = np.matmul(a.value, b.value)

    def bwd(g):
        if a.requires:
            a._accumulate(_unbroadcast(np.matmul(g, _swap(b.value)), a.value.shape))
        if b.requires:
            b._accumulate(_unbroadcast(np.matmul(_swap(a.value), g), b.value.shape))

    return a.tape._record(value, (a, b), bwd)


def transpose_last2(a: Var) -> Var:
    value = _swap(a.value).copy()

    def bwd(g):
        if a.requires:
            a._accumulate(_swap(g))

    return a.tape._record(value, (a,), bwd)


def reshape(a: Var, shape) -> Var:
    original = a.value.shape
    value = a.value.reshape(shape)

    def bwd(g):
        if a.requires:
            a._accumulate(g.reshape(original))

    return a.tape._record(value, (a,), bwd)


def permute_last(a: Var, sigma: np.ndarray, inv_sigma: np.ndarray) -> Var:
    """Reorder the last axis; the adjoint applies the inverse ordering."""
    value = a.value[..., sigma]

    def bwd(g):
        if a.requires:
            a._accumulate(g[..., inv_sigma])

    return a.tape._record(value, (a,), bwd)


def gelu(a: Var) -> Var:
    x = a.value
    value = dense.gelu(x)

    def bwd(g):
        if a.requires:
            a._accumulate(g * dense.gelu_grad(x))

    return a.tape._record(value, (a,), bwd)


def layer_norm(a: Var, gain: Var, bias: Var, eps: float = 1e-5) -> Var:
    """Normalize the last axis, then rescale by ``gain`` and shift by ``bias``."""
    x = a.value
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    value = xhat * gain.value + bias.value

    def bwd(g):
        if gain.requires:
            gain._accumulate(_unbroadcast(g * xhat, gain.value.shape))
        if bias.requires:
            bias._accumulate(_unbroadcast(g, bias.value.shape))
        if a.requires:
            dxhat = g * gain.value
            mean_dxhat = dxhat.mean(axis=-1, keepdims=True)
            mean_dxhat_xhat = (dxhat * xhat).mean(axis=-1, keepdims=True)
            a._accumulate(inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat))

    return a.tape._record(value, (a, gain, bias), bwd)


def mean_axis(a: Var, axis: int) -> Var:
    n = a.value.shape[axis]
    value = a.value.mean(axis=axis)

    def bwd(g):
        if a.requires:
            a._accumulate(np.broadcast_to(np.expand_dims(g / n, axis), a.value.shape).copy())

    return a.tape._record(value, (a,), bwd)


def sum_all(a: Var) -> Var:
    value = np.asarray(a.value.sum())

    def bwd(g):
        if a.requires:
            a._accumulate(np.broadcast_to(g, a.value.shape).copy())

    return a.tape._record(value, (a,), bwd)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Stable mean cross entropy over a batch: returns (loss, d loss / d logits).

    The adjoint is (softmax - one_hot) / batch.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim == 1:
        logits = logits[None, :]
        labels = labels.reshape(1)
    batch, num_classes = logits.shape
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("label out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(batch), labels].mean()
    grad = np.exp(log_probs)
    grad[np.arange(batch), labels] -= 1.0
    return loss, grad / batch


def softmax_cross_entropy_op(logits: Var, labels: np.ndarray) -> Var:
    loss, grad = softmax_cross_entropy(logits.value, labels)

    def bwd(g):
        if logits.requires:
            logits._accumulate(g * grad.reshape(logits.value.shape))

    return logits.tape._record(np.asarray(loss), (logits,), bwd)
