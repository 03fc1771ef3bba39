"""Nesterov SGD with cosine-annealed learning rate, plus the training loop.

The Nesterov update is the lookahead form

    v <- momentum * v + g
    theta <- theta - lr * (g + momentum * v)

applied per parameter. The cosine schedule runs from the initial rate at
epoch 0 down to ``lr_floor`` at the final epoch and is monotone
nonincreasing. Everything is seeded: given the same model seeds, data and
train config, two runs produce bit-identical metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import models


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 0.02
    momentum: float = 0.9
    lr_floor: float = 0.0
    seed: int = 0  # drives the per-epoch shuffle

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


def cosine_lr(epoch: int, epochs: int, initial: float, floor: float = 0.0) -> float:
    """Annealed rate: initial at epoch 0, floor at the last epoch."""
    if epochs <= 1:
        return initial
    t = epoch / (epochs - 1)
    return floor + 0.5 * (initial - floor) * (1.0 + np.cos(np.pi * t))


class NesterovSGD:
    def __init__(self, momentum: float = 0.9):
        self.momentum = momentum
        self._velocity: dict[str, np.ndarray] = {}

    def step(self, params: models.ModelParams, grads: dict[str, np.ndarray], lr: float):
        mu = self.momentum
        for name, g in grads.items():
            v = self._velocity.get(name)
            v = g.copy() if v is None else mu * v + g
            self._velocity[name] = v
            params.update(name, params[name] - lr * (g + mu * v))


def softmax_cross_entropy(logits, labels):
    """Stable mean cross entropy and its adjoint (softmax minus one-hot, / batch)."""
    return ad.softmax_cross_entropy(logits, labels)


def _loss_and_grads(config, params, xb, yb):
    tape = ad.Tape()
    logits = models.build_logits(tape, config, params, xb)
    loss = ad.softmax_cross_entropy_op(logits, yb)
    tape.backward(loss)
    grads = {name: tape.gradient(node) for name, node in tape.named_leaves().items()}
    correct = int((np.argmax(logits.value, axis=1) == yb).sum())
    return float(loss.value), grads, correct


def evaluate(config, params, inputs, labels, batch_size: int = 256):
    """Mean loss and accuracy over a patchified set."""
    total_loss = 0.0
    correct = 0
    n = len(labels)
    for start in range(0, n, batch_size):
        xb = inputs[start:start + batch_size]
        yb = labels[start:start + batch_size]
        logits = models.model_forward(config, params, xb)
        loss, _ = ad.softmax_cross_entropy(logits, yb)
        total_loss += loss * len(yb)
        correct += int((np.argmax(logits, axis=1) == yb).sum())
    return total_loss / n, correct / n


def train(config, params: models.ModelParams, data, train_config: TrainConfig):
    """Train in place; returns (params, per-epoch history).

    ``data`` is a dict with patchified arrays ``train_x`` (N, S0, C0),
    ``train_y``, ``test_x``, ``test_y``. History rows carry
    (epoch, lr, train_loss, train_acc, test_loss, test_acc). Aborts with
    TrainingDiverged if the loss stops being finite.
    """
    train_x = np.asarray(data["train_x"], dtype=np.float64)
    train_y = np.asarray(data["train_y"], dtype=np.int64)
    test_x = np.asarray(data["test_x"], dtype=np.float64)
    test_y = np.asarray(data["test_y"], dtype=np.int64)

    optimizer = NesterovSGD(train_config.momentum)
    history = []
    n = len(train_y)
    for epoch in range(train_config.epochs):
        lr = cosine_lr(epoch, train_config.epochs, train_config.learning_rate,
                       train_config.lr_floor)
        order = np.random.default_rng([train_config.seed, epoch]).permutation(n)
        epoch_loss = 0.0
        epoch_correct = 0
        for start in range(0, n, train_config.batch_size):
            idx = order[start:start + train_config.batch_size]
            loss, grads, correct = _loss_and_grads(config, params, train_x[idx], train_y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            epoch_loss += loss * len(idx)
            epoch_correct += correct
            if lr > 0.0:
                optimizer.step(params, grads, lr)
        test_loss, test_acc = evaluate(config, params, test_x, test_y)
        history.append({
            "epoch": epoch,
            "lr": float(lr),
            "train_loss": epoch_loss / n,
            "train_acc": epoch_correct / n,
            "test_loss": float(test_loss),
            "test_acc": float(test_acc),
        })
    return params, history
