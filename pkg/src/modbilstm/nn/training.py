"""Adam, finite-difference gradient checks and the minibatch training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..core import NumericError
from ..datagen import TrainingPairs

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class Adam:
    """Bias-corrected Adam over a dict of parameter arrays (updated in place)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, p in params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ValueError(f"gradient for {k} has shape {g.shape}, parameter {p.shape}")
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def adam_step(state: Adam, params, grads):
    return state.step(params, grads)


def grad_check(net, X, Y, epsilon=1e-5, names=None, max_entries=None, seed=0):
    """Largest relative error between analytic and central-difference gradients.

    Relative error per entry is ``|g_a - g_n| / max(1e-8, |g_a| + |g_n|)``.
    ``names`` restricts the check to some parameter arrays and
    ``max_entries`` samples that many entries per array.
    """
    _, grads = net.loss_and_grads(X, Y)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in names or list(net.params):
        p = net.params[name]
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, max_entries, replace=False)
        ga = grads[name].reshape(-1)
        for j in idx:
            old = flat[j]
            flat[j] = old + epsilon
            lp, _ = net.loss_and_grads(X, Y)
            flat[j] = old - epsilon
            lm, _ = net.loss_and_grads(X, Y)
            flat[j] = old
            gn = (lp - lm) / (2.0 * epsilon)
            err = abs(ga[j] - gn) / max(1e-8, abs(ga[j]) + abs(gn))
            worst = max(worst, err)
    return worst


@dataclass
class TrainResult:
    net: object
    train_loss: list = field(default_factory=list)
    holdout_loss: list = field(default_factory=list)
    error_table: np.ndarray | None = None  # (n_sum, 2): mean, std in percent

    def rows(self):
        return [(i + 1, float(m), float(s)) for i, (m, s) in enumerate(self.error_table)]


def estimation_errors(net, X, Y) -> np.ndarray:
    """Per-module mean and std of ``|A_hat - A| / 2 * 100`` (clamped estimates)."""
    err = np.abs(net.predict(X) - Y) / 2.0 * 100.0
    per_module = err.transpose(1, 0, 2).reshape(err.shape[1], -1)
    return np.column_stack([per_module.mean(axis=1), per_module.std(axis=1)])


def split_holdout(pairs: TrainingPairs, holdout=0.1):
    """Contiguous split: the last ``holdout`` fraction of step groups is held out."""
    n_hold = max(1, int(round(len(pairs) * holdout)))
    cut = len(pairs) - n_hold
    return (pairs.X[:cut], pairs.Y[:cut]), (pairs.X[cut:], pairs.Y[cut:])


def train(net, pairs: TrainingPairs, epochs=30, batch_size=64, lr=1e-3, seed=0, holdout=0.1,
          lr_decay=1.0, eval_batch=2048):
    """Shuffled minibatch Adam on the MSE loss.

    Raises :class:`NumericError` on a non-finite batch loss and
    :class:`TrainingError` when the epoch loss stays above ten times the
    initial loss for three consecutive epochs.
    """
    if len(pairs) == 0:
        raise TrainingError("no training pairs")
    (Xtr, Ytr), (Xho, Yho) = split_holdout(pairs, holdout)
    rng = np.random.default_rng(seed)
    opt = Adam(net.params, lr=lr)
    result = TrainResult(net)

    def full_loss(X, Y):
        tot = 0.0
        for s in range(0, len(X), eval_batch):
            out = net.forward(X[s:s + eval_batch])
            tot += float(np.sum((out - Y[s:s + eval_batch]) ** 2))
        return tot / Y.size

    initial = full_loss(Xtr, Ytr)
    result.train_loss.append(initial)
    result.holdout_loss.append(full_loss(Xho, Yho))
    strikes = 0
    for epoch in range(epochs):
        order = rng.permutation(len(Xtr))
        tot, count = 0.0, 0
        for bi, s in enumerate(range(0, len(order), batch_size)):
            idx = order[s:s + batch_size]
            loss, grads = net.loss_and_grads(Xtr[idx], Ytr[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss in epoch {epoch}, batch {bi}")
            opt.step(net.params, grads)
            tot += loss * len(idx)
            count += len(idx)
        epoch_loss = tot / count
        result.train_loss.append(epoch_loss)
        result.holdout_loss.append(full_loss(Xho, Yho))
        log.info("epoch %d train %.3e holdout %.3e", epoch + 1, epoch_loss, result.holdout_loss[-1])
        strikes = strikes + 1 if epoch_loss > 10.0 * initial else 0
        if strikes >= 3:
            raise TrainingError(f"training diverged at epoch {epoch + 1}")
        opt.lr *= lr_decay
    result.error_table = estimation_errors(net, Xho, Yho)
    return result
