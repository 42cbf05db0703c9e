"""LSTM cell and batched sequence scans with exact reverse-mode gradients.

Gate pre-activations act on the concatenation ``[h_prev, x]``. The four
gate weight blocks are stored stacked in the order forget, input,
candidate, output so one matmul evaluates every gate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import DomainError


def sigmoid(z):
    # split form avoids overflow in exp for large |z|
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LstmParams:
    """Weights ``W`` of shape ``(4H, H + D)`` and biases ``b`` of shape ``(4H,)``."""

    W: np.ndarray
    b: np.ndarray

    @property
    def hidden(self) -> int:
        return self.b.shape[0] // 4

    @property
    def input_dim(self) -> int:
        return self.W.shape[1] - self.hidden

    def _block(self, k):
        H = self.hidden
        return slice(k * H, (k + 1) * H)

    W_f = property(lambda self: self.W[self._block(0)])
    W_i = property(lambda self: self.W[self._block(1)])
    W_c = property(lambda self: self.W[self._block(2)])
    W_o = property(lambda self: self.W[self._block(3)])
    b_f = property(lambda self: self.b[self._block(0)])
    b_i = property(lambda self: self.b[self._block(1)])
    b_c = property(lambda self: self.b[self._block(2)])
    b_o = property(lambda self: self.b[self._block(3)])

    @classmethod
    def zeros(cls, input_dim: int, hidden: int) -> "LstmParams":
        return cls(np.zeros((4 * hidden, hidden + input_dim)), np.zeros(4 * hidden))

    @classmethod
    def from_gates(cls, W_f, W_i, W_c, W_o, b_f, b_i, b_c, b_o) -> "LstmParams":
        return cls(np.vstack([W_f, W_i, W_c, W_o]), np.concatenate([b_f, b_i, b_c, b_o]))


def lstm_step(p: LstmParams, x, h_prev, c_prev):
    """One cell update; accepts single vectors or ``(B, .)`` batches."""
    x = np.asarray(x, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    c_prev = np.asarray(c_prev, dtype=float)
    H = p.hidden
    if x.shape[-1] != p.input_dim or h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise DomainError(
            f"shape mismatch: x {x.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"for input_dim={p.input_dim}, hidden={H}"
        )
    z = np.concatenate([h_prev, x], axis=-1) @ p.W.T + p.b
    f = sigmoid(z[..., :H])
    i = sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


def scan_forward(W, b, X, h0=None, c0=None):
    """Run one layer over ``X`` of shape ``(T, B, D)``.

    Returns the hidden sequence ``(T, B, H)`` and a cache for
    :func:`scan_backward`. Initial states default to zero.
    """
    T, B, D = X.shape
    H = b.shape[0] // 4
    if W.shape != (4 * H, H + D):
        raise DomainError(f"weights {W.shape} do not fit input dim {D} and hidden {H}")
    Wh, Wx = W[:, :H], W[:, H:]
    zx = (X.reshape(T * B, D) @ Wx.T).reshape(T, B, 4 * H) + b
    h = np.zeros((B, H)) if h0 is None else h0
    c = np.zeros((B, H)) if c0 is None else c0
    hs = np.empty((T + 1, B, H))
    cs = np.empty((T + 1, B, H))
    gates = np.empty((T, B, 4 * H))
    hs[0], cs[0] = h, c
    for t in range(T):
        z = zx[t] + h @ Wh.T
        a = gates[t]
        a[:, :2 * H] = sigmoid(z[:, :2 * H])
        a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        a[:, 3 * H:] = sigmoid(z[:, 3 * H:])
        c = a[:, :H] * c + a[:, H:2 * H] * a[:, 2 * H:3 * H]
        h = a[:, 3 * H:] * np.tanh(c)
        hs[t + 1], cs[t + 1] = h, c
    return hs[1:], (X, W, hs, cs, gates)


def scan_backward(cache, dH):
    """Backpropagate ``dH`` (gradient wrt every hidden output) through a scan.

    Returns ``(dX, dW, db)``.
    """
    X, W, hs, cs, gates = cache
    T, B, D = X.shape
    H = hs.shape[2]
    Wh = W[:, :H]
    dZ = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        a = gates[t]
        f, i, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        tc = np.tanh(cs[t + 1])
        dh = dH[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dZ[t]
        dz[:, :H] = dc * cs[t] * f * (1.0 - f)
        dz[:, H:2 * H] = dc * g * i * (1.0 - i)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ Wh
    flat = dZ.reshape(T * B, 4 * H)
    dWh = flat.T @ hs[:-1].reshape(T * B, H)
    dWx = flat.T @ X.reshape(T * B, D)
    dX = (flat @ W[:, H:]).reshape(T, B, D)
    return dX, np.hstack([dWh, dWx]), flat.sum(axis=0)
