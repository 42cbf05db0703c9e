"""The spatial biLSTM controller and the two time-recurrent baselines.

Every network maps per-module features ``X`` of shape ``(B, n, F)`` to
action estimates of shape ``(B, n, a_dim)``. Parameters live in one
ordered ``dict`` of arrays so the optimizer, gradient checker and model
files treat all architectures alike.
"""
from __future__ import annotations

import copy

import numpy as np

from ..core import DomainError
from ..datagen import FeatureLayout
from .lstm import scan_backward, scan_forward


class ShapeError(DomainError):
    """Input does not fit the network's fixed dimensions."""


class Network:
    variant = ""

    def __init__(self, layout: FeatureLayout, hidden: int, layers: int, head_hidden: int = 0, seed: int = 0):
        self.layout = layout
        self.hidden = int(hidden)
        self.layers = int(layers)
        self.head_hidden = int(head_hidden)
        self.seed = seed
        self.params: dict[str, np.ndarray] = {}

    # construction -----------------------------------------------------
    def _add_stack(self, prefix, input_dim):
        H = self.hidden
        for l in range(self.layers):
            D = input_dim if l == 0 else H
            self.params[f"{prefix}.{l}.W"] = np.zeros((4 * H, H + D))
            self.params[f"{prefix}.{l}.b"] = np.zeros(4 * H)

    def _add_head(self, prefix, in_dim, out_dim):
        if self.head_hidden:
            self.params[f"{prefix}.W1"] = np.zeros((self.head_hidden, in_dim))
            self.params[f"{prefix}.b1"] = np.zeros(self.head_hidden)
            in_dim = self.head_hidden
        self.params[f"{prefix}.W"] = np.zeros((out_dim, in_dim))
        self.params[f"{prefix}.b"] = np.zeros(out_dim)

    def init_params(self, seed=None):
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
        rng = np.random.default_rng(self.seed if seed is None else seed)
        for name, arr in self.params.items():
            if arr.ndim == 2:
                fan = arr.shape[1]
            else:
                base, _, last = name.rpartition(".")
                fan = self.params[f"{base}.{last.replace('b', 'W')}"].shape[1]
            k = 1.0 / np.sqrt(fan)
            arr[...] = rng.uniform(-k, k, size=arr.shape)
        return self

    @property
    def n_params(self) -> int:
        return int(sum(a.size for a in self.params.values()))

    def hyper(self) -> dict:
        return {
            "variant": self.variant,
            "K": self.layout.K,
            "d": self.layout.d,
            "a_dim": self.layout.a_dim,
            "hidden": self.hidden,
            "layers": self.layers,
            "head_hidden": self.head_hidden,
            "seed": self.seed,
        }

    def copy(self):
        return copy.deepcopy(self)

    # shared pieces ----------------------------------------------------
    def _stack_forward(self, prefix, X):
        caches = []
        out = X
        for l in range(self.layers):
            out, cache = scan_forward(self.params[f"{prefix}.{l}.W"], self.params[f"{prefix}.{l}.b"], out)
            caches.append(cache)
        return out, caches

    def _stack_backward(self, prefix, caches, d_top, grads):
        d = d_top
        for l in range(self.layers - 1, -1, -1):
            d, dW, db = scan_backward(caches[l], d)
            grads[f"{prefix}.{l}.W"] = dW
            grads[f"{prefix}.{l}.b"] = db
        return d

    def _head_forward(self, prefix, Z):
        p = self.params
        hid = None
        if self.head_hidden:
            hid = np.tanh(Z @ p[f"{prefix}.W1"].T + p[f"{prefix}.b1"])
            out = hid @ p[f"{prefix}.W"].T + p[f"{prefix}.b"]
        else:
            out = Z @ p[f"{prefix}.W"].T + p[f"{prefix}.b"]
        return out, (Z, hid)

    def _head_backward(self, prefix, cache, dY, grads):
        Z, hid = cache
        p = self.params
        flatY = dY.reshape(-1, dY.shape[-1])
        if self.head_hidden:
            flatH = hid.reshape(-1, hid.shape[-1])
            grads[f"{prefix}.W"] = flatY.T @ flatH
            grads[f"{prefix}.b"] = flatY.sum(axis=0)
            dpre = (flatY @ p[f"{prefix}.W"]) * (1.0 - flatH**2)
            grads[f"{prefix}.W1"] = dpre.T @ Z.reshape(-1, Z.shape[-1])
            grads[f"{prefix}.b1"] = dpre.sum(axis=0)
            dZ = dpre @ p[f"{prefix}.W1"]
        else:
            grads[f"{prefix}.W"] = flatY.T @ Z.reshape(-1, Z.shape[-1])
            grads[f"{prefix}.b"] = flatY.sum(axis=0)
            dZ = flatY @ p[f"{prefix}.W"]
        return dZ.reshape(Z.shape)

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3 or X.shape[2] != self.layout.size:
            raise ShapeError(f"expected features (B, n, {self.layout.size}), got {X.shape}")
        return X

    # public API -------------------------------------------------------
    def forward(self, X):
        """Raw (unclamped) action estimates."""
        return self._forward(self._check(X))[0]

    def predict(self, X):
        """Action estimates clamped to [-1, 1]."""
        return np.clip(self.forward(X), -1.0, 1.0)

    def loss_and_grads(self, X, Y):
        """Mean squared error over every module and component, and its gradient."""
        X = self._check(X)
        Y = np.asarray(Y, dtype=float).reshape(X.shape[0], X.shape[1], -1)
        out, cache = self._forward(X)
        resid = out - Y
        loss = float(np.mean(resid**2))
        grads = self._backward(cache, 2.0 * resid / resid.size)
        return loss, {k: grads[k] for k in self.params}


class BiLstmController(Network):
    """Forward and backward LSTM stacks scanning along the module chain.

    The forward stack runs base to tip and the backward stack tip to base,
    both starting from zero states at the chain ends. Each module's action
    is an affine (optionally one-hidden-layer) map of its two top-layer
    hidden states. No parameter depends on the number of modules.
    """

    variant = "bilstm"

    def __init__(self, layout, hidden=32, layers=2, head_hidden=0, seed=0):
        super().__init__(layout, hidden, layers, head_hidden, seed)
        self._add_stack("fwd", layout.size)
        self._add_stack("bwd", layout.size)
        self._add_head("head", 2 * hidden, layout.a_dim)
        self.init_params()

    def _forward(self, X):
        Xs = X.transpose(1, 0, 2)  # modules play the role of time
        hf, cf = self._stack_forward("fwd", Xs)
        hb, cb = self._stack_forward("bwd", Xs[::-1])
        Z = np.concatenate([hf, hb[::-1]], axis=2)
        out, ch = self._head_forward("head", Z)
        return out.transpose(1, 0, 2), (cf, cb, ch)

    def _backward(self, cache, dY):
        cf, cb, ch = cache
        grads = {}
        dZ = self._head_backward("head", ch, dY.transpose(1, 0, 2), grads)
        H = self.hidden
        self._stack_backward("fwd", cf, dZ[:, :, :H], grads)
        self._stack_backward("bwd", cb, dZ[::-1, :, H:], grads)
        return grads


class FourLstm(Network):
    """One independent time-recurrent network per module.

    Module ``i``'s network sees only its own ``K``-step history; the head
    reads the final hidden state.
    """

    variant = "four-lstm"

    def __init__(self, layout, n_sum, hidden=32, layers=2, head_hidden=0, seed=0):
        super().__init__(layout, hidden, layers, head_hidden, seed)
        self.n_sum = int(n_sum)
        for i in range(self.n_sum):
            self._add_stack(f"m{i}", layout.step_dim)
            self._add_head(f"m{i}.head", hidden, layout.a_dim)
        self.init_params()

    def hyper(self):
        return {**super().hyper(), "n_sum": self.n_sum}

    def _forward(self, X):
        if X.shape[1] != self.n_sum:
            raise ShapeError(f"four-lstm built for {self.n_sum} modules got {X.shape[1]}")
        seq = self.layout.time_steps(X)  # (K, B, n, step)
        outs, caches = [], []
        for i in range(self.n_sum):
            top, c = self._stack_forward(f"m{i}", np.ascontiguousarray(seq[:, :, i]))
            out, ch = self._head_forward(f"m{i}.head", top[-1])
            outs.append(out)
            caches.append((c, ch, top.shape))
        return np.stack(outs, axis=1), caches

    def _backward(self, caches, dY):
        grads = {}
        for i, (c, ch, shape) in enumerate(caches):
            d_last = self._head_backward(f"m{i}.head", ch, dY[:, i], grads)
            d_top = np.zeros(shape)
            d_top[-1] = d_last
            self._stack_backward(f"m{i}", c, d_top, grads)
        return grads


class TimeLstm(Network):
    """A single time-recurrent network over all modules' concatenated inputs.

    Its input width is ``n_sum * step_dim``, so it cannot run on a chain of a
    different length.
    """

    variant = "time-lstm"

    def __init__(self, layout, n_sum, hidden=32, layers=2, head_hidden=0, seed=0):
        super().__init__(layout, hidden, layers, head_hidden, seed)
        self.n_sum = int(n_sum)
        self._add_stack("lstm", self.n_sum * layout.step_dim)
        self._add_head("head", hidden, self.n_sum * layout.a_dim)
        self.init_params()

    def hyper(self):
        return {**super().hyper(), "n_sum": self.n_sum}

    def _forward(self, X):
        if X.shape[1] != self.n_sum:
            raise ShapeError(f"time-lstm built for {self.n_sum} modules cannot take {X.shape[1]}")
        seq = self.layout.time_steps(X)
        K, B = seq.shape[:2]
        top, c = self._stack_forward("lstm", seq.reshape(K, B, -1))
        out, ch = self._head_forward("head", top[-1])
        return out.reshape(B, self.n_sum, -1), (c, ch, top.shape)

    def _backward(self, cache, dY):
        c, ch, shape = cache
        grads = {}
        d_last = self._head_backward("head", ch, dY.reshape(dY.shape[0], -1), grads)
        d_top = np.zeros(shape)
        d_top[-1] = d_last
        self._stack_backward("lstm", c, d_top, grads)
        return grads


VARIANTS = {cls.variant: cls for cls in (BiLstmController, FourLstm, TimeLstm)}


def build_network(variant: str, layout: FeatureLayout, n_sum=None, hidden=32, layers=2, head_hidden=0, seed=0):
    """Construct any architecture by name; baselines need ``n_sum``."""
    if variant not in VARIANTS:
        raise DomainError(f"unknown network variant {variant!r}")
    if variant == "bilstm":
        return BiLstmController(layout, hidden, layers, head_hidden, seed)
    if n_sum is None:
        raise DomainError(f"{variant} needs the module count")
    return VARIANTS[variant](layout, n_sum, hidden, layers, head_hidden, seed)


def BaselineNet(variant: str, layout: FeatureLayout, n_sum: int, **kw):
    if variant not in ("four-lstm", "time-lstm"):
        raise DomainError(f"{variant!r} is not a baseline variant")
    return build_network(variant, layout, n_sum, **kw)
