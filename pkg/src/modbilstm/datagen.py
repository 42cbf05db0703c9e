"""Excitation sequences, the phased and traditional collectors, and dataset files.

A :class:`Dataset` holds one record per control step: the actions applied at
that step and the configurations reached after applying them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DomainError, SaturationError, module_labels
from .plant import PlantState, chain_positions, plant_observe, plant_step

PHASES = ("a", "b", "c", "traditional")
FORMAT_VERSION = 1


class ParseError(ValueError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


def random_walk_sequence(length: int, delta_max: float, seed=None, dim: int = 2) -> np.ndarray:
    """Bounded-increment random walk starting at the origin.

    Each step adds an independent uniform increment on
    ``[-delta_max, delta_max]`` per component and clamps to [-1, 1].
    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if length < 1:
        raise DomainError("length must be at least 1")
    if not 0 < delta_max <= 2:
        raise DomainError("delta_max must lie in (0, 2]")
    rng = np.random.default_rng(seed)
    steps = rng.uniform(-delta_max, delta_max, size=(length - 1, dim))
    out = np.zeros((length, dim))
    a = np.zeros(dim)
    for t in range(1, length):
        a = np.clip(a + steps[t - 1], -1.0, 1.0)
        out[t] = a
    return out


@dataclass
class Dataset:
    actions: np.ndarray  # (T, n_sum, a_dim)
    configs: np.ndarray  # (T, n_sum, d)
    phases: np.ndarray  # (T,) of phase tags
    mode: str = "3d"
    seed: int | None = None
    plant_digest: str = ""
    t: np.ndarray | None = None

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=float)
        self.configs = np.asarray(self.configs, dtype=float)
        self.phases = np.asarray(self.phases, dtype=object)
        if self.t is None:
            self.t = np.arange(len(self.actions))
        self.t = np.asarray(self.t, dtype=int)
        self.validate()

    def __len__(self):
        return len(self.actions)

    @property
    def n_sum(self) -> int:
        return self.actions.shape[1]

    @property
    def d(self) -> int:
        return self.configs.shape[2]

    @property
    def a_dim(self) -> int:
        return self.actions.shape[2]

    def validate(self):
        T = len(self.actions)
        if self.configs.shape[:2] != self.actions.shape[:2] or len(self.phases) != T or len(self.t) != T:
            raise DomainError("records have inconsistent lengths or module counts")
        if T > 1 and np.any(np.diff(self.t) <= 0):
            raise DomainError("record steps must be strictly increasing")
        expected = {"3d": (3, 2), "2d": (2, 1)}.get(self.mode)
        if expected is None or (self.d, self.a_dim) != expected:
            raise DomainError(f"mode {self.mode!r} does not match d={self.d}, a_dim={self.a_dim}")
        bad = set(self.phases) - set(PHASES)
        if bad:
            raise DomainError(f"unknown phase tags {sorted(bad)}")

    def tip_positions(self) -> np.ndarray:
        """World position of the end module's tip at every record."""
        return chain_positions(self.configs)[:, -1]

    def max_step(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.abs(np.diff(self.actions, axis=0)).max())

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.seed == other.seed
            and self.plant_digest == other.plant_digest
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.configs, other.configs)
            and list(self.phases) == list(other.phases)
        )


def _run(plant: PlantState, actions: np.ndarray, phases, seed) -> Dataset:
    state = plant.copy()
    p = state.params
    configs = np.empty((len(actions), p.n_sum, p.d))
    for t in range(len(actions)):
        try:
            state = plant_step(state, actions[t])
        except SaturationError as err:
            raise SaturationError(err.module, t, err.magnitude) from None
        configs[t] = plant_observe(state)
    return Dataset(actions, configs, np.asarray(phases, dtype=object), p.mode, seed, p.digest())


def phase_sizes(n_samples: int) -> tuple[int, int, int]:
    third = math.ceil(n_samples / 3)
    return third, third, n_samples - 2 * third


def collect_phased(plant: PlantState, n_samples: int, delta_max: float = 0.05, seed=0,
                   phase_b_split: int | None = None) -> Dataset:
    """Three-phase excitation that drives the arm away from rest.

    Phase a drives every module with one shared walk. Phase b drives
    modules ``1..split`` with one walk and the remaining distal modules
    with another (default split: all but the end module). Phase c gives
    every module its own walk. The plant state carries across phases.
    """
    if n_samples < 3:
        raise DomainError("phased collection needs at least 3 samples")
    p = plant.params
    n, ad = p.n_sum, p.a_dim
    split = n - 1 if phase_b_split is None else phase_b_split
    if not 0 <= split <= n:
        raise DomainError(f"phase_b_split {split} outside [0, {n}]")
    rng = np.random.default_rng(seed)
    na, nb, nc = phase_sizes(n_samples)

    actions = np.zeros((n_samples, n, ad))
    actions[:na] = random_walk_sequence(na, delta_max, rng, ad)[:, None, :]
    last = actions[na - 1]
    if nb:
        shared = _continue_walk(rng, nb, delta_max, last[:split]) if split else None
        for i in range(split):
            actions[na:na + nb, i] = shared[:, i]
        distal = _continue_walk(rng, nb, delta_max, last[split:])
        for j, i in enumerate(range(split, n)):
            actions[na:na + nb, i] = distal[:, j]
        last = actions[na + nb - 1]
    if nc:
        for i in range(n):
            actions[na + nb:, i] = _continue_walk(rng, nc, delta_max, last[i:i + 1])[:, 0]
    phases = ["a"] * na + ["b"] * nb + ["c"] * nc
    return _run(plant, actions, phases, seed)


def _continue_walk(rng, length, delta_max, starts):
    """One walk of ``length`` steps applied to a group of modules.

    The group shares a single increment sequence; every member starts from
    its own last action so per-module step bounds hold across phase
    boundaries.
    """
    starts = np.atleast_2d(starts)
    ad = starts.shape[1]
    inc = rng.uniform(-delta_max, delta_max, size=(length, ad))
    out = np.empty((length, len(starts), ad))
    a = starts.astype(float).copy()
    for t in range(length):
        a = np.clip(a + inc[t], -1.0, 1.0)
        out[t] = a
    return out


def collect_traditional(plant: PlantState, n_samples: int, delta_max: float = 0.05, seed=0) -> Dataset:
    """Every module driven by its own independent walk for the whole run."""
    if n_samples < 1:
        raise DomainError("n_samples must be positive")
    p = plant.params
    rng = np.random.default_rng(seed)
    actions = np.stack([random_walk_sequence(n_samples, delta_max, rng, p.a_dim) for _ in range(p.n_sum)], axis=1)
    return _run(plant, actions, ["traditional"] * n_samples, seed)


@dataclass(frozen=True)
class FeatureLayout:
    """Per-module feature vector ``[label, S_d, S(t-K+1..t), A(t-K+1..t-1)]``."""

    K: int
    d: int
    a_dim: int

    @property
    def size(self) -> int:
        return 1 + self.d + self.K * self.d + (self.K - 1) * self.a_dim

    @property
    def step_dim(self) -> int:
        return 1 + 2 * self.d + self.a_dim

    def pack(self, labels, s_desired, states, actions) -> np.ndarray:
        """Assemble ``(n, size)`` features from ``(n,)`` labels, ``(n, d)`` targets,
        ``(K, n, d)`` state history and ``(K-1, n, a_dim)`` action history."""
        n = len(labels)
        states = np.asarray(states).transpose(1, 0, 2).reshape(n, -1)
        if self.K > 1:
            actions = np.asarray(actions).transpose(1, 0, 2).reshape(n, -1)
        else:
            actions = np.zeros((n, 0))
        return np.concatenate([np.asarray(labels, dtype=float)[:, None], s_desired, states, actions], axis=1)

    def time_steps(self, X: np.ndarray) -> np.ndarray:
        """Rearrange ``(B, n, size)`` features into ``(K, B, n, step_dim)`` steps.

        Step ``k`` carries the label, ``S_d``, the state at ``t-K+1+k`` and the
        action applied at that step, with zeros in place of the (unknown)
        current action.
        """
        K, d, a = self.K, self.d, self.a_dim
        B, n, F = X.shape
        if F != self.size:
            raise DomainError(f"feature size {F} does not match layout size {self.size}")
        lab = np.broadcast_to(X[..., None, :1], (B, n, K, 1))
        sd = np.broadcast_to(X[..., None, 1:1 + d], (B, n, K, d))
        S = X[..., 1 + d:1 + d + K * d].reshape(B, n, K, d)
        A = np.concatenate([X[..., 1 + d + K * d:].reshape(B, n, K - 1, a), np.zeros((B, n, 1, a))], axis=2)
        return np.concatenate([lab, sd, S, A], axis=3).transpose(2, 0, 1, 3)


@dataclass
class TrainingPairs:
    """Supervised pairs grouped by time step: ``X[g, i]`` are module ``i``'s
    features at step group ``g`` and ``Y[g, i]`` the action it received."""

    X: np.ndarray
    Y: np.ndarray
    layout: FeatureLayout
    steps: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.X)

    @property
    def n_sum(self) -> int:
        return self.X.shape[1]


def make_training_pairs(ds: Dataset, K: int) -> TrainingPairs:
    """Teacher-forced inverse-model pairs from a dataset.

    Record ``t`` holds the action applied at ``t`` and the configuration it
    produced, so the state "before" step ``t`` is record ``t-1``. For every
    ``t`` in ``[K-1, len-2]`` the target is ``A(t)`` and the features use the
    state history ``S(t-K+1..t)``, actions ``A(t-K+1..t-1)`` and the achieved
    ``S(t+1)`` as the desired state, where ``S(t)`` is the configuration
    measured before ``A(t)`` is applied.
    """
    if K < 1:
        raise DomainError("window K must be at least 1")
    if len(ds) <= K + 1:
        raise DomainError(f"dataset of {len(ds)} records is too short for window {K}")
    layout = FeatureLayout(K, ds.d, ds.a_dim)
    n = ds.n_sum
    # measured[k] is the state before action k; measured[0] is rest
    rest = np.zeros((1, n, ds.d))
    rest[..., -1] = 1.0
    measured = np.concatenate([rest, ds.configs], axis=0)
    T = len(ds)
    ts = np.arange(K - 1, T - 1)
    labels = module_labels(n)
    G = len(ts)
    X = np.empty((G, n, layout.size))
    X[:, :, 0] = labels
    X[:, :, 1:1 + ds.d] = measured[ts + 1]
    hist = np.stack([measured[ts - K + 1 + k] for k in range(K)], axis=2)  # (G, n, K, d)
    X[:, :, 1 + ds.d:1 + ds.d + K * ds.d] = hist.reshape(G, n, -1)
    if K > 1:
        ah = np.stack([ds.actions[ts - K + 1 + k] for k in range(K - 1)], axis=2)
        X[:, :, 1 + ds.d + K * ds.d:] = ah.reshape(G, n, -1)
    Y = ds.actions[ts].copy()
    return TrainingPairs(X, Y, layout, ts)


def _fmt(x: float) -> str:
    return repr(float(x))


def dataset_save(ds: Dataset, path) -> None:
    """Write the line-oriented text format.

    Header: ``modbilstm-dataset version n_sum mode d a_dim seed digest``.
    Each record line: ``t phase`` then, per module, the action components
    followed by the configuration components. Floats are written with
    ``repr`` so every value round-trips exactly.
    """
    seed = "none" if ds.seed is None else str(ds.seed)
    lines = [f"modbilstm-dataset {FORMAT_VERSION} {ds.n_sum} {ds.mode} {ds.d} {ds.a_dim} {seed} {ds.plant_digest or '-'}"]
    for k in range(len(ds)):
        vals = []
        for i in range(ds.n_sum):
            vals.extend(_fmt(x) for x in ds.actions[k, i])
            vals.extend(_fmt(x) for x in ds.configs[k, i])
        lines.append(f"{int(ds.t[k])} {ds.phases[k]} " + " ".join(vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def dataset_load(path) -> Dataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    head = lines[0].split()
    if len(head) != 8 or head[0] != "modbilstm-dataset":
        raise ParseError("missing or malformed dataset header", 1)
    try:
        version, n_sum, d, a_dim = int(head[1]), int(head[2]), int(head[4]), int(head[5])
    except ValueError:
        raise ParseError("non-integer header field", 1) from None
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported version {version}", 1)
    mode = head[3]
    if {"3d": (3, 2), "2d": (2, 1)}.get(mode) != (d, a_dim):
        raise ParseError(f"mode {mode!r} inconsistent with d={d}, a_dim={a_dim}", 1)
    seed = None if head[6] == "none" else int(head[6])
    digest = "" if head[7] == "-" else head[7]
    width = n_sum * (a_dim + d)
    T = len(lines) - 1
    ts = np.empty(T, dtype=int)
    phases = []
    body = np.empty((T, width))
    for k, line in enumerate(lines[1:]):
        lineno = k + 2
        parts = line.split()
        if len(parts) != 2 + width:
            raise ParseError(f"expected {2 + width} fields for {n_sum} modules, got {len(parts)}", lineno)
        try:
            ts[k] = int(parts[0])
            body[k] = [float(x) for x in parts[2:]]
        except ValueError as err:
            raise ParseError(str(err), lineno) from None
        if parts[1] not in PHASES:
            raise ParseError(f"unknown phase {parts[1]!r}", lineno)
        if k and ts[k] <= ts[k - 1]:
            raise ParseError("steps must be strictly increasing", lineno)
        phases.append(parts[1])
    body = body.reshape(T, n_sum, a_dim + d)
    return Dataset(body[..., :a_dim], body[..., a_dim:], np.array(phases, dtype=object), mode, seed, digest, ts)
