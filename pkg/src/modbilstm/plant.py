"""Surrogate simulator of a modular soft arm.

Each module is a constant-curvature segment of unit length whose bend
``b = (theta_x, theta_y)`` follows a damped second-order response toward a
target set by its cable drive plus the gravity moment of the modules it
carries. Modules are chained base to tip, so bending a proximal module
tilts every distal one and moves the loads acting on its neighbours.

The planar (``"2d"``) variant reuses the same machinery with
``theta_y = 0`` and a single action component per module.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import DomainError, SaturationError, cable_drive, configs_from_bends

MODES = ("3d", "2d")


@dataclass(frozen=True)
class PlantParams:
    n_sum: int = 4
    theta_max: float = 0.6
    omega: float = 40.0
    zeta: float = 0.9
    g_gain: float = 0.04
    cable_coupling: float = 0.3
    inertia_coupling: float = 0.3
    gravity_dir: tuple = (0.0, 0.0, 1.0)
    dt_control: float = 0.04
    substeps: int = 4
    mode: str = "3d"

    def __post_init__(self):
        object.__setattr__(self, "gravity_dir", tuple(float(g) for g in self.gravity_dir))
        self.validate()

    @property
    def d(self) -> int:
        """Configuration dimension."""
        return 3 if self.mode == "3d" else 2

    @property
    def a_dim(self) -> int:
        return 2 if self.mode == "3d" else 1

    def validate(self):
        if self.mode not in MODES:
            raise DomainError(f"unknown plant mode {self.mode!r}")
        if int(self.n_sum) != self.n_sum or self.n_sum < 1:
            raise DomainError(f"n_sum must be a positive integer, got {self.n_sum}")
        if not self.omega > 0:
            raise DomainError("omega must be positive")
        if not 0 < self.zeta < 2:
            raise DomainError("zeta must lie in (0, 2)")
        if self.theta_max <= 0 or self.g_gain < 0:
            raise DomainError("theta_max must be positive and g_gain non-negative")
        if not 0 <= self.cable_coupling < 1 or not 0 <= self.inertia_coupling < 1:
            raise DomainError("coupling coefficients must lie in [0, 1)")
        if self.dt_control <= 0 or self.substeps < 1:
            raise DomainError("dt_control and substeps must be positive")
        if len(self.gravity_dir) != 3 or not math.isclose(np.linalg.norm(self.gravity_dir), 1.0, abs_tol=1e-9):
            raise DomainError("gravity_dir must be a 3-vector of unit length")
        # worst case: full diagonal drive plus every carried mass at full lever arm
        drive = 1.0 + self.cable_coupling * (self.n_sum - 1)
        worst = self.theta_max * math.sqrt(self.a_dim) * drive + self.g_gain * self.n_sum * (self.n_sum + 1) / 2
        if not worst < math.pi:
            raise DomainError(f"parameters allow bends up to {worst:.3f} rad >= pi")

    def replace(self, **changes) -> "PlantParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["gravity_dir"] = list(self.gravity_dir)
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def planar_params(n_sum: int = 3, **overrides) -> PlantParams:
    """Defaults for the planar (one bending angle per module) variant.

    Modules bend further than the cable-driven ones and their actuators do
    not load neighbours, so ``cable_coupling`` is zero.
    """
    kw = dict(n_sum=n_sum, mode="2d", theta_max=1.8, cable_coupling=0.0)
    kw.update(overrides)
    return PlantParams(**kw)


@dataclass
class PlantState:
    params: PlantParams
    bend: np.ndarray
    rate: np.ndarray
    step: int = 0
    seed: int | None = None

    def copy(self) -> "PlantState":
        return PlantState(self.params, self.bend.copy(), self.rate.copy(), self.step, self.seed)


def plant_init(params: PlantParams, seed: int | None = None) -> PlantState:
    """Resting state: every bend and bend rate zero."""
    params.validate()
    n = params.n_sum
    return PlantState(params, np.zeros((n, 2)), np.zeros((n, 2)), 0, seed)


def _rotations(bends: np.ndarray) -> np.ndarray:
    """Rotation of each module's end frame relative to its base frame.

    A bend ``(tx, ty)`` is a rotation by ``|b|`` about the in-plane axis
    ``(-ty, tx, 0) / |b|``, which carries the base z axis onto the end
    unit vector.
    """
    n = bends.shape[0]
    theta = np.hypot(bends[:, 0], bends[:, 1])
    safe = np.where(theta > 0.0, theta, 1.0)
    kx = np.where(theta > 0.0, -bends[:, 1] / safe, 0.0)
    ky = np.where(theta > 0.0, bends[:, 0] / safe, 0.0)
    s, c = np.sin(theta), np.cos(theta)
    C = 1.0 - c
    R = np.empty((n, 3, 3))
    R[:, 0, 0] = c + kx * kx * C
    R[:, 0, 1] = kx * ky * C
    R[:, 0, 2] = ky * s
    R[:, 1, 0] = kx * ky * C
    R[:, 1, 1] = c + ky * ky * C
    R[:, 1, 2] = -kx * s
    R[:, 2, 0] = -ky * s
    R[:, 2, 1] = kx * s
    R[:, 2, 2] = c
    return R


def _arc_tips(bends: np.ndarray) -> np.ndarray:
    """Tip position of each unit-length arc in its own base frame."""
    theta = np.hypot(bends[:, 0], bends[:, 1])
    small = theta < 1e-6
    safe = np.where(small, 1.0, theta)
    radial = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(theta)) / safe**2)
    axial = np.where(small, 1.0 - theta**2 / 6.0, np.sin(theta) / safe)
    return np.column_stack([bends[:, 0] * radial, bends[:, 1] * radial, axial])


def forward_kinematics(bends: np.ndarray):
    """World base frames and positions of every module.

    Returns ``(frames, origins)`` with ``frames[i]`` the world orientation of
    module ``i``'s base (``frames[n]`` is the tip frame) and ``origins[i]``
    the world position of that base, both of length ``n + 1``.
    """
    bends = np.asarray(bends, dtype=float)
    n = bends.shape[0]
    R = _rotations(bends)
    tips = _arc_tips(bends)
    frames = np.empty((n + 1, 3, 3))
    origins = np.zeros((n + 1, 3))
    frames[0] = np.eye(3)
    for i in range(n):
        origins[i + 1] = origins[i] + frames[i] @ tips[i]
        frames[i + 1] = frames[i] @ R[i]
    return frames, origins


def gravity_load(bends: np.ndarray, params: PlantParams) -> np.ndarray:
    """Bend offset each module receives from the gravity moment it carries.

    Every module has a unit mass lumped at its tip. Module ``i`` supports
    the masses of modules ``i..n``; their moment about its base, expressed
    in its base frame as ``tau``, shifts its bend by ``g_gain * (tau_y, -tau_x)``.
    """
    g = np.asarray(params.gravity_dir, dtype=float)
    if params.mode == "2d":
        g = np.array([g[0], 0.0, g[2]])
    frames, origins = forward_kinematics(bends)
    n = bends.shape[0]
    # tau_i = sum_{j>=i} (o_{j+1} - o_i) x g = (S_i - m_i o_i) x g
    tip_pos = origins[1:]
    suffix = np.cumsum(tip_pos[::-1], axis=0)[::-1]
    counts = np.arange(n, 0, -1)[:, None]
    lever = suffix - counts * origins[:-1]
    tau_world = np.cross(lever, g)
    tau_local = np.einsum("nji,nj->ni", frames[:-1], tau_world)
    load = params.g_gain * np.column_stack([tau_local[:, 1], -tau_local[:, 0]])
    if params.mode == "2d":
        load[:, 1] = 0.0
    return load


def _drive(actions, params: PlantParams) -> np.ndarray:
    a = np.asarray(actions, dtype=float).reshape(params.n_sum, -1)
    if a.shape[1] != params.a_dim:
        raise DomainError(f"expected {params.a_dim} action components per module, got {a.shape[1]}")
    if np.any(np.abs(a) > 1.0 + 1e-12) or not np.all(np.isfinite(a)):
        raise DomainError("action components must lie in [-1, 1]")
    u = cable_drive(a)
    if params.mode == "2d":
        u = np.column_stack([u[:, 0], np.zeros(params.n_sum)])
    return u


def steady_target(state: PlantState, actions) -> np.ndarray:
    """Bend each module is pulled toward under ``actions`` at the current pose."""
    p = state.params
    u = _drive(actions, p)
    if p.cable_coupling:
        # cables of distal modules run through every proximal module
        distal = np.cumsum(u[::-1], axis=0)[::-1] - u
        u = u + p.cable_coupling * distal
    return p.theta_max * u + gravity_load(state.bend, p)


def plant_step(state: PlantState, actions) -> PlantState:
    """Advance one control period with actions held constant.

    The target bend is evaluated once from the pose at the start of the
    period and the second-order response is integrated with semi-implicit
    Euler over ``substeps`` inner steps.
    """
    p = state.params
    target = steady_target(state, actions)
    b = state.bend.copy()
    v = state.rate.copy()
    h = p.dt_control / p.substeps
    w2, damp = p.omega**2, 2.0 * p.zeta * p.omega
    kappa = p.inertia_coupling
    for _ in range(p.substeps):
        acc = w2 * (target - b) - damp * v
        if kappa:
            # a module lags the angular acceleration of its base
            base = np.zeros(2)
            for i in range(len(acc)):
                acc[i] -= kappa * base
                base = base + acc[i]
        v += h * acc
        b += h * v
        mag = np.hypot(b[:, 0], b[:, 1])
        bad = np.flatnonzero(~(mag < math.pi))
        if bad.size:
            i = int(bad[0])
            raise SaturationError(i + 1, state.step + 1, float(mag[i]))
    return PlantState(p, b, v, state.step + 1, state.seed)


def observe_bends(bends: np.ndarray, mode: str) -> np.ndarray:
    v = configs_from_bends(bends)
    if mode == "2d":
        return v[:, [0, 2]]
    return v


def plant_observe(state: PlantState) -> np.ndarray:
    """Local configuration of every module as an ``(n_sum, d)`` array."""
    return observe_bends(state.bend, state.params.mode)


def chain_positions(configs: np.ndarray) -> np.ndarray:
    """World end positions of every module from local configurations.

    Each module is treated as a unit straight link along its configuration
    vector; the next base frame is the minimal rotation taking z onto that
    vector. Accepts ``(n, 3)`` or planar ``(n, 2)`` configs, or a leading
    time axis ``(T, n, d)``.
    """
    configs = np.asarray(configs, dtype=float)
    if configs.ndim == 3:
        return np.stack([chain_positions(c) for c in configs])
    if configs.shape[1] == 2:
        configs = np.column_stack([configs[:, 0], np.zeros(len(configs)), configs[:, 1]])
    theta = np.arccos(np.clip(configs[:, 2], -1.0, 1.0))
    rho = np.hypot(configs[:, 0], configs[:, 1])
    safe = np.where(rho > 0, rho, 1.0)
    bends = np.where(rho[:, None] > 0, configs[:, :2] / safe[:, None] * theta[:, None], 0.0)
    R = _rotations(bends)
    frame = np.eye(3)
    pos = np.zeros(3)
    out = np.empty((len(configs), 3))
    for i in range(len(configs)):
        pos = pos + frame @ configs[i]
        out[i] = pos
        frame = frame @ R[i]
    return out


def equilibrium(params: PlantParams, actions, tol=1e-12, max_iter=10000) -> np.ndarray:
    """Static bends under constant ``actions`` by fixed-point iteration."""
    state = plant_init(params)
    b = state.bend
    for _ in range(max_iter):
        state.bend = b
        nb = steady_target(state, actions)
        if np.max(np.abs(nb - b)) < tol:
            return nb
        b = nb
    raise DomainError("equilibrium iteration did not converge")
