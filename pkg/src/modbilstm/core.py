"""Closed-form geometry and bookkeeping shared by every other module.

Configurations are unit vectors of a module end relative to its base:
``(v_x, v_y, v_z)`` for the cable-driven 3D arm and ``(v_x, v_z)`` for the
planar two-chamber arm.
"""
from __future__ import annotations

import math

import numpy as np


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class SaturationError(RuntimeError):
    """A module bend reached pi; the configuration direction is ill-conditioned."""

    def __init__(self, module, step=None, magnitude=None):
        self.module = module
        self.step = step
        self.magnitude = magnitude
        msg = f"module {module} saturated"
        if magnitude is not None:
            msg += f" (|bend| = {magnitude:.4f} rad)"
        if step is not None:
            msg += f" at step {step}"
        super().__init__(msg)


class NumericError(ArithmeticError):
    """Non-finite loss or gradient."""


def module_label(i: int, n_sum: int) -> float:
    """Normalized position of module ``i`` (1-based) in a chain of ``n_sum``.

    The base module maps to -1 and the tip module to +1. A single-module
    chain is labelled 0.
    """
    if n_sum < 1 or not 1 <= i <= n_sum:
        raise DomainError(f"module index {i} out of range for {n_sum} modules")
    if n_sum == 1:
        return 0.0
    return 2.0 * (i - 1) / (n_sum - 1) - 1.0


def module_labels(n_sum: int) -> np.ndarray:
    return np.array([module_label(i, n_sum) for i in range(1, n_sum + 1)])


def action_to_cables(a0: float, a1: float = 0.0) -> tuple[float, float, float, float]:
    """Split a signed action pair into four antagonistic cable acts."""
    return (max(0.0, a0), max(0.0, -a0), max(0.0, a1), max(0.0, -a1))


def cable_drive(actions: np.ndarray) -> np.ndarray:
    """Net drive ``(a_I - a_II, a_III - a_IV)`` for an ``(..., a_dim)`` action array.

    Vectorized counterpart of :func:`action_to_cables`; the round trip
    through the cable split is the identity on [-1, 1].
    """
    actions = np.asarray(actions, dtype=float)
    pos = np.maximum(0.0, actions)
    neg = np.maximum(0.0, -actions)
    return pos - neg


def clamp_action(a) -> np.ndarray:
    return np.clip(np.asarray(a, dtype=float), -1.0, 1.0)


def config_from_bend(theta_x: float, theta_y: float) -> np.ndarray:
    """Unit end vector of a constant-curvature module bent by ``(theta_x, theta_y)``.

    The bend magnitude is the arc angle and its direction is the bending
    plane. Magnitudes of pi or more are rejected.
    """
    theta = math.hypot(theta_x, theta_y)
    if not theta < math.pi:
        raise DomainError(f"bend magnitude {theta} >= pi")
    if theta == 0.0:
        return np.array([0.0, 0.0, 1.0])
    s = math.sin(theta) / theta
    return np.array([theta_x * s, theta_y * s, math.cos(theta)])


def config_from_angle(theta: float) -> np.ndarray:
    """Planar counterpart: ``(v_x, v_z) = (sin theta, cos theta)``."""
    return np.array([math.sin(theta), math.cos(theta)])


def configs_from_bends(bends: np.ndarray) -> np.ndarray:
    """Vectorized :func:`config_from_bend` over an ``(n, 2)`` array (no domain check)."""
    bends = np.asarray(bends, dtype=float)
    theta = np.hypot(bends[:, 0], bends[:, 1])
    s = np.where(theta > 0.0, np.sin(theta) / np.where(theta > 0.0, theta, 1.0), 1.0)
    return np.column_stack([bends[:, 0] * s, bends[:, 1] * s, np.cos(theta)])


def bending_angle_deg(v) -> float:
    """Signed bending angle of a planar configuration ``(v_x, v_z)``, in degrees."""
    v = np.asarray(v, dtype=float)
    return math.degrees(math.atan2(v[0], v[-1]))


def config_error(v_d, v) -> float:
    """Configuration error as percent of the unit-vector length."""
    v_d = np.asarray(v_d, dtype=float)
    v = np.asarray(v, dtype=float)
    if v_d.shape != v.shape:
        raise DomainError(f"dimension mismatch: {v_d.shape} vs {v.shape}")
    return 100.0 * float(np.linalg.norm(v - v_d))


def angle_error(ang_d: float, ang: float) -> float:
    return abs(ang - ang_d)


def mean_std(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    return float(values.mean()), float(values.std())


def format_mean_std(mean: float, std: float, unit: str = "%") -> str:
    return f"{mean:.2f} ± {std:.2f}{unit}"
