"""Desired configuration trajectories, the closed-loop runner and its error tables."""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DomainError,
    SaturationError,
    angle_error,
    bending_angle_deg,
    clamp_action,
    config_error,
    module_labels,
)
from .datagen import FeatureLayout
from .plant import PlantState, gravity_load, plant_observe, plant_step

TASKS_3D = ("A", "B", "C")
TASKS_2D = ("edge", "down")

# Per-module trajectory parameters for 4- and 6-module 3D arms and 3- and 2-module planar arms.
PRESETS = {
    4: {
        "A": {"v_zmin": [0.975, 0.850, 0.725, 0.625]},
        "B": {"v_dz": [0.998, 0.998, 0.996, 0.600], "a": [1, 1, 1, -1]},
        "C": {"v_zmin": [0.941, 0.998, 0.897, 0.650], "a": [1, 1, 1, -1]},
    },
    6: {
        "A": {"v_zmin": [0.998, 0.995, 0.950, 0.850, 0.800, 0.650]},
        "B": {"v_dz": [0.999, 0.999, 0.999, 0.998, 0.995, 0.708], "a": [1, 1, 1, 1, -1, -1]},
        "C": {"v_zmin": [0.999, 0.996, 0.985, 0.975, 0.925, 0.600], "a": [1, 1, 1, 1, 1, -1]},
    },
    3: {
        "edge": {"ang_max": [5.4, 18.0, 90.0]},
        "down": {"ang_max": [3.6, 36.0, -39.6]},
    },
    2: {
        "edge": {"ang_max": [21.6, 72.0]},
        "down": {"ang_max": [3.24, -32.4]},
    },
}


@dataclass
class TrajectorySpec:
    task: str
    n_sum: int
    v_zmin: list = None
    v_dz: list = None
    a: list = None
    ang_max: list = None
    t_max: int = None
    scale: float = 1.0

    def __post_init__(self):
        if self.task not in TASKS_3D + TASKS_2D:
            raise DomainError(f"unknown task {self.task!r}")
        if self.t_max is None:
            self.t_max = 250 if self.task in TASKS_3D else 200
        need = {"A": ("v_zmin",), "B": ("v_dz", "a"), "C": ("v_zmin", "a"),
                "edge": ("ang_max",), "down": ("ang_max",)}[self.task]
        for name in need:
            vals = getattr(self, name)
            if vals is None or len(vals) != self.n_sum:
                raise DomainError(f"task {self.task} needs {self.n_sum} values for {name}")
        if self.a is not None and any(abs(x) != 1 for x in self.a):
            raise DomainError("rotation directions must be +1 or -1")
        for name in ("v_zmin", "v_dz"):
            vals = getattr(self, name)
            if vals is not None and any(not 0 < v <= 1 for v in vals):
                raise DomainError(f"{name} values must lie in (0, 1]")
        if not 0 < self.scale <= 1:
            raise DomainError("scale must lie in (0, 1]")

    @property
    def planar(self) -> bool:
        return self.task in TASKS_2D

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


def preset(task: str, n_sum: int, scale: float = 1.0) -> TrajectorySpec:
    try:
        params = PRESETS[n_sum][task]
    except KeyError:
        raise DomainError(f"no preset for task {task!r} with {n_sum} modules") from None
    return TrajectorySpec(task, n_sum, scale=scale, **params)


def desired_angle(spec: TrajectorySpec, i: int, t) -> float:
    """Triangle-wave bending angle (degrees) of module ``i`` for edge/down."""
    if not spec.planar:
        raise DomainError(f"task {spec.task} has no bending-angle trajectory")
    amax = spec.ang_max[i - 1]
    if t < 50:
        ang = amax * t / 50
    elif t < 150:
        ang = amax * (2 - t / 50)
    else:
        ang = amax * (t / 50 - 4)
    return spec.scale * ang


def _shrink(v, scale):
    # shrink the bend magnitude, keeping the bending plane
    if scale == 1.0:
        return v
    theta = math.acos(max(-1.0, min(1.0, v[2])))
    rho = math.hypot(v[0], v[1])
    if rho == 0.0:
        return v
    ts = scale * theta
    k = math.sin(ts) / rho
    return np.array([v[0] * k, v[1] * k, math.cos(ts)])


def desired_config(spec: TrajectorySpec, i: int, t) -> np.ndarray:
    """Desired unit configuration of module ``i`` (1-based) at step ``t``."""
    if not 1 <= i <= spec.n_sum:
        raise DomainError(f"module {i} out of range")
    if not 0 <= t <= spec.t_max:
        raise DomainError(f"step {t} outside [0, {spec.t_max}]")
    k = i - 1
    task = spec.task
    if task in TASKS_2D:
        ang = math.radians(desired_angle(spec, i, t))
        return np.array([math.sin(ang), math.cos(ang)])
    if task == "A":
        vz = 1 - (1 - spec.v_zmin[k]) * t / spec.t_max
        phase = 2 * math.pi * t / spec.t_max
        sign = 1
    elif task == "B":
        vz = spec.v_dz[k]
        phase = 2 * math.pi * t / spec.t_max
        sign = spec.a[k]
    else:
        sign = spec.a[k]
        if t < 50:
            vz = 1 - (1 - spec.v_zmin[k]) * t / 50
            r = math.sqrt(1 - vz * vz)
            return _shrink(np.array([0.0, sign * r, vz]), spec.scale)
        vz = spec.v_zmin[k]
        phase = 2 * math.pi * (t - 50) / 200
    r = math.sqrt(1 - vz * vz)
    v = np.array([sign * math.sin(phase) * r, sign * math.cos(phase) * r, vz])
    return _shrink(v, spec.scale)


def desired_configs(spec: TrajectorySpec, t) -> np.ndarray:
    return np.array([desired_config(spec, i, t) for i in range(1, spec.n_sum + 1)])


@dataclass
class RunLog:
    desired: np.ndarray  # (T, n, d)
    achieved: np.ndarray  # (T, n, d)
    actions: np.ndarray  # (T, n, a_dim)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.desired)

    @property
    def n_sum(self):
        return self.desired.shape[1]

    @property
    def failed_step(self):
        return self.meta.get("failed_step")

    def __eq__(self, other):
        if not isinstance(other, RunLog):
            return NotImplemented
        return (self.meta == other.meta and np.array_equal(self.desired, other.desired)
                and np.array_equal(self.achieved, other.achieved) and np.array_equal(self.actions, other.actions))


class SteadyStateInverse:
    """Reference controller that inverts the surrogate plant's static map.

    Given the desired configurations it solves for the actions whose steady
    target equals the desired bends, ignoring the transient.
    """

    controller_id = "steady-state-inverse"

    def __init__(self, params, K=1):
        self.params = params
        self.layout = FeatureLayout(K, params.d, params.a_dim)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        p = self.params
        out = np.empty((X.shape[0], X.shape[1], p.a_dim))
        for b in range(X.shape[0]):
            sd = X[b, :, 1:1 + p.d]
            if p.mode == "2d":
                bend = np.column_stack([np.arctan2(sd[:, 0], sd[:, 1]), np.zeros(len(sd))])
            else:
                theta = np.arccos(np.clip(sd[:, 2], -1, 1))
                rho = np.hypot(sd[:, 0], sd[:, 1])
                k = np.where(rho > 0, theta / np.where(rho > 0, rho, 1), 0.0)
                bend = sd[:, :2] * k[:, None]
            drive = (bend - gravity_load(bend, p)) / p.theta_max
            u = np.zeros_like(drive)
            acc = np.zeros(2)
            for i in range(len(drive) - 1, -1, -1):
                u[i] = drive[i] - p.cable_coupling * acc
                acc = acc + u[i]
            out[b] = np.clip(u[:, :p.a_dim], -1, 1)
        return out


def _controller_id(controller):
    return getattr(controller, "controller_id", None) or getattr(controller, "variant", type(controller).__name__)


def run_closed_loop(plant: PlantState, controller, spec: TrajectorySpec, seed=None) -> RunLog:
    """Drive the plant along ``spec`` with a one-step-ahead inverse controller.

    At step ``t`` the controller receives, per module, the label, the desired
    configuration for ``t+1``, the last ``K`` measured configurations and
    the last ``K-1`` applied actions. History before the run is the resting
    pose with zero actions. On saturation the log is truncated and
    ``meta["failed_step"]`` records the step.
    """
    p = plant.params
    layout = controller.layout
    if (layout.d, layout.a_dim) != (p.d, p.a_dim):
        raise DomainError(f"controller expects d={layout.d}, a_dim={layout.a_dim}; plant gives d={p.d}, a_dim={p.a_dim}")
    if spec.n_sum != p.n_sum:
        raise DomainError(f"trajectory for {spec.n_sum} modules, plant has {p.n_sum}")
    if spec.planar != (p.mode == "2d"):
        raise DomainError(f"task {spec.task} does not fit a {p.mode} plant")
    if np.any(plant.bend != 0) or np.any(plant.rate != 0):
        raise DomainError("closed-loop runs start from rest")
    K, n = layout.K, p.n_sum
    labels = module_labels(n)
    state = plant.copy()
    states = [plant_observe(state)] * K
    acts = [np.zeros((n, p.a_dim))] * max(K - 1, 0)
    desired, achieved, applied = [], [], []
    meta = {"controller": _controller_id(controller), "task": spec.task, "n_sum": n, "mode": p.mode,
            "seed": seed, "plant": p.to_dict(), "trajectory": spec.to_dict(), "failed_step": None}
    for t in range(spec.t_max):
        sd = desired_configs(spec, t + 1)
        X = layout.pack(labels, sd, states[-K:], acts[len(acts) - (K - 1):] if K > 1 else [])
        a = clamp_action(controller.predict(X[None])[0]).reshape(n, p.a_dim)
        try:
            state = plant_step(state, a)
        except SaturationError:
            meta["failed_step"] = t
            break
        s = plant_observe(state)
        states.append(s)
        acts.append(a)
        desired.append(sd)
        achieved.append(s)
        applied.append(a)
    T = len(desired)
    shape = lambda k: (T, n, k)
    return RunLog(np.array(desired).reshape(shape(p.d)), np.array(achieved).reshape(shape(p.d)),
                  np.array(applied).reshape(shape(p.a_dim)), meta)


def step_errors(log: RunLog) -> np.ndarray:
    """``(T, n)`` per-step errors: percent for 3D configs, degrees for planar."""
    T, n, d = log.desired.shape
    out = np.empty((T, n))
    for t in range(T):
        for i in range(n):
            if d == 2:
                out[t, i] = angle_error(bending_angle_deg(log.desired[t, i]), bending_angle_deg(log.achieved[t, i]))
            else:
                out[t, i] = config_error(log.desired[t, i], log.achieved[t, i])
    return out


def evaluate_run(log: RunLog) -> np.ndarray:
    """Per-module ``(mean, std)`` of the step errors, shape ``(n, 2)``."""
    err = step_errors(log)
    if len(err) == 0:
        return np.full((log.n_sum, 2), np.nan)
    return np.column_stack([err.mean(axis=0), err.std(axis=0)])


def runlog_save(log: RunLog, path) -> None:
    """CSV with a ``#``-prefixed JSON metadata line.

    Columns: ``t`` then, per module ``i``, the desired components
    ``m{i}_des_*``, achieved components ``m{i}_ach_*`` and actions ``m{i}_a*``.
    """
    T, n, d = log.desired.shape
    ad = log.actions.shape[2]
    comps = ["x", "y", "z"] if d == 3 else ["x", "z"]
    cols = ["t"]
    for i in range(1, n + 1):
        cols += [f"m{i}_des_{c}" for c in comps]
        cols += [f"m{i}_ach_{c}" for c in comps]
        cols += [f"m{i}_a{k}" for k in range(ad)]
    buf = io.StringIO()
    buf.write("# modbilstm-runlog " + json.dumps(log.meta, sort_keys=True) + "\n")
    buf.write(",".join(cols) + "\n")
    for t in range(T):
        row = [str(t + 1)]
        for i in range(n):
            row += [repr(float(x)) for x in log.desired[t, i]]
            row += [repr(float(x)) for x in log.achieved[t, i]]
            row += [repr(float(x)) for x in log.actions[t, i]]
        buf.write(",".join(row) + "\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def runlog_load(path) -> RunLog:
    from .datagen import ParseError

    with open(path) as fh:
        lines = fh.read().splitlines()
    if len(lines) < 2 or not lines[0].startswith("# modbilstm-runlog "):
        raise ParseError("missing run-log header", 1)
    try:
        meta = json.loads(lines[0][len("# modbilstm-runlog "):])
    except json.JSONDecodeError as err:
        raise ParseError(f"bad metadata: {err}", 1) from None
    cols = lines[1].split(",")
    n = meta["n_sum"]
    d = 2 if meta["mode"] == "2d" else 3
    ad = 1 if meta["mode"] == "2d" else 2
    if len(cols) != 1 + n * (2 * d + ad):
        raise ParseError("column count does not match module count", 2)
    rows = []
    for k, line in enumerate(lines[2:]):
        parts = line.split(",")
        if len(parts) != len(cols):
            raise ParseError(f"expected {len(cols)} fields", k + 3)
        try:
            rows.append([float(x) for x in parts[1:]])
        except ValueError as err:
            raise ParseError(str(err), k + 3) from None
    body = np.array(rows).reshape(len(rows), n, 2 * d + ad)
    return RunLog(body[..., :d], body[..., d:2 * d], body[..., 2 * d:], meta)
