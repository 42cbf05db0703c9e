"""Command-line pipeline: collect, train, eval-estimation, control, report.

Every command reads one JSON experiment config. ``--set section.key=value``
overrides single keys (the value is parsed as JSON when possible). All
outputs land in the config's ``output_dir`` next to ``manifest.json``,
which lists each artifact with its checksum and the config digest.

Exit codes: 0 success, 1 validation error, 2 numeric failure,
3 an acceptance threshold in the config was missed.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import os
import sys

import numpy as np

from .control import PRESETS, evaluate_run, preset, run_closed_loop, runlog_load, runlog_save, step_errors
from .core import DomainError, NumericError, SaturationError, format_mean_std
from .datagen import (
    ParseError,
    collect_phased,
    collect_traditional,
    dataset_load,
    dataset_save,
    make_training_pairs,
)
from .nn import TrainingError, build_network, estimation_errors, model_load, model_save, split_holdout, train
from .plant import PlantParams, plant_init

log = logging.getLogger("modbilstm")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_THRESHOLD = 0, 1, 2, 3

SECTIONS = {"name", "output_dir", "plant", "collector", "network", "tasks"}
COLLECTOR_KEYS = {"method", "n_samples", "delta_max", "seed", "phase_b_split"}
NETWORK_KEYS = {"variant", "H", "L", "K", "lr", "batch", "epochs", "seed", "head_hidden", "holdout", "lr_decay"}
TASK_KEYS = {"task", "n_sum", "scale", "max_error", "seed"}
NETWORK_DEFAULTS = {"head_hidden": 0, "holdout": 0.1, "lr_decay": 1.0}


class ConfigError(DomainError):
    pass


class ThresholdMiss(Exception):
    pass


# config ---------------------------------------------------------------

def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in overrides or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override inside {key!r}")
        node[parts[-1]] = _parse_value(value)
    return cfg


def _require(section: dict, keys, where):
    missing = [k for k in keys if k not in section]
    if missing:
        raise ConfigError(f"{where} is missing {missing}")


def _check_seed(section, where):
    seed = section["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"{where} needs an explicit non-negative integer seed, got {seed!r}")


def validate_config(cfg: dict) -> dict:
    """Check structure, mandatory seeds and preset names; fill optional defaults."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    _require(cfg, ["output_dir", "plant"], "config")
    cfg = copy.deepcopy(cfg)
    try:
        plant = PlantParams(**cfg["plant"])
    except TypeError as err:
        raise ConfigError(f"plant: {err}") from None
    cfg["plant"] = plant.to_dict()
    if "collector" in cfg:
        col = cfg["collector"]
        if set(col) - COLLECTOR_KEYS:
            raise ConfigError(f"unknown collector keys {sorted(set(col) - COLLECTOR_KEYS)}")
        _require(col, ["method", "n_samples", "delta_max", "seed"], "collector")
        _check_seed(col, "collector")
        if col["method"] not in ("phased", "traditional"):
            raise ConfigError(f"unknown collection method {col['method']!r}")
        col.setdefault("phase_b_split", None)
    if "network" in cfg:
        net = cfg["network"]
        if set(net) - NETWORK_KEYS:
            raise ConfigError(f"unknown network keys {sorted(set(net) - NETWORK_KEYS)}")
        _require(net, ["variant", "H", "L", "K", "lr", "batch", "epochs", "seed"], "network")
        _check_seed(net, "network")
        for k, v in NETWORK_DEFAULTS.items():
            net.setdefault(k, v)
    for j, task in enumerate(cfg.get("tasks", [])):
        if set(task) - TASK_KEYS:
            raise ConfigError(f"task {j}: unknown keys {sorted(set(task) - TASK_KEYS)}")
        _require(task, ["task", "seed"], f"task {j}")
        _check_seed(task, f"task {j}")
        task.setdefault("n_sum", plant.n_sum)
        task.setdefault("scale", 1.0)
        task.setdefault("max_error", None)
        if task["task"] not in PRESETS.get(task["n_sum"], {}):
            raise ConfigError(f"task {j}: no preset {task['task']!r} for {task['n_sum']} modules")
    return cfg


def _portable(cfg: dict) -> dict:
    # where outputs go does not change what they contain
    return {k: v for k, v in cfg.items() if k != "output_dir"}


def config_digest(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(_portable(cfg), sort_keys=True).encode()).hexdigest()[:16]


def load_config(path, overrides=None) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None
    return validate_config(apply_overrides(cfg, overrides))


# run directory --------------------------------------------------------

class RunDir:
    def __init__(self, cfg):
        self.cfg = cfg
        self.path = cfg["output_dir"]
        self.digest = config_digest(cfg)
        os.makedirs(self.path, exist_ok=True)
        if not os.access(self.path, os.W_OK):
            raise ConfigError(f"output directory {self.path} is not writable")

    def file(self, name):
        full = os.path.join(self.path, name)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        return full

    def manifest_path(self):
        return os.path.join(self.path, "manifest.json")

    def read_manifest(self):
        if os.path.exists(self.manifest_path()):
            with open(self.manifest_path()) as fh:
                return json.load(fh)
        return {"artifacts": {}}

    def register(self, command, names):
        man = self.read_manifest()
        man["config_digest"] = self.digest
        man["config"] = _portable(self.cfg)
        for name in names:
            with open(os.path.join(self.path, name), "rb") as fh:
                sha = hashlib.sha256(fh.read()).hexdigest()
            man["artifacts"][name] = {"command": command, "config_digest": self.digest, "sha256": sha}
        with open(self.manifest_path(), "w") as fh:
            json.dump(man, fh, indent=1, sort_keys=True)
            fh.write("\n")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def _read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path} is empty", 1)
    return rows[0], rows[1:]


# commands -------------------------------------------------------------

def _plant(cfg, **changes):
    return PlantParams(**cfg["plant"]).replace(**changes)


def cmd_collect(cfg):
    if "collector" not in cfg:
        raise ConfigError("collect needs a collector section")
    run = RunDir(cfg)
    col = cfg["collector"]
    state = plant_init(_plant(cfg), seed=col["seed"])
    if col["method"] == "phased":
        ds = collect_phased(state, col["n_samples"], col["delta_max"], col["seed"],
                            phase_b_split=col.get("phase_b_split"))
    else:
        ds = collect_traditional(state, col["n_samples"], col["delta_max"], col["seed"])
    dataset_save(ds, run.file("dataset.txt"))
    tips = ds.tip_positions()
    rest = np.array([0.0, 0.0, float(ds.n_sum)])
    summary = {"records": len(ds), "method": col["method"], "n_sum": ds.n_sum, "phases": {}}
    for ph in dict.fromkeys(ds.phases.tolist()):
        sel = tips[ds.phases == ph]
        exc = np.linalg.norm(sel - rest, axis=1)
        summary["phases"][ph] = {"records": int(len(sel)), "tip_std": float(np.sqrt(sel.var(axis=0).sum())),
                                 "excursion_mean": float(exc.mean()), "excursion_max": float(exc.max())}
    summary["tip_std"] = float(np.sqrt(tips.var(axis=0).sum()))
    with open(run.file("dataset_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    run.register("collect", ["dataset.txt", "dataset_summary.json"])
    print(f"collected {len(ds)} records ({col['method']}) into {run.path}")
    return EXIT_OK


def _error_rows(table, unit="%"):
    return [[i + 1, f"{m:.6f}", f"{s:.6f}", format_mean_std(m, s, unit)] for i, (m, s) in enumerate(table)]


def _load_pairs(cfg, run, dataset_path):
    ds = dataset_load(dataset_path or run.file("dataset.txt"))
    plant = _plant(cfg)
    if (ds.mode, ds.n_sum) != (plant.mode, plant.n_sum):
        raise ConfigError(f"dataset ({ds.n_sum} modules, {ds.mode}) does not match the plant config")
    return make_training_pairs(ds, cfg["network"]["K"])


def cmd_train(cfg, dataset=None):
    if "network" not in cfg:
        raise ConfigError("train needs a network section")
    run = RunDir(cfg)
    net_cfg = cfg["network"]
    pairs = _load_pairs(cfg, run, dataset)
    net = build_network(net_cfg["variant"], pairs.layout, n_sum=pairs.n_sum, hidden=net_cfg["H"],
                        layers=net_cfg["L"], head_hidden=net_cfg["head_hidden"], seed=net_cfg["seed"])
    res = train(net, pairs, epochs=net_cfg["epochs"], batch_size=net_cfg["batch"], lr=net_cfg["lr"],
                seed=net_cfg["seed"], holdout=net_cfg["holdout"], lr_decay=net_cfg["lr_decay"])
    model_save(net, run.file("model.txt"))
    _write_csv(run.file("loss_curve.csv"), ["epoch", "train_mse", "holdout_mse"],
               [[e, repr(a), repr(b)] for e, (a, b) in enumerate(zip(res.train_loss, res.holdout_loss))])
    _write_csv(run.file("estimation_table.csv"), ["module", "mean", "std", "mean_std"], _error_rows(res.error_table))
    run.register("train", ["model.txt", "loss_curve.csv", "estimation_table.csv"])
    for row in _error_rows(res.error_table):
        print(f"module {row[0]}: {row[3]}")
    return EXIT_OK


def cmd_eval_estimation(cfg, model=None, dataset=None):
    run = RunDir(cfg)
    net = model_load(model or run.file("model.txt"))
    pairs = _load_pairs(cfg, run, dataset)
    if (pairs.layout.K, pairs.layout.d, pairs.layout.a_dim) != (net.layout.K, net.layout.d, net.layout.a_dim):
        raise ConfigError("model feature layout does not match the dataset")
    _, (Xho, Yho) = split_holdout(pairs, cfg["network"]["holdout"])
    table = estimation_errors(net, Xho, Yho)
    _write_csv(run.file("estimation_eval.csv"), ["module", "mean", "std", "mean_std"], _error_rows(table))
    run.register("eval-estimation", ["estimation_eval.csv"])
    for row in _error_rows(table):
        print(f"module {row[0]}: {row[3]}")
    return EXIT_OK


def _run_name(controller, task, n_sum):
    return f"runs/{controller}_{task}_n{n_sum}.csv"


def cmd_control(cfg, model=None):
    tasks = cfg.get("tasks") or []
    if not tasks:
        raise ConfigError("control needs at least one task")
    run = RunDir(cfg)
    net = model_load(model or run.file("model.txt"))
    names, rows, misses = [], [], []
    for task in tasks:
        plant = _plant(cfg, n_sum=task["n_sum"])
        spec = preset(task["task"], task["n_sum"], task["scale"])
        rlog = run_closed_loop(plant_init(plant, seed=task["seed"]), net, spec, seed=task["seed"])
        if rlog.failed_step is not None:
            raise SaturationError(0, rlog.failed_step)
        name = _run_name(net.variant, task["task"], task["n_sum"])
        runlog_save(rlog, run.file(name))
        names.append(name)
        unit = "deg" if plant.mode == "2d" else "%"
        for i, (m, s) in enumerate(evaluate_run(rlog)):
            rows.append([task["task"], net.variant, task["n_sum"], i + 1, f"{m:.6f}", f"{s:.6f}", unit,
                         format_mean_std(m, s, "°" if unit == "deg" else "%")])
            if task["max_error"] is not None and not m < task["max_error"]:
                misses.append(f"{task['task']} n={task['n_sum']} module {i + 1}: {m:.2f} >= {task['max_error']}")
    header = ["task", "controller", "n_sum", "module", "mean", "std", "unit", "mean_std"]
    _write_csv(run.file("control_table.csv"), header, rows)
    run.register("control", names + ["control_table.csv"])
    for r in rows:
        print(f"{r[0]:>5} n={r[2]} module {r[3]}: {r[7]}")
    if misses:
        raise ThresholdMiss("; ".join(misses))
    return EXIT_OK


def cmd_report(run_dirs, out_dir=None):
    """Merge control runs found under ``run_dirs`` into report tables and plot data."""
    found = []
    for d in run_dirs:
        runs = os.path.join(d, "runs")
        if os.path.isdir(runs):
            found += [os.path.join(runs, f) for f in sorted(os.listdir(runs)) if f.endswith(".csv")]
    if not found:
        raise ConfigError(f"no runs under {', '.join(map(str, run_dirs))}")
    out_dir = out_dir or run_dirs[0]
    os.makedirs(os.path.join(out_dir, "plots"), exist_ok=True)
    rows, names = [], []
    for path in found:
        rlog = runlog_load(path)
        meta = rlog.meta
        unit = "deg" if meta["mode"] == "2d" else "%"
        key = (meta["task"], meta["controller"], meta["n_sum"])
        for i, (m, s) in enumerate(evaluate_run(rlog)):
            rows.append(list(key) + [i + 1, f"{m:.6f}", f"{s:.6f}", unit])
        err = step_errors(rlog)
        comps = ["x", "y", "z"] if rlog.desired.shape[2] == 3 else ["x", "z"]
        header = ["t", "module"] + [f"des_{c}" for c in comps] + [f"ach_{c}" for c in comps] + ["error"]
        series = []
        for t in range(len(rlog)):
            for i in range(rlog.n_sum):
                series.append([t + 1, i + 1] + [repr(float(x)) for x in rlog.desired[t, i]]
                              + [repr(float(x)) for x in rlog.achieved[t, i]] + [repr(float(err[t, i]))])
        name = f"plots/{meta['controller']}_{meta['task']}_n{meta['n_sum']}.csv"
        _write_csv(os.path.join(out_dir, name), header, series)
        names.append(name)
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    header = ["task", "controller", "n_sum", "module", "mean", "std", "unit"]
    _write_csv(os.path.join(out_dir, "report.csv"), header, rows)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump([dict(zip(header, r)) for r in rows], fh, indent=1, sort_keys=True)
        fh.write("\n")
    names += ["report.csv", "report.json"]
    print(f"merged {len(found)} runs into {out_dir}")
    return names


def read_report(path):
    """Parse ``report.csv`` back into typed rows."""
    header, rows = _read_csv(path)
    if header != ["task", "controller", "n_sum", "module", "mean", "std", "unit"]:
        raise ParseError(f"{path}: unexpected report header", 1)
    out = []
    for k, r in enumerate(rows):
        if len(r) != len(header):
            raise ParseError(f"{path}: expected {len(header)} fields", k + 2)
        out.append({"task": r[0], "controller": r[1], "n_sum": int(r[2]), "module": int(r[3]),
                    "mean": float(r[4]), "std": float(r[5]), "unit": r[6]})
    return out


# entry point ----------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="modbilstm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        return p

    with_config("collect", "run a data collector on the plant")
    p = with_config("train", "fit a network on a collected dataset")
    p.add_argument("--dataset")
    p = with_config("eval-estimation", "held-out action-estimation table")
    p.add_argument("--model")
    p.add_argument("--dataset")
    p = with_config("control", "closed-loop runs on the configured tasks")
    p.add_argument("--model")
    p = sub.add_parser("report", help="merge control runs into tables and plot data")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out")
    return ap


def _dispatch(args):
    if args.command == "report":
        names = cmd_report(args.run_dirs, args.out)
        man_dir = args.out or args.run_dirs[0]
        if os.path.exists(os.path.join(man_dir, "manifest.json")):
            with open(os.path.join(man_dir, "manifest.json")) as fh:
                cfg = json.load(fh).get("config")
            if cfg is not None:
                cfg = dict(cfg, output_dir=man_dir)
                RunDir(cfg).register("report", names)
        return EXIT_OK
    cfg = load_config(args.config, args.set)
    if args.command == "collect":
        return cmd_collect(cfg)
    if args.command == "train":
        return cmd_train(cfg, args.dataset)
    if args.command == "eval-estimation":
        if "network" not in cfg:
            raise ConfigError("eval-estimation needs a network section")
        return cmd_eval_estimation(cfg, args.model, args.dataset)
    return cmd_control(cfg, args.model)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _dispatch(args)
    except ThresholdMiss as err:
        print(f"threshold missed: {err}", file=sys.stderr)
        return EXIT_THRESHOLD
    except (NumericError, SaturationError, TrainingError, FloatingPointError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
