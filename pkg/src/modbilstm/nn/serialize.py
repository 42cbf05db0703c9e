"""Self-describing text container for trained networks.

Layout::

    modbilstm-model 1
    {"variant": "bilstm", "K": 5, ...}
    array fwd.0.W 128x59
    <row-major values, space separated>
    ...

Values are written with ``repr`` so loading reproduces every bit.
"""
from __future__ import annotations

import json

import numpy as np

from ..datagen import FeatureLayout, ParseError
from .models import build_network

MAGIC = "modbilstm-model"
VERSION = 1


def model_dumps(net) -> str:
    lines = [f"{MAGIC} {VERSION}", json.dumps(net.hyper(), sort_keys=True)]
    for name, arr in net.params.items():
        shape = "x".join(str(s) for s in arr.shape)
        lines.append(f"array {name} {shape}")
        lines.append(" ".join(repr(float(x)) for x in arr.reshape(-1)))
    return "\n".join(lines) + "\n"


def model_save(net, path) -> None:
    with open(path, "w") as fh:
        fh.write(model_dumps(net))


def model_loads(text: str):
    lines = text.splitlines()
    if len(lines) < 2 or lines[0].split() != [MAGIC, str(VERSION)]:
        raise ParseError("missing or unsupported model header", 1)
    try:
        hyper = json.loads(lines[1])
    except json.JSONDecodeError as err:
        raise ParseError(f"bad hyperparameter line: {err}", 2) from None
    layout = FeatureLayout(hyper["K"], hyper["d"], hyper["a_dim"])
    net = build_network(hyper["variant"], layout, n_sum=hyper.get("n_sum"), hidden=hyper["hidden"],
                        layers=hyper["layers"], head_hidden=hyper.get("head_hidden", 0), seed=hyper.get("seed", 0))
    seen = set()
    k = 2
    while k < len(lines):
        head = lines[k].split()
        if len(head) != 3 or head[0] != "array":
            raise ParseError("expected an array header", k + 1)
        name = head[1]
        if name not in net.params:
            raise ParseError(f"unknown parameter {name!r} for {hyper['variant']}", k + 1)
        shape = tuple(int(s) for s in head[2].split("x"))
        if shape != net.params[name].shape:
            raise ParseError(f"{name} has shape {shape}, expected {net.params[name].shape}", k + 1)
        if k + 1 >= len(lines):
            raise ParseError(f"missing values for {name}", k + 2)
        try:
            vals = np.array([float(x) for x in lines[k + 1].split()])
        except ValueError as err:
            raise ParseError(str(err), k + 2) from None
        if vals.size != np.prod(shape):
            raise ParseError(f"{name}: {vals.size} values for shape {shape}", k + 2)
        net.params[name][...] = vals.reshape(shape)
        seen.add(name)
        k += 2
    missing = set(net.params) - seen
    if missing:
        raise ParseError(f"missing parameters {sorted(missing)}")
    return net


def model_load(path):
    with open(path) as fh:
        return model_loads(fh.read())
