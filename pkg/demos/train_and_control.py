"""
Training the spatial biLSTM and tracking configuration trajectories
===================================================================

A single bidirectional LSTM scans along the module chain and outputs one
action per module. Because none of its weights depend on the chain length,
the controller trained on four modules also runs a six-module arm.

The defaults here are lighter than the acceptance profile (8000 samples,
30 epochs) so the script finishes in about a minute.
"""
import sys
import time

import numpy as np

from modbilstm.control import SteadyStateInverse, evaluate_run, preset, run_closed_loop
from modbilstm.core import format_mean_std
from modbilstm.datagen import collect_phased, make_training_pairs
from modbilstm.nn import build_network, train
from modbilstm.plant import PlantParams, plant_init

n_samples = int(sys.argv[1]) if len(sys.argv) > 1 else 4000
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 15

params = PlantParams()
ds = collect_phased(plant_init(params), n_samples, delta_max=0.3, seed=0)
pairs = make_training_pairs(ds, K=5)
print(f"{len(pairs)} step groups, {pairs.layout.size} features per module")

###############################################################################
# Train and report the held-out action-estimation error (percent of the
# actuation range).
t0 = time.time()
net = build_network("bilstm", pairs.layout, hidden=32, layers=2, seed=0)
res = train(net, pairs, epochs=epochs, batch_size=16, lr=1e-3, seed=0)
print(f"trained in {time.time() - t0:.0f}s")
for i, m, s in res.rows():
    print(f"  module {i}: {format_mean_std(m, s)}")

###############################################################################
# Closed loop on the three 3D tasks, then the same network on six modules.
# The steady-state inverse of the surrogate is shown as a reference.
for n in (4, 6):
    p = params.replace(n_sum=n)
    for task in "ABC":
        spec = preset(task, n, scale=0.7)
        learned = evaluate_run(run_closed_loop(plant_init(p), net, spec, seed=0))
        ref = evaluate_run(run_closed_loop(plant_init(p), SteadyStateInverse(p), spec, seed=0))
        print(f"{n} modules, task {task}: biLSTM max {learned[:, 0].max():.2f}%"
              f"  (reference inverse {ref[:, 0].max():.2f}%)")
        print("   " + "  ".join(format_mean_std(m, s) for m, s in learned))
