"""
Planar arm: train on three modules, control two
===============================================

The planar variant has one bending angle and one action per module, like a
two-chamber pneumatic segment. Errors are bending angles in degrees.
"""
import numpy as np

from modbilstm.control import desired_angle, evaluate_run, preset, run_closed_loop
from modbilstm.core import bending_angle_deg
from modbilstm.datagen import collect_phased, make_training_pairs
from modbilstm.nn import build_network, train
from modbilstm.plant import planar_params, plant_init

p3 = planar_params(3)
ds = collect_phased(plant_init(p3), 8000, delta_max=0.3, seed=0)
pairs = make_training_pairs(ds, K=5)
net = build_network("bilstm", pairs.layout, hidden=32, layers=2, seed=0)
train(net, pairs, epochs=30, batch_size=16, lr=1e-3, seed=0)

for n in (3, 2):
    for task in ("edge", "down"):
        spec = preset(task, n)
        log = run_closed_loop(plant_init(planar_params(n)), net, spec, seed=0)
        table = evaluate_run(log)
        print(f"{n} modules, {task}: " + ", ".join(f"{m:.2f} ± {s:.2f} deg" for m, s in table))

###############################################################################
# A few samples of the tip module's desired and achieved angle.
spec = preset("edge", 2)
log = run_closed_loop(plant_init(planar_params(2)), net, spec, seed=0)
for t in (25, 50, 100, 150, 175):
    print(f"t={t:3d}  desired {desired_angle(spec, 2, t):+7.2f}  achieved {bending_angle_deg(log.achieved[t - 1, 1]):+7.2f}")
