"""
Phased versus traditional data collection
=========================================

Independent random walks on every module mostly cancel each other out, so
the arm hovers near its resting pose. Driving the modules together first,
then in two groups, and only then independently pushes the end of the
chain much further out. This script compares the two collectors on the
default four-module surrogate arm.
"""
import numpy as np

from modbilstm.datagen import collect_phased, collect_traditional, phase_sizes
from modbilstm.plant import PlantParams, plant_init

plant = plant_init(PlantParams())
n = 8000

###############################################################################
# Collect both datasets from the same resting arm with the same seed.
phased = collect_phased(plant, n, delta_max=0.05, seed=0)
trad = collect_traditional(plant, n, delta_max=0.05, seed=0)

###############################################################################
# World position of the end module's tip, built by chaining the local
# configurations. The spread of that cloud is a crude coverage measure.
def spread(tips):
    return np.sqrt(tips.var(axis=0).sum())


tp, tt = phased.tip_positions(), trad.tip_positions()
print(f"tip spread  phased {spread(tp):.3f}   traditional {spread(tt):.3f}")

na, nb, _ = phase_sizes(n)
for name, sl in (("a", slice(0, na)), ("b", slice(na, na + nb)), ("c", slice(na + nb, n))):
    print(f"  phase {name}: spread {spread(tp[sl]):.3f}, max |x| {np.abs(tp[sl, 0]).max():.3f}")

###############################################################################
# Per-axis extent of both clouds.
for name, tips in (("phased", tp), ("traditional", tt)):
    lo, hi = tips.min(axis=0), tips.max(axis=0)
    print(f"{name:>12}: x [{lo[0]:+.2f}, {hi[0]:+.2f}]  y [{lo[1]:+.2f}, {hi[1]:+.2f}]  z [{lo[2]:+.2f}, {hi[2]:+.2f}]")
