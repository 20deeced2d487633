"""
Stochastic events with state-dependent rates
============================================

A stochastic event fires when its integrated rate reaches an exponential
threshold. Here x grows linearly (dx/dt = 1) and the event ``k`` has rate
``c * x``, so the integrated rate after t time units is c t^2 / 2 and the
first firing time has survival function exp(-c t^2 / 2).

The simulator integrates that hazard alongside x; the empirical
distribution below should match the closed form.
"""
import numpy as np

import shype

TEXT = """
hype model ramp
#definitions
var x = 0;
param c = 0.5;
function const() = 1;
#mappings
infl g :-> x;
event k = :-> x = 0 @ c * x;
#subcomponents
G := init:[1,const()] + k:[1,const()] : g;
#components
Sys := G;
#controller
K := k.K;
#system
Sys <*> K;
"""

flat = shype.flatten(shype.load_model(TEXT))
c = flat.params["c"]

first = []
for i in range(2000):
    traj = shype.simulate(flat, 20.0, rng=shype.derive_rng(7, i))
    first.append(next(e.time for e in traj.events if e.name == "k"))
first = np.sort(first)

print(" t     empirical P(T > t)   exp(-c t^2/2)")
for t in (0.5, 1.0, 1.5, 2.0, 3.0, 4.0):
    emp = np.mean(first > t)
    print(f"{t:4.1f}   {emp:18.3f}   {np.exp(-c * t * t / 2):13.3f}")

# The mean is sqrt(pi / (2 c)).
print(f"\nmean first firing {first.mean():.3f}, closed form {np.sqrt(np.pi / (2 * c)):.3f}")
