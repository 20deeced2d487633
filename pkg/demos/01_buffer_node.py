"""
A single network buffer
=======================

A node buffers data between an uplink and a downlink that switch on and
off at random. The buffer fills at 1 MB/s while the uplink is active and
drains at 2 MB/s while the downlink is active; hitting 100 MB switches the
uplink off, hitting 0 switches the downlink off.

Run with ``python demos/01_buffer_node.py``.
"""
import numpy as np

import shype
from shype.sim import SimConfig

model = shype.load_model_file(shype.data_path("network_node.hype"))
flat = shype.flatten(model)

# The flattened form: one selector per subcomponent, one per controller.
print(flat.dump())
print()

# One run on a regular output grid, so time averages are easy.
traj = shype.simulate(flat, 2000.0, seed=1, config=SimConfig(output_step=1.0))
grid = np.isclose(traj.t % 1.0, 0.0)
B = traj.column("B")[grid]
print(f"mean buffer level       {B.mean():7.2f} MB")
print(f"time at capacity        {np.mean(B >= 100 - 1e-9):7.1%}")
print(f"time empty              {np.mean(B <= 1e-9):7.1%}")
print("event counts           ", traj.event_counts())

# Ensemble of the end state.
res = shype.run_batch(flat, 200, 1, [shype.Observable.final("B", "B")], 500.0)
s = res["B"]
lo, hi = s.ci
print(f"\nB(500) over {s.n} runs: {s.mean:.2f} MB, 95% CI [{lo:.2f}, {hi:.2f}]")
