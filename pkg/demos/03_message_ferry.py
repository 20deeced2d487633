"""
A message ferry collecting sensor data
======================================

Ten sensors generate data in random bursts and store it on small disks.
A ferry meets them at random (or in a fixed cycle), copies their data
and hands it to a base station, either at the end of an eight hour
window (``rae*``) or whenever its own buffer fills (``rtb*``).

With the default generation (three recordings of about 3 minutes a day
at 10 megabits per minute) a sensor records only a few MB per window, so
disks never overflow. This demo first shows that, then runs a reduced
mean-time-to-contact sweep (40 runs per point instead of 200) with
heavier generation, where overflow and routing matter. The full studies
are ``shype casestudy src/shype/data/ferry_scenario.txt --out results``
and the same with ``ferry_calibrated.txt``.
"""
import time

from shype.experiments import SweepSpec, sweep
from shype.opportunet import (
    SCENARIOS, ScenarioSpec, build_ferry_network, case_observables, scenario_t_end,
)

MTC = (5, 15, 30, 60)
RUNS = 40

spec = ScenarioSpec(scenario="raer")
sspec = SweepSpec("mtc_min", (15,), RUNS, spec.seed, case_observables(spec))
res = sweep(build_ferry_network(spec), sspec, scenario_t_end(spec)).results[0]
print("default generation, raer, MTC 15 min:")
for name in ("total_generated", "total_dropped", "total_collected"):
    print(f"  {name:16s} {res[name].mean:8.2f} MB")
print()

start = time.perf_counter()
tables = {}
for sc in SCENARIOS:
    spec = ScenarioSpec.calibrated(scenario=sc)
    model = build_ferry_network(spec)
    sspec = SweepSpec("mtc_min", MTC, RUNS, spec.seed, case_observables(spec))
    tables[sc] = sweep(model, sspec, scenario_t_end(spec), series=sc)
print(f"heavier generation: {len(SCENARIOS) * len(MTC) * RUNS} runs in {time.perf_counter() - start:.1f} s\n")

for obs in ("total_dropped", "total_collected"):
    print(f"{obs} (MB), mean +- 95% halfwidth")
    print("mtc   " + "".join(f"{sc:>16}" for sc in SCENARIOS))
    for k, m in enumerate(MTC):
        cells = []
        for sc in SCENARIOS:
            s = tables[sc].summary(obs)[k]
            cells.append(f"{s.mean:9.0f} +-{s.halfwidth:4.0f}")
        print(f"{m:3d}   " + "".join(f"{c:>16}" for c in cells))
    print()

# Slower contact means more data waits on the sensors and overflows.
# A fixed route visits every sensor once per cycle, which spreads the
# ferry's attention evenly and drops less than random contact.
