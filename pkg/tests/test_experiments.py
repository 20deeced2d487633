import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import REFILL, SINGLE_RATE
from shype.experiments import (
    EnsembleSummary, Observable, SweepSpec, Z95, export, gnuplot_script, run_batch, sweep,
)
from shype.flatten import flatten
from shype.sim import simulate


def test_summary_of_one_two_three():
    s = EnsembleSummary.from_values("v", [1.0, 2.0, 3.0])
    assert (s.n, s.mean, s.sd) == (3, 2.0, 1.0)
    assert s.halfwidth == pytest.approx(1.96 / math.sqrt(3))
    assert s.halfwidth == pytest.approx(1.1316, abs=1e-4)


def test_summary_single_run():
    s = EnsembleSummary.from_values("v", [4.5])
    assert (s.mean, s.sd, s.halfwidth) == (4.5, 0.0, 0.0)
    assert s.ci == (4.5, 4.5)


def test_summary_empty():
    with pytest.raises(ValueError):
        EnsembleSummary.from_values("v", [])


def test_overlap():
    a = EnsembleSummary("a", 10, 1.0, 1.0, 0.5)
    b = EnsembleSummary("b", 10, 1.4, 1.0, 0.5)
    c = EnsembleSummary("c", 10, 3.0, 1.0, 0.5)
    assert a.overlaps(b) and b.overlaps(a)
    assert not a.overlaps(c)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=50))
def test_summary_matches_numpy(values):
    s = EnsembleSummary.from_values("v", values)
    sd = np.std(values, ddof=1)
    assert s.mean == pytest.approx(np.mean(values), abs=1e-9)
    assert s.sd == pytest.approx(sd, rel=1e-9, abs=1e-6)
    lo, hi = s.ci
    assert lo <= s.mean <= hi


def test_batch_mean_of_poisson_count(load):
    # n counts firings of a rate-0.5 event over [0, 40]: Poisson with mean 20
    flat = flatten(load(SINGLE_RATE))
    res = run_batch(flat, 300, 1, [Observable.final("n", "n")], 40.0)
    s = res["n"]
    assert res.n == 300 and res.raw.shape == (300, 1)
    assert abs(s.mean - 20.0) < 3 * math.sqrt(20.0 / 300)
    assert s.sd ** 2 == pytest.approx(20.0, rel=0.25)


def test_batch_run_zero_is_simulate(load):
    flat = flatten(load(SINGLE_RATE))
    res = run_batch(flat, 3, 99, [Observable.final("n", "n")], 30.0)
    assert res.raw[0, 0] == simulate(flat, 30.0, seed=99).final["n"]


def test_deterministic_model_has_zero_width(load):
    flat = flatten(load(REFILL))
    res = run_batch(flat, 5, 0, [Observable.final("x", "x")], 10.0)
    assert res["x"].halfwidth == 0.0
    assert res["x"].mean == pytest.approx(2.0)


def test_jobs_do_not_change_results(load):
    flat = flatten(load(SINGLE_RATE))
    obs = [Observable.final("n", "n")]
    a = run_batch(flat, 12, 5, obs, 20.0, jobs=1)
    b = run_batch(flat, 12, 5, obs, 20.0, jobs=3)
    assert a.raw.tolist() == b.raw.tolist()
    assert a["n"] == b["n"]


def test_sweep_and_export(load, tmp_path):
    model = load(SINGLE_RATE)
    spec = SweepSpec("lam", [1.0, 0.25, 0.5], 20, 3, [Observable.final("n", "n")])
    table = sweep(model, spec, 20.0, series="single")
    assert table.values == [0.25, 0.5, 1.0]
    means = table.means("n")
    assert means[0] < means[1] < means[2]
    paths = export(table, tmp_path, prefix="lam_")
    with open(paths[0], newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["series", "x", "mean", "ci_lo", "ci_hi", "n"]
    assert len(rows) == 1 + 3
    assert rows[1][0] == "single" and float(rows[1][1]) == 0.25
    with open(paths[1], newline="") as fh:
        raw = list(csv.reader(fh))
    assert len(raw) == 1 + 3 * 20


def test_sweep_common_random_numbers(load):
    # with equal seeds every point draws the same thresholds, so counts are monotone per run
    model = load(SINGLE_RATE)
    spec = SweepSpec("lam", [0.5, 1.0], 15, 8, [Observable.final("n", "n")])
    table = sweep(model, spec, 10.0)
    lo, hi = (r.raw[:, 0] for r in table.results)
    assert np.all(lo <= hi)


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("lam", [1.0, math.inf], 2, 0, [])
    with pytest.raises(ValueError):
        SweepSpec("lam", [1.0], 0, 0, [])


def test_sweep_unknown_parameter(load):
    with pytest.raises(KeyError):
        sweep(load(SINGLE_RATE), SweepSpec("nope", [1.0], 1, 0, []), 1.0)


def test_gnuplot_script_mentions_each_series():
    text = gnuplot_script("mtc_total_dropped.csv", ["raer", "rtbf"], "x", "y")
    assert text.count("yerrorlines") == 2
    assert "'rtbf'" in text


def test_critical_value():
    assert Z95 == 1.96
