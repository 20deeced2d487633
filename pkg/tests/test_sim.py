import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.integrate import solve_ivp

from conftest import INPUT_ONLY, REFILL, SINGLE_RATE, hype
from shype.flatten import flatten
from shype.lang import load_model
from shype.sim import (
    Dopri5, SimConfig, SimState, SimulationError, ZenoError, apply_event, derive_rng,
    initial_state, locate_root, simulate,
)


class Scripted:
    """An rng whose ``random()`` replays fixed values, then ``default`` forever."""

    def __init__(self, values, default=math.exp(-1)):
        self.values, self.default = list(values), default

    def random(self):
        return self.values.pop(0) if self.values else self.default


def event_times(traj, name):
    return [e.time for e in traj.events if e.name == name]


# -- analytic oracles -------------------------------------------------------------

def test_forced_threshold_fires_at_one_over_rate(load):
    flat = flatten(load(SINGLE_RATE))
    traj = simulate(flat, 2.5, rng=Scripted([]))
    assert event_times(traj, "k")[0] == pytest.approx(2.0, abs=1e-6)


def test_firing_times_are_exponential(load):
    flat = flatten(load(SINGLE_RATE))
    traj = simulate(flat, 21000.0, seed=11)
    gaps = np.diff([0.0] + event_times(traj, "k"))[:10_000]
    assert gaps.size == 10_000
    assert stats.kstest(gaps, "expon", args=(0, 2.0)).pvalue > 0.01
    assert traj.final["n"] == len(event_times(traj, "k"))


def test_full_fires_at_threshold(load):
    traj = simulate(flatten(load(INPUT_ONLY)), 150.0)
    assert event_times(traj, "full") == [pytest.approx(100.0, abs=1e-6)]
    assert traj.column("B")[-1] == pytest.approx(50.0, abs=1e-6)  # halved, then no inflow
    # after full the Input selector sits on the zero-strength activity
    flat = flatten(load(INPUT_ONLY))
    assert flat.subs[0].values[int(traj.column("I_Input")[-1])].const == 0.0


def test_buffer_eq_input_only(buffer_eq):
    """Uplink switched on at t=0 (threshold 0), every other threshold far away."""
    flat = flatten(buffer_eq)
    traj = simulate(flat, 120.0, rng=Scripted([1.0], default=1e-300))
    assert event_times(traj, "on_in") == [0.0]
    assert event_times(traj, "full") == [pytest.approx(100.0, abs=1e-6)]
    assert traj.column("I_Input")[-1] == 0
    assert traj.column("B")[-1] == pytest.approx(100.0, abs=1e-6)


def test_refill_is_periodic(load):
    traj = simulate(flatten(load(REFILL)), 10.0)
    assert event_times(traj, "empty") == pytest.approx([3.0, 6.0, 9.0], abs=1e-9)
    assert traj.final["x"] == pytest.approx(2.0)


def test_state_dependent_rate_uses_integrated_hazard():
    # x grows at rate 1 from 0; event rate c*x, so Lambda(t) = c t^2 / 2
    text = hype(defs="var x = 0; param c = 0.5;",
                mappings="infl g :-> x; event k = :-> @ c * x;",
                subs="G := init:[1,const()] + k:[1,const()] : g;",
                comps="Sys := G;", cons="K := k.K;", system="Sys <*> K;")
    traj = simulate(flatten(load_model(text)), 3.0, rng=Scripted([]))
    assert event_times(traj, "k")[0] == pytest.approx(2.0, abs=1e-6)  # sqrt(2/c)


def test_state_dependent_first_firing_distribution():
    # P(T > t) = exp(-c t^2 / 2), i.e. c T^2 / 2 is a unit exponential
    text = hype(defs="var x = 0; param c = 0.5;",
                mappings="infl g :-> x; event k = :-> x = 0 @ c * x;",
                subs="G := init:[1,const()] + k:[1,const()] : g;",
                comps="Sys := G;", cons="K := k.K;", system="Sys <*> K;")
    flat = flatten(load_model(text))
    first = []
    for i in range(3000):
        traj = simulate(flat, 20.0, rng=derive_rng(11, i))
        first.append(next(e.time for e in traj.events if e.name == "k"))
    implied = 0.5 * np.square(first) / 2
    assert stats.kstest(implied, "expon").pvalue > 0.01


LOGISTIC = hype(defs="var x = 0.1; function logi(X) = X * (1 - X);",
                mappings="infl g :-> x; event hit = x >= 0.9 :-> ;",
                subs="G := init:[1,logi(x)] + hit:[1,logi(x)] : g;",
                comps="Sys := G;", cons="K := hit.Done; Done := 0;", system="Sys <*> K;")


def logistic(t, x0=0.1):
    return 1.0 / (1.0 + (1.0 / x0 - 1.0) * math.exp(-t))


def test_nonlinear_flow_against_closed_form():
    cfg = SimConfig(rtol=1e-9, atol=1e-12, output_step=0.5)
    traj = simulate(flatten(load_model(LOGISTIC)), 8.0, config=cfg)
    for t, x in zip(traj.t, traj.column("x")):
        assert x == pytest.approx(logistic(t), rel=1e-7)
    t_hit = math.log(81.0)  # logistic(t) = 0.9
    assert event_times(traj, "hit") == [pytest.approx(t_hit, abs=1e-7)]


def test_dopri5_matches_scipy_rk45():
    def f(t, y):
        return np.array([y[1], -y[0] - 0.1 * y[1]])

    ref = solve_ivp(f, (0.0, 20.0), [1.0, 0.0], method="RK45", rtol=1e-6, atol=1e-9)
    integ = Dopri5(f, 0.0, np.array([1.0, 0.0]), 20.0, 1e-6, 1e-9, math.inf)
    ts = [0.0]
    while integ.step():
        ts.append(integ.t)
    assert len(ts) == len(ref.t)
    np.testing.assert_allclose(ts, ref.t, rtol=1e-12)
    np.testing.assert_allclose(integ.y, ref.y[:, -1], rtol=1e-10)


def test_dense_output_matches_scipy():
    def f(t, y):
        return np.array([math.cos(t) * y[0]])

    ref = solve_ivp(f, (0.0, 5.0), [1.0], method="RK45", rtol=1e-6, atol=1e-9, dense_output=True)
    integ = Dopri5(f, 0.0, np.array([1.0]), 5.0, 1e-6, 1e-9, math.inf)
    while integ.step():
        tm = 0.5 * (integ.t_old + integ.t)
        assert integ.dense(tm)[0] == pytest.approx(ref.sol(tm)[0], rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 3))
def test_locate_root_brackets(root, width):
    g = lambda t: math.tanh(t - root)
    a, b = root - width, root + 0.5 * width
    t = locate_root(g, a, g(a), b, g(b), 1e-10, 1e-12)
    assert g(t) >= 0
    assert t == pytest.approx(root, abs=1e-8)


# -- hazards and event application ------------------------------------------------

def test_apply_event_full_halves(load):
    flat = flatten(load(INPUT_ONLY))
    s = initial_state(flat, derive_rng(0, 0))
    s = SimState(100.0, np.array([100.0]), s.d, s.hazards)
    after = apply_event(flat, s, "full")
    assert after.x.tolist() == [50.0]
    with pytest.raises(SimulationError, match="not enabled"):
        apply_event(flat, after, "full")


def test_hazard_dropped_when_disabled(buffer_eq):
    flat = flatten(buffer_eq)
    s = initial_state(flat, Scripted([]))
    on_in, off_in = flat.event("on_in").index, flat.event("off_in").index
    assert s.hazards[on_in] == [0.0, 1.0]
    s = apply_event(flat, s, "on_in", Scripted([0.5]))
    assert on_in not in s.hazards
    assert s.hazards[off_in] == [0.0, pytest.approx(math.log(2))]
    kept = apply_event(flat, initial_state(flat, Scripted([])), "on_in", Scripted([]),
                       retain_hazard=True)
    assert on_in not in kept.hazards  # the fired event always restarts


def test_zeno_detected():
    text = hype(defs="var x = 0;", mappings="infl g :-> x; event tick = x >= 0 :-> ;",
                subs="G := init:[0,const()] + tick:[0,const()] : g;",
                comps="Sys := G;", cons="K := tick.K;", system="Sys <*> K;")
    with pytest.raises(ZenoError) as exc:
        simulate(flatten(load_model(text)), 1.0, config=SimConfig(max_cascade=50))
    assert exc.value.t == 0.0


def test_t_end_zero_single_row(buffer_eq):
    traj = simulate(flatten(buffer_eq), 0.0)
    assert len(traj) == 1
    assert traj.t.tolist() == [0.0]


def test_negative_t_end_rejected(buffer_eq):
    with pytest.raises(ValueError):
        simulate(flatten(buffer_eq), -1.0)


def test_output_grid(buffer_eq):
    traj = simulate(flatten(buffer_eq), 10.0, seed=3, config=SimConfig(output_step=1.0))
    grid = set(np.round(np.arange(1, 11) * 1.0, 9))
    assert grid <= set(np.round(traj.t, 9))
    assert np.all(np.diff(traj.t) >= 0)


def test_same_seed_same_trajectory(node):
    flat = flatten(node)
    a = simulate(flat, 500.0, seed=42)
    b = simulate(flat, 500.0, seed=42)
    assert a.csv_text() == b.csv_text()
    assert a.events_csv_text() == b.events_csv_text()
    c = simulate(flat, 500.0, seed=43)
    assert c.events_csv_text() != a.events_csv_text()


def test_fast_path_agrees_with_integrator(node):
    flat = flatten(node)
    a = simulate(flat, 300.0, seed=5)
    b = simulate(flat, 300.0, seed=5, config=SimConfig(fast_linear=False, rtol=1e-10,
                                                        atol=1e-12))
    assert [e.name for e in a.events] == [e.name for e in b.events]
    np.testing.assert_allclose([e.time for e in a.events], [e.time for e in b.events],
                               rtol=1e-6, atol=1e-6)


def test_seed_streams_independent():
    a = derive_rng(7, 0).random(20_000)
    b = derive_rng(7, 1).random(20_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.03
    assert stats.kstest(a, "uniform").pvalue > 0.01
    assert derive_rng(7, 1).random() == b[0]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_buffer_stays_in_bounds(node, seed):
    traj = simulate(flatten(node), 400.0, seed=seed)
    b = traj.column("B")
    assert b.min() >= -1e-6 and b.max() <= 100 + 1e-6
