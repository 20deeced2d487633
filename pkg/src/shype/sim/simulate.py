"""Simulation of a flattened stochastic HYPE model.

Between events the selected flows are integrated together with the
accumulated hazard of every enabled stochastic event. A stochastic event
fires when its hazard reaches an exponential threshold -ln(U); an urgent
event fires as soon as its guard becomes true.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from ..flatten import FlatEvent, FlatSystem
from .integrator import Dopri5, IntegratorError, locate_root
from .rng import derive_rng

__all__ = ["SimConfig", "SimState", "EventRecord", "Trajectory", "SimulationError", "ZenoError",
           "IntegratorError", "simulate", "apply_event", "initial_state"]


class SimulationError(RuntimeError):
    def __init__(self, message, t=None, x=None, d=None):
        super().__init__(message)
        self.t, self.x, self.d = t, x, d


class ZenoError(SimulationError):
    """Too many events at a single time instant."""


@dataclass(frozen=True)
class SimConfig:
    rtol: float = 1e-6
    atol: float = 1e-9
    max_step: float = math.inf
    guard_tol: float = 1e-9
    time_tol: float = 1e-9
    max_cascade: int = 1000
    # keep the accumulated hazard of a disabled stochastic event until it is re-enabled
    retain_hazard: bool = False
    # use the exact piecewise-linear solution when flows and rates are constant
    fast_linear: bool = True
    output_step: float | None = None
    sample_times: tuple = ()
    record_states: bool = False


@dataclass
class SimState:
    t: float
    x: np.ndarray
    d: list
    hazards: dict = field(default_factory=dict)  # event index -> [Lambda, theta]


@dataclass
class EventRecord:
    time: float
    name: str
    kind: str
    pre: np.ndarray | None = None
    post: np.ndarray | None = None


class Trajectory:
    """Rows of (time, continuous state, discrete state) plus the event log."""

    def __init__(self, var_names, discrete_names):
        self.var_names = list(var_names)
        self.discrete_names = list(discrete_names)
        self._t, self._x, self._d = [], [], []
        self.events: list[EventRecord] = []
        self.wall_time = 0.0

    def add(self, t, x, d):
        self._t.append(float(t))
        self._x.append(np.array(x, dtype=float))
        self._d.append(tuple(d))

    def __len__(self):
        return len(self._t)

    @property
    def t(self) -> np.ndarray:
        return np.array(self._t)

    @property
    def x(self) -> np.ndarray:
        return np.array(self._x).reshape(len(self._t), len(self.var_names))

    @property
    def d(self) -> np.ndarray:
        return np.array(self._d, dtype=int).reshape(len(self._t), len(self.discrete_names))

    def column(self, name: str) -> np.ndarray:
        if name in self.var_names:
            return self.x[:, self.var_names.index(name)]
        return self.d[:, self.discrete_names.index(name)]

    @property
    def final(self) -> dict:
        return dict(zip(self.var_names, self._x[-1]))

    def state_at(self, t: float) -> dict:
        """Continuous state of the last row with time <= t."""
        i = int(np.searchsorted(self.t, t, side="right")) - 1
        if i < 0:
            raise ValueError(f"no sample at or before t={t}")
        return dict(zip(self.var_names, self._x[i]))

    def event_counts(self) -> dict:
        out = {}
        for e in self.events:
            out[e.name] = out.get(e.name, 0) + 1
        return out

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time"] + self.var_names + self.discrete_names)
        for t, x, d in zip(self._t, self._x, self._d):
            w.writerow([repr(t)] + [repr(float(v)) for v in x] + list(d))
        return buf.getvalue()

    def events_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "event", "kind"])
        for e in self.events:
            w.writerow([repr(e.time), e.name, e.kind])
        return buf.getvalue()

    def to_csv(self, path, events_path=None):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.csv_text())
        if events_path is not None:
            with open(events_path, "w", encoding="utf-8", newline="") as fh:
                fh.write(self.events_csv_text())


def _threshold(rng) -> float:
    u = rng.random()
    return -math.log(u) if u > 0 else math.inf


def _refresh_hazards(flat: FlatSystem, d, hazards: dict, fired, rng, retain: bool) -> dict:
    out = {}
    for ev in flat.events:
        if not ev.stochastic:
            continue
        i = ev.index
        if flat.controller_enabled(ev, d):
            if i == fired or i not in hazards:
                out[i] = [0.0, _threshold(rng)]
            else:
                out[i] = hazards[i]
        elif retain and i in hazards and i != fired:
            out[i] = hazards[i]
    return out


def apply_event(flat: FlatSystem, state: SimState, event, rng=None, retain_hazard=False) -> SimState:
    """Fire ``event`` in ``state``: simultaneous reset, selector update, hazard refresh.

    Stochastic events that become enabled (or the fired one) draw a fresh
    threshold from ``rng``; ones that become disabled lose their hazard.
    """
    ev = flat.event(event) if isinstance(event, str) else event
    if ev is not flat.init and not flat.controller_enabled(ev, state.d):
        raise SimulationError(f"event {ev.name} is not enabled", state.t, state.x, state.d)
    if rng is None:
        rng = np.random.default_rng()
    x = flat.apply_reset(ev, state.x)
    d = flat.discrete_step(ev, state.d)
    hazards = _refresh_hazards(flat, d, state.hazards, ev.index, rng, retain_hazard)
    return SimState(state.t, np.array(x, dtype=float), d, hazards)


def initial_state(flat: FlatSystem, rng, config: SimConfig | None = None) -> SimState:
    cfg = config or SimConfig()
    s = SimState(0.0, flat.x0.copy(), flat.initial_discrete(), {})
    return apply_event(flat, s, flat.init, rng, cfg.retain_hazard)


class _Runner:
    def __init__(self, flat: FlatSystem, t_end: float, rng, cfg: SimConfig):
        self.flat, self.t_end, self.rng, self.cfg = flat, float(t_end), rng, cfg
        self.traj = Trajectory(flat.var_names, flat.discrete_names)
        self.det = [e for e in flat.events if not e.stochastic]
        grid = set(t for t in cfg.sample_times if 0 < t <= self.t_end)
        if cfg.output_step:
            n = int(math.floor(self.t_end / cfg.output_step + 1e-9))
            grid.update(k * cfg.output_step for k in range(1, n + 1))
        self.grid = sorted(grid)
        self.gi = 0
        self.instant, self.instant_count = -1.0, 0
        self.last_h = None

    # -- bookkeeping ---------------------------------------------------------
    def fire(self, s: SimState, ev: FlatEvent) -> SimState:
        if s.t == self.instant:
            self.instant_count += 1
            if self.instant_count > self.cfg.max_cascade:
                raise ZenoError(f"more than {self.cfg.max_cascade} events at t={s.t!r} "
                                f"(last: {ev.name})", s.t, s.x.copy(), list(s.d))
        else:
            self.instant, self.instant_count = s.t, 1
        pre = s.x
        s = apply_event(self.flat, s, ev, self.rng, self.cfg.retain_hazard)
        rec = EventRecord(s.t, ev.name, ev.kind)
        if self.cfg.record_states:
            rec.pre, rec.post = pre.copy(), s.x.copy()
        self.traj.events.append(rec)
        return s

    def cascade(self, s: SimState) -> SimState:
        flat = self.flat
        while True:
            tol = self.cfg.guard_tol
            for ev in self.det:
                if not flat.controller_enabled(ev, s.d):
                    continue
                # an equality guard holds within tolerance of its boundary
                if abs(ev.crossing_fn(s.x)) <= tol if ev.two_sided else ev.guard_fn(s.x):
                    s = self.fire(s, ev)
                    break
            else:
                return s

    def emit_grid(self, upto: float, at):
        """Record grid rows with time <= upto; ``at(t)`` gives the state there."""
        while self.gi < len(self.grid) and self.grid[self.gi] <= upto:
            tg = self.grid[self.gi]
            self.traj.add(tg, at(tg), self._d)
            self.gi += 1

    # -- main loop -----------------------------------------------------------
    def run(self) -> Trajectory:
        flat = self.flat
        s = SimState(0.0, flat.x0.copy(), flat.initial_discrete(), {})
        s = self.fire(s, flat.init)
        s = self.cascade(s)
        self.traj.add(0.0, s.x, s.d)
        while s.t < self.t_end:
            det = [e for e in self.det if flat.controller_enabled(e, s.d)]
            sto = [flat.events[i] for i in s.hazards if flat.controller_enabled(flat.events[i], s.d)]
            self._d = tuple(s.d)
            linear = self.cfg.fast_linear and all(
                fv.const is not None for _, fv in flat.active_flows(s.d)) \
                and all(e.rate_const is not None for e in sto) and all(e.guard_affine for e in det)
            if linear:
                s, ev = self.linear_segment(s, det, sto)
            else:
                s, ev = self.rk_segment(s, det, sto)
            if ev is None:
                break
            s = self.fire(s, ev)
            s = self.cascade(s)
            self.traj.add(s.t, s.x, s.d)
        if self.traj._t[-1] != s.t:
            self.traj.add(s.t, s.x, s.d)
        return self.traj

    def linear_segment(self, s: SimState, det, sto):
        flat = self.flat
        x0 = s.x
        v = flat.vector_field(x0, s.d)
        best_dt, best = self.t_end - s.t, None
        for e in det:
            c0 = e.crossing_fn(x0)
            slope = e.crossing_fn(x0 + v) - c0
            if e.two_sided:
                if c0 * slope >= 0:
                    continue
            elif slope <= 0:
                continue
            dt = max(0.0, -c0 / slope)
            if dt < best_dt or (best is None and dt == best_dt):
                best_dt, best = dt, e
        for e in sto:
            lam = e.rate_const
            if lam <= 0:
                continue
            L, theta = s.hazards[e.index]
            dt = (theta - L) / lam
            if dt < best_dt:
                best_dt, best = dt, e
        t_new = s.t + best_dt
        if best is None:
            t_new = self.t_end
        self.emit_grid(t_new, lambda tg: x0 + v * (tg - s.t))
        dt = t_new - s.t
        hazards = dict(s.hazards)
        for e in sto:
            L, theta = hazards[e.index]
            hazards[e.index] = [theta if e is best else L + e.rate_const * dt, theta]
        return SimState(t_new, x0 + v * dt, s.d, hazards), best

    def rk_segment(self, s: SimState, det, sto):
        flat, cfg = self.flat, self.cfg
        n = flat.n_continuous
        d = s.d
        flows = flat.active_flows(d)
        rate_fns = [e.rate_fn for e in sto]

        def fun(t, y):
            x = y[:n]
            dy = np.empty(y.size)
            dy[:n] = flat.vector_field(x, d) if flows else 0.0
            for k, r in enumerate(rate_fns):
                lam = r(x)
                if lam < 0:
                    raise SimulationError(f"negative rate {lam} for event {sto[k].name}", t, x, d)
                dy[n + k] = lam
            return dy

        thetas = np.array([s.hazards[e.index][1] for e in sto])
        y0 = np.concatenate([s.x, [s.hazards[e.index][0] for e in sto]])
        signs = []
        for e in det:
            c0 = e.crossing_fn(s.x)
            signs.append(-1.0 if e.two_sided and c0 > 0 else 1.0)

        def g_all(y):
            x = y[:n]
            out = [sg * e.crossing_fn(x) for sg, e in zip(signs, det)]
            out.extend(y[n:] - thetas)
            return out

        integ = Dopri5(fun, s.t, y0, self.t_end, cfg.rtol, cfg.atol, cfg.max_step,
                       first_step=self.last_h)
        g_old = g_all(y0)
        n_det = len(det)
        while integ.step():
            g_new = g_all(integ.y)
            best_t, best_k = None, None
            for k, (a, b) in enumerate(zip(g_old, g_new)):
                if not ((a < 0 <= b) or (a == 0 < b)):
                    continue
                if a >= 0:
                    tk = integ.t_old
                else:
                    tol = cfg.time_tol * max(1.0, abs(integ.t))
                    gk = (lambda t, k=k: g_all(integ.dense(t))[k])
                    tk = locate_root(gk, integ.t_old, a, integ.t, b, tol, cfg.guard_tol)
                if best_t is None or tk < best_t:
                    best_t, best_k = tk, k
            if best_t is not None:
                y = integ.dense(best_t) if best_t < integ.t else integ.y
                self.emit_grid(best_t, lambda tg: integ.dense(tg)[:n])
                self.last_h = integ.h
                ev = det[best_k] if best_k < n_det else sto[best_k - n_det]
                hazards = dict(s.hazards)
                for k, e in enumerate(sto):
                    L = thetas[k] if e is ev else float(y[n + k])
                    hazards[e.index] = [L, hazards[e.index][1]]
                return SimState(best_t, np.array(y[:n]), d, hazards), ev
            self.emit_grid(integ.t, lambda tg: integ.dense(tg)[:n])
            g_old = g_new
        self.last_h = integ.h
        hazards = dict(s.hazards)
        for k, e in enumerate(sto):
            hazards[e.index] = [float(integ.y[n + k]), hazards[e.index][1]]
        return SimState(integ.t, np.array(integ.y[:n]), d, hazards), None


def simulate(flat: FlatSystem, t_end: float, seed: int | None = 0, config: SimConfig | None = None,
             rng=None) -> Trajectory:
    """Simulate ``flat`` on [0, t_end].

    Randomness comes from ``rng`` when given (any object with a ``random()``
    method), otherwise from stream 0 of ``seed``; a batch run with index 0
    and the same master seed therefore reproduces this trajectory.
    """
    import time
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    cfg = config or SimConfig()
    if rng is None:
        rng = derive_rng(0 if seed is None else seed, 0)
    start = time.perf_counter()
    traj = _Runner(flat, t_end, rng, cfg).run()
    traj.wall_time = time.perf_counter() - start
    return traj
