"""Flatten a Model into gated ODE terms over discrete selector variables.

Every subcomponent gets an influence selector whose values index its
distinct activities; every sequential controller gets a state selector. A
mode is an assignment of the selectors and is never enumerated.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .expr import (
    BinOp, Bool, Call, Expr, compile_bool, compile_crossing, compile_numeric,
    crossing_function, fold, indicator, is_affine, is_constant, to_source,
)
from .model import (
    INIT, STOCHASTIC, ControllerState, Model, ModelError, validate,
)

log = logging.getLogger(__name__)

__all__ = ["FlatSystem", "FlowValue", "SubSelector", "ConSelector", "FlatEvent",
           "flatten", "vector_field", "enabled_events"]


@dataclass
class FlowValue:
    """One distinct activity of a subcomponent (one value of its selector)."""
    strength: Expr
    itype: Expr
    resolved: Expr  # strength * type, params substituted and folded
    fn: object = field(repr=False, default=None)
    const: float | None = None


@dataclass
class SubSelector:
    name: str
    influence: str
    target: int
    values: list
    on_event: dict  # event name -> value index
    initial: int


@dataclass
class ConSelector:
    name: str
    states: list
    transitions: list  # per state: {event: next state index, or -1 for nil}
    alphabet: frozenset
    initial: int = 0


@dataclass
class FlatEvent:
    name: str
    index: int
    kind: str
    guard: Expr | None  # resolved
    rate: Expr | None  # resolved (includes the guard indicator when guarded)
    reset: list  # [(var index, resolved Expr)]
    sub_updates: list  # [(selector index, value index)]
    controllers: list  # indices of controllers whose alphabet holds the event
    participates: bool  # offered by some subcomponent or controller
    crossing: Expr | None = None
    two_sided: bool = False
    guard_affine: bool = False
    rate_const: float | None = None
    guard_fn: object = field(repr=False, default=None)
    crossing_fn: object = field(repr=False, default=None)
    rate_fn: object = field(repr=False, default=None)
    reset_fns: list = field(repr=False, default_factory=list)

    @property
    def stochastic(self) -> bool:
        return self.kind == STOCHASTIC


class FlatSystem:
    """Flattened stochastic HYPE model; immutable once built.

    Pickles by re-flattening its source model, so it can be shipped to
    worker processes.
    """

    def __init__(self, model: Model, params: dict, var_names, x0, subs, cons, events, init,
                 warnings):
        self.model = model
        self.params = params
        self.var_names = list(var_names)
        self.var_index = {v: i for i, v in enumerate(self.var_names)}
        self.x0 = np.asarray(x0, dtype=float)
        self.subs = subs
        self.cons = cons
        self.events = events
        self.event_index = {e.name: e.index for e in events}
        self.init = init
        self.warnings = warnings

    def __reduce__(self):
        return (flatten, (self.model, self._overrides))

    _overrides = None

    # -- shapes ------------------------------------------------------------
    @property
    def n_continuous(self) -> int:
        return len(self.var_names)

    @property
    def n_discrete(self) -> int:
        return len(self.subs) + len(self.cons)

    @property
    def discrete_names(self) -> list[str]:
        return [f"I_{s.name}" for s in self.subs] + [f"C_{c.name}" for c in self.cons]

    @property
    def flow_terms(self) -> list[tuple]:
        """(target variable, strength, type, selector name, value index) for every gated term."""
        out = []
        for s in self.subs:
            for k, v in enumerate(s.values):
                out.append((self.var_names[s.target], v.strength, v.itype, f"I_{s.name}", k))
        return out

    # -- discrete state ----------------------------------------------------
    def initial_discrete(self) -> list[int]:
        return [s.initial for s in self.subs] + [c.initial for c in self.cons]

    def event(self, name: str) -> FlatEvent:
        return self.events[self.event_index[name]]

    def controller_enabled(self, ev: FlatEvent, d) -> bool:
        if not ev.participates:
            return False
        off = len(self.subs)
        for c in ev.controllers:
            st = d[off + c]
            if st < 0 or ev.name not in self.cons[c].transitions[st]:
                return False
        return True

    def discrete_step(self, ev: FlatEvent, d) -> list[int]:
        d = list(d)
        for k, v in ev.sub_updates:
            d[k] = v
        off = len(self.subs)
        for c in ev.controllers:
            d[off + c] = self.cons[c].transitions[d[off + c]][ev.name]
        return d

    def apply_reset(self, ev: FlatEvent, x):
        if not ev.reset_fns:
            return x
        vals = [(i, f(x)) for i, f in ev.reset_fns]  # simultaneous: all read the pre-state
        x = np.array(x, dtype=float)
        for i, v in vals:
            x[i] = v
        return x

    def initial_state(self):
        """Continuous and discrete state right after ``init`` at t = 0."""
        x = self.apply_reset(self.init, self.x0.copy())
        d = self.discrete_step(self.init, self.initial_discrete())
        return x, d

    # -- dynamics ----------------------------------------------------------
    def active_flows(self, d):
        """Per subcomponent: (target, FlowValue) of the selected activity."""
        return [(s.target, s.values[d[i]]) for i, s in enumerate(self.subs)]

    def vector_field(self, x, d) -> np.ndarray:
        dx = np.zeros(self.n_continuous)
        for tgt, fv in self.active_flows(d):
            dx[tgt] += fv.const if fv.const is not None else fv.fn(x)
        return dx

    def enabled_events(self, x, d):
        """Controller-enabled events: ([(det event, guard)], [(stoch event, rate value)])."""
        det, sto = [], []
        for ev in self.events:
            if not self.controller_enabled(ev, d):
                continue
            if ev.stochastic:
                sto.append((ev, ev.rate_fn(x)))
            else:
                det.append((ev, ev.guard))
        return det, sto

    # -- debugging ---------------------------------------------------------
    def dump(self) -> str:
        lines = [f"flat system {self.model.name}", "continuous variables:"]
        for v, x in zip(self.var_names, self.x0):
            lines.append(f"  {v} = {_fmt(x)}")
        lines.append("influence selectors:")
        for s in self.subs:
            dom = ", ".join(f"{k}: ({s.influence}, {to_source(v.strength)}, {to_source(v.itype)})"
                            for k, v in enumerate(s.values))
            lines.append(f"  I_{s.name} in {{{dom}}} init={s.initial}")
        lines.append("controller selectors:")
        for c in self.cons:
            lines.append(f"  C_{c.name} in {{{', '.join(c.states)}}} init={c.states[c.initial]}")
        lines.append("flow terms:")
        for s in self.subs:
            for k, v in enumerate(s.values):
                val = _fmt(v.const) if v.const is not None else to_source(v.resolved)
                lines.append(f"  d{self.var_names[s.target]}/dt += {to_source(v.strength)} * "
                             f"{to_source(v.itype)} * <I_{s.name} = {k}>   [= {val}]")
        lines.append("events:")
        for ev in [self.init] + self.events:
            act = (f"rate {to_source(ev.rate)}" if ev.stochastic
                   else f"guard {to_source(ev.guard)}")
            reset = ", ".join(f"{self.var_names[i]}' = {to_source(e)}" for i, e in ev.reset) or "-"
            upd = ", ".join(f"I_{self.subs[k].name} := {v}" for k, v in ev.sub_updates) or "-"
            cons = ", ".join(f"C_{self.cons[c].name}" for c in ev.controllers) or "-"
            lines.append(f"  {ev.name} [{ev.kind}] {act}; reset {reset}; selectors {upd}; "
                         f"controllers {cons}")
        for c in self.cons:
            lines.append(f"transitions C_{c.name}:")
            for s, tr in zip(c.states, c.transitions):
                body = " + ".join(f"{e}.{c.states[n] if n >= 0 else '0'}" for e, n in tr.items())
                lines.append(f"  {s} -> {body or '0'}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    return repr(float(v))


def vector_field(flat: FlatSystem, x, d) -> np.ndarray:
    """dx_i/dt = sum of strength * type * <gate> over flow terms targeting x_i."""
    return flat.vector_field(np.asarray(x, dtype=float), d)


def enabled_events(flat: FlatSystem, x, d):
    return flat.enabled_events(np.asarray(x, dtype=float), d)


def flatten(model: Model, params: dict | None = None) -> FlatSystem:
    """Encode ``model`` with selector variables; ``params`` override parameter values."""
    report = validate(model)
    if not report.ok:
        raise ModelError(f"cannot flatten an invalid model:\n{report}", report.violations)
    if params:
        unknown = set(params) - set(model.params)
        if unknown:
            raise KeyError(f"unknown parameter(s): {sorted(unknown)}")
    values = {**model.params, **(params or {})}
    warnings: list[str] = []

    def resolve(e: Expr) -> Expr:
        return model.resolve(e, values)

    var_names = list(model.variables)
    slots = {v: i for i, v in enumerate(var_names)}
    x0 = [model.variables[v] for v in var_names]

    # influence selectors
    subs = []
    sub_names = model.used_subcomponents()
    for name in sub_names:
        s = model.subcomponents[name]
        vals, index, on_event = [], {}, {}
        # the init activity is value 0, the rest follow in order of appearance
        for b in sorted(s.branches, key=lambda b: b.event != INIT):
            key = (b.activity.strength, b.activity.itype)
            if key not in index:
                resolved = resolve(BinOp("*", b.activity.strength, b.activity.itype))
                fv = FlowValue(b.activity.strength, b.activity.itype, resolved)
                if is_constant(resolved):
                    fv.const = float(resolved.value)
                else:
                    fv.fn = compile_numeric(resolved, slots)
                index[key] = len(vals)
                vals.append(fv)
            on_event[b.event] = index[key]
        subs.append(SubSelector(name, s.influence, slots[model.influences[s.influence]], vals,
                                on_event, 0))
    unused = set(model.subcomponents) - set(sub_names)
    for n in sorted(unused):
        warnings.append(f"subcomponent {n} is not part of the system")

    # controller selectors: one per sequential-controller leaf of the system controller
    cons = []
    roots = model.sequential_leaves(model.system.controller)
    seen_names: dict[str, int] = {}
    for root in roots:
        states = model.reachable_states(root)
        idx = {s: i for i, s in enumerate(states)}
        transitions, alphabet = [], set()
        for st in states:
            tr = {}
            for ev, nxt in model.controllers[st].prefixes:
                alphabet.add(ev)
                if ev in tr:
                    warnings.append(f"controller state {st} offers {ev} twice; first branch wins")
                    continue
                tr[ev] = -1 if nxt == "0" else idx[nxt]
            transitions.append(tr)
        count = seen_names.get(root, 0)
        seen_names[root] = count + 1
        cname = root if count == 0 else f"{root}#{count}"
        cons.append(ConSelector(cname, states, transitions, frozenset(alphabet)))
    for name, d in model.controllers.items():
        if isinstance(d, ControllerState) and not any(name in c.states for c in cons):
            warnings.append(f"controller state {name} is unreachable")

    sub_events = set().union(*(model.subcomponents[n].events for n in sub_names)) if sub_names else set()
    con_events = set().union(*(c.alphabet for c in cons)) if cons else set()
    for ev in model.events:
        if ev != INIT and ev not in sub_events and ev not in con_events:
            warnings.append(f"event {ev} is never offered (dead)")
    declared_in_cons = {e for d in model.controllers.values() if isinstance(d, ControllerState)
                        for e, _ in d.prefixes}
    for ev in sorted(declared_in_cons - con_events):
        warnings.append(f"event {ev} only appears in unreachable controller states (dead)")

    def make_event(name, index):
        e = model.events[name]
        c = e.condition
        reset = [(slots[v], resolve(x)) for v, x in c.reset]
        sub_updates = [(k, s.on_event[name]) for k, s in enumerate(subs) if name in s.on_event]
        controllers = [k for k, con in enumerate(cons) if name in con.alphabet]
        fe = FlatEvent(name, index, e.kind, None, None, reset, sub_updates, controllers,
                       participates=name in sub_events or name in con_events)
        fe.reset_fns = [(i, compile_numeric(x, slots)) for i, x in reset]
        if e.stochastic:
            rate = resolve(c.rate)
            if c.guard is not None:
                g = resolve(c.guard)
                if g != Bool(True):
                    rate = fold(BinOp("*", rate, indicator(g)))
            fe.rate = rate
            if is_constant(rate):
                fe.rate_const = float(rate.value)
                if fe.rate_const < 0:
                    raise ModelError(f"event {name}: negative rate {fe.rate_const}")
            fe.rate_fn = compile_numeric(rate, slots)
        else:
            g = resolve(c.guard if c.guard is not None else Bool(True))
            fe.guard = g
            fe.guard_fn = compile_bool(g, slots)
            cross, two = crossing_function(g)
            fe.crossing, fe.two_sided = cross, two
            fe.crossing_fn = compile_crossing(cross, slots)
            fe.guard_affine = _affine_crossing(cross)
        return fe

    init = make_event(INIT, -1)
    events = [make_event(n, i) for i, n in enumerate(n for n in model.events if n != INIT)]
    for w in warnings:
        log.warning(w)
    flat = FlatSystem(model, values, var_names, x0, subs, cons, events, init, warnings)
    flat._overrides = dict(params) if params else None
    return flat


def _affine_crossing(c: Expr) -> bool:
    if isinstance(c, Call):
        return False
    return is_affine(c)
