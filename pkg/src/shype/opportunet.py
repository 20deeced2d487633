"""Opportunistic-network models: generic node template and the message-ferry case study.

Units are MB for data and hours for time. Every node owns a buffer level
plus monotone bookkeeping totals; links between nodes are switched by
stochastic proximity (contact) events and urgent full/empty events.

Scenarios of the ferry study (``raer``, ``raef``, ``rtbr``, ``rtbf``) cross
two return policies with two routes:

* ``rae*``: the ferry keeps what it collects and unloads once, when the
  collection window closes;
* ``rtb*``: the ferry travels to the base whenever its buffer fills;
* ``*r``: each contact picks a sensor uniformly at random;
* ``*f``: contacts visit the sensors in a fixed cyclic order.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

from .expr import BinOp, Bool, Call, Compare, Expr, Name, Num
from .model import (
    DETERMINISTIC, INIT, STOCHASTIC, Activity, Branch, ControlledSystem, ControllerState, Event,
    EventCondition, FunctionDef, Model, ModelError, Par, Ref, Subcomponent, validate,
)

__all__ = ["GenSpec", "NodeSpec", "LinkSpec", "Port", "NodeParts", "ScenarioSpec", "SCENARIOS",
           "CAPABILITIES", "build_node", "build_ferry_network", "case_observables",
           "scenario_t_end", "read_scenario", "write_scenario", "parse_scenario", "emit_hype"]

CAPABILITIES = frozenset({"input", "output", "generate", "remove", "drop"})
SCENARIOS = ("raer", "raef", "rtbr", "rtbf")

CONST = Call("const", ())
ZERO = Num(0.0)


def _n(v) -> Expr:
    return v if isinstance(v, Expr) else Num(float(v))


def _mul(a, b):
    return BinOp("*", _n(a), _n(b))


def _div(a, b):
    return BinOp("/", _n(a), _n(b))


@dataclass(frozen=True)
class GenSpec:
    """Bursty data generation: Poisson burst starts, exponential durations."""
    bursts_per_h: float
    burst_min: float
    mb_per_min: float


@dataclass(frozen=True)
class NodeSpec:
    id: str
    capabilities: frozenset
    capacity: float = math.inf  # MB
    streams: tuple = ("",)
    gen: GenSpec | None = None
    remove_mb_per_h: float = 0.0
    remove_per_h: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "capabilities", frozenset(self.capabilities))
        if not self.capabilities:
            raise ValueError(f"node {self.id}: empty capability set")
        bad = self.capabilities - CAPABILITIES
        if bad:
            raise ValueError(f"node {self.id}: unknown capabilities {sorted(bad)}")
        if not self.capacity > 0:
            raise ValueError(f"node {self.id}: capacity must be > 0")
        if "generate" in self.capabilities and self.gen is None:
            raise ValueError(f"node {self.id}: generate capability needs a GenSpec")
        if "drop" in self.capabilities and "generate" not in self.capabilities:
            raise ValueError(f"node {self.id}: drop is only modelled for generated data")
        if self.gen is not None and min(asdict(self.gen).values()) < 0:
            raise ValueError(f"node {self.id}: generation rates must be >= 0")


@dataclass(frozen=True)
class LinkSpec:
    src: str
    dst: str
    rate_mb_s: float

    def __post_init__(self):
        if not self.rate_mb_s > 0:
            raise ValueError("link rate must be > 0")


@dataclass
class Port:
    """How one side (input or output) of a node is switched by the network.

    ``start`` maps events to the (signed) flow they switch on; ``stop``
    lists events that switch it off. ``start_full`` (outputs of dropping
    nodes) are starts allowed only while the node is discarding data.
    ``table`` holds the controller transitions ``(state, event, next)``;
    its first state is the controller's initial state, and ``next`` may be
    ``"0"`` for nil.
    """
    start: dict
    stop: tuple = ()
    table: tuple = ()
    start_full: dict = field(default_factory=dict)


@dataclass
class NodeParts:
    variables: dict = field(default_factory=dict)
    influences: dict = field(default_factory=dict)
    events: dict = field(default_factory=dict)
    subcomponents: dict = field(default_factory=dict)
    controllers: dict = field(default_factory=dict)
    components: dict = field(default_factory=dict)
    component: str = ""
    controller: str = ""

    def merge(self, other: "NodeParts"):
        for f in ("variables", "influences", "events", "subcomponents", "controllers",
                  "components"):
            mine, theirs = getattr(self, f), getattr(other, f)
            clash = set(mine) & set(theirs)
            if clash:
                raise ModelError(f"duplicate {f}: {sorted(clash)}")
            mine.update(theirs)


def _sub(name, influence, branches) -> Subcomponent:
    return Subcomponent(name, influence,
                        tuple(Branch(e, Activity(influence, _n(s), CONST)) for e, s in branches))


def _machine(name, table, extra_loops=()) -> dict:
    """Controller states from a transition table; the root is named ``name``."""
    order = []
    for s, _, t in table:
        for x in (s, t):
            if x != "0" and x not in order:
                order.append(x)
    if not order:
        order = ["idle"]
    names = {s: name if k == 0 else f"{name}_{s}" for k, s in enumerate(order)}
    prefixes = {s: [] for s in order}
    for s, e, t in table:
        prefixes[s].append((e, "0" if t == "0" else names[t]))
    for s, e in extra_loops:
        prefixes[s].append((e, names[s]))
    return {names[s]: ControllerState(names[s], tuple(prefixes[s])) for s in order}


def _par(names):
    refs = [Ref(n) for n in names]
    out = refs[0]
    for r in refs[1:]:
        out = Par(out, r)
    return out


def node_names(node_id: str, stream: str = "") -> dict:
    sfx = f"_{node_id}" + (f"_{stream}" if stream else "")
    return {k: k + sfx for k in ("Level", "TotalIG", "TotalD", "Input", "Output", "Generate",
                                 "Remove", "Drop", "KeepI", "KeepG", "ConI", "ConO", "ConG",
                                 "ConR", "ConD", "Node", "ConNode", "gen_on", "gen_off", "full",
                                 "empty", "rm_on", "rm_off")}


def build_node(spec: NodeSpec, stream: str = "", inp: Port | None = None, out: Port | None = None,
               window_end: str | None = None) -> NodeParts:
    """Variables, subcomponents and controllers of node ``spec`` for one stream.

    Only subcomponents for the declared capabilities are emitted. Input,
    Output, Generate and Remove act on Level; KeepI and KeepG on TotalIG;
    Drop on TotalD. KeepI/KeepG/Drop have no controller of their own.
    ``window_end`` names an event after which generation stops.
    """
    caps = spec.capabilities
    nm = node_names(spec.id, stream)
    p = NodeParts()
    level = nm["Level"]
    p.variables[level] = 0.0
    if caps & {"input", "generate"}:
        p.variables[nm["TotalIG"]] = 0.0
    if "drop" in caps:
        p.variables[nm["TotalD"]] = 0.0
    finite = math.isfinite(spec.capacity)
    if "drop" in caps and not finite:
        raise ValueError(f"node {spec.id}: drop needs a finite capacity")
    cap = Num(spec.capacity)
    ends = (window_end,) if window_end else ()
    subs, cons = [], []

    def add_sub(key, influence_of, branches):
        infl = "i" + nm[key][0].lower() + nm[key][1:]
        p.influences[infl] = influence_of
        p.subcomponents[nm[key]] = _sub(nm[key], infl, [(INIT, ZERO)] + branches)
        subs.append(nm[key])

    full_ev = nm["full"]
    if "drop" in caps:
        p.events[full_ev] = Event(full_ev, DETERMINISTIC,
                                  EventCondition(Compare(">=", Name(level), cap)))

    start_full = dict(out.start_full) if out is not None else {}

    if "input" in caps:
        if inp is None:
            raise ValueError(f"node {spec.id}: input capability needs an input port")
        add_sub("Input", level, [(e, s) for e, s in inp.start.items()] +
                [(e, ZERO) for e in inp.stop])
        add_sub("KeepI", nm["TotalIG"], [(e, s) for e, s in inp.start.items()] +
                [(e, ZERO) for e in inp.stop])
        p.controllers.update(_machine(nm["ConI"], inp.table))
        cons.append(nm["ConI"])

    if "output" in caps:
        if out is None:
            raise ValueError(f"node {spec.id}: output capability needs an output port")
        starts = {**out.start, **start_full}
        add_sub("Output", level, [(e, s) for e, s in starts.items()] +
                [(e, ZERO) for e in out.stop])
        # a full disk is only detected while no transfer drains it
        loops = [(out.table[0][0], full_ev)] if "drop" in caps and out.table else []
        p.controllers.update(_machine(nm["ConO"], out.table, loops))
        cons.append(nm["ConO"])

    if "generate" in caps:
        g = spec.gen
        gr = Num(g.mb_per_min * 60.0)  # MB/h while a burst is on
        on, off = nm["gen_on"], nm["gen_off"]
        p.events[on] = Event(on, STOCHASTIC, EventCondition(rate=Num(g.bursts_per_h)))
        p.events[off] = Event(off, STOCHASTIC, EventCondition(rate=_div(60.0, g.burst_min)))
        dropping = "drop" in caps
        gen_branches = [(on, gr), (off, ZERO)] + [(e, ZERO) for e in ends]
        if dropping:
            gen_branches += [(full_ev, ZERO)] + [(e, gr) for e in start_full]
        add_sub("Generate", level, gen_branches)
        keep = [(on, gr), (off, ZERO)] + [(e, ZERO) for e in ends]
        if "input" in caps:
            raise ValueError(f"node {spec.id}: input and generate share TotalIG; "
                             "give them separate streams")
        add_sub("KeepG", nm["TotalIG"], keep)
        table = [("off", on, "on"), ("on", off, "off")]
        if dropping:
            table.append(("on", full_ev, "on"))
        p.controllers.update(_machine(nm["ConG"], table))
        cons.append(nm["ConG"])
        if dropping:
            drop_branches = [(full_ev, gr), (off, ZERO)] + [(e, ZERO) for e in start_full] + \
                            [(e, ZERO) for e in ends]
            add_sub("Drop", nm["TotalD"], drop_branches)
            dtable = [("off", full_ev, "on"), ("off", off, "off"), ("on", off, "off")]
            dtable += [("off", e, "off") for e in (out.start if out is not None else {})]
            dtable += [("on", e, "off") for e in start_full]
            p.controllers.update(_machine(nm["ConD"], dtable))
            cons.append(nm["ConD"])

    if "remove" in caps:
        ron, roff = nm["rm_on"], nm["rm_off"]
        p.events[ron] = Event(ron, STOCHASTIC, EventCondition(rate=Num(spec.remove_per_h)))
        p.events[roff] = Event(roff, DETERMINISTIC, EventCondition(Compare("<=", Name(level), ZERO)))
        add_sub("Remove", level, [(ron, Num(-spec.remove_mb_per_h)), (roff, ZERO)])
        p.controllers.update(_machine(nm["ConR"], [("off", ron, "on"), ("on", roff, "off")]))
        cons.append(nm["ConR"])

    p.components[nm["Node"]] = _par(subs)
    p.component = nm["Node"]
    if cons:
        p.controllers[nm["ConNode"]] = _par(cons)
        p.controller = nm["ConNode"]
    return p


# ---------------------------------------------------------------------------
# ferry case study

@dataclass(frozen=True)
class ScenarioSpec:
    """One configuration of the ferry study; field names double as scenario-file keys."""
    scenario: str = "raer"
    sensors: int = 10
    mtc_min: float = 15.0
    ferry_mb: float = 1000.0
    horizon_h: float = 8.0
    penalty: float = 2.0
    sensor_mb: float = 250.0
    # three recordings a day of about 3 minutes at 10 megabits per minute
    bursts_per_h: float = 0.125
    burst_min: float = 3.0
    gen_mb_per_min: float = 1.25
    up_mb_s: float = 1.0
    down_mb_s: float = 30.0
    seed: int = 1729
    runs: int = 200
    buffer_runs: int = 100
    mtc_values: tuple = (5.0, 10.0, 15.0, 20.0, 30.0, 60.0)
    buffer_values: tuple = (100.0, 250.0, 500.0, 1000.0, 2000.0)
    experiments: tuple = ("mtc", "buffer")

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"invalid scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.sensors < 1:
            raise ValueError("need at least one sensor")
        for f in ("mtc_min", "ferry_mb", "horizon_h", "penalty", "sensor_mb", "up_mb_s",
                  "down_mb_s"):
            if not getattr(self, f) > 0:
                raise ValueError(f"{f} must be > 0")
        if not self.burst_min > 0:
            raise ValueError("burst_min must be > 0")
        for f in ("bursts_per_h", "gen_mb_per_min"):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be >= 0")
        if self.gen_mb_per_min / 60.0 >= self.up_mb_s and self.gen_mb_per_min > 0:
            raise ValueError("sensor upload must be faster than generation")

    @classmethod
    def calibrated(cls, **kw) -> "ScenarioSpec":
        """One 3 minute burst per hour at 10 MB per minute.

        With the default generation a sensor records about 4 MB per window,
        far below its 250 MB disk, so nothing is ever dropped and the ferry
        never fills. These settings make each sensor produce roughly its disk
        size per window, which is the regime where contact frequency, route
        and ferry buffer matter.
        """
        return cls(**{"bursts_per_h": 1.0, "gen_mb_per_min": 10.0, **kw})

    @property
    def return_at_end(self) -> bool:
        return self.scenario.startswith("rae")

    @property
    def fixed_route(self) -> bool:
        return self.scenario.endswith("f")

    def with_(self, **kw) -> "ScenarioSpec":
        return replace(self, **kw)


def scenario_t_end(spec: ScenarioSpec, ferry_mb: float | None = None) -> float:
    """Simulated horizon: the collection window, plus the final unload for rae*."""
    if not spec.return_at_end:
        return spec.horizon_h
    cap = spec.ferry_mb if ferry_mb is None else ferry_mb
    return spec.horizon_h + max(0.1, 1.5 * cap / (3600.0 * spec.down_mb_s))


def build_ferry_network(spec: ScenarioSpec) -> Model:
    """Sensors ``s1..sN``, ferry ``f`` and base ``b`` wired for ``spec.scenario``.

    Sweepable quantities are model parameters: ``mtc_min``, ``ferry_mb``,
    ``penalty`` and ``horizon_h``.
    """
    n = spec.sensors
    sids = [f"s{k}" for k in range(1, n + 1)]
    rae = spec.return_at_end
    end = "end" if rae else None
    u = _mul(3600.0, Name("up_mb_s"))  # MB/h
    w = _mul(3600.0, Name("down_mb_s"))
    contact_rate = _div(60.0, BinOp("*", Name("mtc_min"), Num(1.0 if spec.fixed_route else n)))

    parts = NodeParts()
    events = parts.events
    gen = GenSpec(spec.bursts_per_h, spec.burst_min, spec.gen_mb_per_min)

    up = {s: f"up_{s}" for s in sids}
    upf = {s: f"upf_{s}" for s in sids}
    sempty = {s: f"empty_{s}" for s in sids}
    ffull, fempty = "full_f", "empty_f"
    arrive = end if rae else "arrive"

    for s in sids:
        for ev in (up[s], upf[s]):
            events[ev] = Event(ev, STOCHASTIC, EventCondition(rate=contact_rate))
        lvl = node_names(s)["Level"]
        events[sempty[s]] = Event(sempty[s], DETERMINISTIC,
                                  EventCondition(Compare("<=", Name(lvl), ZERO)))
    events[ffull] = Event(ffull, DETERMINISTIC,
                          EventCondition(Compare(">=", Name("Level_f"), Name("ferry_mb"))))
    events[fempty] = Event(fempty, DETERMINISTIC,
                           EventCondition(Compare("<=", Name("Level_f"), ZERO)))
    if rae:
        events[end] = Event(end, DETERMINISTIC,
                            EventCondition(Compare(">=", Name("clock"), Name("horizon_h"))))
    else:
        events[arrive] = Event(arrive, STOCHASTIC, EventCondition(
            rate=_div(60.0, BinOp("*", Name("penalty"), Name("mtc_min")))))

    node_comps, node_cons = [], []
    for s in sids:
        neg_u = BinOp("*", Num(-1.0), u)
        out = Port(start={up[s]: neg_u}, start_full={upf[s]: neg_u},
                   stop=(sempty[s], ffull) + ((end,) if rae else ()),
                   table=(("idle", up[s], "busy"), ("idle", upf[s], "busy"),
                          ("idle", ffull, "idle"),
                          ("busy", sempty[s], "idle"), ("busy", ffull, "idle")))
        ns = NodeSpec(s, {"generate", "drop", "output"}, spec.sensor_mb, gen=gen)
        p = build_node(ns, out=out, window_end=end)
        parts.merge(p)
        node_comps.append(p.component)
        node_cons.append(p.controller)

    # ferry
    starts = {e: u for s in sids for e in (up[s], upf[s])}
    itable = [("idle", e, "busy") for e in starts]
    itable += [("busy", sempty[s], "idle") for s in sids]
    itable += [("busy", ffull, "away")]
    if not rae:
        itable += [("away", fempty, "idle")]
    fin = Port(start=starts, stop=tuple(sempty[s] for s in sids) + (ffull,) + ((end,) if rae else ()),
               table=tuple(itable))
    neg_w = BinOp("*", Num(-1.0), w)
    if rae:
        otable = (("hold", end, "unload"), ("unload", fempty, "done"))
    else:
        otable = (("idle", ffull, "travel"), ("travel", arrive, "unload"), ("unload", fempty, "idle"))
    fout = Port(start={arrive: neg_w}, stop=(fempty,), table=otable)
    fp = build_node(NodeSpec("f", {"input", "output"}, spec.ferry_mb), inp=fin, out=fout)
    parts.merge(fp)

    bin_ = Port(start={arrive: w}, stop=(fempty,),
                table=(("idle", arrive, "busy"), ("busy", fempty, "idle")))
    bp = build_node(NodeSpec("b", {"input"}), inp=bin_)
    parts.merge(bp)
    comps = node_comps + [fp.component, bp.component]
    cons = node_cons + [fp.controller, bp.controller]

    # proximity: which sensor the next contact is with
    if spec.fixed_route:
        ptable = []
        for k, s in enumerate(sids):
            nxt = f"p{(k + 1) % n + 1}"
            ptable += [(f"p{k + 1}", up[s], nxt), (f"p{k + 1}", upf[s], nxt)]
    else:
        ptable = [("any", e, "any") for s in sids for e in (up[s], upf[s])]
    parts.controllers.update(_machine("Prox", ptable))
    cons.append("Prox")

    if rae:
        # collection window: after end no sensor activity and no contacts
        parts.variables["clock"] = 0.0
        parts.influences["iclock"] = "clock"
        parts.subcomponents["Clock"] = _sub("Clock", "iclock", [(INIT, Num(1.0))])
        comps.append("Clock")
        sensor_events = []
        for s in sids:
            nm = node_names(s)
            sensor_events += [nm["gen_on"], nm["gen_off"], nm["full"], up[s], upf[s], sempty[s]]
        sensor_events.append(ffull)
        parts.controllers.update(_machine("ConW", [("open", e, "open") for e in sensor_events] +
                                          [("open", end, "closed")]))
        cons.append("ConW")

    events[INIT] = Event(INIT, DETERMINISTIC, EventCondition(Bool(True)), synthetic=True)
    params = {"mtc_min": spec.mtc_min, "ferry_mb": spec.ferry_mb, "penalty": spec.penalty,
              "horizon_h": spec.horizon_h, "up_mb_s": spec.up_mb_s, "down_mb_s": spec.down_mb_s}
    functions = {"const": FunctionDef("const", (), Num(1.0))}
    parts.components["Net"] = _par(comps)
    parts.controllers["ConNet"] = _par(cons)
    # init first, then declaration order of the generator
    ordered_events = {INIT: events[INIT], **{k: v for k, v in events.items() if k != INIT}}
    model = Model(f"ferry_{spec.scenario}", parts.variables, params, functions, parts.influences,
                  ordered_events, parts.subcomponents, parts.components, parts.controllers,
                  ControlledSystem(Ref("Net"), Ref("ConNet")))
    report = validate(model)
    if not report.ok:
        raise ModelError(f"generated model is not well defined:\n{report}", report.violations)
    return model


def case_observables(spec: ScenarioSpec | None = None, sensors: int = 10):
    """Totals read at the end of a run; rae* also get ``*_h`` values at the horizon."""
    from .experiments import Observable
    if spec is not None:
        sensors = spec.sensors
    sids = [f"s{k}" for k in range(1, sensors + 1)]
    obs = [Observable.final("total_generated", [f"TotalIG_{s}" for s in sids]),
           Observable.final("total_dropped", [f"TotalD_{s}" for s in sids]),
           Observable.final("total_collected", "TotalIG_f"),
           Observable.final("total_delivered", "TotalIG_b"),
           Observable.final("sensor_level", [f"Level_{s}" for s in sids]),
           Observable.final("ferry_level", "Level_f")]
    if spec is not None and spec.return_at_end:
        h = spec.horizon_h
        obs += [Observable.final("total_collected_h", "TotalIG_f", at=h),
                Observable.final("total_delivered_h", "TotalIG_b", at=h),
                Observable.final("ferry_level_h", "Level_f", at=h)]
    return obs


# ---------------------------------------------------------------------------
# scenario files: ``key = value`` lines, ``#`` comments

def _convert(name, text):
    ftype = {f.name: f.type for f in fields(ScenarioSpec)}[name]
    if name in ("mtc_values", "buffer_values"):
        return tuple(float(v) for v in text.replace(",", " ").split())
    if name == "experiments":
        return tuple(v for v in text.replace(",", " ").split())
    if ftype == "str":
        return text
    if ftype == "int":
        return int(text)
    return float(text)


def parse_scenario(text: str) -> ScenarioSpec:
    known = {f.name for f in fields(ScenarioSpec)}
    kw = {}
    for k, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {k}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {k}: unknown key {key!r}")
        try:
            kw[key] = _convert(key, value)
        except ValueError:
            raise ValueError(f"line {k}: bad value for {key}: {value!r}") from None
    return ScenarioSpec(**kw)


def read_scenario(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def write_scenario(spec: ScenarioSpec, path=None) -> str:
    lines = []
    for f in fields(ScenarioSpec):
        v = getattr(spec, f.name)
        if isinstance(v, tuple):
            v = ", ".join(x if isinstance(x, str) else repr(x) for x in v)
        lines.append(f"{f.name} = {v}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def emit_hype(spec: ScenarioSpec) -> str:
    """``.hype`` source of the generated model."""
    from .lang.render import render
    return render(build_ferry_network(spec))
