"""Stochastic HYPE models: the in-memory tuple and its well-definedness rules."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from .expr import (
    Bool, Call, Compare, EvalError, Expr, Logic, Name, Num, Unary, BinOp,
    called_functions, evaluate, fold, inline_calls, substitute,
)

__all__ = [
    "INIT", "DETERMINISTIC", "STOCHASTIC", "FunctionDef", "Activity", "Branch",
    "Subcomponent", "EventCondition", "Event", "Ref", "Par", "ControllerState",
    "ControlledSystem", "Model", "Violation", "ValidationReport", "validate",
    "composition_leaves", "ModelError",
]

INIT = "init"
DETERMINISTIC = "deterministic"
STOCHASTIC = "stochastic"


class ModelError(Exception):
    """A model failed elaboration or validation; ``violations`` lists why."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


@dataclass(frozen=True)
class FunctionDef:
    """User function (``kind='function'``) or boolean guard (``kind='guard'``).

    Functions double as influence types: the type of an activity is a call
    to one of them.
    """
    name: str
    params: tuple[str, ...]
    body: Expr
    kind: str = "function"
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Activity:
    influence: str
    strength: Expr
    itype: Call

    @property
    def type_name(self) -> str:
        return self.itype.func


@dataclass(frozen=True)
class Branch:
    event: str
    activity: Activity
    target: str | None = None  # None: back to the owning subcomponent


@dataclass(frozen=True)
class Subcomponent:
    name: str
    influence: str
    branches: tuple[Branch, ...]

    @property
    def events(self) -> set[str]:
        return {b.event for b in self.branches}


@dataclass(frozen=True)
class EventCondition:
    """Activation plus reset.

    Deterministic events use ``guard``; stochastic events use ``rate`` and
    may also carry a ``guard``, which gates the rate (rate * <guard>).
    """
    guard: Expr | None = None
    rate: Expr | None = None
    reset: tuple[tuple[str, Expr], ...] = ()


@dataclass(frozen=True)
class Event:
    name: str
    kind: str
    condition: EventCondition
    synthetic: bool = field(default=False, compare=False)
    span: tuple | None = field(default=None, compare=False, repr=False)

    @property
    def stochastic(self) -> bool:
        return self.kind == STOCHASTIC


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Par:
    """Parallel composition; ``sync=None`` synchronises on all shared events."""
    left: "Ref | Par"
    right: "Ref | Par"
    sync: frozenset | None = None


@dataclass(frozen=True)
class ControllerState:
    """Sequential controller state: a sum of ``event.next`` prefixes, or nil."""
    name: str
    prefixes: tuple[tuple[str, str], ...] = ()

    @property
    def nil(self) -> bool:
        return not self.prefixes


@dataclass(frozen=True)
class ControlledSystem:
    uncontrolled: "Ref | Par"
    controller: "Ref | Par"
    sync: frozenset | None = None


@dataclass(frozen=True)
class Model:
    name: str
    variables: dict  # name -> initial value
    params: dict  # name -> value
    functions: dict  # name -> FunctionDef
    influences: dict  # influence name -> variable (iv)
    events: dict  # name -> Event
    subcomponents: dict  # name -> Subcomponent
    components: dict  # name -> composition
    controllers: dict  # name -> ControllerState | composition
    system: ControlledSystem

    @property
    def influence_types(self) -> set[str]:
        return {b.activity.type_name for s in self.subcomponents.values() for b in s.branches}

    def env(self) -> dict:
        return {**self.params, **self.variables}

    def resolve(self, e: Expr, params: dict | None = None) -> Expr:
        """Inline function calls and substitute parameter values."""
        values = dict(self.params)
        if params:
            values.update(params)
        e = inline_calls(e, self.functions)
        e = substitute(e, {k: Num(float(v)) for k, v in values.items()})
        return fold(e)

    # -- structural helpers used by validation, flattening and rendering --

    def component_alphabet(self, comp, _seen=()) -> set[str]:
        out = set()
        for leaf in composition_leaves(comp):
            if leaf in self.subcomponents:
                out |= self.subcomponents[leaf].events
            elif leaf in self.components and leaf not in _seen:
                out |= self.component_alphabet(self.components[leaf], _seen + (leaf,))
        return out

    def reachable_states(self, root: str) -> list[str]:
        """Controller states reachable from ``root`` in breadth-first order."""
        order, frontier = [root], [root]
        seen = {root}
        while frontier:
            nxt = []
            for s in frontier:
                st = self.controllers.get(s)
                if not isinstance(st, ControllerState):
                    continue
                for _, target in st.prefixes:
                    if target not in seen and target != "0":
                        seen.add(target)
                        order.append(target)
                        nxt.append(target)
            frontier = nxt
        return order

    def sequential_leaves(self, comp, _seen=()) -> list[str]:
        """Roots of the sequential controllers composed in ``comp``."""
        out = []
        for leaf in composition_leaves(comp):
            d = self.controllers.get(leaf)
            if isinstance(d, ControllerState):
                out.append(leaf)
            elif d is not None and leaf not in _seen:
                out.extend(self.sequential_leaves(d, _seen + (leaf,)))
        return out

    def controller_alphabet(self, comp) -> set[str]:
        out = set()
        for root in self.sequential_leaves(comp):
            for s in self.reachable_states(root):
                st = self.controllers.get(s)
                if isinstance(st, ControllerState):
                    out |= {e for e, _ in st.prefixes}
        return out

    def used_subcomponents(self) -> list[str]:
        out = []

        def visit(comp, seen):
            for leaf in composition_leaves(comp):
                if leaf in self.subcomponents:
                    out.append(leaf)
                elif leaf in self.components and leaf not in seen:
                    visit(self.components[leaf], seen + (leaf,))

        visit(self.system.uncontrolled, ())
        return out


def composition_leaves(comp) -> Iterator[str]:
    if isinstance(comp, Ref):
        yield comp.name
    elif isinstance(comp, Par):
        yield from composition_leaves(comp.left)
        yield from composition_leaves(comp.right)


# --- validation --------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    rule: str
    location: str
    message: str

    def __str__(self):
        return f"{self.rule} [{self.location}]: {self.message}"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> list[str]:
        return [v.rule for v in self.violations]

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)

    def __str__(self):
        return "\n".join(map(str, self.violations)) if self.violations else "valid"


def _expr_type(e: Expr, model: Model, local: dict, add, where: str) -> str | None:
    """'num' or 'bool'; reports unresolved names and ill-typed subterms."""
    def t(e):
        if isinstance(e, Num):
            return "num"
        if isinstance(e, Bool):
            return "bool"
        if isinstance(e, Name):
            if e.id in local:
                return local[e.id]
            if e.id in model.variables or e.id in model.params:
                return "num"
            add("undefined name", where, f"undefined name {e.id}")
            return None
        if isinstance(e, Unary):
            a = t(e.operand)
            want = "bool" if e.op == "not" else "num"
            if a is not None and a != want:
                add("type error", where, f"operand of '{e.op}' must be {want}")
            return want
        if isinstance(e, BinOp):
            for side in (e.left, e.right):
                if t(side) == "bool":
                    add("type error", where, f"boolean operand of '{e.op}'")
            return "num"
        if isinstance(e, Compare):
            for side in (e.left, e.right):
                if t(side) == "bool":
                    add("type error", where, f"boolean operand of '{e.op}'")
            return "bool"
        if isinstance(e, Logic):
            for side in (e.left, e.right):
                if t(side) == "num":
                    add("type error", where, f"numeric operand of '{e.op}'")
            return "bool"
        if isinstance(e, Call):
            for a in e.args:
                t(a)
            if e.func == "__ind__":
                return "num"
            f = model.functions.get(e.func)
            if f is None:
                add("undefined name", where, f"undefined function {e.func}")
                return None
            if len(f.params) != len(e.args):
                add("arity mismatch", where,
                    f"{e.func} expects {len(f.params)} arguments, got {len(e.args)}")
            return "bool" if f.kind == "guard" else "num"
        return None

    return t(e)


def validate(model: Model) -> ValidationReport:
    """Check the well-definedness rules; violations are returned, not raised."""
    report = ValidationReport()

    def add(rule, location, message):
        v = Violation(rule, location, message)
        if v not in report.violations:
            report.violations.append(v)

    events = set(model.events)
    infl = set(model.influences)
    itypes = model.influence_types

    # name classes
    for a, b, label in ((events, infl, "event/influence"), (events, itypes, "event/influence type"),
                        (infl, itypes, "influence/influence type")):
        for n in sorted(a & b):
            add("non-disjoint names", n, f"{n} is used both as {label}")
    for n in sorted(set(model.variables) & set(model.params)):
        add("non-disjoint names", n, f"{n} is both a variable and a parameter")

    # functions
    for f in model.functions.values():
        local = {p: "num" for p in f.params}
        ty = _expr_type(f.body, model, local, add, f"function {f.name}")
        want = "bool" if f.kind == "guard" else "num"
        if ty is not None and ty != want:
            add("type error", f"function {f.name}", f"{f.kind} {f.name} must be {want}")
        if f.name in called_functions(f.body):
            add("recursive function", f"function {f.name}", f"{f.name} calls itself")

    # influences
    for i, var in model.influences.items():
        if var not in model.variables:
            add("undefined name", f"influence {i}", f"influence {i} maps to undeclared variable {var}")

    # events
    if INIT not in model.events:
        add("missing init", "events", "no init event")
    for e in model.events.values():
        where = f"event {e.name}"
        c = e.condition
        if e.kind == STOCHASTIC:
            if c.rate is None:
                add("missing rate", where, "stochastic event without rate")
            else:
                if _expr_type(c.rate, model, {}, add, where) == "bool":
                    add("type error", where, "rate must be numeric")
                try:
                    r = model.resolve(c.rate)
                    if isinstance(r, Num) and r.value < 0:
                        add("negative rate", where, f"rate {r.value} < 0")
                except EvalError as err:
                    add("undefined name", where, str(err))
            if e.name == INIT:
                add("init kind", where, "init must be deterministic")
        elif e.kind == DETERMINISTIC:
            if c.rate is not None:
                add("type error", where, "deterministic event with a rate")
        else:
            add("event kind", where, f"unknown event kind {e.kind}")
        if c.guard is not None and _expr_type(c.guard, model, {}, add, where) == "num":
            add("type error", where, "guard must be boolean")
        targets = [v for v, _ in c.reset]
        for v in targets:
            if v not in model.variables:
                add("undefined name", where, f"reset of undeclared variable {v}")
        for v in sorted({v for v in targets if targets.count(v) > 1}):
            add("duplicate reset", where, f"{v} assigned twice")
        for _, rhs in c.reset:
            if _expr_type(rhs, model, {}, add, where) == "bool":
                add("type error", where, "reset value must be numeric")

    # subcomponents
    owner: dict[str, str] = {}
    for s in model.subcomponents.values():
        where = f"subcomponent {s.name}"
        if s.influence not in infl:
            add("unmapped influence", where, f"influence {s.influence} has no variable mapping")
        if s.influence in owner and owner[s.influence] != s.name:
            add("influence not unique", where,
                f"influence {s.influence} also owned by {owner[s.influence]}")
        owner.setdefault(s.influence, s.name)
        inits = sum(1 for b in s.branches if b.event == INIT)
        if inits == 0:
            add("missing init", where, f"{s.name} has no init branch")
        elif inits > 1:
            add("duplicate init", where, f"{s.name} has {inits} init branches")
        for b in s.branches:
            if b.target not in (None, s.name):
                add("not self-looping", where, f"branch {b.event} continues as {b.target}")
            if b.event not in events:
                add("undeclared event", where, f"event {b.event} is not declared")
            a = b.activity
            if a.influence != s.influence:
                if a.influence not in infl:
                    add("unmapped influence", where, f"influence {a.influence} has no variable mapping")
                add("foreign influence", where,
                    f"branch {b.event} uses {a.influence}, subcomponent owns {s.influence}")
            if _expr_type(a.strength, model, {}, add, where) == "bool":
                add("type error", where, f"strength of {b.event} must be numeric")
            if _expr_type(a.itype, model, {}, add, where) == "bool":
                add("type error", where, f"influence type of {b.event} must be numeric")

    # compositions
    def check_comp(comp, where, alphabet, resolvable, stack=()):
        if isinstance(comp, Ref):
            if not resolvable(comp.name):
                add("undefined name", where, f"undefined name {comp.name}")
            return
        check_comp(comp.left, where, alphabet, resolvable, stack)
        check_comp(comp.right, where, alphabet, resolvable, stack)
        shared = alphabet(comp.left) & alphabet(comp.right)
        if comp.sync is not None:
            missing = shared - set(comp.sync)
            if missing:
                add("sync omits shared event", where,
                    f"shared events {sorted(missing)} not in synchronisation set")
            for ev in set(comp.sync) - events:
                add("undeclared event", where, f"synchronisation on undeclared event {ev}")

    comp_names = set(model.components)

    def comp_resolvable(n):
        return n in model.subcomponents or n in comp_names

    def comp_alpha(c):
        return model.component_alphabet(c)

    for name, comp in model.components.items():
        check_comp(comp, f"component {name}", comp_alpha, comp_resolvable)
        if _cyclic(name, model.components):
            add("recursive component", f"component {name}", f"{name} refers to itself")

    # controllers
    for name, d in model.controllers.items():
        where = f"controller {name}"
        if isinstance(d, ControllerState):
            seen = set()
            for ev, nxt in d.prefixes:
                if ev not in events:
                    add("undeclared event", where, f"event {ev} is not declared")
                if ev == INIT:
                    add("init in controller", where, "init is implicit before the controller")
                if nxt != "0" and not isinstance(model.controllers.get(nxt), ControllerState):
                    add("undefined name", where, f"undefined controller state {nxt}")
                seen.add(ev)
        else:
            check_comp(d, where, lambda c: model.controller_alphabet(c),
                       lambda n: n in model.controllers)
            if _cyclic(name, {k: v for k, v in model.controllers.items()
                              if not isinstance(v, ControllerState)}):
                add("recursive component", where, f"{name} refers to itself")

    # system
    sysc = model.system
    check_comp(sysc.uncontrolled, "system", comp_alpha, comp_resolvable)
    check_comp(sysc.controller, "system", lambda c: model.controller_alphabet(c),
               lambda n: n in model.controllers)
    for leaf in composition_leaves(sysc.controller):
        if leaf in model.subcomponents or leaf in model.components:
            add("system shape", "system", f"{leaf} is not a controller")
    for leaf in composition_leaves(sysc.uncontrolled):
        if leaf in model.controllers and leaf not in model.components and leaf not in model.subcomponents:
            add("system shape", "system", f"{leaf} is a controller on the uncontrolled side")
    if sysc.sync is not None:
        shared = comp_alpha(sysc.uncontrolled) & (model.controller_alphabet(sysc.controller) | {INIT})
        missing = shared - set(sysc.sync)
        if missing:
            add("sync omits shared event", "system",
                f"shared events {sorted(missing)} not in synchronisation set")

    return report


def _cyclic(start: str, defs: dict) -> bool:
    stack, seen = [start], set()
    while stack:
        n = stack.pop()
        d = defs.get(n)
        if d is None or isinstance(d, ControllerState):
            continue
        for leaf in composition_leaves(d):
            if leaf == start:
                return True
            if leaf not in seen:
                seen.add(leaf)
                stack.append(leaf)
    return False


def eval_in_model(model: Model, e: Expr, state: dict | None = None):
    """Evaluate ``e`` with parameters, declared initial values and ``state``."""
    env = model.env()
    if state:
        env.update(state)
    return evaluate(e, env, model.functions)
