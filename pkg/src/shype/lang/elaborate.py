"""Turn parsed section ASTs into a validated :class:`~shype.model.Model`."""
from __future__ import annotations

from ..expr import Bool, Call, EvalError, Name, Num, evaluate, fold, substitute
from ..model import (
    DETERMINISTIC, STOCHASTIC, Activity, Branch, ControlledSystem, ControllerState,
    Event, EventCondition, FunctionDef, Model, ModelError, Par, Ref, Subcomponent, validate,
)
from .parser import HypeSyntaxError, Instantiate, SourceModel, StateDecl, parse

__all__ = ["elaborate", "load_model", "load_model_file"]


def _err(msg, span):
    return HypeSyntaxError(msg, *(span or (0, 0)))


def elaborate(src: SourceModel) -> Model:
    """Resolve names, expand templates and check well-definedness.

    Raises HypeSyntaxError for undeclared names, arity mismatches and
    negative constant rates; ModelError when validation finds violations.
    """
    functions = {f.name: FunctionDef(f.name, f.params, f.body, f.kind, f.span)
                 for f in src.functions}

    params: dict[str, float] = {}
    for p in src.params:
        try:
            params[p.name] = float(evaluate(p.value, params, functions))
        except EvalError as e:
            raise _err(f"parameter {p.name}: {e}", e.span or p.span) from None

    variables: dict[str, float] = {}
    for v in src.variables:
        if v.init is None:
            variables[v.name] = 0.0
            continue
        try:
            variables[v.name] = float(evaluate(v.init, params, functions))
        except EvalError as e:
            raise _err(f"variable {v.name}: {e}", e.span or v.span) from None

    influences = {i.name: i.variable for i in src.influences}
    for i in src.influences:
        if i.variable not in variables:
            raise _err(f"undefined name {i.variable}", i.span)

    events: dict[str, Event] = {}
    for d in src.events:
        if d.rate is not None:
            kind, guard = STOCHASTIC, d.guard
            try:
                r = fold(substitute(d.rate, {k: Num(v) for k, v in params.items()}))
            except EvalError:
                r = None
            if isinstance(r, Num) and r.value < 0:
                raise _err(f"event {d.name}: negative rate {r.value}", d.span)
        else:
            kind, guard = DETERMINISTIC, d.guard if d.guard is not None else Bool(True)
        for var, _, span in d.resets:
            if var not in variables:
                raise _err(f"event {d.name}: reset of undeclared variable {var}", span)
        cond = EventCondition(guard, d.rate, tuple((v, e) for v, e, _ in d.resets))
        events[d.name] = Event(d.name, kind, cond, synthetic=d.synthetic, span=d.span)

    templates = {t.name: t for t in src.templates}
    subcomponents: dict[str, Subcomponent] = {}

    def add_sub(sub: Subcomponent, span):
        if sub.name in subcomponents:
            raise _err(f"duplicate subcomponent {sub.name}", span)
        subcomponents[sub.name] = sub

    def branches_of(decls, influence, mapping=None, formals=()):
        out = []
        for b in decls:
            strength, itype = b.strength, b.itype
            if mapping:
                strength = substitute(strength, mapping)
                itype = substitute(itype, mapping)
            if not isinstance(itype, Call):
                raise _err("influence type must be a function call such as const()", b.span)
            for ev, span in b.events:
                if ev in formals:
                    arg = mapping[ev]
                    if not isinstance(arg, Name):
                        raise _err(f"argument for event parameter {ev} must be an event name", span)
                    ev = arg.id
                if ev not in events:
                    raise _err(f"undeclared event {ev}", span)
                out.append(Branch(ev, Activity(influence, strength, itype)))
        return tuple(out)

    for s in src.subcomponents:
        add_sub(Subcomponent(s.name, s.influence, branches_of(s.branches, s.influence)), s.span)

    def instantiate(inst: Instantiate, name: str) -> Ref:
        t = templates.get(inst.template)
        if t is None:
            raise _err(f"undefined template {inst.template}", inst.span)
        if len(inst.args) != len(t.formals):
            raise _err(f"arity mismatch: {t.name} takes {len(t.formals)} arguments, "
                       f"got {len(inst.args)}", inst.span)
        if inst.influence not in influences:
            raise _err(f"undefined influence {inst.influence}", inst.span)
        mapping = dict(zip(t.formals, inst.args))
        branches = branches_of(t.branches, inst.influence, mapping, t.formals)
        owner = next((s for s in subcomponents.values() if s.influence == inst.influence), None)
        if owner is not None:
            raise _err(f"influence not unique: {inst.influence} already owned by {owner.name}",
                       inst.span)
        add_sub(Subcomponent(name, inst.influence, branches), inst.span)
        return Ref(name)

    comp_names = {c.name for c in src.components}
    controller_names = {c.name for c in src.controllers}
    components = {}

    def convert(body, where_span, allow=("sub", "comp")):
        if isinstance(body, Instantiate):
            return instantiate(body, f"{body.template}_{body.influence}")
        if isinstance(body, Par):
            return Par(convert(body.left, where_span, allow), convert(body.right, where_span, allow),
                       body.sync)
        name, span = body.name, getattr(body, "span", where_span)
        if "sub" in allow and (name in subcomponents or name in comp_names):
            return Ref(name)
        if "con" in allow and name in controller_names:
            return Ref(name)
        raise _err(f"undefined name {name}", span)

    # single-instantiation components become the subcomponent itself
    for c in src.components:
        if isinstance(c.body, Instantiate):
            instantiate(c.body, c.name)
    for c in src.components:
        if not isinstance(c.body, Instantiate):
            components[c.name] = convert(c.body, c.span)

    controllers = {}
    for c in src.controllers:
        if isinstance(c, StateDecl):
            for ev, nxt, span in c.prefixes:
                if ev not in events:
                    raise _err(f"undeclared event {ev}", span)
                if nxt != "0" and nxt not in controller_names:
                    raise _err(f"undefined name {nxt}", span)
            controllers[c.name] = ControllerState(c.name, tuple((e, n) for e, n, _ in c.prefixes))
        else:
            controllers[c.name] = convert(c.body, c.span, allow=("con",))

    if src.system is None:
        raise _err("#system is empty", src.system_span)
    system = _split_system(src.system, convert, src.system_span, subcomponents, comp_names,
                           controller_names)

    model = Model(src.name, variables, params, functions, influences, events,
                  subcomponents, components, controllers, system)
    report = validate(model)
    if not report.ok:
        raise ModelError(f"model {src.name} is not well defined:\n{report}", report.violations)
    return model


def _split_system(body, convert, span, subs, comps, cons):
    """Split the #system composition into uncontrolled part and controller."""
    def side(node):
        if isinstance(node, Par):
            kinds = side(node.left) | side(node.right)
            return kinds
        name = node.name
        if name in subs or name in comps:
            return {"sys"}
        if name in cons:
            return {"con"}
        raise _err(f"undefined name {name}", getattr(node, "span", span))

    if not isinstance(body, Par):
        side(body)
        raise _err("#system must combine a component and a controller", span)
    left, right = side(body.left), side(body.right)
    if left == {"sys"} and right == {"con"}:
        return ControlledSystem(convert(body.left, span), convert(body.right, span, allow=("con",)),
                                body.sync)
    if left == {"con"} and right == {"sys"}:
        return ControlledSystem(convert(body.right, span), convert(body.left, span, allow=("con",)),
                                body.sync)
    raise _err("#system must be <components> <*> <controllers>", span)


def load_model(text: str) -> Model:
    return elaborate(parse(text))


def load_model_file(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return load_model(fh.read())
