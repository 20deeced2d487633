"""Print a Model back as ``.hype`` source."""
from __future__ import annotations

from ..expr import Bool, to_source
from ..model import INIT, ControllerState, Model, Par, Ref, STOCHASTIC

__all__ = ["render", "isomorphic"]


def _num(v: float) -> str:
    return to_source_num(v)


def to_source_num(v: float) -> str:
    from ..expr import Num
    s = to_source(Num(float(v)))
    return s[1:-1] if s.startswith("(") else s


def _comp(c, top=True) -> str:
    if isinstance(c, Ref):
        return c.name
    if c.sync is None:
        op = "<*>"
    elif not c.sync:
        op = "||"
    else:
        raise ValueError("explicit synchronisation sets other than <*> and || cannot be rendered")
    left = _comp(c.left, False)
    right = _comp(c.right, False)
    if isinstance(c.right, Par):
        right = f"({right})"
    return f"{left} {op} {right}"


def render(model: Model) -> str:
    """Source text that parses and elaborates back to an equal model."""
    out = [f"hype model {model.name}", "", "#definitions"]
    for v, x in model.variables.items():
        out.append(f"var {v} = {_num(x)};")
    for p, x in model.params.items():
        out.append(f"param {p} = {_num(x)};")
    for f in model.functions.values():
        out.append(f"{f.kind} {f.name}({','.join(f.params)}) = {to_source(f.body)};")

    out += ["", "#mappings"]
    for i, var in model.influences.items():
        out.append(f"infl {i} :-> {var};")
    for e in model.events.values():
        if e.name == INIT and e.synthetic:
            continue
        c = e.condition
        guard = ""
        if c.guard is not None and not (e.kind != STOCHASTIC and c.guard == Bool(True)):
            guard = to_source(c.guard) + " "
        resets = ", ".join(f"{v} = {to_source(x)}" for v, x in c.reset)
        line = f"event {e.name} = {guard}:->"
        if resets:
            line += f" {resets}"
        if e.kind == STOCHASTIC:
            line += f" @ {to_source(c.rate)}"
        out.append(line + ";")

    out += ["", "#subcomponents"]
    for s in model.subcomponents.values():
        parts = [f"{b.event}:[{to_source(b.activity.strength)},{to_source(b.activity.itype)}]"
                 for b in s.branches]
        out.append(f"{s.name} := {' + '.join(parts)} : {s.influence};")

    out += ["", "#components"]
    for name, c in model.components.items():
        out.append(f"{name} := {_comp(c)};")

    out += ["", "#controller"]
    for name, d in model.controllers.items():
        if isinstance(d, ControllerState):
            body = " + ".join(f"{e}.{n}" for e, n in d.prefixes) if d.prefixes else "0"
        else:
            body = _comp(d)
        out.append(f"{name} := {body};")

    out += ["", "#system"]
    sysc = model.system
    op = "<*>" if sysc.sync is None else "||" if not sysc.sync else None
    if op is None:
        raise ValueError("explicit synchronisation sets other than <*> and || cannot be rendered")
    left, right = _comp(sysc.uncontrolled), _comp(sysc.controller)
    if isinstance(sysc.uncontrolled, Par):
        left = f"({left})"
    if isinstance(sysc.controller, Par):
        right = f"({right})"
    out.append(f"{left} {op} {right};")
    return "\n".join(out) + "\n"


def isomorphic(a: Model, b: Model) -> bool:
    """Structural equality, ignoring declaration order and source positions."""
    return a == b
