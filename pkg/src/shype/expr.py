"""Expression trees shared by guards, rates, resets, strengths and functions.

Numbers are doubles and booleans are a separate type; ``indicator`` turns a
boolean into 0/1 where arithmetic needs it.
"""
from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

__all__ = [
    "Expr", "Num", "Bool", "Name", "Unary", "BinOp", "Compare", "Logic", "Call",
    "EvalError", "evaluate", "free_names", "called_functions", "substitute",
    "inline_calls", "fold", "is_constant", "is_affine", "compile_numeric",
    "compile_bool", "crossing_function", "to_source", "indicator",
]


class EvalError(Exception):
    """Raised when an expression cannot be evaluated (unbound name, 1/0...)."""

    def __init__(self, message, span=None):
        super().__init__(message if span is None else f"{message} at {span[0]}:{span[1]}")
        self.span = span


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Num(Expr):
    value: float
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Bool(Expr):
    value: bool
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Name(Expr):
    id: str
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # '-' or 'not'
    operand: Expr
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # + - * / ^
    left: Expr
    right: Expr
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Compare(Expr):
    op: str  # >= <= > < == !=
    left: Expr
    right: Expr
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Logic(Expr):
    op: str  # 'and' | 'or'
    left: Expr
    right: Expr
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple = ()
    span: tuple | None = field(default=None, compare=False, repr=False)


def indicator(expr: Expr) -> Expr:
    """The 0/1 value of a boolean expression, as a numeric expression."""
    return Call("__ind__", (expr,))


_ARITH = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
}
_CMP = {
    ">=": operator.ge,
    "<=": operator.le,
    ">": operator.gt,
    "<": operator.lt,
    "==": operator.eq,
    "!=": operator.ne,
}


def _div(a, b, span=None):
    if b == 0:
        raise EvalError("division by zero", span)
    return a / b


def _pow(a, b, span=None):
    """Real power; a negative base with a fractional exponent is an error, not a complex."""
    try:
        r = a ** b
    except ZeroDivisionError:
        raise EvalError("zero raised to a negative power", span) from None
    except OverflowError:
        odd = float(b).is_integer() and int(b) % 2 == 1
        return -math.inf if (a < 0 and odd) else math.inf
    if isinstance(r, complex):
        raise EvalError("negative base with fractional exponent", span)
    return r


def evaluate(expr: Expr, env: Mapping[str, float], functions: Mapping | None = None):
    """Evaluate ``expr`` with names bound by ``env``.

    ``functions`` maps user function names to objects with ``params`` and
    ``body`` attributes; calls are evaluated by binding the arguments.
    """
    functions = functions or {}

    def ev(e, env):
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Bool):
            return e.value
        if isinstance(e, Name):
            try:
                return env[e.id]
            except KeyError:
                raise EvalError(f"unbound name {e.id!r}", e.span) from None
        if isinstance(e, Unary):
            v = ev(e.operand, env)
            return (not v) if e.op == "not" else -v
        if isinstance(e, BinOp):
            a, b = ev(e.left, env), ev(e.right, env)
            if e.op == "/":
                return _div(a, b, e.span)
            if e.op == "^":
                return _pow(a, b, e.span)
            return _ARITH[e.op](a, b)
        if isinstance(e, Compare):
            return _CMP[e.op](ev(e.left, env), ev(e.right, env))
        if isinstance(e, Logic):
            a = ev(e.left, env)
            if e.op == "and":
                return a and ev(e.right, env)
            return a or ev(e.right, env)
        if isinstance(e, Call):
            args = [ev(a, env) for a in e.args]
            if e.func == "__ind__":
                return 1.0 if args[0] else 0.0
            f = functions.get(e.func)
            if f is None:
                raise EvalError(f"unknown function {e.func!r}", e.span)
            if len(args) != len(f.params):
                raise EvalError(
                    f"{e.func} expects {len(f.params)} arguments, got {len(args)}", e.span)
            return ev(f.body, dict(zip(f.params, args)))
        raise TypeError(f"not an expression: {e!r}")

    return ev(expr, env)


def _children(e: Expr) -> tuple:
    if isinstance(e, Unary):
        return (e.operand,)
    if isinstance(e, (BinOp, Compare, Logic)):
        return (e.left, e.right)
    if isinstance(e, Call):
        return e.args
    return ()


def walk(e: Expr) -> Iterable[Expr]:
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(_children(node))


def free_names(e: Expr) -> set[str]:
    return {n.id for n in walk(e) if isinstance(n, Name)}


def called_functions(e: Expr) -> set[str]:
    return {n.func for n in walk(e) if isinstance(n, Call) and n.func != "__ind__"}


def _rebuild(e: Expr, f: Callable[[Expr], Expr]) -> Expr:
    if isinstance(e, Unary):
        return Unary(e.op, f(e.operand), e.span)
    if isinstance(e, BinOp):
        return BinOp(e.op, f(e.left), f(e.right), e.span)
    if isinstance(e, Compare):
        return Compare(e.op, f(e.left), f(e.right), e.span)
    if isinstance(e, Logic):
        return Logic(e.op, f(e.left), f(e.right), e.span)
    if isinstance(e, Call):
        return Call(e.func, tuple(f(a) for a in e.args), e.span)
    return e


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace free names by expressions (simultaneously)."""
    if isinstance(e, Name):
        return mapping.get(e.id, e)
    return _rebuild(e, lambda c: substitute(c, mapping))


def inline_calls(e: Expr, functions: Mapping, _depth: int = 0) -> Expr:
    """Expand user function calls by substituting their bodies."""
    if _depth > 64:
        raise EvalError("function expansion too deep (recursive definition?)", e.span)
    if isinstance(e, Call) and e.func != "__ind__":
        f = functions.get(e.func)
        if f is None:
            raise EvalError(f"unknown function {e.func!r}", e.span)
        if len(e.args) != len(f.params):
            raise EvalError(
                f"{e.func} expects {len(f.params)} arguments, got {len(e.args)}", e.span)
        args = [inline_calls(a, functions, _depth) for a in e.args]
        body = substitute(f.body, dict(zip(f.params, args)))
        return inline_calls(body, functions, _depth + 1)
    return _rebuild(e, lambda c: inline_calls(c, functions, _depth))


def fold(e: Expr) -> Expr:
    """Constant-fold every subtree that has no free names."""
    e = _rebuild(e, fold)
    if all(isinstance(c, (Num, Bool)) for c in _children(e)) and not isinstance(e, (Num, Bool, Name)):
        if isinstance(e, Call) and e.func != "__ind__":
            return e
        try:
            v = evaluate(e, {})
        except EvalError:
            return e
        return Bool(v, e.span) if isinstance(v, bool) else Num(float(v), e.span)
    if isinstance(e, BinOp):
        # x*0 and 0*x are exact zeros for finite x; keeps gated zero flows constant
        if e.op == "*" and any(isinstance(c, Num) and c.value == 0.0 for c in (e.left, e.right)):
            return Num(0.0, e.span)
        if e.op == "*" and isinstance(e.left, Num) and e.left.value == 1.0:
            return e.right
        if e.op in "*/" and isinstance(e.right, Num) and e.right.value == 1.0:
            return e.left
    return e


def is_constant(e: Expr) -> bool:
    return not free_names(e)


def is_affine(e: Expr) -> bool:
    """True when ``e`` (already inlined and folded) is affine in its names."""
    if isinstance(e, (Num, Name)):
        return True
    if isinstance(e, Unary) and e.op == "-":
        return is_affine(e.operand)
    if isinstance(e, BinOp):
        if e.op in "+-":
            return is_affine(e.left) and is_affine(e.right)
        if e.op == "*":
            return (is_constant(e.left) and is_affine(e.right)) or (
                is_constant(e.right) and is_affine(e.left))
        if e.op == "/":
            return is_constant(e.right) and is_affine(e.left)
        return is_constant(e)
    return is_constant(e) and not isinstance(e, (Compare, Logic, Bool))


# --- compilation to closures over a state vector ---------------------------

def compile_numeric(e: Expr, slots: Mapping[str, int]) -> Callable:
    """Closure ``x -> float`` for an inlined, param-free expression."""
    if isinstance(e, Num):
        v = e.value
        return lambda x: v
    if isinstance(e, Bool):
        v = 1.0 if e.value else 0.0
        return lambda x: v
    if isinstance(e, Name):
        try:
            i = slots[e.id]
        except KeyError:
            raise EvalError(f"unbound name {e.id!r}", e.span) from None
        return lambda x: x[i]
    if isinstance(e, Unary):
        if e.op == "not":
            b = compile_bool(e, slots)
            return lambda x: 1.0 if b(x) else 0.0
        f = compile_numeric(e.operand, slots)
        return lambda x: -f(x)
    if isinstance(e, BinOp):
        a, b = compile_numeric(e.left, slots), compile_numeric(e.right, slots)
        op, span = e.op, e.span
        if op == "+":
            return lambda x: a(x) + b(x)
        if op == "-":
            return lambda x: a(x) - b(x)
        if op == "*":
            return lambda x: a(x) * b(x)
        if op == "/":
            return lambda x: _div(a(x), b(x), span)
        return lambda x: _pow(a(x), b(x), span)
    if isinstance(e, Call) and e.func == "__ind__":
        g = compile_bool(e.args[0], slots)
        return lambda x: 1.0 if g(x) else 0.0
    if isinstance(e, (Compare, Logic)):
        g = compile_bool(e, slots)
        return lambda x: 1.0 if g(x) else 0.0
    raise EvalError(f"cannot compile {to_source(e)} (call not inlined?)", getattr(e, "span", None))


def compile_bool(e: Expr, slots: Mapping[str, int]) -> Callable:
    if isinstance(e, Bool):
        v = e.value
        return lambda x: v
    if isinstance(e, Compare):
        a, b = compile_numeric(e.left, slots), compile_numeric(e.right, slots)
        op = _CMP[e.op]
        return lambda x: op(a(x), b(x))
    if isinstance(e, Logic):
        a, b = compile_bool(e.left, slots), compile_bool(e.right, slots)
        if e.op == "and":
            return lambda x: a(x) and b(x)
        return lambda x: a(x) or b(x)
    if isinstance(e, Unary) and e.op == "not":
        a = compile_bool(e.operand, slots)
        return lambda x: not a(x)
    f = compile_numeric(e, slots)
    return lambda x: f(x) != 0.0


def crossing_function(e: Expr) -> tuple[Expr, bool]:
    """Continuous function ``c`` with ``guard <=> c >= 0``.

    Returns ``(c, two_sided)``. Top-level equality ``a == b`` yields
    ``c = a - b`` with ``two_sided=True``: it is detected as a sign change of
    ``c`` in either direction. Strict and non-strict inequalities coincide
    (they differ on a measure-zero set).
    """
    if isinstance(e, Compare) and e.op == "==":
        return BinOp("-", e.left, e.right), True
    return _crossing(e), False


def _crossing(e: Expr) -> Expr:
    if isinstance(e, Bool):
        return Num(1.0 if e.value else -1.0)
    if isinstance(e, Compare):
        if e.op in (">=", ">"):
            return BinOp("-", e.left, e.right)
        if e.op in ("<=", "<"):
            return BinOp("-", e.right, e.left)
        raise EvalError(f"unsupported: '{e.op}' inside a compound guard", e.span)
    if isinstance(e, Logic):
        fn = "__min__" if e.op == "and" else "__max__"
        return Call(fn, (_crossing(e.left), _crossing(e.right)))
    if isinstance(e, Unary) and e.op == "not":
        return Unary("-", _crossing(e.operand))
    raise EvalError(f"guard is not boolean: {to_source(e)}", getattr(e, "span", None))


def compile_crossing(c: Expr, slots: Mapping[str, int]) -> Callable:
    if isinstance(c, Call) and c.func in ("__min__", "__max__"):
        a, b = compile_crossing(c.args[0], slots), compile_crossing(c.args[1], slots)
        if c.func == "__min__":
            return lambda x: min(a(x), b(x))
        return lambda x: max(a(x), b(x))
    if isinstance(c, Unary) and c.op == "-":
        a = compile_crossing(c.operand, slots)
        return lambda x: -a(x)
    return compile_numeric(c, slots)


# --- printing ---------------------------------------------------------------

_PREC = {"or": 1, "and": 2, "cmp": 3, "+": 4, "-": 4, "*": 5, "/": 5, "unary": 6, "^": 7, "atom": 8}


def _fmt_num(v: float) -> str:
    if math.isinf(v):
        return "1e999" if v > 0 else "(-1e999)"
    if v == int(v) and abs(v) < 1e15:
        s = str(int(v))
    else:
        s = repr(v)
    return f"({s})" if v < 0 else s


def to_source(e: Expr) -> str:
    """Render in the modelling-language syntax (re-parses to an equal tree)."""
    return _src(e)[0]


def _src(e: Expr) -> tuple[str, int]:
    if isinstance(e, Num):
        return _fmt_num(e.value), _PREC["atom"]
    if isinstance(e, Bool):
        return ("true" if e.value else "false"), _PREC["atom"]
    if isinstance(e, Name):
        return e.id, _PREC["atom"]
    if isinstance(e, Call):
        return f"{e.func}({','.join(_src(a)[0] for a in e.args)})", _PREC["atom"]
    if isinstance(e, Unary):
        s, p = _src(e.operand)
        if p < _PREC["unary"]:
            s = f"({s})"
        return (f"not {s}" if e.op == "not" else f"-{s}"), _PREC["unary"]
    if isinstance(e, Compare):
        prec, rassoc = _PREC["cmp"], False
        op = e.op
    elif isinstance(e, Logic):
        prec, rassoc, op = _PREC[e.op], False, e.op
    else:
        prec, op = _PREC[e.op], e.op
        rassoc = e.op == "^"
    ls, lp = _src(e.left)
    rs, rp = _src(e.right)
    if lp < prec or (rassoc and lp == prec) or (isinstance(e, Compare) and lp == prec):
        ls = f"({ls})"
    if rp < prec or (not rassoc and rp == prec):
        rs = f"({rs})"
    if op in ("+", "-", "*", "/", "^"):
        return f"{ls}{op}{rs}", prec
    return f"{ls} {op} {rs}", prec
