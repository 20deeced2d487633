"""Tokenizer and recursive-descent parser for ``.hype`` model files.

A file has a ``hype model <name>`` header and six sections
(``#definitions``, ``#mappings``, ``#subcomponents``, ``#components``,
``#controller``, ``#system``) in any order. ``//`` starts a comment.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..expr import Bool, BinOp, Call, Compare, Expr, Logic, Name, Num, Unary
from ..model import INIT, Par, Ref

__all__ = [
    "HypeSyntaxError", "SourceModel", "parse", "SECTIONS",
    "VarDecl", "ParamDecl", "FuncDecl", "InflDecl", "EventDecl", "BranchDecl",
    "TemplateDecl", "SubDecl", "Instantiate", "CompDecl", "StateDecl", "CompoundDecl",
]

SECTIONS = ("definitions", "mappings", "subcomponents", "components", "controller", "system")


class HypeSyntaxError(Exception):
    """Parse or elaboration diagnostic with a source position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message, self.line, self.col = message, line, col
        super().__init__(f"line {line}, column {col}: {message}" if line else message)


# --- declarations ---------------------------------------------------------------

@dataclass
class VarDecl:
    name: str
    init: Expr | None
    span: tuple


@dataclass
class ParamDecl:
    name: str
    value: Expr
    span: tuple


@dataclass
class FuncDecl:
    name: str
    params: tuple
    body: Expr
    kind: str  # 'function' | 'guard'
    span: tuple


@dataclass
class InflDecl:
    name: str
    variable: str
    span: tuple


@dataclass
class EventDecl:
    name: str
    guard: Expr | None
    resets: tuple  # ((var, Expr, span), ...)
    rate: Expr | None
    span: tuple
    synthetic: bool = False


@dataclass
class BranchDecl:
    events: tuple  # ((name, span), ...)
    strength: Expr
    itype: Expr
    span: tuple


@dataclass
class TemplateDecl:
    name: str
    formals: tuple
    branches: tuple
    span: tuple


@dataclass
class SubDecl:
    name: str
    branches: tuple
    influence: str
    span: tuple


@dataclass
class Instantiate:
    template: str
    args: tuple
    influence: str
    span: tuple


@dataclass
class CompDecl:
    name: str
    body: object  # Ref | Par | Instantiate (Par leaves may be Instantiate)
    span: tuple


@dataclass
class StateDecl:
    name: str
    prefixes: tuple  # ((event, next, span), ...); empty = nil
    span: tuple


@dataclass
class CompoundDecl:
    name: str
    body: object  # Ref | Par
    span: tuple


@dataclass
class SourceModel:
    """Section ASTs of one ``.hype`` file, before elaboration."""
    name: str
    text: str
    variables: list = field(default_factory=list)
    params: list = field(default_factory=list)
    functions: list = field(default_factory=list)
    influences: list = field(default_factory=list)
    events: list = field(default_factory=list)
    templates: list = field(default_factory=list)
    subcomponents: list = field(default_factory=list)
    components: list = field(default_factory=list)
    controllers: list = field(default_factory=list)
    system: object = None
    system_span: tuple = (0, 0)
    sections: dict = field(default_factory=dict)  # section -> (line, col)

    @property
    def event_names(self) -> list[str]:
        return [e.name for e in self.events]


# --- tokens ------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<section>\#[A-Za-z_]+)
  | (?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:->|:=|<\*>|\|\||>=|<=|==|!=|[-+*/^()\[\],;:.@=<>!])
""", re.VERBOSE)

KEYWORDS = {"var", "param", "function", "guard", "infl", "event", "and", "or", "not", "true", "false"}


@dataclass
class Tok:
    kind: str  # name num op section eof
    value: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    toks, line, col, pos = [], 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise HypeSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind, value = m.lastgroup, m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind not in ("ws", "comment"):
                toks.append(Tok(kind, value, line, col))
            col += len(value)
        pos = m.end()
    toks.append(Tok("eof", "", line, col))
    return toks


# --- parser -------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    # token helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def peek(self, k=1) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, value: str) -> bool:
        t = self.tok
        return t.kind in ("op", "name") and t.value == value

    def advance(self) -> Tok:
        t = self.tok
        self.i += 1
        return t

    def error(self, expected: str, tok: Tok | None = None):
        tok = tok or self.tok
        got = "end of input" if tok.kind == "eof" else repr(tok.value)
        raise HypeSyntaxError(f"expected {expected}, got {got}", tok.line, tok.col)

    def expect(self, value: str) -> Tok:
        if not self.at(value):
            self.error(f"'{value}'")
        return self.advance()

    def ident(self, what="identifier") -> Tok:
        t = self.tok
        if t.kind != "name" or t.value in KEYWORDS:
            self.error(what)
        return self.advance()

    def span(self, tok=None):
        tok = tok or self.tok
        return (tok.line, tok.col)

    # top level
    def parse(self) -> SourceModel:
        name = "model"
        if self.at("hype"):
            self.advance()
            if not self.at("model"):
                self.error("'model'")
            self.advance()
            name = self.ident("model name").value
        src = SourceModel(name=name, text=self.text)
        handlers = {
            "definitions": self.definitions, "mappings": self.mappings,
            "subcomponents": self.subcomponents, "components": self.components,
            "controller": self.controller, "system": self.system,
        }
        while self.tok.kind != "eof":
            t = self.tok
            if t.kind != "section":
                self.error("section header such as '#definitions'")
            sec = t.value[1:]
            if sec not in handlers:
                raise HypeSyntaxError(f"unknown section #{sec}", t.line, t.col)
            if sec in src.sections:
                raise HypeSyntaxError(f"duplicate section #{sec}", t.line, t.col)
            src.sections[sec] = (t.line, t.col)
            self.advance()
            while self.tok.kind not in ("section", "eof"):
                handlers[sec](src)
        missing = [s for s in SECTIONS if s not in src.sections]
        if missing:
            t = self.tok
            raise HypeSyntaxError(f"missing section(s): {', '.join('#' + s for s in missing)}",
                                  t.line, t.col)
        self._check_duplicates(src)
        if not any(e.name == INIT for e in src.events):
            src.events.append(EventDecl(INIT, None, (), None, (0, 0), synthetic=True))
        return src

    def _check_duplicates(self, src: SourceModel):
        groups = [
            ("definition", src.variables + src.params + src.functions),
            ("influence", src.influences),
            ("event", src.events),
            ("subcomponent or component",
             src.templates + src.subcomponents + src.components),
            ("controller", src.controllers),
        ]
        for label, decls in groups:
            seen = {}
            for d in decls:
                if d.name in seen:
                    raise HypeSyntaxError(f"duplicate {label} {d.name}", *d.span)
                seen[d.name] = d

    # #definitions
    def definitions(self, src):
        t = self.tok
        kw = t.value if t.kind == "name" else None
        if kw == "var":
            self.advance()
            name = self.ident("variable name")
            init = None
            if self.at("="):
                self.advance()
                init = self.expr()
            self.expect(";")
            src.variables.append(VarDecl(name.value, init, self.span(name)))
        elif kw == "param":
            self.advance()
            name = self.ident("parameter name")
            self.expect("=")
            value = self.expr()
            self.expect(";")
            src.params.append(ParamDecl(name.value, value, self.span(name)))
        elif kw in ("function", "guard"):
            self.advance()
            name = self.ident(f"{kw} name")
            self.expect("(")
            params = []
            if not self.at(")"):
                params.append(self.ident("parameter").value)
                while self.at(","):
                    self.advance()
                    params.append(self.ident("parameter").value)
            self.expect(")")
            self.expect("=")
            body = self.expr()
            self.expect(";")
            src.functions.append(FuncDecl(name.value, tuple(params), body, kw, self.span(name)))
        else:
            self.error("'var', 'param', 'function' or 'guard'")

    # #mappings
    def mappings(self, src):
        if self.at("infl"):
            self.advance()
            name = self.ident("influence name")
            self.expect(":->")
            var = self.ident("variable name")
            self.expect(";")
            src.influences.append(InflDecl(name.value, var.value, self.span(name)))
        elif self.at("event"):
            self.advance()
            name = self.ident("event name")
            self.expect("=")
            guard = None if self.at(":->") else self.expr()
            self.expect(":->")
            resets = []
            if self.tok.kind == "name" and self.peek().value == "=" and self.peek().kind == "op":
                resets.append(self.reset())
                while self.at(","):
                    self.advance()
                    resets.append(self.reset())
            rate = None
            if self.at("@"):
                self.advance()
                rate = self.expr()
            self.expect(";")
            src.events.append(EventDecl(name.value, guard, tuple(resets), rate, self.span(name)))
        else:
            self.error("'infl' or 'event'")

    def reset(self):
        var = self.ident("variable name")
        self.expect("=")
        return (var.value, self.expr(), self.span(var))

    # #subcomponents
    def subcomponents(self, src):
        name = self.ident("subcomponent name")
        formals = None
        if self.at("("):
            self.advance()
            formals = []
            if not self.at(")"):
                formals.append(self.ident("formal parameter").value)
                while self.at(","):
                    self.advance()
                    formals.append(self.ident("formal parameter").value)
            self.expect(")")
        self.expect(":=")
        branches = [self.branch()]
        while self.at("+"):
            self.advance()
            branches.append(self.branch())
        influence = None
        if self.at(":"):
            self.advance()
            influence = self.ident("influence name").value
        self.expect(";")
        if formals is not None:
            if influence is not None:
                raise HypeSyntaxError("unsupported: influence suffix on a template definition",
                                      name.line, name.col)
            src.templates.append(TemplateDecl(name.value, tuple(formals), tuple(branches),
                                              self.span(name)))
        else:
            if influence is None:
                self.error("':' followed by the influence name")
            src.subcomponents.append(SubDecl(name.value, tuple(branches), influence,
                                             self.span(name)))

    def branch(self) -> BranchDecl:
        start = self.tok
        events = [(self.ident("event name").value, self.span(start))]
        while self.at(","):
            self.advance()
            t = self.ident("event name")
            events.append((t.value, self.span(t)))
        self.expect(":")
        self.expect("[")
        strength = self.expr()
        self.expect(",")
        itype = self.expr()
        self.expect("]")
        return BranchDecl(tuple(events), strength, itype, self.span(start))

    # #components
    def components(self, src):
        name = self.ident("component name")
        if self.at("("):
            raise HypeSyntaxError("unsupported: parametric components", name.line, name.col)
        self.expect(":=")
        body = self.composition(allow_templates=True)
        self.expect(";")
        src.components.append(CompDecl(name.value, body, self.span(name)))

    def composition(self, allow_templates=False):
        left = self.comp_term(allow_templates)
        while self.at("<*>") or self.at("||"):
            op = self.advance().value
            right = self.comp_term(allow_templates)
            left = Par(left, right, None if op == "<*>" else frozenset())
        return left

    def comp_term(self, allow_templates):
        if self.at("("):
            self.advance()
            c = self.composition(allow_templates)
            self.expect(")")
            return c
        name = self.ident("component or controller name")
        if self.at("("):
            if not allow_templates:
                raise HypeSyntaxError("unsupported: template instantiation here",
                                      name.line, name.col)
            self.advance()
            args = []
            if not self.at(")"):
                args.append(self.expr())
                while self.at(","):
                    self.advance()
                    args.append(self.expr())
            self.expect(")")
            self.expect(":")
            infl = self.ident("influence name")
            return Instantiate(name.value, tuple(args), infl.value, self.span(name))
        return _SpannedRef(name.value, self.span(name))

    # #controller
    def controller(self, src):
        name = self.ident("controller name")
        if self.at("("):
            raise HypeSyntaxError("unsupported: template-defined controllers", name.line, name.col)
        self.expect(":=")
        t = self.tok
        if t.kind == "num" and t.value in ("0", "0.0"):
            self.advance()
            self.expect(";")
            src.controllers.append(StateDecl(name.value, (), self.span(name)))
            return
        if t.kind == "name" and self.peek().value == "." and self.peek().kind == "op":
            prefixes = [self.prefix()]
            while self.at("+"):
                self.advance()
                prefixes.append(self.prefix())
            self.expect(";")
            src.controllers.append(StateDecl(name.value, tuple(prefixes), self.span(name)))
            return
        body = self.composition()
        self.expect(";")
        src.controllers.append(CompoundDecl(name.value, body, self.span(name)))

    def prefix(self):
        ev = self.ident("event name")
        self.expect(".")
        t = self.tok
        if t.kind == "num" and float(t.value) == 0:
            self.advance()
            return (ev.value, "0", self.span(ev))
        nxt = self.ident("controller state")
        return (ev.value, nxt.value, self.span(ev))

    # #system
    def system(self, src):
        if src.system is not None:
            self.error("end of #system (only one system line is allowed)")
        t = self.tok
        body = self.composition()
        self.expect(";")
        src.system = body
        src.system_span = self.span(t)

    # expressions: or < and < not < comparison < +- < */ < unary < ^ < atom
    def expr(self) -> Expr:
        left = self.and_expr()
        while self.at("or"):
            t = self.advance()
            left = Logic("or", left, self.and_expr(), self.span(t))
        return left

    def and_expr(self):
        left = self.not_expr()
        while self.at("and"):
            t = self.advance()
            left = Logic("and", left, self.not_expr(), self.span(t))
        return left

    def not_expr(self):
        if self.at("not") or (self.at("!") and self.tok.kind == "op"):
            t = self.advance()
            return Unary("not", self.not_expr(), self.span(t))
        return self.comparison()

    def comparison(self):
        left = self.additive()
        if self.tok.kind == "op" and self.tok.value in (">=", "<=", ">", "<", "==", "!="):
            t = self.advance()
            left = Compare(t.value, left, self.additive(), self.span(t))
        return left

    def additive(self):
        left = self.term()
        while self.tok.kind == "op" and self.tok.value in ("+", "-"):
            t = self.advance()
            left = BinOp(t.value, left, self.term(), self.span(t))
        return left

    def term(self):
        left = self.unary()
        while self.tok.kind == "op" and self.tok.value in ("*", "/"):
            t = self.advance()
            left = BinOp(t.value, left, self.unary(), self.span(t))
        return left

    def unary(self):
        if self.tok.kind == "op" and self.tok.value in ("-", "+"):
            t = self.advance()
            operand = self.unary()
            if t.value == "+":
                return operand
            if isinstance(operand, Num):
                return Num(-operand.value, self.span(t))
            return Unary("-", operand, self.span(t))
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.value == "^":
            t = self.advance()
            return BinOp("^", base, self.unary(), self.span(t))
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(float(t.value), self.span(t))
        if t.kind == "name" and t.value in ("true", "false"):
            self.advance()
            return Bool(t.value == "true", self.span(t))
        if t.kind == "name" and t.value not in KEYWORDS:
            self.advance()
            if self.at("(") and self.tok.kind == "op":
                self.advance()
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.advance()
                        args.append(self.expr())
                self.expect(")")
                return Call(t.value, tuple(args), self.span(t))
            return Name(t.value, self.span(t))
        if self.at("(") and t.kind == "op":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.error("expression")


@dataclass(frozen=True)
class _SpannedRef(Ref):
    span: tuple = field(default=(0, 0), compare=False)


def parse(text: str) -> SourceModel:
    """Parse ``.hype`` source text into section ASTs.

    Raises HypeSyntaxError with line/column on malformed input, unknown or
    duplicate sections, and duplicate declarations.
    """
    return _Parser(text).parse()


def parse_expr(text: str) -> Expr:
    """Parse a single expression, e.g. ``"B >= maxB and not x < 2"``."""
    p = _Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        p.error("end of expression")
    return e
