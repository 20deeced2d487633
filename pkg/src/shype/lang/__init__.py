"""The ``.hype`` modelling language: parse, elaborate, render."""
from .parser import HypeSyntaxError, SourceModel, parse, parse_expr
from .elaborate import elaborate, load_model, load_model_file
from .render import isomorphic, render

__all__ = ["HypeSyntaxError", "SourceModel", "parse", "parse_expr", "elaborate", "load_model",
           "load_model_file", "render", "isomorphic"]
