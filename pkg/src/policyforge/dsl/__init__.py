"""The heuristic language: parse, check, render, evaluate and mutate programs."""

from .checker import CheckFailed, CheckReport, Diagnostic, check_program, check_source
from .interp import EvalContext, compile_program, evaluate
from .nodes import CACHE, KERNEL, Program
from .parser import DSLSyntaxError, parse
from .render import render

__all__ = [
    "CACHE",
    "KERNEL",
    "CheckFailed",
    "CheckReport",
    "Diagnostic",
    "DSLSyntaxError",
    "EvalContext",
    "Program",
    "check_program",
    "check_source",
    "compile_program",
    "evaluate",
    "parse",
    "render",
]
