"""Static checker: binding, arity and typing rules, plus kernel-mode restrictions.

Diagnostics are data. Kernel mode rejects fractional literals and any ``/`` or
``%`` whose divisor is not provably nonzero: a nonzero literal, ``max`` with a
positive literal argument, or an expression guarded by an enclosing
``if (e != 0)`` / ``e > 0`` (``e == 0`` guards the else branch; ternaries work
the same way). Assigning to a variable used in a guard ends that guard.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

from . import features
from .nodes import (
    CACHE,
    KERNEL,
    Assign,
    Binary,
    Call,
    If,
    Let,
    Loc,
    Name,
    Num,
    Program,
    Return,
    Ternary,
    Unary,
    walk,
)
from .parser import DSLSyntaxError, parse

SYNTAX = "syntax"
UNKNOWN_IDENTIFIER = "unknown-identifier"
TYPE = "type"
FORBIDDEN = "forbidden-construct"
UNGUARDED_DIVISION = "unguarded-division"
CATEGORIES = (SYNTAX, UNKNOWN_IDENTIFIER, TYPE, FORBIDDEN, UNGUARDED_DIVISION)

INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class Diagnostic:
    loc: Loc
    category: str
    message: str

    def __str__(self):
        return f"{self.loc[0]}:{self.loc[1]}: [{self.category}] {self.message}"

    def to_dict(self) -> dict:
        return {"line": self.loc[0], "column": self.loc[1], "category": self.category, "message": self.message}


@dataclass(frozen=True)
class CheckReport:
    diagnostics: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    @property
    def categories(self) -> set:
        return {d.category for d in self.diagnostics}

    def feedback(self) -> str:
        return "\n".join(str(d) for d in self.diagnostics)


class CheckFailed(Exception):
    def __init__(self, report: CheckReport):
        super().__init__(report.feedback())
        self.report = report


@dataclass
class _Guard:
    expr: object
    alive: bool = True
    names: frozenset = field(default_factory=frozenset)


def _names(e) -> frozenset:
    return frozenset(n.id for n in walk(e) if isinstance(n, Name))


def _nonzero_guards(cond, positive: bool) -> List[object]:
    """Expressions known nonzero when ``cond`` is true (``positive``) or false."""
    out = []
    if isinstance(cond, Binary):
        if positive and cond.op == "&&":
            return _nonzero_guards(cond.left, True) + _nonzero_guards(cond.right, True)
        if not positive and cond.op == "||":
            return _nonzero_guards(cond.left, False) + _nonzero_guards(cond.right, False)
        zero_r = isinstance(cond.right, Num) and cond.right.value == 0
        zero_l = isinstance(cond.left, Num) and cond.left.value == 0
        if positive:
            if cond.op == "!=" and zero_r or cond.op == ">" and zero_r:
                out.append(cond.left)
            if cond.op == "!=" and zero_l or cond.op == "<" and zero_l:
                out.append(cond.right)
        else:
            if cond.op == "==" and zero_r:
                out.append(cond.left)
            if cond.op == "==" and zero_l:
                out.append(cond.right)
    return out


def _literal_nonzero(e) -> bool:
    if isinstance(e, Unary) and e.op == "-":
        return _literal_nonzero(e.operand)
    return isinstance(e, Num) and e.value != 0


def _positive_literal(e) -> bool:
    return isinstance(e, Num) and e.value > 0


class _Checker:
    def __init__(self, mode: str):
        features.check_mode(mode)
        self.mode = mode
        self.scalars = set(features.scalars(mode))
        self.series = set(features.series(mode))
        self.funcs = features.funcs(mode)
        self.diags: List[Diagnostic] = []
        self.scopes: List[set] = [set()]
        self.guards: List[_Guard] = []

    def diag(self, node, category: str, message: str):
        self.diags.append(Diagnostic(getattr(node, "loc", (0, 0)), category, message))

    def declared(self, name: str) -> bool:
        return any(name in s for s in self.scopes)

    # -- statements --

    def program(self, p: Program):
        if not p.body or not isinstance(p.body[-1], Return):
            self.diag(p.body[-1] if p.body else None, FORBIDDEN, "program must end with 'return'")
        self.block(p.body, top=True)

    def block(self, stmts, top: bool = False):
        for i, s in enumerate(stmts):
            if isinstance(s, Return):
                if not (top and i == len(stmts) - 1):
                    self.diag(s, FORBIDDEN, "'return' must be the last top-level statement")
                self.expr(s.value)
            elif isinstance(s, Let):
                self.expr(s.value)
                if s.name in self.scalars or s.name in self.series or s.name in self.funcs:
                    self.diag(s, FORBIDDEN, f"'{s.name}' shadows a built-in name")
                elif self.declared(s.name):
                    self.diag(s, FORBIDDEN, f"'{s.name}' is already declared")
                self.scopes[-1].add(s.name)
            elif isinstance(s, Assign):
                self.expr(s.value)
                if s.op not in ("=", "+=", "-="):
                    self.diag(s, SYNTAX, f"bad assignment operator {s.op!r}")
                if s.name in self.scalars or s.name in self.series:
                    self.diag(s, FORBIDDEN, f"cannot assign to feature '{s.name}'")
                elif not self.declared(s.name):
                    self.diag(s, UNKNOWN_IDENTIFIER, f"assignment to undeclared variable '{s.name}'")
                self.invalidate(s.name)
            elif isinstance(s, If):
                self.expr(s.cond)
                self.branch(s.then, _nonzero_guards(s.cond, True))
                if s.orelse is not None:
                    self.branch(s.orelse, _nonzero_guards(s.cond, False))
            else:
                self.diag(s, SYNTAX, f"unknown statement {type(s).__name__}")

    def branch(self, stmts, guards):
        pushed = [_Guard(g, True, _names(g)) for g in guards]
        self.guards.extend(pushed)
        self.scopes.append(set())
        self.block(stmts)
        self.scopes.pop()
        del self.guards[len(self.guards) - len(pushed):]

    def invalidate(self, name: str):
        for g in self.guards:
            if name in g.names:
                g.alive = False

    def guarded(self, divisor) -> bool:
        if _literal_nonzero(divisor):
            return True
        if (
            isinstance(divisor, Call)
            and divisor.func == "max"
            and len(divisor.args) == 2
            and any(_positive_literal(a) for a in divisor.args)
        ):
            return True
        return any(g.alive and g.expr == divisor for g in self.guards)

    # -- expressions --

    def expr(self, e):
        if isinstance(e, Num):
            if self.mode == KERNEL:
                if e.is_float:
                    self.diag(e, FORBIDDEN, f"fractional literal {e.value!r} not allowed in kernel mode")
                elif e.value > INT64_MAX:
                    self.diag(e, FORBIDDEN, "integer literal exceeds 64 bits")
        elif isinstance(e, Name):
            if e.id in self.series:
                self.diag(e, TYPE, f"series '{e.id}' can only be used inside percentile()")
            elif e.id in self.funcs:
                self.diag(e, TYPE, f"'{e.id}' is a function, not a value")
            elif e.id not in self.scalars and not self.declared(e.id):
                self.diag(e, UNKNOWN_IDENTIFIER, f"unknown identifier '{e.id}'")
        elif isinstance(e, Unary):
            if e.op not in ("-", "!"):
                self.diag(e, SYNTAX, f"bad unary operator {e.op!r}")
            self.expr(e.operand)
        elif isinstance(e, Binary):
            self.expr(e.left)
            self.expr(e.right)
            if e.op in ("/", "%") and self.mode == KERNEL and not self.guarded(e.right):
                self.diag(e, UNGUARDED_DIVISION, f"divisor of '{e.op}' may be zero; wrap it as max(1, ...) or guard it")
        elif isinstance(e, Ternary):
            self.expr(e.cond)
            for sub, guards in ((e.then, _nonzero_guards(e.cond, True)), (e.orelse, _nonzero_guards(e.cond, False))):
                pushed = [_Guard(g, True, _names(g)) for g in guards]
                self.guards.extend(pushed)
                self.expr(sub)
                del self.guards[len(self.guards) - len(pushed):]
        elif isinstance(e, Call):
            self.call(e)
        else:
            self.diag(e, SYNTAX, f"unknown expression {type(e).__name__}")

    def call(self, e: Call):
        if e.func not in self.funcs:
            self.diag(e, UNKNOWN_IDENTIFIER, f"unknown function '{e.func}'")
            for a in e.args:
                self.expr(a)
            return
        arity = self.funcs[e.func]
        if len(e.args) != arity:
            self.diag(e, TYPE, f"'{e.func}' takes {arity} argument(s), got {len(e.args)}")
            for a in e.args:
                self.expr(a)
            return
        if e.func == "percentile":
            s, p = e.args
            if not (isinstance(s, Name) and s.id in self.series):
                self.diag(e, TYPE, f"percentile() needs a series ({', '.join(sorted(self.series))}) as first argument")
                self.expr(s)
            if not isinstance(p, Num):
                self.diag(e, TYPE, "percentile() needs a numeric literal as second argument")
                self.expr(p)
            elif not 0 <= p.value <= 1:
                self.diag(p, TYPE, f"percentile {p.value!r} outside [0, 1]")
            return
        for a in e.args:
            self.expr(a)


def check_program(p: Program, mode: Optional[str] = None) -> CheckReport:
    c = _Checker(mode or p.mode)
    c.program(p)
    return CheckReport(tuple(c.diags))


def check_source(source: str, mode: str = CACHE) -> tuple[Optional[Program], CheckReport]:
    """Parse and check; syntax errors come back as a ``syntax`` diagnostic."""
    try:
        prog = parse(source, mode)
    except DSLSyntaxError as exc:
        return None, CheckReport((Diagnostic(exc.loc, SYNTAX, exc.message),))
    return prog, check_program(prog)


def require_checked(p: Program) -> None:
    report = check_program(p)
    if not report.ok:
        raise CheckFailed(report)
