"""Evaluation: a reference tree-walker and a compiler to Python closures.

Cache mode computes in IEEE doubles; ``x / 0`` and ``x % 0`` are 0 and a NaN
result is reported as 0. Kernel mode computes in 64-bit integers that saturate
at the bounds, with C-style truncating division. Both evaluators implement the
same semantics; the tree-walker is the oracle the compiled form is tested
against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Protocol

from . import features
from .checker import require_checked
from .nodes import CACHE, KERNEL, Assign, Binary, Call, If, Let, Name, Num, Program, Return, Ternary, Unary, walk

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class Series(Protocol):
    def percentile(self, p: float) -> float: ...


class HistoryView(Protocol):
    def contains(self, obj_id) -> bool: ...
    def count(self, obj_id) -> int: ...
    def age_at_eviction(self, obj_id) -> int: ...


class _NoHistory:
    def contains(self, obj_id):
        return False

    def count(self, obj_id):
        return 0

    def age_at_eviction(self, obj_id):
        return 0


class _EmptySeries:
    def percentile(self, p):
        return 0


NO_HISTORY = _NoHistory()
EMPTY_SERIES = _EmptySeries()


@dataclass(frozen=True)
class EvalContext:
    """Bindings for one evaluation. Missing scalars read as 0."""

    mode: str
    values: Mapping[str, int | float]
    series: Mapping[str, Series] = field(default_factory=dict)
    history: HistoryView = NO_HISTORY

    def scalar(self, name: str):
        return self.values.get(name, 0)

    def get_series(self, name: str) -> Series:
        return self.series.get(name, EMPTY_SERIES)


# -- kernel arithmetic ---------------------------------------------------------


def sat(v: int) -> int:
    if v > INT64_MAX:
        return INT64_MAX
    if v < INT64_MIN:
        return INT64_MIN
    return v


def k_add(a, b):
    return sat(a + b)


def k_sub(a, b):
    return sat(a - b)


def k_mul(a, b):
    return sat(a * b)


def k_div(a, b):
    if b == 0:
        return 0
    q = abs(a) // abs(b)
    return sat(q if (a < 0) == (b < 0) else -q)


def k_mod(a, b):
    # remainder takes the sign of the dividend, as in C
    if b == 0:
        return 0
    r = abs(a) % abs(b)
    return r if a >= 0 else -r


def k_neg(a):
    return sat(-a)


def k_abs(a):
    return sat(abs(a))


# -- cache arithmetic ----------------------------------------------------------


def c_div(a, b):
    return a / b if b != 0 else 0.0


def c_mod(a, b):
    if b == 0:
        return 0.0
    try:
        return math.fmod(a, b)
    except ValueError:  # fmod(±inf, b)
        return math.nan


def _finish_cache(v: float) -> float:
    return 0.0 if v != v else v


# -- tree walker ---------------------------------------------------------------


class _Walker:
    def __init__(self, ctx: EvalContext):
        self.ctx = ctx
        self.kernel = ctx.mode == KERNEL
        self.env: dict = {}

    def run(self, body):
        for s in body:
            if isinstance(s, Return):
                return self.expr(s.value)
            self.stmt(s)
        raise AssertionError("program without return")

    def stmt(self, s):
        if isinstance(s, Let):
            self.env[s.name] = self.expr(s.value)
        elif isinstance(s, Assign):
            v = self.expr(s.value)
            if s.op == "=":
                self.env[s.name] = v
            elif s.op == "+=":
                self.env[s.name] = self.arith("+", self.env[s.name], v)
            else:
                self.env[s.name] = self.arith("-", self.env[s.name], v)
        elif isinstance(s, If):
            block = s.then if self.truth(self.expr(s.cond)) else (s.orelse or ())
            for t in block:
                self.stmt(t)

    def truth(self, v) -> bool:
        return v != 0 or v != v

    def boolean(self, b: bool):
        if self.kernel:
            return 1 if b else 0
        return 1.0 if b else 0.0

    def arith(self, op, a, b):
        if self.kernel:
            return {"+": k_add, "-": k_sub, "*": k_mul, "/": k_div, "%": k_mod}[op](a, b)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return c_div(a, b)
        return c_mod(a, b)

    def expr(self, e):
        if isinstance(e, Num):
            return sat(e.value) if self.kernel else float(e.value)
        if isinstance(e, Name):
            if e.id in self.env:
                return self.env[e.id]
            v = self.ctx.scalar(e.id)
            return sat(int(v)) if self.kernel else float(v)
        if isinstance(e, Unary):
            v = self.expr(e.operand)
            if e.op == "-":
                return k_neg(v) if self.kernel else -v
            return self.boolean(not self.truth(v))
        if isinstance(e, Binary):
            op = e.op
            if op == "&&":
                left = self.truth(self.expr(e.left))
                return self.boolean(left and self.truth(self.expr(e.right)))
            if op == "||":
                left = self.truth(self.expr(e.left))
                return self.boolean(left or self.truth(self.expr(e.right)))
            a = self.expr(e.left)
            b = self.expr(e.right)
            if op in ("+", "-", "*", "/", "%"):
                return self.arith(op, a, b)
            return self.boolean(
                {
                    "<": a < b,
                    "<=": a <= b,
                    ">": a > b,
                    ">=": a >= b,
                    "==": a == b,
                    "!=": a != b,
                }[op]
            )
        if isinstance(e, Ternary):
            return self.expr(e.then) if self.truth(self.expr(e.cond)) else self.expr(e.orelse)
        if isinstance(e, Call):
            return self.call(e)
        raise TypeError(f"bad node {e!r}")

    def call(self, e: Call):
        f = e.func
        if f == "percentile":
            return float(self.ctx.get_series(e.args[0].id).percentile(float(e.args[1].value)))
        if f in features.HISTORY_FUNCS:
            arg = e.args[0]
            if isinstance(arg, Name) and arg.id == "obj_id" and "obj_id" not in self.env:
                key = self.ctx.scalar("obj_id")
            else:
                key = self.expr(arg)
            h = self.ctx.history
            if f == "history_contains":
                return self.boolean(h.contains(key))
            if f == "history_count":
                return float(h.count(key))
            return float(h.age_at_eviction(key))
        args = [self.expr(a) for a in e.args]
        if f == "abs":
            return k_abs(args[0]) if self.kernel else abs(args[0])
        if f == "min":
            return min(args[0], args[1])
        return max(args[0], args[1])


def evaluate(p: Program, ctx: EvalContext):
    """Score ``p`` in ``ctx`` by walking the tree. ``p`` must already pass the checker."""
    if ctx.mode != p.mode:
        raise ValueError(f"context mode {ctx.mode!r} does not match program mode {p.mode!r}")
    v = _Walker(ctx).run(p.body)
    return v if p.mode == KERNEL else _finish_cache(v)


# -- compiler ------------------------------------------------------------------


class _Emitter:
    """Translate a checked AST to the body of a Python function."""

    def __init__(self, mode: str):
        self.mode = mode
        self.kernel = mode == KERNEL
        self.lines: list[str] = []
        self.tmp = 0
        self.series_used: set = set()
        self.history_used = False
        self.pcts: dict = {}  # (series, p) -> local holding its value

    def fresh(self) -> str:
        self.tmp += 1
        return f"_t{self.tmp}"

    def block(self, stmts, depth):
        pad = "    " * depth
        if not stmts:
            self.lines.append(pad + "pass")
        for s in stmts:
            if isinstance(s, Let):
                self.lines.append(f"{pad}v_{s.name} = {self.expr(s.value)}")
            elif isinstance(s, Assign):
                rhs = self.expr(s.value)
                if s.op == "=":
                    self.lines.append(f"{pad}v_{s.name} = {rhs}")
                else:
                    op = s.op[0]
                    self.lines.append(f"{pad}v_{s.name} = {self.arith(op, 'v_' + s.name, '(' + rhs + ')')}")
            elif isinstance(s, If):
                self.lines.append(f"{pad}if {self.cond(s.cond)}:")
                self.block(s.then, depth + 1)
                if s.orelse is not None:
                    self.lines.append(f"{pad}else:")
                    self.block(s.orelse, depth + 1)
            elif isinstance(s, Return):
                v = self.expr(s.value)
                if self.kernel:
                    self.lines.append(f"{pad}return {v}")
                else:
                    self.lines.append(f"{pad}_r = {v}")
                    self.lines.append(f"{pad}return 0.0 if _r != _r else _r")

    def arith(self, op, a, b):
        if self.kernel:
            fn = {"+": "k_add", "-": "k_sub", "*": "k_mul", "/": "k_div", "%": "k_mod"}[op]
            return f"{fn}({a}, {b})"
        if op in ("/", "%") and b == "0.0":
            return "0.0"  # x / 0 and x % 0 are 0 in cache mode
        if op == "/":
            if _nonzero_literal(b):
                return f"({a} / {b})"
            t = self.fresh()
            return f"({a} / {t} if ({t} := {b}) != 0 else 0.0)"
        if op == "%":
            return f"c_mod({a}, {b})"
        return f"({a} {op} {b})"

    def cond(self, e) -> str:
        """Python boolean expression for the truth value of ``e``."""
        if isinstance(e, Binary):
            if e.op == "&&":
                return f"({self.cond(e.left)} and {self.cond(e.right)})"
            if e.op == "||":
                return f"({self.cond(e.left)} or {self.cond(e.right)})"
            if e.op in ("<", "<=", ">", ">=", "==", "!="):
                return f"({self.expr(e.left)} {e.op} {self.expr(e.right)})"
        if isinstance(e, Unary) and e.op == "!":
            return f"(not {self.cond(e.operand)})"
        if isinstance(e, Call) and e.func == "history_contains":
            self.history_used = True
            arg = e.args[0]
            key = "oid" if isinstance(arg, Name) and arg.id == "obj_id" else self.expr(arg)
            return f"h_contains({key})"
        return f"_truth({self.expr(e)})"

    def expr(self, e) -> str:
        one, zero = ("1", "0") if self.kernel else ("1.0", "0.0")
        if isinstance(e, Num):
            return repr(sat(e.value)) if self.kernel else repr(float(e.value))
        if isinstance(e, Name):
            return f"a_{e.id}" if e.id in self.scalars else f"v_{e.id}"
        if isinstance(e, Unary):
            v = self.expr(e.operand)
            if e.op == "-":
                return f"k_neg({v})" if self.kernel else f"(-{v})"
            return f"({zero} if {self.cond(e.operand)} else {one})"
        if isinstance(e, Binary):
            if e.op in ("+", "-", "*", "/", "%"):
                right = self.expr(e.right)
                if not self.kernel and e.op in ("/", "%") and right == "0.0":
                    return "0.0"  # the left operand is pure, so it need not run
                return self.arith(e.op, self.expr(e.left), right)
            return f"({one} if {self.cond(e)} else {zero})"
        if isinstance(e, Ternary):
            return f"({self.expr(e.then)} if {self.cond(e.cond)} else {self.expr(e.orelse)})"
        if isinstance(e, Call):
            f = e.func
            if f == "percentile":
                name = e.args[0].id
                self.series_used.add(name)
                key = (name, float(e.args[1].value))
                if key not in self.pcts:
                    self.pcts[key] = f"_p{len(self.pcts)}"
                return self.pcts[key]
            if f in features.HISTORY_FUNCS:
                self.history_used = True
                arg = e.args[0]
                key = "oid" if isinstance(arg, Name) and arg.id == "obj_id" else self.expr(arg)
                if f == "history_contains":
                    return f"(1.0 if h_contains({key}) else 0.0)"
                if f == "history_count":
                    return f"float(h_count({key}))"
                return f"float(h_age({key}))"
            args = [self.expr(a) for a in e.args]
            if f == "abs":
                return f"k_abs({args[0]})" if self.kernel else f"abs({args[0]})"
            return f"{f}({args[0]}, {args[1]})"
        raise TypeError(f"bad node {e!r}")


def _nonzero_literal(text: str) -> bool:
    try:
        return float(text) != 0
    except ValueError:
        return False


def _truth(v):
    # nonzero is true; NaN is nonzero
    return v != 0 or v != v


_RUNTIME = {
    "k_add": k_add,
    "k_sub": k_sub,
    "k_mul": k_mul,
    "k_div": k_div,
    "k_mod": k_mod,
    "k_neg": k_neg,
    "k_abs": k_abs,
    "c_mod": c_mod,
    "_truth": _truth,
}


@dataclass(frozen=True)
class CompiledProgram:
    """A program lowered to a Python function.

    Cache mode: ``fn(a_now, a_obj_id, a_count, a_last_access_time,
    a_insert_time, a_size, oid, s_counts, s_ages, s_sizes, h_contains,
    h_count, h_age)`` where scalars are floats, ``oid`` is the exact object id,
    ``s_*`` map a percentile to a value and ``h_*`` query eviction history.
    Kernel mode: ``fn(*scalars)`` in :data:`features.KERNEL_SCALARS` order.
    """

    program: Program
    fn: Callable
    python_source: str
    series_used: frozenset
    history_used: bool

    def __call__(self, *args):
        return self.fn(*args)

    def evaluate(self, ctx: EvalContext):
        """Same contract as :func:`evaluate`, through the compiled path."""
        if self.program.mode == KERNEL:
            return self.fn(*(sat(int(ctx.scalar(n))) for n in features.KERNEL_SCALARS))
        args = [float(ctx.scalar(n)) for n in features.CACHE_SCALARS]
        h = ctx.history
        return self.fn(
            *args,
            ctx.scalar("obj_id"),
            ctx.get_series("counts").percentile,
            ctx.get_series("ages").percentile,
            ctx.get_series("sizes").percentile,
            h.contains,
            h.count,
            h.age_at_eviction,
        )


def _reads(stmts, out: set) -> set:
    for s in stmts:
        for n in walk(s):
            if isinstance(n, Name):
                out.add(n.id)
    return out


def _drop_stores(stmts, live: set) -> tuple:
    out = []
    for s in stmts:
        if isinstance(s, (Let, Assign)) and s.name not in live:
            continue
        if isinstance(s, If):
            then = _drop_stores(s.then, live)
            orelse = _drop_stores(s.orelse, live) if s.orelse is not None else None
            if not then and not orelse:
                continue  # conditions are pure, so an empty if does nothing
            s = If(s.cond, then, orelse or None, s.loc)
        out.append(s)
    return tuple(out)


def prune_dead_stores(body) -> tuple:
    """Remove stores to variables nothing reads; every expression is pure."""
    body = tuple(body)
    while True:
        # names read by expressions; assignment targets are not reads
        live = set()
        for s in body:
            for n in walk(s):
                if isinstance(n, (Let, Assign)):
                    _reads((n.value,), live)
                elif isinstance(n, If):
                    _reads((n.cond,), live)
                elif isinstance(n, Return):
                    _reads((n.value,), live)
        pruned = _drop_stores(body, live)
        if pruned == body:
            return body
        body = pruned


def compile_program(p: Program, checked: bool = False) -> CompiledProgram:
    if not checked:
        require_checked(p)
    em = _Emitter(p.mode)
    em.scalars = set(features.scalars(p.mode))
    em.block(prune_dead_stores(p.body), 1)
    # percentile values are fixed for one call, so each distinct query runs once
    hoisted = [f"    {v} = float(s_{name}({q!r}))" for (name, q), v in em.pcts.items()]
    em.lines[:0] = hoisted
    if p.mode == KERNEL:
        params = ", ".join(f"a_{n}" for n in features.KERNEL_SCALARS)
    else:
        params = ", ".join(f"a_{n}" for n in features.CACHE_SCALARS)
        params += ", oid, s_counts, s_ages, s_sizes, h_contains, h_count, h_age"
    src = f"def _heuristic({params}):\n" + "\n".join(em.lines) + "\n"
    ns = dict(_RUNTIME)
    exec(compile(src, "<heuristic>", "exec"), ns)
    return CompiledProgram(p, ns["_heuristic"], src, frozenset(em.series_used), em.history_used)
