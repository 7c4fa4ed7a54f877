"""Canonical pretty-printer. ``parse(render(p)) == p`` for every program."""
from __future__ import annotations

import math

from .nodes import Assign, Binary, Call, If, Let, Name, Num, Program, Return, Ternary, Unary

# binding strength; higher binds tighter
PREC = {
    "?:": 1,
    "||": 2,
    "&&": 3,
    "==": 4, "!=": 4,
    "<": 5, "<=": 5, ">": 5, ">=": 5,
    "+": 6, "-": 6,
    "*": 7, "/": 7, "%": 7,
    "unary": 8,
    "atom": 9,
}

INDENT = "  "


def format_number(v) -> str:
    if isinstance(v, bool):
        raise TypeError("booleans are not literals")
    if isinstance(v, int):
        if v < 0:
            raise ValueError("literals are non-negative; use unary minus")
        return str(v)
    if not math.isfinite(v) or v < 0 or math.copysign(1.0, v) < 0:
        raise ValueError(f"unrepresentable literal {v!r}")
    text = repr(v)
    # repr(1e16) == '1e+16' lexes as a float already; '5.0' keeps its dot
    return text


def _prec(e) -> int:
    if isinstance(e, Ternary):
        return PREC["?:"]
    if isinstance(e, Binary):
        return PREC[e.op]
    if isinstance(e, Unary):
        return PREC["unary"]
    return PREC["atom"]


def render_expr(e) -> str:
    if isinstance(e, Num):
        return format_number(e.value)
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Call):
        return f"{e.func}({', '.join(render_expr(a) for a in e.args)})"
    if isinstance(e, Unary):
        inner = render_expr(e.operand)
        if _prec(e.operand) < PREC["atom"]:
            inner = f"({inner})"
        return f"{e.op}{inner}"
    if isinstance(e, Binary):
        p = PREC[e.op]
        left = render_expr(e.left)
        right = render_expr(e.right)
        if _prec(e.left) < p:
            left = f"({left})"
        # left-associative: equal precedence on the right needs parentheses
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, Ternary):
        cond = render_expr(e.cond)
        if _prec(e.cond) <= PREC["?:"]:
            cond = f"({cond})"
        return f"{cond} ? {render_expr(e.then)} : {render_expr(e.orelse)}"
    raise TypeError(f"not an expression: {e!r}")


def _render_stmts(stmts, depth: int, out: list) -> None:
    pad = INDENT * depth
    for s in stmts:
        if isinstance(s, Let):
            out.append(f"{pad}let {s.name} = {render_expr(s.value)};")
        elif isinstance(s, Assign):
            out.append(f"{pad}{s.name} {s.op} {render_expr(s.value)};")
        elif isinstance(s, Return):
            out.append(f"{pad}return {render_expr(s.value)};")
        elif isinstance(s, If):
            out.append(f"{pad}if ({render_expr(s.cond)}) {{")
            _render_stmts(s.then, depth + 1, out)
            if s.orelse is not None:
                out.append(f"{pad}}} else {{")
                _render_stmts(s.orelse, depth + 1, out)
            out.append(f"{pad}}}")
        else:
            raise TypeError(f"not a statement: {s!r}")


def render(p: Program) -> str:
    out: list[str] = []
    _render_stmts(p.body, 0, out)
    return "\n".join(out)
