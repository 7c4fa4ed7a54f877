"""AST for heuristic programs.

Nodes are immutable; source locations ride along but never take part in
equality, so ``parse(render(p)) == p`` compares structure only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple, Union

Loc = Tuple[int, int]  # (line, column), both 1-based
NOLOC: Loc = (0, 0)

CACHE = "cache"
KERNEL = "kernel"
MODES = (CACHE, KERNEL)


@dataclass(frozen=True, eq=False)
class Num:
    value: Union[int, float]
    loc: Loc = field(default=NOLOC, compare=False)

    @property
    def is_float(self) -> bool:
        return isinstance(self.value, float)

    # int 2 and float 2.0 are different literals
    def __eq__(self, other):
        return (
            isinstance(other, Num)
            and type(self.value) is type(other.value)
            and self.value == other.value
        )

    def __hash__(self):
        return hash((Num, type(self.value), self.value))


@dataclass(frozen=True)
class Name:
    id: str
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Unary:
    op: str  # "-" | "!"
    operand: "Expr"
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Ternary:
    cond: "Expr"
    then: "Expr"
    orelse: "Expr"
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    args: Tuple["Expr", ...]
    loc: Loc = field(default=NOLOC, compare=False)


Expr = Union[Num, Name, Unary, Binary, Ternary, Call]


@dataclass(frozen=True)
class Let:
    name: str
    value: Expr
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Assign:
    name: str
    op: str  # "=" | "+=" | "-="
    value: Expr
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class If:
    cond: Expr
    then: Tuple["Stmt", ...]
    orelse: Optional[Tuple["Stmt", ...]] = None
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Return:
    value: Expr
    loc: Loc = field(default=NOLOC, compare=False)


Stmt = Union[Let, Assign, If, Return]

ARITH_OPS = ("+", "-", "*", "/", "%")
CMP_OPS = ("<", "<=", ">", ">=", "==", "!=")
LOGIC_OPS = ("&&", "||")


@dataclass(frozen=True, eq=False)
class Program:
    """A parsed heuristic: statements, ending in a single ``return``."""

    body: Tuple[Stmt, ...]
    mode: str = CACHE
    source: str = ""

    def __eq__(self, other):
        return isinstance(other, Program) and self.mode == other.mode and self.body == other.body

    def __hash__(self):
        return hash((self.mode, self.body))

    @property
    def result(self) -> Expr:
        return self.body[-1].value  # type: ignore[union-attr]


def children(node) -> Tuple:
    """Direct sub-nodes (expressions and statements) in source order."""
    if isinstance(node, (Num, Name)):
        return ()
    if isinstance(node, Unary):
        return (node.operand,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    if isinstance(node, Ternary):
        return (node.cond, node.then, node.orelse)
    if isinstance(node, Call):
        return node.args
    if isinstance(node, (Let, Assign, Return)):
        return (node.value,)
    if isinstance(node, If):
        return (node.cond,) + node.then + (node.orelse or ())
    raise TypeError(f"not an AST node: {node!r}")


def walk(node) -> Iterator:
    """Pre-order traversal."""
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(children(n)))


def walk_program(p: Program) -> Iterator:
    for st in p.body:
        yield from walk(st)


def is_expr(node) -> bool:
    return isinstance(node, (Num, Name, Unary, Binary, Ternary, Call))
