"""Structural variation operators: mutation, homologous crossover and a
grammar sampler for fresh programs. Every operator returns a program that
passes the checker; edits that fail are retried and finally dropped.
"""
from __future__ import annotations

import dataclasses
import math
import random
from typing import Iterable, List, Optional, Sequence

from . import features
from .checker import check_program
from .library import donor_exprs
from .nodes import (
    CMP_OPS,
    KERNEL,
    Assign,
    Binary,
    Call,
    If,
    Let,
    Name,
    Num,
    Program,
    Return,
    Ternary,
    Unary,
    is_expr,
    walk,
    walk_program,
)
from .render import render

MAX_ATTEMPTS = 12
MAX_NODES = 160

CACHE_WEIGHTS = (0.5, 1, 2, 5, 10, 20, 50, 100, 1000)
KERNEL_WEIGHTS = (1, 2, 3, 4, 8, 10)


def node_count(p: Program) -> int:
    return sum(1 for _ in walk_program(p))


def _finish(body, mode) -> Program:
    prog = Program(tuple(body), mode)
    return Program(prog.body, mode, render(prog))


# -- paths ---------------------------------------------------------------------
# A path is a tuple of (field, index) steps from the Program root; index is
# None for scalar fields.


def _get(node, step):
    fld, idx = step
    v = getattr(node, fld)
    return v if idx is None else v[idx]


def _set(node, step, new):
    fld, idx = step
    if idx is None:
        return dataclasses.replace(node, **{fld: new})
    seq = list(getattr(node, fld))
    if new is None:
        del seq[idx]
    else:
        seq[idx] = new
    return dataclasses.replace(node, **{fld: tuple(seq)})


def replace_at(p: Program, path, new) -> Program:
    """Return ``p`` with the node at ``path`` replaced (``None`` deletes a statement)."""

    def rec(node, steps):
        if len(steps) == 1:
            return _set(node, steps[0], new)
        child = _get(node, steps[0])
        return _set(node, steps[0], rec(child, steps[1:]))

    body = rec(_Root(p.body), path).body
    return Program(body, p.mode)


@dataclasses.dataclass(frozen=True)
class _Root:
    body: tuple


def get_at(p: Program, path):
    node = _Root(p.body)
    for step in path:
        node = _get(node, step)
    return node


def _expr_fields(e):
    if isinstance(e, Unary):
        return [("operand", None)]
    if isinstance(e, Binary):
        return [("left", None), ("right", None)]
    if isinstance(e, Ternary):
        return [("cond", None), ("then", None), ("orelse", None)]
    if isinstance(e, Call):
        return [("args", i) for i in range(len(e.args))]
    return []


def expr_sites(p: Program):
    """(path, expr, in_percentile) for every expression node."""
    out = []

    def rec_expr(e, path, in_pct):
        out.append((path, e, in_pct))
        pct = isinstance(e, Call) and e.func == "percentile"
        for step in _expr_fields(e):
            rec_expr(_get(e, step), path + (step,), in_pct or pct)

    def rec_stmts(stmts, path, fld):
        for i, s in enumerate(stmts):
            sp = path + ((fld, i),)
            if isinstance(s, (Let, Assign, Return)):
                rec_expr(s.value, sp + (("value", None),), False)
            elif isinstance(s, If):
                rec_expr(s.cond, sp + (("cond", None),), False)
                rec_stmts(s.then, sp, "then")
                if s.orelse is not None:
                    rec_stmts(s.orelse, sp, "orelse")

    rec_stmts(p.body, (), "body")
    return out


def stmt_sites(p: Program):
    out = []

    def rec(stmts, path, fld):
        for i, s in enumerate(stmts):
            sp = path + ((fld, i),)
            out.append((sp, s))
            if isinstance(s, If):
                rec(s.then, sp, "then")
                if s.orelse is not None:
                    rec(s.orelse, sp, "orelse")

    rec(p.body, (), "body")
    return out


def _visible_lets(p: Program) -> List[str]:
    # top-level lets are visible to every later top-level statement
    return [s.name for s in p.body if isinstance(s, Let)]


# -- grammar sampler -----------------------------------------------------------


class _Sampler:
    def __init__(self, rng: random.Random, mode: str, names: Sequence[str] = ()):
        self.rng = rng
        self.mode = mode
        self.kernel = mode == KERNEL
        self.scalars = list(features.scalars(mode))
        if self.kernel:
            # favour the named features over the 40 history slots
            self.scalars = list(features.KERNEL_SCALARS[:10]) * 4 + list(features.KERNEL_HISTORY)
        self.names = list(names)

    def literal(self):
        r = self.rng
        if self.kernel:
            return Num(r.choice((0, 1, 2, 3, 4, 8, 10, 100, 1000, 1500)))
        return Num(r.choice((0, 1, 2, 3, 5, 10, 20, 50, 100, 300, 500, 1000, 0.5, 1.5)))

    def leaf(self):
        r = self.rng
        if self.names and r.random() < 0.2:
            return Name(r.choice(self.names))
        if r.random() < 0.35:
            return self.literal()
        return Name(r.choice(self.scalars))

    def cond(self, depth):
        return Binary(self.rng.choice(CMP_OPS), self.expr(depth - 1), self.expr(depth - 1))

    def expr(self, depth: int):
        r = self.rng
        if depth <= 0 or r.random() < 0.3:
            return self.leaf()
        k = r.random()
        if k < 0.45:
            op = r.choice(("+", "-", "*", "/", "%") if not self.kernel else ("+", "-", "*", "/"))
            right = self.expr(depth - 1)
            if op in ("/", "%") and self.kernel:
                right = Call("max", (Num(1), right))
            return Binary(op, self.expr(depth - 1), right)
        if k < 0.6:
            return Ternary(self.cond(depth), self.expr(depth - 1), self.expr(depth - 1))
        if k < 0.72:
            return Call(r.choice(("min", "max")), (self.expr(depth - 1), self.expr(depth - 1)))
        if k < 0.77:
            return Call("abs", (self.expr(depth - 1),))
        if not self.kernel and k < 0.88:
            series = r.choice(features.CACHE_SERIES)
            return Call("percentile", (Name(series), Num(r.choice((0.1, 0.25, 0.5, 0.7, 0.75, 0.9, 0.99)))))
        if not self.kernel:
            return Call(r.choice(features.HISTORY_FUNCS), (Name("obj_id"),))
        return self.cond(depth)

    def program(self, depth: int = 3) -> Program:
        r = self.rng
        body = []
        n_lets = r.randint(0, 2)
        names = []
        for i in range(n_lets):
            name = f"x{i}"
            body.append(Let(name, self.expr(depth)))
            names.append(name)
            self.names = list(names)
        if names and r.random() < 0.6:
            tgt = r.choice(names)
            body.append(If(self.cond(depth - 1), (Assign(tgt, r.choice(("+=", "-=")), self.expr(depth - 1)),)))
        body.append(Return(self.expr(depth)))
        return _finish(body, self.mode)


def random_program(seed_or_rng, mode: str, depth: int = 3) -> Program:
    """Sample a checked program from the grammar."""
    rng = seed_or_rng if isinstance(seed_or_rng, random.Random) else random.Random(seed_or_rng)
    for _ in range(200):
        p = _Sampler(rng, mode).program(depth)
        if check_program(p).ok and node_count(p) <= MAX_NODES:
            return p
    # the sampler guards its own divisions, so this is unreachable in practice
    return _finish([Return(Name(features.scalars(mode)[0]))], mode)


# -- mutation ------------------------------------------------------------------


def _perturb_number(rng: random.Random, v, kernel: bool, unit: bool):
    if unit:  # percentile argument stays in [0, 1]
        f = rng.uniform(1.1, 2.0)
        nv = v * f if rng.random() < 0.5 else v / f
        nv = float(f"{min(1.0, max(0.0, nv)):.3g}")
        return nv if nv != v else None
    if isinstance(v, int) and (kernel or rng.random() < 0.5):
        if rng.random() < 0.5:
            nv = v + rng.choice((-1, 1))
            return nv if nv >= 0 else v + 1
        f = rng.uniform(1.1, 2.0)
        nv = int(round(v * f if rng.random() < 0.5 else v / f))
        return nv if nv != v else v + 1
    f = rng.uniform(1.1, 2.0)
    nv = float(v) * f if rng.random() < 0.5 else float(v) / f
    nv = float(f"{nv:.6g}")
    if not math.isfinite(nv) or nv > 1e300:
        return None
    return nv


class _Mutator:
    def __init__(self, rng: random.Random, mode: str, donors: Sequence = ()):
        self.rng = rng
        self.mode = mode
        self.kernel = mode == KERNEL
        self.donors = list(donor_exprs(mode)) + list(donors)
        self.ops = (
            self.perturb_literal,
            self.swap_comparison,
            self.wrap_weighted,
            self.insert_if,
            self.delete_if,
            self.replace_identifier,
            self.graft,
        )

    def pick(self, items):
        return self.rng.choice(items) if items else None

    def perturb_literal(self, p: Program) -> Optional[Program]:
        site = self.pick([s for s in expr_sites(p) if isinstance(s[1], Num)])
        if site is None:
            return None
        path, node, in_pct = site
        nv = _perturb_number(self.rng, node.value, self.kernel, in_pct)
        if nv is None:
            return None
        return replace_at(p, path, Num(nv))

    def swap_comparison(self, p: Program) -> Optional[Program]:
        site = self.pick([s for s in expr_sites(p) if isinstance(s[1], Binary) and s[1].op in CMP_OPS])
        if site is None:
            return None
        path, node, _ = site
        op = self.rng.choice([o for o in CMP_OPS if o != node.op])
        return replace_at(p, path, dataclasses.replace(node, op=op))

    def _feature(self):
        return Name(self.rng.choice(_Sampler(self.rng, self.mode).scalars))

    def _weight(self):
        return Num(self.rng.choice(KERNEL_WEIGHTS if self.kernel else CACHE_WEIGHTS))

    def wrap_weighted(self, p: Program) -> Optional[Program]:
        site = self.pick([s for s in expr_sites(p) if not s[2]])
        if site is None:
            return None
        path, node, _ = site
        term = Binary("*", self._weight(), self._feature())
        return replace_at(p, path, Binary(self.rng.choice(("+", "-")), node, term))

    def insert_if(self, p: Program) -> Optional[Program]:
        body = list(p.body)
        ret = body[-1]
        lets = _visible_lets(p)
        if isinstance(ret.value, Name) and ret.value.id in lets:
            target = ret.value.id
        else:
            i = 0
            target = "score"
            while target in lets:
                i += 1
                target = f"score{i}"
            body[-1:] = [Let(target, ret.value), Return(Name(target))]
        s = _Sampler(self.rng, self.mode, lets)
        if self.rng.random() < 0.5 and self.donors:
            term = self.rng.choice(self.donors)
        else:
            term = Binary("*", self._weight(), self._feature())
        cond = s.cond(2)
        body.insert(len(body) - 1, If(cond, (Assign(target, self.rng.choice(("+=", "-=")), term),)))
        return Program(tuple(body), p.mode)

    def delete_if(self, p: Program) -> Optional[Program]:
        site = self.pick([s for s in stmt_sites(p) if isinstance(s[1], If)])
        if site is None:
            return None
        return replace_at(p, site[0], None)

    def replace_identifier(self, p: Program) -> Optional[Program]:
        sites = expr_sites(p)
        scal = set(features.scalars(self.mode))
        names = [s for s in sites if isinstance(s[1], Name) and s[1].id in scal]
        pct = [s for s in sites if isinstance(s[1], Call) and s[1].func == "percentile"]
        if pct and (not names or self.rng.random() < 0.25):
            path, node, _ = self.rng.choice(pct)
            other = self.rng.choice([n for n in features.CACHE_SERIES if n != node.args[0].id])
            return replace_at(p, path, Call("percentile", (Name(other), node.args[1])))
        site = self.pick(names)
        if site is None:
            return None
        path, node, _ = site
        choices = [n for n in _Sampler(self.rng, self.mode).scalars if n != node.id]
        return replace_at(p, path, Name(self.rng.choice(choices)))

    def graft(self, p: Program) -> Optional[Program]:
        site = self.pick([s for s in expr_sites(p) if not s[2]])
        if site is None or not self.donors:
            return None
        donor = self.rng.choice(self.donors)
        if self.rng.random() < 0.5:
            subs = [n for n in walk(donor) if is_expr(n)]
            donor = self.rng.choice(subs)
        return replace_at(p, site[0], donor)

    def step(self, p: Program) -> Program:
        for _ in range(MAX_ATTEMPTS):
            op = self.rng.choice(self.ops)
            q = op(p)
            if q is None:
                continue
            if node_count(q) > MAX_NODES:
                continue
            if check_program(q).ok:
                return q
        return p


def _closed_subtrees(programs: Iterable[Program]) -> list:
    """Expressions from ``programs`` that mention only built-in names."""
    out = []
    for prog in programs:
        scal = set(features.scalars(prog.mode))
        for n in walk_program(prog):
            if is_expr(n) and not isinstance(n, (Num, Name)):
                names = {m.id for m in walk(n) if isinstance(m, Name)}
                if names <= scal | set(features.series(prog.mode)):
                    out.append(n)
    return out


def mutate(p: Program, rng_seed: int, intensity: int = 1, donors: Sequence[Program] = ()) -> Program:
    """Apply ``intensity`` random checked edits to ``p``; deterministic per seed."""
    if intensity <= 0:
        return p
    rng = random.Random(rng_seed)
    m = _Mutator(rng, p.mode, _closed_subtrees(donors))
    q = p
    for _ in range(intensity):
        q = m.step(q)
    if q is p:
        return p
    return _finish(q.body, q.mode)


# -- crossover -----------------------------------------------------------------


def _paired_sites(a: Program, b: Program):
    """Paths present in both trees with matching node kinds (homologous sites)."""
    out = []

    def pair_expr(x, y, path):
        out.append(path)
        if type(x) is not type(y):
            return
        fx, fy = _expr_fields(x), _expr_fields(y)
        if len(fx) != len(fy):
            return
        for step in fx:
            pair_expr(_get(x, step), _get(y, step), path + (step,))

    def pair_stmt(x, y, path):
        out.append(path)
        if type(x) is not type(y):
            return
        if isinstance(x, (Let, Assign, Return)):
            pair_expr(x.value, y.value, path + (("value", None),))
        elif isinstance(x, If):
            pair_expr(x.cond, y.cond, path + (("cond", None),))
            pair_block(x.then, y.then, path, "then", False)
            if x.orelse is not None and y.orelse is not None:
                pair_block(x.orelse, y.orelse, path, "orelse", False)

    def pair_block(xs, ys, path, fld, top):
        n = min(len(xs), len(ys)) - (1 if top else 0)
        for i in range(max(0, n)):
            pair_stmt(xs[i], ys[i], path + ((fld, i),))

    pair_block(a.body, b.body, (), "body", True)
    # the two returns are homologous regardless of body length
    ra = len(a.body) - 1
    pair_expr(a.body[-1].value, b.body[-1].value, (("body", ra), ("value", None)))
    return out


def crossover(a: Program, b: Program, rng_seed: int) -> Program:
    """Homologous crossover: copy b's subtree at a shared position into a."""
    if a.mode != b.mode:
        raise ValueError("crossover needs programs of the same mode")
    rng = random.Random(rng_seed)
    sites = _paired_sites(a, b)
    ra, rb = len(a.body) - 1, len(b.body) - 1
    for _ in range(MAX_ATTEMPTS):
        path = rng.choice(sites)
        # remap the return-statement index into b
        bpath = ((("body", rb),) + path[1:]) if path[0] == ("body", ra) else path
        donor = get_at(b, bpath)
        child = replace_at(a, path, donor)
        if node_count(child) <= MAX_NODES and check_program(child).ok:
            return _finish(child.body, child.mode)
    return a
