"""Hand-written lexer and recursive-descent parser for the heuristic language.

    program  := stmt* "return" expr ";"
    stmt     := "let" ID "=" expr ";"
              | ID ("=" | "+=" | "-=") expr ";"
              | "if" "(" expr ")" block ("else" block)?
    block    := "{" stmt* "}"
    expr     := or ("?" expr ":" expr)?
    or       := and ("||" and)*
    and      := eq ("&&" eq)*
    eq       := rel (("==" | "!=") rel)*
    rel      := add (("<" | "<=" | ">" | ">=") add)*
    add      := mul (("+" | "-") mul)*
    mul      := unary (("*" | "/" | "%") unary)*
    unary    := ("-" | "!") unary | atom
    atom     := NUMBER | ID | ID "(" args? ")" | "(" expr ")"
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List

from .nodes import (
    CACHE,
    MODES,
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
)

KEYWORDS = {"let", "if", "else", "return"}


class DSLSyntaxError(Exception):
    def __init__(self, loc: Loc, message: str):
        super().__init__(f"{loc[0]}:{loc[1]}: {message}")
        self.loc = loc
        self.message = message


@dataclass(frozen=True)
class Token:
    kind: str  # NUM, ID, KW, OP, EOF
    text: str
    loc: Loc


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>&&|\|\||==|!=|<=|>=|\+=|-=|[-+*/%<>!?:=(){};,])
    """,
    re.VERBOSE,
)


def tokenize(source: str) -> List[Token]:
    toks: List[Token] = []
    pos, line, line_start = 0, 1, 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise DSLSyntaxError((line, col), f"unexpected character {source[pos]!r}")
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "num":
            toks.append(Token("NUM", text, (line, col)))
        elif kind == "id":
            toks.append(Token("KW" if text in KEYWORDS else "ID", text, (line, col)))
        elif kind == "op":
            toks.append(Token("OP", text, (line, col)))
        pos = m.end()
    toks.append(Token("EOF", "", (line, pos - line_start + 1)))
    return toks


def _number(text: str):
    if re.fullmatch(r"\d+", text):
        return int(text)
    return float(text)


class _Parser:
    def __init__(self, toks: List[Token]):
        self.toks = toks
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.tok
        found = "end of input" if tok.kind == "EOF" else repr(tok.text)
        raise DSLSyntaxError(tok.loc, f"{message}, found {found}")

    def accept(self, text: str) -> Token | None:
        t = self.tok
        if t.kind in ("OP", "KW") and t.text == text:
            self.i += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            self.error(f"expected {text!r}")
        return t

    def ident(self) -> Token:
        t = self.tok
        if t.kind != "ID":
            self.error("expected identifier")
        self.i += 1
        return t

    # -- statements --

    def program(self, mode: str, source: str) -> Program:
        body = []
        while not (self.tok.kind == "KW" and self.tok.text == "return"):
            if self.tok.kind == "EOF":
                self.error("expected 'return' statement")
            body.append(self.stmt())
        t = self.expect("return")
        value = self.expr()
        self.expect(";")
        body.append(Return(value, t.loc))
        if self.tok.kind != "EOF":
            self.error("statements after 'return' are not allowed")
        return Program(tuple(body), mode, source)

    def stmt(self):
        t = self.tok
        if t.kind == "KW" and t.text == "let":
            self.i += 1
            name = self.ident()
            self.expect("=")
            value = self.expr()
            self.expect(";")
            return Let(name.text, value, t.loc)
        if t.kind == "KW" and t.text == "if":
            self.i += 1
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.block()
            orelse = None
            if self.accept("else"):
                orelse = self.block()
            return If(cond, then, orelse, t.loc)
        if t.kind == "KW" and t.text == "return":
            self.error("'return' is only allowed as the final top-level statement")
        if t.kind == "ID":
            self.i += 1
            op = self.tok
            if op.kind == "OP" and op.text in ("=", "+=", "-="):
                self.i += 1
                value = self.expr()
                self.expect(";")
                return Assign(t.text, op.text, value, t.loc)
            self.error("expected '=', '+=' or '-='")
        self.error("expected statement")

    def block(self):
        self.expect("{")
        stmts = []
        while not self.accept("}"):
            if self.tok.kind == "EOF":
                self.error("expected '}'")
            stmts.append(self.stmt())
        return tuple(stmts)

    # -- expressions --

    def expr(self):
        cond = self.or_()
        q = self.accept("?")
        if q is None:
            return cond
        then = self.expr()
        self.expect(":")
        orelse = self.expr()
        return Ternary(cond, then, orelse, q.loc)

    def _binary(self, ops, sub):
        left = sub()
        while self.tok.kind == "OP" and self.tok.text in ops:
            t = self.tok
            self.i += 1
            left = Binary(t.text, left, sub(), t.loc)
        return left

    def or_(self):
        return self._binary(("||",), self.and_)

    def and_(self):
        return self._binary(("&&",), self.eq)

    def eq(self):
        return self._binary(("==", "!="), self.rel)

    def rel(self):
        return self._binary(("<", "<=", ">", ">="), self.add)

    def add(self):
        return self._binary(("+", "-"), self.mul)

    def mul(self):
        return self._binary(("*", "/", "%"), self.unary)

    def unary(self):
        t = self.tok
        if t.kind == "OP" and t.text in ("-", "!"):
            self.i += 1
            return Unary(t.text, self.unary(), t.loc)
        return self.atom()

    def atom(self):
        t = self.tok
        if t.kind == "NUM":
            self.i += 1
            return Num(_number(t.text), t.loc)
        if t.kind == "ID":
            self.i += 1
            if self.accept("("):
                args = []
                if not self.accept(")"):
                    args.append(self.expr())
                    while self.accept(","):
                        args.append(self.expr())
                    self.expect(")")
                return Call(t.text, tuple(args), t.loc)
            return Name(t.text, t.loc)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        self.error("expected expression")


def parse(source: str, mode: str = CACHE) -> Program:
    """Parse ``source``; raises :class:`DSLSyntaxError` with a location."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    return _Parser(tokenize(source)).program(mode, source)


def parse_expr(source: str):
    p = _Parser(tokenize(source))
    e = p.expr()
    if p.tok.kind != "EOF":
        p.error("unexpected trailing input")
    return e
