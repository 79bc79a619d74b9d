"""Infix arithmetic expressions: tokenizer, recursive-descent parser, evaluator.

Grammar (precedence low to high, binary operators left associative)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | primary
    primary := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

The only callable names are ``abs``, ``min`` and ``max``; they exist so that
custom three-point metrics such as ``abs(x - y)`` can be written.
Evaluation works on Python floats and, elementwise, on numpy arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import EvaluationFault, SpecSyntaxError

__all__ = [
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "ExprAst",
    "parse_expr",
    "eval_expr",
    "evaluate",
    "to_text",
    "free_variables",
]


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "ExprAst"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "ExprAst"
    right: "ExprAst"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


ExprAst = Union[Const, Var, Neg, BinOp, Call]

FUNCTIONS = {"abs": (1, 1), "min": (2, None), "max": (2, None)}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    col: int


def _tokenize(text, line, col0):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SpecSyntaxError(f"unexpected character {text[pos]!r}", line, col0 + pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), col0 + pos + 1))
        pos = m.end()
    tokens.append(_Token("eof", "", col0 + len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, tokens, line, variables):
        self.tokens = tokens
        self.i = 0
        self.line = line
        self.variables = variables

    @property
    def tok(self):
        return self.tokens[self.i]

    def fail(self, message, tok=None):
        tok = tok or self.tok
        raise SpecSyntaxError(message, self.line, tok.col)

    def expect(self, text):
        if self.tok.text != text:
            what = repr(self.tok.text) if self.tok.kind != "eof" else "end of input"
            self.fail(f"expected {text!r}, found {what}")
        self.i += 1

    def parse(self):
        node = self.expr()
        if self.tok.kind != "eof":
            self.fail(f"unexpected {self.tok.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.text == "-":
            self.i += 1
            return Neg(self.unary())
        return self.primary()

    def primary(self):
        tok = self.tok
        if tok.kind == "number":
            self.i += 1
            return Const(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if self.tok.text == "(":
                return self.call(tok)
            if tok.text in FUNCTIONS:
                self.fail(f"function {tok.text!r} needs arguments", tok)
            if self.variables is not None and tok.text not in self.variables:
                allowed = ", ".join(sorted(self.variables)) or "none"
                self.fail(f"unknown variable {tok.text!r} (allowed: {allowed})", tok)
            return Var(tok.text)
        if tok.text == "(":
            self.i += 1
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "eof":
            self.fail("unexpected end of expression")
        self.fail(f"unexpected {tok.text!r}")

    def call(self, name_tok):
        if name_tok.text not in FUNCTIONS:
            self.fail(f"unknown function {name_tok.text!r}", name_tok)
        self.expect("(")
        args = [self.expr()]
        while self.tok.text == ",":
            self.i += 1
            args.append(self.expr())
        self.expect(")")
        lo, hi = FUNCTIONS[name_tok.text]
        if len(args) < lo or (hi is not None and len(args) > hi):
            self.fail(f"wrong number of arguments to {name_tok.text}", name_tok)
        return Call(name_tok.text, tuple(args))


def parse_expr(text: str, variables=("x",), *, line: int = 1, col: int = 0) -> ExprAst:
    """Parse ``text`` into an AST.

    ``variables`` restricts which bare names are accepted (``None`` accepts
    any). ``line`` and ``col`` locate ``text`` inside a larger document so
    that syntax errors point at the right place.
    """
    allowed = None if variables is None else frozenset(variables)
    return _Parser(_tokenize(text, line, col), line, allowed).parse()


def free_variables(ast: ExprAst) -> frozenset:
    if isinstance(ast, Var):
        return frozenset([ast.name])
    if isinstance(ast, Const):
        return frozenset()
    if isinstance(ast, Neg):
        return free_variables(ast.operand)
    if isinstance(ast, BinOp):
        return free_variables(ast.left) | free_variables(ast.right)
    return frozenset().union(*(free_variables(a) for a in ast.args))


def _point_at(env, mask):
    arrays = [np.asarray(v) for v in env.values()]
    shape = np.broadcast(mask, *arrays).shape if arrays else mask.shape
    idx = int(np.flatnonzero(np.broadcast_to(mask, shape))[0]) if shape else 0
    return {
        name: float(np.broadcast_to(np.asarray(v), shape).reshape(-1)[idx]) if shape else float(v)
        for name, v in env.items()
    }


def _eval(ast, env):
    if isinstance(ast, Const):
        return ast.value
    if isinstance(ast, Var):
        try:
            return env[ast.name]
        except KeyError:
            raise EvaluationFault(f"unbound variable {ast.name!r}") from None
    if isinstance(ast, Neg):
        return -_eval(ast.operand, env)
    if isinstance(ast, BinOp):
        a = _eval(ast.left, env)
        b = _eval(ast.right, env)
        if ast.op == "+":
            return a + b
        if ast.op == "-":
            return a - b
        if ast.op == "*":
            return a * b
        zero = np.asarray(b) == 0
        if zero.any():
            point = _point_at(env, zero)
            raise EvaluationFault(f"division by zero at {point}", point)
        with np.errstate(over="ignore"):
            return a / b
    args = [_eval(a, env) for a in ast.args]
    if ast.func == "abs":
        return abs(args[0]) if np.isscalar(args[0]) else np.abs(args[0])
    if all(np.isscalar(a) for a in args):
        return max(args) if ast.func == "max" else min(args)
    reduce = np.maximum if ast.func == "max" else np.minimum
    out = args[0]
    for a in args[1:]:
        out = reduce(out, a)
    return out


def evaluate(ast: ExprAst, env: Mapping[str, object]):
    """Evaluate ``ast`` with variables bound by ``env`` (floats or arrays)."""
    value = _eval(ast, env)
    if isinstance(value, np.ndarray):
        return value.astype(float, copy=False)
    if isinstance(value, np.generic):
        return float(value)
    shape = np.broadcast(*[v for v in env.values()]).shape if env else ()
    if shape:
        return np.full(shape, float(value))
    return float(value)


def eval_expr(ast: ExprAst, x: float) -> float:
    return float(evaluate(ast, {"x": x}))


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(ast):
    if isinstance(ast, BinOp):
        return _PREC[ast.op]
    if isinstance(ast, Neg):
        return 3
    return 4


def _fmt_number(v):
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_text(ast: ExprAst) -> str:
    """Canonical text with the fewest parentheses that preserve the tree."""
    if isinstance(ast, Const):
        return _fmt_number(ast.value)
    if isinstance(ast, Var):
        return ast.name
    if isinstance(ast, Call):
        return f"{ast.func}({', '.join(to_text(a) for a in ast.args)})"
    if isinstance(ast, Neg):
        inner = to_text(ast.operand)
        return "-" + (f"({inner})" if _prec(ast.operand) < 3 else inner)
    p = _PREC[ast.op]
    left = to_text(ast.left)
    right = to_text(ast.right)
    if _prec(ast.left) < p:
        left = f"({left})"
    if _prec(ast.right) <= p:
        right = f"({right})"
    sep = f" {ast.op} " if p == 1 else ast.op
    return f"{left}{sep}{right}"
