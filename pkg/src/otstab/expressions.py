"""Tiny arithmetic-expression grammar for coefficient fields.

Supported: ``+ - * / ^``, unary minus, parentheses, numeric literals and the
functions ``sin cos exp sqrt`` in the variables ``x1 x2``.  Expressions are
parsed once into an AST and evaluated with numpy, so they can be sampled on
grids of any resolution (including the oversized periodic box used by the
oscillatory-solution solver).
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ConfigError

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)

_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}
_VARIABLES = ("x1", "x2")


def _tokenize(text):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ConfigError(f"bad character in expression at offset {pos}: {text[pos:]!r}")
        if m.lastgroup == "num":
            out.append(("num", float(m.group("num"))))
        elif m.lastgroup == "name":
            out.append(("name", m.group("name")))
        else:
            out.append(("op", m.group("op")))
        pos = m.end()
    out.append(("end", None))
    return out


class _Parser:
    """Recursive descent over: sum -> term -> factor -> power -> atom."""

    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, val = self.take()
        if kind != "op" or val != op:
            raise ConfigError(f"expected {op!r} in expression, got {val!r}")

    def parse(self):
        node = self.sum()
        if self.peek()[0] != "end":
            raise ConfigError(f"trailing tokens in expression: {self.peek()[1]!r}")
        return node

    def sum(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = ("+" if op == "+" else "-", node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            op = self.take()[1]
            rhs = self.factor()
            node = (op, node, rhs)
        return node

    def factor(self):
        if self.peek() == ("op", "-"):
            self.take()
            return ("neg", self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            # right associative, and the exponent may carry its own unary minus
            return ("^", base, self.factor())
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return ("num", val)
        if kind == "name":
            if val in _FUNCTIONS:
                self.expect("(")
                arg = self.sum()
                self.expect(")")
                return ("call", val, arg)
            if val in _VARIABLES:
                return ("var", val)
            raise ConfigError(f"unknown identifier {val!r} (allowed: x1, x2, sin, cos, exp, sqrt)")
        if (kind, val) == ("op", "("):
            node = self.sum()
            self.expect(")")
            return node
        raise ConfigError(f"unexpected token {val!r} in expression")


def _eval(node, x1, x2):
    tag = node[0]
    if tag == "num":
        return node[1]
    if tag == "var":
        return x1 if node[1] == "x1" else x2
    if tag == "neg":
        return -_eval(node[1], x1, x2)
    if tag == "call":
        return _FUNCTIONS[node[1]](_eval(node[2], x1, x2))
    a = _eval(node[1], x1, x2)
    b = _eval(node[2], x1, x2)
    if tag == "+":
        return a + b
    if tag == "-":
        return a - b
    if tag == "*":
        return a * b
    if tag == "/":
        return a / b
    if tag == "^":
        return a ** b
    raise AssertionError(f"unhandled node {tag}")


class Expression:
    """Compiled coefficient expression, callable on scalars or numpy arrays."""

    def __init__(self, text: str):
        self.text = text
        self._ast = _Parser(_tokenize(text)).parse()

    def __call__(self, x1, x2):
        out = _eval(self._ast, np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(np.asarray(x1), np.asarray(x2)).shape).copy()

    def __repr__(self):
        return f"Expression({self.text!r})"


def parse_expression(text: str) -> Expression:
    return Expression(text)
