"""Closed-form expression language for metric components and field data.

Grammar (tightest first):  ``^`` (right associative)  >  unary ``-``  >
``*``, ``/``  >  ``+``, ``-``, plus parentheses and unary function calls
``fn(expr)``.  Variables are ``x0 .. x{d-1}``; any other identifier must be a
declared parameter or a function name.  Numbers are decimal literals with an
optional exponent.

ASTs are immutable after parsing and evaluation is reentrant; jets flow
through :func:`evaluate` unchanged because it only uses ring operations.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import jets
from .errors import ExprSyntaxError, NameResolutionError


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int          # chart coordinate index, variable name is x{index}


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Unary:
    fn: str             # elementary function name or "neg"
    child: object


@dataclass(frozen=True)
class Binary:
    op: str             # one of + - * / ^
    left: object
    right: object


@dataclass(frozen=True)
class ParseDiagnostic:
    offset: int
    expected: frozenset
    message: str


_FUNCTIONS = frozenset(jets.ELEMENTARY)


# ----------------------------------------------------------------------
# Tokenizer

_OPS = "+-*/^(),"


def _tokenize(text):
    """Yields (kind, value, offset); kind in {num, name, op, end}."""
    toks = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _OPS:
            toks.append(("op", c, i))
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    while k < n and text[k].isdigit():
                        k += 1
                    j = k
            lit = text[i:j]
            try:
                val = float(lit)
            except ValueError:
                raise ExprSyntaxError(i, {"number"}, f"bad numeric literal {lit!r}")
            toks.append(("num", val, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(("name", text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(i, {"number", "name", "operator"},
                              f"unexpected character {c!r}")
    toks.append(("end", None, n))
    return toks


# ----------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, toks, dim, params):
        self.toks = toks
        self.pos = 0
        self.dim = dim
        self.params = frozenset(params)

    def peek(self):
        return self.toks[self.pos]

    def take(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect_op(self, op):
        kind, val, off = self.peek()
        if kind == "op" and val == op:
            return self.take()
        raise ExprSyntaxError(off, {op}, f"expected {op!r}")

    def parse(self):
        node = self.sum_()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(off, {"end of input"}, f"trailing input {val!r}")
        return node

    def sum_(self):
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                node = Binary(val, node, self.term())
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                node = Binary(val, node, self.unary())
            else:
                return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Unary("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            # right-associative exponent; unary minus allowed in the exponent
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return Const(val)
        if kind == "op" and val == "(":
            node = self.sum_()
            self.expect_op(")")
            return node
        if kind == "name":
            nkind, nval, _ = self.peek()
            if nkind == "op" and nval == "(":
                if val not in _FUNCTIONS:
                    raise NameResolutionError(val, offset=off)
                self.take()
                arg = self.sum_()
                self.expect_op(")")
                return Unary(val, arg)
            if len(val) > 1 and val[0] == "x" and val[1:].isdigit():
                idx = int(val[1:])
                if idx >= self.dim:
                    raise NameResolutionError(val, offset=off)
                return Var(idx)
            if val in self.params:
                return Param(val)
            raise NameResolutionError(val, offset=off)
        raise ExprSyntaxError(off, {"number", "name", "(", "-"},
                              f"unexpected token {val!r}")


def parse(text, dim, params=()):
    """Parse ``text`` into an AST over variables x0..x{dim-1} and ``params``."""
    if not text or not text.strip():
        raise ExprSyntaxError(0, {"expression"}, "empty expression")
    return _Parser(_tokenize(text), dim, params).parse()


# ----------------------------------------------------------------------
# Evaluation and utilities

def evaluate(ast, env, params=None):
    """Evaluate an AST; ``env`` maps coordinate index -> scalar (float or Jet)."""
    if isinstance(ast, Const):
        return ast.value
    if isinstance(ast, Var):
        return env[ast.index]
    if isinstance(ast, Param):
        if params is None or ast.name not in params:
            raise NameResolutionError(ast.name)
        return params[ast.name]
    if isinstance(ast, Unary):
        child = evaluate(ast.child, env, params)
        if ast.fn == "neg":
            return -child
        return jets.elementary(child, ast.fn)
    if isinstance(ast, Binary):
        left = evaluate(ast.left, env, params)
        right = evaluate(ast.right, env, params)
        if ast.op == "+":
            return left + right
        if ast.op == "-":
            return left - right
        if ast.op == "*":
            return left * right
        if ast.op == "/":
            return left / right
        return jets.jpow(left, right)
    raise TypeError(f"not an expression node: {ast!r}")


def free_vars(ast):
    """Set of coordinate variable names appearing in the AST."""
    out = set()
    _walk_vars(ast, out)
    return out


def _walk_vars(ast, out):
    if isinstance(ast, Var):
        out.add(f"x{ast.index}")
    elif isinstance(ast, Unary):
        _walk_vars(ast.child, out)
    elif isinstance(ast, Binary):
        _walk_vars(ast.left, out)
        _walk_vars(ast.right, out)


def free_params(ast):
    out = set()
    if isinstance(ast, Param):
        out.add(ast.name)
    elif isinstance(ast, Unary):
        out |= free_params(ast.child)
    elif isinstance(ast, Binary):
        out |= free_params(ast.left) | free_params(ast.right)
    return out


def pretty(ast):
    """Unambiguous fully parenthesized rendering; reparses to an equal AST."""
    if isinstance(ast, Const):
        return repr(ast.value)
    if isinstance(ast, Var):
        return f"x{ast.index}"
    if isinstance(ast, Param):
        return ast.name
    if isinstance(ast, Unary):
        if ast.fn == "neg":
            return f"(-{pretty(ast.child)})"
        return f"{ast.fn}({pretty(ast.child)})"
    if isinstance(ast, Binary):
        return f"({pretty(ast.left)} {ast.op} {pretty(ast.right)})"
    raise TypeError(f"not an expression node: {ast!r}")


# Small AST constructors used when building variation tensors in code.

def const(v):
    return Const(float(v))


def var(i):
    return Var(i)


def add(*nodes):
    out = None
    for nd in nodes:
        out = nd if out is None else Binary("+", out, nd)
    return out if out is not None else Const(0.0)


def mul(*nodes):
    out = None
    for nd in nodes:
        out = nd if out is None else Binary("*", out, nd)
    return out if out is not None else Const(1.0)


def sub(a, b):
    return Binary("-", a, b)


def call(fn, node):
    return Unary(fn, node)


def powc(node, e):
    return Binary("^", node, Const(float(e)))
