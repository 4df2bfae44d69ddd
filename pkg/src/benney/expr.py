"""Small arithmetic expression language for user supplied functions.

Expressions are parsed with a Pratt parser into an immutable tree and can be
evaluated on floats or numpy arrays, and differentiated symbolically.

    >>> e = parse("g*ln(t+g)", ["g", "t"])
    >>> round(evaluate(differentiate(e, "g"), {"g": 1.0, "t": 1.0}), 10)
    1.1931471806
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "ExprDomainError",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Expression",
    "parse",
    "evaluate",
    "differentiate",
    "FUNCTIONS",
]

FUNCTIONS = ("ln", "exp", "sin", "cos", "sqrt")
_MAX_DEPTH = 200


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class ExprDomainError(ExprError, ArithmeticError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (node at offset {position})")
        self.position = position


# --- tree ------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float
    pos: int = field(default=-1, compare=False)

    def __str__(self) -> str:
        v = self.value
        if v == int(v) and abs(v) < 1e15:
            return str(int(v))
        return repr(v)


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = field(default=-1, compare=False)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or one of FUNCTIONS
    arg: "Node"
    pos: int = field(default=-1, compare=False)

    def __str__(self) -> str:
        if self.op == "neg":
            return f"-{_wrap(self.arg, 3)}"
        return f"{self.op}({self.arg})"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"
    pos: int = field(default=-1, compare=False)

    def __str__(self) -> str:
        p = _BINARY_BP[self.op]
        # left-associative: the right operand needs parens at equal precedence
        return f"{_wrap(self.left, p)}{self.op}{_wrap(self.right, p + 1)}"


Node = Union[Const, Var, Unary, Binary]

_BINARY_BP = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_UNARY_BP = 3


def _prec(node: Node) -> int:
    if isinstance(node, Binary):
        return _BINARY_BP[node.op]
    if isinstance(node, Unary) and node.op == "neg":
        return _UNARY_BP
    if isinstance(node, Const) and node.value < 0:
        return _UNARY_BP
    return 10


def _wrap(node: Node, min_prec: int) -> str:
    s = str(node)
    return f"({s})" if _prec(node) < min_prec else s


@dataclass(frozen=True)
class Expression:
    """A parsed expression together with its declared variables."""

    root: Node
    variables: tuple[str, ...]
    source: str = ""

    def __call__(self, **bindings):
        return evaluate(self, bindings)

    def __str__(self) -> str:
        return str(self.root)

    def depends_on(self, name: str) -> bool:
        return _depends(self.root, name)


# --- lexer -----------------------------------------------------------------


@dataclass(frozen=True)
class _Token:
    kind: str  # num, name, op, lpar, rpar, end
    text: str
    pos: int


def _tokenize(src: str) -> list[_Token]:
    tokens = []
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
        elif c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            while j < n and (src[j].isdigit() or src[j] == "."):
                j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            text = src[i:j]
            try:
                float(text)
            except ValueError:
                raise ExprSyntaxError(f"malformed number {text!r}", i) from None
            tokens.append(_Token("num", text, i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            tokens.append(_Token("name", src[i:j], i))
            i = j
        elif c in "+-*/^":
            tokens.append(_Token("op", c, i))
            i += 1
        elif c == "(":
            tokens.append(_Token("lpar", c, i))
            i += 1
        elif c == ")":
            tokens.append(_Token("rpar", c, i))
            i += 1
        else:
            raise ExprSyntaxError(f"unexpected character {c!r}", i)
    tokens.append(_Token("end", "", n))
    return tokens


# --- parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, source: str, variables: Sequence[str]):
        self.tokens = _tokenize(source)
        self.i = 0
        self.variables = set(variables)
        self.depth = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        if tok.kind != "end":
            self.i += 1
        return tok

    def expression(self, rbp: int = 0) -> Node:
        self.depth += 1
        if self.depth > _MAX_DEPTH:
            raise ExprSyntaxError("expression nested too deeply", self.peek().pos)
        left = self.nud(self.advance())
        while True:
            tok = self.peek()
            if tok.kind != "op" or _BINARY_BP[tok.text] <= rbp:
                break
            self.advance()
            right = self.expression(_BINARY_BP[tok.text])
            left = Binary(tok.text, left, right, tok.pos)
        self.depth -= 1
        return left

    def nud(self, tok: _Token) -> Node:
        if tok.kind == "num":
            return Const(float(tok.text), tok.pos)
        if tok.kind == "name":
            if tok.text in FUNCTIONS:
                if self.peek().kind != "lpar":
                    raise ExprSyntaxError(f"expected '(' after {tok.text}", self.peek().pos)
                self.advance()
                arg = self.expression()
                self.expect_rpar()
                return Unary(tok.text, arg, tok.pos)
            if tok.text not in self.variables:
                raise ExprSyntaxError(f"unknown variable {tok.text!r}", tok.pos)
            return Var(tok.text, tok.pos)
        if tok.kind == "op" and tok.text == "-":
            return Unary("neg", self.expression(_UNARY_BP), tok.pos)
        if tok.kind == "op" and tok.text == "+":
            return self.expression(_UNARY_BP)
        if tok.kind == "lpar":
            inner = self.expression()
            self.expect_rpar()
            return inner
        if tok.kind == "end":
            raise ExprSyntaxError("unexpected end of input", tok.pos)
        raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.pos)

    def expect_rpar(self) -> None:
        tok = self.peek()
        if tok.kind != "rpar":
            raise ExprSyntaxError("expected ')'", tok.pos)
        self.advance()


def parse(source: str, variables: Sequence[str] = ()) -> Expression:
    """Parse ``source`` into an :class:`Expression`.

    Precedence from tightest: ``^``, unary minus, ``* /``, ``+ -``. All binary
    operators associate to the left. Raises :class:`ExprSyntaxError` carrying
    the character offset of the problem.
    """
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression", 0)
    bad = [v for v in variables if v in FUNCTIONS or not v.isidentifier()]
    if bad:
        raise ExprError(f"invalid variable names: {bad}")
    p = _Parser(source, variables)
    root = p.expression()
    tok = p.peek()
    if tok.kind != "end":
        raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.pos)
    return Expression(root, tuple(variables), source)


# --- evaluation ------------------------------------------------------------


def _fail(cond, message: str, node: Node) -> None:
    if np.any(cond):
        raise ExprDomainError(message, node.pos)


def _eval(node: Node, env: Mapping[str, object]):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Unary):
        a = _eval(node.arg, env)
        if node.op == "neg":
            return -a
        if node.op == "ln":
            _fail(np.less_equal(a, 0), "ln of non-positive value", node)
            return np.log(a)
        if node.op == "sqrt":
            _fail(np.less(a, 0), "sqrt of negative value", node)
            return np.sqrt(a)
        return getattr(np, node.op)(a)
    a = _eval(node.left, env)
    b = _eval(node.right, env)
    op = node.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        _fail(np.equal(b, 0), "division by zero", node)
        return np.true_divide(a, b)
    # power
    a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    _fail((a_arr < 0) & (b_arr != np.round(b_arr)), "negative base with fractional exponent", node)
    _fail((a_arr == 0) & (b_arr < 0), "zero raised to a negative power", node)
    return np.power(a_arr, b_arr)


def evaluate(expr: Expression | Node, bindings: Mapping[str, object]):
    """Evaluate on scalar or array bindings (numpy broadcasting applies).

    Overflow follows IEEE semantics (``inf``); domain violations raise
    :class:`ExprDomainError`.
    """
    if isinstance(expr, Expression):
        missing = [v for v in expr.variables if v not in bindings and _depends(expr.root, v)]
        if missing:
            raise ExprError(f"unbound variables: {missing}")
        root = expr.root
    else:
        root = expr
    with np.errstate(over="ignore", invalid="ignore"):
        out = _eval(root, bindings)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _depends(node: Node, name: str) -> bool:
    if isinstance(node, Var):
        return node.name == name
    if isinstance(node, Unary):
        return _depends(node.arg, name)
    if isinstance(node, Binary):
        return _depends(node.left, name) or _depends(node.right, name)
    return False


# --- differentiation -------------------------------------------------------
# constructors fold only trivial 0/1 identities


def _is(node: Node, value: float) -> bool:
    return isinstance(node, Const) and node.value == value


def _add(a: Node, b: Node) -> Node:
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Binary("+", a, b)


def _sub(a: Node, b: Node) -> Node:
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Binary("-", a, b)


def _neg(a: Node) -> Node:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def _mul(a: Node, b: Node) -> Node:
    if _is(a, 0) or _is(b, 0):
        return Const(0.0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Binary("*", a, b)


def _div(a: Node, b: Node) -> Node:
    if _is(a, 0):
        return Const(0.0)
    if _is(b, 1):
        return a
    return Binary("/", a, b)


def _pow(a: Node, b: Node) -> Node:
    if _is(b, 1):
        return a
    if _is(b, 0):
        return Const(1.0)
    return Binary("^", a, b)


def _d(node: Node, x: str) -> Node:
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0 if node.name == x else 0.0)
    if isinstance(node, Unary):
        u = node.arg
        du = _d(u, x)
        if _is(du, 0):
            return Const(0.0)
        op = node.op
        if op == "neg":
            return _neg(du)
        if op == "ln":
            return _div(du, u)
        if op == "exp":
            return _mul(node, du)
        if op == "sin":
            return _mul(Unary("cos", u), du)
        if op == "cos":
            return _neg(_mul(Unary("sin", u), du))
        if op == "sqrt":
            return _div(du, _mul(Const(2.0), node))
        raise AssertionError(op)
    a, b, op = node.left, node.right, node.op
    da, db = _d(a, x), _d(b, x)
    if op == "+":
        return _add(da, db)
    if op == "-":
        return _sub(da, db)
    if op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if op == "/":
        if _is(db, 0):
            return _div(da, b)
        return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, Const(2.0)))
    # power
    if not _depends(b, x):
        if _is(da, 0):
            return Const(0.0)
        exponent = _sub(b, Const(1.0))
        return _mul(_mul(b, _pow(a, exponent)), da)
    if not _depends(a, x):
        return _mul(_mul(node, Unary("ln", a)), db)
    # general case u^v (u > 0 required)
    return _mul(node, _add(_mul(db, Unary("ln", a)), _div(_mul(b, da), a)))


def differentiate(expr: Expression, var: str) -> Expression:
    """Symbolic partial derivative of ``expr`` with respect to ``var``."""
    if var not in expr.variables:
        raise ExprError(f"variable {var!r} is not declared")
    root = _d(expr.root, var)
    return Expression(root, expr.variables, f"d/d{var}({expr.source})")


def constant(value: float, variables: Sequence[str] = ()) -> Expression:
    return Expression(Const(float(value)), tuple(variables), repr(float(value)))

