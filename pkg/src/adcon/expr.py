"""Arithmetic expression trees over agent state variables.

Regressor nonlinearities are supplied as text like ``"x1^2"`` or
``"sin(x2) * exp(-x1)"``.  This module parses them into immutable trees,
evaluates them, and differentiates them symbolically.  The grammar is the
smallest closed set whose derivatives stay inside the set: constants,
variables ``x1..xr``, ``sin``, ``cos``, ``exp``, unary minus, ``+ - * /``,
and ``^`` with an integer exponent.

Trees are frozen dataclasses, safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Bin",
    "Pow",
    "ExprSyntaxError",
    "ExprEvalError",
    "parse",
    "evaluate",
    "diff",
    "to_source",
    "max_var_index",
    "compile_expr",
]

UNARY_FUNCTIONS = ("sin", "cos", "exp", "neg")
BIN_OPERATORS = ("add", "sub", "mul", "div")


class ExprSyntaxError(ValueError):
    """Raised on malformed expression text; carries the source position."""

    def __init__(self, message: str, source: str, position: int):
        self.position = position
        self.source = source
        super().__init__(f"{message} at position {position}: {source!r}")


class ExprEvalError(ArithmeticError):
    """Raised when evaluation hits a pole; names the offending subtree."""

    def __init__(self, message: str, node: "Expr"):
        self.node = node
        super().__init__(f"{message} in {to_source(node)!r}")


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based: Var(1) is "x1"


@dataclass(frozen=True)
class Unary:
    op: str  # sin | cos | exp | neg
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str  # add | sub | mul | div
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


Expr = Union[Const, Var, Unary, Bin, Pow]


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

class _Parser:
    """Recursive-descent parser for the expression grammar."""

    def __init__(self, source: str, n_vars: int | None):
        self.source = source
        self.n_vars = n_vars
        self.pos = 0

    def fail(self, message: str, pos: int | None = None):
        raise ExprSyntaxError(message, self.source, self.pos if pos is None else pos)

    def skip_ws(self):
        while self.pos < len(self.source) and self.source[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.source[self.pos] if self.pos < len(self.source) else ""

    def accept(self, chars: str) -> str:
        c = self.peek()
        if c and c in chars:
            self.pos += 1
            return c
        return ""

    def expect(self, char: str):
        if not self.accept(char):
            self.fail(f"expected {char!r}")

    def parse(self) -> Expr:
        tree = self.expr()
        self.skip_ws()
        if self.pos != len(self.source):
            self.fail("unexpected trailing input")
        return tree

    def expr(self) -> Expr:
        node = self.term()
        while True:
            op = self.accept("+-")
            if not op:
                return node
            rhs = self.term()
            node = Bin("add" if op == "+" else "sub", node, rhs)

    def term(self) -> Expr:
        node = self.unary()
        while True:
            op = self.accept("*/")
            if not op:
                return node
            rhs = self.unary()
            node = Bin("mul" if op == "*" else "div", node, rhs)

    def unary(self) -> Expr:
        if self.accept("-"):
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.accept("^"):
            return Pow(base, self.integer_exponent())
        return base

    def integer_exponent(self) -> int:
        self.skip_ws()
        start = self.pos
        if self.accept("-"):
            pass
        while self.pos < len(self.source) and self.source[self.pos].isdigit():
            self.pos += 1
        text = self.source[start:self.pos].replace(" ", "")
        if not text or text == "-":
            self.fail("expected integer exponent", start)
        if self.pos < len(self.source) and self.source[self.pos] in ".eE":
            self.fail("exponent must be an integer", start)
        return int(text)

    def atom(self) -> Expr:
        c = self.peek()
        if c == "(":
            self.pos += 1
            node = self.expr()
            self.expect(")")
            return node
        if c.isdigit() or c == ".":
            return self.number()
        if c.isalpha() or c == "_":
            return self.identifier()
        self.fail("expected a number, variable, function or '('")

    def number(self) -> Expr:
        start = self.pos
        src = self.source
        while self.pos < len(src) and (src[self.pos].isdigit() or src[self.pos] == "."):
            self.pos += 1
        if self.pos < len(src) and src[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < len(src) and src[self.pos] in "+-":
                self.pos += 1
            if self.pos < len(src) and src[self.pos].isdigit():
                while self.pos < len(src) and src[self.pos].isdigit():
                    self.pos += 1
            else:
                self.pos = mark  # "e" belongs to something else; not our problem
        try:
            return Const(float(src[start:self.pos]))
        except ValueError:
            self.fail("malformed number", start)

    def identifier(self) -> Expr:
        start = self.pos
        src = self.source
        while self.pos < len(src) and (src[self.pos].isalnum() or src[self.pos] == "_"):
            self.pos += 1
        name = src[start:self.pos]
        if name in ("sin", "cos", "exp"):
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Unary(name, arg)
        if name.startswith("x") and name[1:].isdigit():
            index = int(name[1:])
            if index < 1:
                self.fail(f"variable index must be >= 1: {name!r}", start)
            if self.n_vars is not None and index > self.n_vars:
                self.fail(
                    f"undeclared variable {name!r} (only x1..x{self.n_vars} in scope)",
                    start,
                )
            return Var(index)
        self.fail(f"unknown identifier {name!r}", start)


def parse(source: str, n_vars: int | None = None) -> Expr:
    """Parse expression text into a tree.

    When ``n_vars`` is given, any variable reference beyond ``x<n_vars>``
    is rejected, which is how strict-feedback structure gets enforced at
    scenario load.
    """
    return _Parser(source, n_vars).parse()


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

def evaluate(e: Expr, x) -> float:
    """Evaluate ``e`` at the state vector ``x`` (``x[0]`` holds x1)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.index > len(x):
            raise ExprEvalError(f"state vector of length {len(x)} too short", e)
        return float(x[e.index - 1])
    if isinstance(e, Unary):
        v = evaluate(e.arg, x)
        if e.op == "neg":
            return -v
        if e.op == "sin":
            return math.sin(v)
        if e.op == "cos":
            return math.cos(v)
        return math.exp(v)
    if isinstance(e, Bin):
        a = evaluate(e.left, x)
        b = evaluate(e.right, x)
        if e.op == "add":
            return a + b
        if e.op == "sub":
            return a - b
        if e.op == "mul":
            return a * b
        if b == 0.0:
            raise ExprEvalError("division by zero", e)
        return a / b
    # Pow
    base = evaluate(e.base, x)
    if base == 0.0 and e.exponent < 0:
        raise ExprEvalError("zero raised to a negative power", e)
    return base ** e.exponent


def max_var_index(e: Expr) -> int:
    """Largest variable index referenced by ``e`` (0 if none)."""
    if isinstance(e, Const):
        return 0
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Unary):
        return max_var_index(e.arg)
    if isinstance(e, Bin):
        return max(max_var_index(e.left), max_var_index(e.right))
    return max_var_index(e.base)


# --------------------------------------------------------------------------
# Differentiation
# --------------------------------------------------------------------------
# Smart constructors apply the 0/1 identities so derivative trees stay small
# without dragging in a full simplifier.

def _is_const(e: Expr, v: float) -> bool:
    return isinstance(e, Const) and e.value == v


def _add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Bin("add", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    return Bin("sub", a, b)


def _neg(a: Expr) -> Expr:
    if _is_const(a, 0.0):
        return Const(0.0)
    return Unary("neg", a)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Bin("mul", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return Const(0.0)
    if _is_const(b, 1.0):
        return a
    return Bin("div", a, b)


def _pow(base: Expr, exponent: int) -> Expr:
    if exponent == 0:
        return Const(1.0)
    if exponent == 1:
        return base
    return Pow(base, exponent)


def diff(e: Expr, var: int) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``x<var>``."""
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0) if e.index == var else Const(0.0)
    if isinstance(e, Unary):
        da = diff(e.arg, var)
        if e.op == "neg":
            return _neg(da)
        if e.op == "sin":
            return _mul(Unary("cos", e.arg), da)
        if e.op == "cos":
            return _neg(_mul(Unary("sin", e.arg), da))
        return _mul(Unary("exp", e.arg), da)  # exp
    if isinstance(e, Bin):
        da = diff(e.left, var)
        db = diff(e.right, var)
        if e.op == "add":
            return _add(da, db)
        if e.op == "sub":
            return _sub(da, db)
        if e.op == "mul":
            return _add(_mul(da, e.right), _mul(e.left, db))
        # quotient rule: (a'b - ab') / b^2
        return _div(_sub(_mul(da, e.right), _mul(e.left, db)), _pow(e.right, 2))
    # Pow: n * base^(n-1) * base'
    dbase = diff(e.base, var)
    return _mul(_mul(Const(float(e.exponent)), _pow(e.base, e.exponent - 1)), dbase)


# --------------------------------------------------------------------------
# Printing and compilation
# --------------------------------------------------------------------------

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4, "atom": 5}


def _fmt_const(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _render(e: Expr) -> tuple[str, int]:
    if isinstance(e, Const):
        if e.value < 0:
            return f"-{_fmt_const(-e.value)}", _PREC["neg"]
        return _fmt_const(e.value), _PREC["atom"]
    if isinstance(e, Var):
        return f"x{e.index}", _PREC["atom"]
    if isinstance(e, Unary):
        if e.op == "neg":
            inner, prec = _render(e.arg)
            if prec < _PREC["neg"]:
                inner = f"({inner})"
            return f"-{inner}", _PREC["neg"]
        inner, _ = _render(e.arg)
        return f"{e.op}({inner})", _PREC["atom"]
    if isinstance(e, Bin):
        sym = {"add": " + ", "sub": " - ", "mul": "*", "div": "/"}[e.op]
        prec = _PREC[e.op]
        ls, lp = _render(e.left)
        rs, rp = _render(e.right)
        if lp < prec:
            ls = f"({ls})"
        # subtraction and division are left-associative: parenthesize a
        # right child of equal precedence
        if rp < prec or (rp == prec and e.op in ("sub", "div")):
            rs = f"({rs})"
        return f"{ls}{sym}{rs}", prec
    # Pow: parenthesize any base that is not atomic, including another Pow
    # ("x^2^3" would not parse back)
    bs, bp = _render(e.base)
    if bp <= _PREC["pow"]:
        bs = f"({bs})"
    return f"{bs}^{e.exponent}", _PREC["pow"]


def to_source(e: Expr) -> str:
    """Render a tree back to parseable text; parse(to_source(e)) == e."""
    return _render(e)[0]


def _pycode(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x[{e.index - 1}]"
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{_pycode(e.arg)})"
        return f"math.{e.op}({_pycode(e.arg)})"
    if isinstance(e, Bin):
        sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[e.op]
        return f"({_pycode(e.left)}{sym}{_pycode(e.right)})"
    return f"({_pycode(e.base)})**{e.exponent}"


def compile_expr(e: Expr) -> Callable[..., float]:
    """Compile a tree to a plain Python function of the state vector.

    Used on the simulation hot path; evaluation semantics match
    :func:`evaluate` except that poles surface as ZeroDivisionError.
    """
    code = compile(f"lambda x: {_pycode(e)}", "<expr>", "eval")
    return eval(code, {"math": math})
