"""Scalar expression language over the chart coordinates x1..x4.

Expressions are small immutable trees. They are parsed from text, differentiated
symbolically (with constant folding only) and evaluated in double precision.

Grammar, loosest binding first::

    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative, constant exponent
    atom    := number | 'x1'..'x4' | func '(' sum ')' | '(' sum ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")
NVARS = 4


class ParseError(ValueError):
    """Raised on malformed expression text; ``position`` is a byte offset."""

    def __init__(self, position: int, message: str):
        super().__init__(f"{message} (at byte {position})")
        self.position = position
        self.message = message


class EvalError(ArithmeticError):
    """Domain violation while evaluating (log of non-positive, division by zero, ...)."""


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based

    def __post_init__(self):
        if not 1 <= self.index <= NVARS:
            raise ValueError(f"variable index {self.index} outside 1..{NVARS}")


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or one of FUNCTIONS
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op == "pow" and not isinstance(self.right, Const):
            raise ValueError("pow exponent must be a constant")


Expr = Union[Const, Var, Unary, Binary]

ZERO = Const(0.0)
ONE = Const(1.0)


# -- folding constructors ---------------------------------------------------

def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Const) and e.value == v


def const(v: float) -> Const:
    return Const(float(v))


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return Binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return Binary("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is(b, 1.0):
        return a
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    return Binary("div", a, b)


def power(a: Expr, n: float) -> Expr:
    n = float(n)
    if n == 0.0:
        return ONE
    if n == 1.0:
        return a
    if isinstance(a, Const):
        try:
            return Const(_pow(a.value, n))
        except EvalError:
            pass
    return Binary("pow", a, Const(n))


def func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    if isinstance(a, Const):
        try:
            return Const(_apply_func(name, a.value))
        except EvalError:
            pass
    return Unary(name, a)


def var(k: int) -> Var:
    return Var(k)


# -- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        self._tokenize()
        self.i = 0

    def _offset(self, char_index: int) -> int:
        return len(self.text[:char_index].encode("utf-8"))

    def _error(self, char_index: int, msg: str) -> ParseError:
        return ParseError(self._offset(char_index), msg)

    def _tokenize(self):
        text, pos = self.text, 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                start = pos + len(text[pos:]) - len(text[pos:].lstrip())
                raise self._error(start, f"unexpected character {text[start]!r}")
            kind = m.lastgroup
            start = m.start(kind)
            if kind == "num":
                nxt = text[m.end():m.end() + 1]
                if nxt in (".", "e", "E") or nxt.isdigit():
                    raise self._error(start, "malformed number")
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.end = len(text)

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value: str):
        tok = self.peek()
        if tok is None or tok[1] != value:
            where = self.end if tok is None else tok[2]
            raise self._error(where, f"expected {value!r}")
        self.i += 1

    def parse(self) -> Expr:
        if not self.tokens:
            raise ParseError(0, "empty expression")
        e = self.sum()
        tok = self.peek()
        if tok is not None:
            msg = "unbalanced ')'" if tok[1] == ")" else f"unexpected {tok[1]!r}"
            raise self._error(tok[2], msg)
        return e

    def sum(self) -> Expr:
        e = self.product()
        while (tok := self.peek()) is not None and tok[1] in "+-" and tok[0] == "op":
            self.take()
            rhs = self.product()
            e = Binary("add" if tok[1] == "+" else "sub", e, rhs)
        return e

    def product(self) -> Expr:
        e = self.unary()
        while (tok := self.peek()) is not None and tok[1] in "*/" and tok[0] == "op":
            self.take()
            rhs = self.unary()
            e = Binary("mul" if tok[1] == "*" else "div", e, rhs)
        return e

    def unary(self) -> Expr:
        tok = self.peek()
        if tok is not None and tok[1] == "-":
            self.take()
            arg = self.unary()
            # negative literals fold so that unparse/parse round-trips
            return Const(-arg.value) if isinstance(arg, Const) else Unary("neg", arg)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok is not None and tok[1] == "^":
            self.take()
            at = self.peek()
            exponent = self.unary()
            if is_constant(exponent):
                exponent = simplify(exponent)
            if not isinstance(exponent, Const):
                where = self.end if at is None else at[2]
                raise self._error(where, "exponent must be a constant")
            return Binary("pow", base, exponent)
        return base

    def atom(self) -> Expr:
        tok = self.take()
        if tok is None:
            raise self._error(self.end, "unexpected end of input")
        kind, value, start = tok
        if kind == "num":
            return Const(float(value))
        if kind == "name":
            m = re.fullmatch(r"x([1-9]\d*)", value)
            if m and 1 <= int(m.group(1)) <= NVARS:
                return Var(int(m.group(1)))
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.sum()
                self.expect(")")
                return Unary(value, arg)
            raise self._error(start, f"unknown identifier {value!r}")
        if value == "(":
            e = self.sum()
            self.expect(")")
            return e
        raise self._error(start, f"unexpected {value!r}")


def parse(text: str) -> Expr:
    """Parse expression text into an :data:`Expr` tree.

    >>> parse("x1^2 + sin(x2)")
    Binary(op='add', left=Binary(op='pow', left=Var(index=1), right=Const(value=2.0)), right=Unary(op='sin', arg=Var(index=2)))
    """
    return _Parser(text).parse()


_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


def unparse(e: Expr) -> str:
    """Render ``e`` as text that parses back to the same tree."""
    return _unparse(e)[0]


def _unparse(e: Expr) -> tuple[str, int]:
    if isinstance(e, Const):
        s = repr(e.value)
        if e.value < 0 or s.startswith("-"):
            return f"({s})", 5
        if s in ("inf", "nan"):
            raise ValueError(f"cannot render non-finite constant {s}")
        return s, 5
    if isinstance(e, Var):
        return f"x{e.index}", 5
    if isinstance(e, Unary):
        if e.op == "neg":
            s, p = _unparse(e.arg)
            # '-' binds looser than '^', tighter than '*'
            return ("-" + (s if p >= _PREC["neg"] else f"({s})")), _PREC["neg"]
        return f"{e.op}({unparse(e.arg)})", 5
    prec = _PREC[e.op]
    ls, lp = _unparse(e.left)
    rs, rp = _unparse(e.right)
    if e.op == "pow":
        ls = ls if lp > prec else f"({ls})"
        return f"{ls}^{rs}", prec
    ls = ls if lp >= prec else f"({ls})"
    rs = rs if rp > prec else f"({rs})"
    return f"{ls} {_SYM[e.op]} {rs}", prec


# -- differentiation ----------------------------------------------------------

def differentiate(e: Expr, k: int) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``x_k``."""
    if not 1 <= k <= NVARS:
        raise ValueError(f"coordinate index {k} outside 1..{NVARS}")
    return _d(e, k)


def _d(e: Expr, k: int) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == k else ZERO
    if isinstance(e, Unary):
        du = _d(e.arg, k)
        if _is(du, 0.0):
            return ZERO
        u = e.arg
        if e.op == "neg":
            return neg(du)
        if e.op == "sin":
            return mul(func("cos", u), du)
        if e.op == "cos":
            return neg(mul(func("sin", u), du))
        if e.op == "exp":
            return mul(func("exp", u), du)
        if e.op == "log":
            return div(du, u)
        if e.op == "sqrt":
            return div(du, mul(Const(2.0), func("sqrt", u)))
        raise ValueError(f"unknown unary op {e.op!r}")
    u, v = e.left, e.right
    du = _d(u, k)
    if e.op == "pow":
        n = v.value
        return mul(mul(Const(n), power(u, n - 1.0)), du)
    dv = _d(v, k)
    if e.op == "add":
        return add(du, dv)
    if e.op == "sub":
        return sub(du, dv)
    if e.op == "mul":
        return add(mul(du, v), mul(u, dv))
    if e.op == "div":
        if _is(dv, 0.0):
            return div(du, v)
        return div(sub(mul(du, v), mul(u, dv)), power(v, 2.0))
    raise ValueError(f"unknown binary op {e.op!r}")


def simplify(e: Expr) -> Expr:
    """Rebuild ``e`` bottom-up through the folding constructors."""
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Unary):
        a = simplify(e.arg)
        return neg(a) if e.op == "neg" else func(e.op, a)
    a, b = simplify(e.left), simplify(e.right)
    if e.op == "pow":
        return power(a, b.value)
    return {"add": add, "sub": sub, "mul": mul, "div": div}[e.op](a, b)


def is_constant(e: Expr) -> bool:
    if isinstance(e, Const):
        return True
    if isinstance(e, Var):
        return False
    if isinstance(e, Unary):
        return is_constant(e.arg)
    return is_constant(e.left) and is_constant(e.right)


# -- evaluation ---------------------------------------------------------------

def _pow(a: float, n: float) -> float:
    if a == 0.0 and n < 0:
        raise EvalError("zero raised to a negative power")
    if a < 0 and not float(n).is_integer():
        raise EvalError("negative base with non-integer exponent")
    try:
        r = a ** n
    except OverflowError as exc:
        raise EvalError("overflow in pow") from exc
    return r


def _apply_func(name: str, a: float) -> float:
    if name == "log":
        if a <= 0.0:
            raise EvalError(f"log of non-positive value {a!r}")
        return math.log(a)
    if name == "sqrt":
        if a < 0.0:
            raise EvalError(f"sqrt of negative value {a!r}")
        return math.sqrt(a)
    try:
        return getattr(math, name)(a)
    except OverflowError as exc:
        raise EvalError(f"overflow in {name}") from exc


def evaluate(e: Expr, p: Sequence[float]) -> float:
    """Value of ``e`` at the point ``p`` (coordinates x1..x4)."""
    r = _eval(e, p)
    if not math.isfinite(r):
        raise EvalError(f"non-finite result {r!r}")
    return r


def _eval(e: Expr, p: Sequence[float]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return float(p[e.index - 1])
    if isinstance(e, Unary):
        a = _eval(e.arg, p)
        return -a if e.op == "neg" else _apply_func(e.op, a)
    a = _eval(e.left, p)
    if e.op == "pow":
        return _pow(a, e.right.value)
    b = _eval(e.right, p)
    if e.op == "add":
        return a + b
    if e.op == "sub":
        return a - b
    if e.op == "mul":
        return a * b
    if b == 0.0:
        raise EvalError("division by zero")
    return a / b


def central_difference(e: Expr, k: int, p: Sequence[float], h: float = 1e-5) -> float:
    """Second-order central difference of ``e`` along ``x_k``; test oracle only."""
    lo, hi = list(map(float, p)), list(map(float, p))
    lo[k - 1] -= h
    hi[k - 1] += h
    return (evaluate(e, hi) - evaluate(e, lo)) / (2.0 * h)
