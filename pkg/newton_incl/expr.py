from __future__ import annotations

from dataclasses import dataclass
from functools import singledispatch
from typing import Any, Sequence

MAX_DEPTH = 64


class ExprFormatError(ValueError):
    pass


class PolyExpr:
    """Polynomial expression tree node."""

    def __add__(self, other):
        return Add(self, _coerce(other))

    def __radd__(self, other):
        return Add(_coerce(other), self)

    def __sub__(self, other):
        return Add(self, Neg(_coerce(other)))

    def __rsub__(self, other):
        return Add(_coerce(other), Neg(self))

    def __mul__(self, other):
        return Mul(self, _coerce(other))

    def __rmul__(self, other):
        return Mul(_coerce(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, k: int):
        return Pow(self, int(k))


def _coerce(value) -> PolyExpr:
    return value if isinstance(value, PolyExpr) else Const(float(value))


@dataclass(frozen=True, eq=True)
class Const(PolyExpr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(PolyExpr):
    index: int


@dataclass(frozen=True, eq=True)
class Add(PolyExpr):
    left: PolyExpr
    right: PolyExpr


@dataclass(frozen=True, eq=True)
class Neg(PolyExpr):
    arg: PolyExpr


@dataclass(frozen=True, eq=True)
class Mul(PolyExpr):
    left: PolyExpr
    right: PolyExpr


@dataclass(frozen=True, eq=True)
class Pow(PolyExpr):
    base: PolyExpr
    k: int


ZERO = Const(0.0)
ONE = Const(1.0)


# -- evaluation ---------------------------------------------------------------------------

@singledispatch
def evaluate(expr: PolyExpr, x: Sequence[Any]) -> Any:
    """Evaluate at x. Entries of x may be floats or numpy Polynomial objects."""
    raise ExprFormatError(f"Cannot evaluate {type(expr).__name__}")


@evaluate.register
def _(expr: Const, x):
    return expr.value


@evaluate.register
def _(expr: Var, x):
    return x[expr.index]


@evaluate.register
def _(expr: Add, x):
    return evaluate(expr.left, x) + evaluate(expr.right, x)


@evaluate.register
def _(expr: Neg, x):
    return -evaluate(expr.arg, x)


@evaluate.register
def _(expr: Mul, x):
    return evaluate(expr.left, x) * evaluate(expr.right, x)


@evaluate.register
def _(expr: Pow, x):
    if expr.k == 0:
        return 1.0
    return evaluate(expr.base, x) ** expr.k


# -- differentiation with constant folding ------------------------------------------------

def _is_const(e: PolyExpr, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def _add(a: PolyExpr, b: PolyExpr) -> PolyExpr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Add(a, b)


def _mul(a: PolyExpr, b: PolyExpr) -> PolyExpr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Mul(a, b)


def _neg(a: PolyExpr) -> PolyExpr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


@singledispatch
def differentiate(expr: PolyExpr, var: int) -> PolyExpr:
    raise ExprFormatError(f"Cannot differentiate {type(expr).__name__}")


@differentiate.register
def _(expr: Const, var: int):
    return ZERO


@differentiate.register
def _(expr: Var, var: int):
    return ONE if expr.index == var else ZERO


@differentiate.register
def _(expr: Add, var: int):
    return _add(differentiate(expr.left, var), differentiate(expr.right, var))


@differentiate.register
def _(expr: Neg, var: int):
    return _neg(differentiate(expr.arg, var))


@differentiate.register
def _(expr: Mul, var: int):
    # product rule
    return _add(
        _mul(differentiate(expr.left, var), expr.right),
        _mul(expr.left, differentiate(expr.right, var)),
    )


@differentiate.register
def _(expr: Pow, var: int):
    if expr.k == 0:
        return ZERO
    inner = differentiate(expr.base, var)
    if _is_const(inner, 0.0):
        return ZERO
    outer = expr.base if expr.k == 2 else (Pow(expr.base, expr.k - 1) if expr.k > 2 else ONE)
    return _mul(_mul(Const(float(expr.k)), outer), inner)


# -- structure ----------------------------------------------------------------------------

@singledispatch
def degree(expr: PolyExpr) -> int:
    raise ExprFormatError(f"Unknown node {type(expr).__name__}")


@degree.register
def _(expr: Const):
    return 0


@degree.register
def _(expr: Var):
    return 1


@degree.register
def _(expr: Add):
    return max(degree(expr.left), degree(expr.right))


@degree.register
def _(expr: Neg):
    return degree(expr.arg)


@degree.register
def _(expr: Mul):
    return degree(expr.left) + degree(expr.right)


@degree.register
def _(expr: Pow):
    return degree(expr.base) * expr.k


def children(expr: PolyExpr) -> tuple:
    if isinstance(expr, (Add, Mul)):
        return (expr.left, expr.right)
    if isinstance(expr, Neg):
        return (expr.arg,)
    if isinstance(expr, Pow):
        return (expr.base,)
    return ()


def depth(expr: PolyExpr) -> int:
    kids = children(expr)
    return 1 + (max(depth(k) for k in kids) if kids else 0)


def max_var_index(expr: PolyExpr) -> int:
    if isinstance(expr, Var):
        return expr.index
    kids = children(expr)
    return max((max_var_index(k) for k in kids), default=-1)


# -- JSON encoding: ["add", a, b] | ["mul", a, b] | ["neg", a] | ["pow", a, k] | ["var", i] | ["const", c]

def to_json(expr: PolyExpr) -> list:
    if isinstance(expr, Const):
        return ["const", expr.value]
    if isinstance(expr, Var):
        return ["var", expr.index]
    if isinstance(expr, Add):
        return ["add", to_json(expr.left), to_json(expr.right)]
    if isinstance(expr, Mul):
        return ["mul", to_json(expr.left), to_json(expr.right)]
    if isinstance(expr, Neg):
        return ["neg", to_json(expr.arg)]
    if isinstance(expr, Pow):
        return ["pow", to_json(expr.base), expr.k]
    raise ExprFormatError(f"Unknown node {type(expr).__name__}")


def from_json(doc: Any, path: str = "$", _level: int = 1) -> PolyExpr:
    if _level > MAX_DEPTH:
        raise ExprFormatError(f"{path}: expression deeper than {MAX_DEPTH}")
    if not isinstance(doc, (list, tuple)) or not doc or not isinstance(doc[0], str):
        raise ExprFormatError(f"{path}: expected [op, ...], got {doc!r}")
    op, args = doc[0].lower(), list(doc[1:])

    def sub(i: int) -> PolyExpr:
        return from_json(args[i], f"{path}[{i + 1}]", _level + 1)

    def need(count: int) -> None:
        if len(args) != count:
            raise ExprFormatError(f"{path}: '{op}' takes {count} argument(s), got {len(args)}")

    if op == "const":
        need(1)
        if isinstance(args[0], bool) or not isinstance(args[0], (int, float)):
            raise ExprFormatError(f"{path}[1]: constant must be a number, got {args[0]!r}")
        return Const(float(args[0]))
    if op == "var":
        need(1)
        if isinstance(args[0], bool) or not isinstance(args[0], int) or args[0] < 0:
            raise ExprFormatError(f"{path}[1]: variable index must be a nonnegative integer")
        return Var(int(args[0]))
    if op == "neg":
        need(1)
        return Neg(sub(0))
    if op == "pow":
        need(2)
        k = args[1]
        if isinstance(k, bool) or not isinstance(k, int) or k < 0:
            raise ExprFormatError(f"{path}[2]: power must be an integer >= 0, got {k!r}")
        return Pow(sub(0), int(k))
    if op in ("add", "mul"):
        if len(args) < 2:
            raise ExprFormatError(f"{path}: '{op}' takes at least 2 arguments")
        node = Add if op == "add" else Mul
        out = sub(0)
        for i in range(1, len(args)):
            out = node(out, sub(i))
        return out
    raise ExprFormatError(f"{path}: unknown operator {doc[0]!r}")
