"""Closed-form scalar expression trees with exact differentiation.

The DSL covers constants, named variables, the binary operations
``+ - * / ^`` (power with real exponent), and the unary functions
``exp ln sqrt sin cos tanh arctan``.  Trees are immutable; every
operation here is a pure function, so expressions are safe to share
between threads.

Grammar for :func:`parse` (EBNF, also documented in the README)::

    expr    = term { ("+" | "-") term } ;
    term    = factor { ("*" | "/") factor } ;
    factor  = "-" factor | power ;
    power   = atom [ "^" factor ] ;
    atom    = NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")" ;

Powers with non-integer exponents are defined for positive bases only;
integer exponents are evaluated sign-aware.  Simplification is limited
to constant folding and neutral-element elimination so that the output
of :func:`diff` stays predictable.

Two extra node kinds never produced by the parser support the gauge
machinery: :class:`Antideriv` (numeric antiderivative anchored at a base
point, used when :func:`antiderivative` returns :data:`QUADRATURE`) and
:class:`InverseFn` (numeric inversion of a strictly monotone map).  Both
differentiate exactly, so downstream residual checks stay symbolic.
"""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy.integrate import quad as _scipy_quad

sys.setrecursionlimit(max(sys.getrecursionlimit(), 100_000))

__all__ = [
    "Expr", "Const", "Var", "Bin", "Fn", "Neg", "Antideriv", "InverseFn",
    "Domain", "QUADRATURE",
    "wrap", "add", "sub", "mul", "div", "pow_", "neg", "fn",
    "parse", "to_text", "evaluate", "evaluate_scaled", "eval_grid",
    "eval_grid_scaled", "diff", "subst", "free_vars",
    "antiderivative", "antiderivative_expr", "invert_expr",
    "is_zero", "default_zero_tol", "low_discrepancy",
    "ExprError", "ParseError", "UnknownIdentifierError",
    "EvalError", "UnboundVariableError", "EvalDomainError",
    "SingularDomainError",
]

FUNCTIONS = ("exp", "ln", "sqrt", "sin", "cos", "tanh", "arctan")

#: default variables that parse without being declared
BASE_VARIABLES = ("t", "x", "u", "omega")

_INT_TOL = 1e-12


# ---------------------------------------------------------------------------
# errors

class ExprError(Exception):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected = tuple(sorted(expected))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, offset: int):
        self.name = name
        super().__init__(f"unknown identifier '{name}'", offset)


class EvalError(ExprError):
    def __init__(self, message: str, node: "Expr | None" = None):
        self.node = node
        if node is not None:
            message = f"{message} in subexpression '{to_text(node)}'"
        super().__init__(message)


class UnboundVariableError(EvalError):
    pass


class EvalDomainError(EvalError):
    pass


class SingularDomainError(ExprError):
    pass


# ---------------------------------------------------------------------------
# nodes

class Expr:
    """Base class; concrete nodes are frozen dataclasses."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, other):
        return pow_(self, other)

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_text(self)

    def diff(self, var: str, order: int = 1) -> "Expr":
        return diff(self, var, order)

    def subst(self, mapping: Mapping[str, "Expr | float"]) -> "Expr":
        return subst(self, mapping)

    def __call__(self, **bindings: float) -> float:
        return evaluate(self, bindings)


@dataclass(frozen=True, repr=False)
class Const(Expr):
    value: float

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, repr=False)
class Var(Expr):
    name: str

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True, repr=False)
class Bin(Expr):
    op: str  # one of + - * / ^
    lhs: Expr
    rhs: Expr

    def __repr__(self):
        return f"Bin({self.op!r}, {self.lhs!r}, {self.rhs!r})"


@dataclass(frozen=True, repr=False)
class Fn(Expr):
    name: str
    arg: Expr

    def __repr__(self):
        return f"Fn({self.name!r}, {self.arg!r})"


@dataclass(frozen=True, repr=False)
class Neg(Expr):
    arg: Expr

    def __repr__(self):
        return f"Neg({self.arg!r})"


@dataclass(frozen=True, repr=False)
class Antideriv(Expr):
    """F(y) = integral of ``integrand`` d``var`` from ``base`` to y, applied at ``arg``.

    Built by :func:`antiderivative_expr` when no symbolic antiderivative
    exists.  Evaluation uses adaptive Gauss-Kronrod quadrature (abs tol
    1e-12); the exact derivative is ``integrand(arg) * arg'``.
    """

    integrand: Expr
    var: str
    base: float
    arg: Expr

    def __repr__(self):
        return f"Antideriv({self.integrand!r}, {self.var!r}, {self.base!r}, {self.arg!r})"


@dataclass(frozen=True, repr=False)
class InverseFn(Expr):
    """y solving ``fwd(y) = arg`` with y in [lo, hi]; ``fwd`` strictly monotone.

    Evaluation brackets by bisection and polishes with Newton steps to
    tol 1e-12; the exact derivative is ``arg' / fwd'(y)``.
    """

    fwd: Expr
    var: str
    lo: float
    hi: float
    arg: Expr

    def __repr__(self):
        return f"InverseFn({self.fwd!r}, {self.var!r}, {self.lo!r}, {self.hi!r}, {self.arg!r})"


ZERO = Const(0.0)
ONE = Const(1.0)


class _Quadrature:
    """Marker returned by :func:`antiderivative` outside the closed subset."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "QUADRATURE"


QUADRATURE = _Quadrature()


# ---------------------------------------------------------------------------
# smart constructors: constant folding + neutral-element elimination only

def wrap(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Const(float(x))
    raise TypeError(f"cannot interpret {x!r} as an expression")


def _cval(e: Expr):
    return e.value if isinstance(e, Const) else None


def add(a, b) -> Expr:
    a, b = wrap(a), wrap(b)
    av, bv = _cval(a), _cval(b)
    if av is not None and bv is not None:
        return Const(av + bv)
    if av == 0.0:
        return b
    if bv == 0.0:
        return a
    return Bin("+", a, b)


def sub(a, b) -> Expr:
    a, b = wrap(a), wrap(b)
    av, bv = _cval(a), _cval(b)
    if av is not None and bv is not None:
        return Const(av - bv)
    if bv == 0.0:
        return a
    if av == 0.0:
        return neg(b)
    return Bin("-", a, b)


def mul(a, b) -> Expr:
    a, b = wrap(a), wrap(b)
    av, bv = _cval(a), _cval(b)
    if av is not None and bv is not None:
        return Const(av * bv)
    if av == 0.0 or bv == 0.0:
        return ZERO
    if av == 1.0:
        return b
    if bv == 1.0:
        return a
    # fold nested constant factors: c1 * (c2 * e) -> (c1*c2) * e
    if av is not None and isinstance(b, Bin) and b.op == "*":
        if isinstance(b.lhs, Const):
            return mul(Const(av * b.lhs.value), b.rhs)
    if bv is not None and isinstance(a, Bin) and a.op == "*":
        if isinstance(a.lhs, Const):
            return mul(Const(bv * a.lhs.value), a.rhs)
    return Bin("*", a, b)


def div(a, b) -> Expr:
    a, b = wrap(a), wrap(b)
    av, bv = _cval(a), _cval(b)
    if av is not None and bv is not None and bv != 0.0:
        return Const(av / bv)
    if bv == 1.0:
        return a
    if av == 0.0 and bv != 0.0:
        return ZERO
    return Bin("/", a, b)


def pow_(a, b) -> Expr:
    a, b = wrap(a), wrap(b)
    av, bv = _cval(a), _cval(b)
    if bv == 1.0:
        return a
    if bv == 0.0:
        return ONE
    if av == 1.0:
        return ONE
    if av is not None and bv is not None:
        try:
            return Const(_pow_float(av, bv))
        except EvalDomainError:
            pass  # leave unfolded; evaluation will report it
    return Bin("^", a, b)


def neg(a) -> Expr:
    a = wrap(a)
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def fn(name: str, arg) -> Expr:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function '{name}'")
    arg = wrap(arg)
    av = _cval(arg)
    if av is not None:
        try:
            return Const(_FN_NUM[name](av))
        except (ValueError, OverflowError):
            pass  # leave unfolded; evaluation will report it
    return Fn(name, arg)


def exp(a) -> Expr:
    return fn("exp", a)


def ln(a) -> Expr:
    return fn("ln", a)


def sqrt(a) -> Expr:
    return fn("sqrt", a)


def tanh(a) -> Expr:
    return fn("tanh", a)


def arctan(a) -> Expr:
    return fn("arctan", a)


_FN_NUM: dict[str, Callable[[float], float]] = {
    "exp": math.exp,
    "ln": math.log,
    "sqrt": math.sqrt,
    "sin": math.sin,
    "cos": math.cos,
    "tanh": math.tanh,
    "arctan": math.atan,
}


def _pow_float(base: float, p: float) -> float:
    """Sign-aware power: integer exponents allow negative bases."""
    r = round(p)
    if abs(p - r) <= _INT_TOL * max(1.0, abs(p)):
        if base == 0.0 and r < 0:
            raise EvalDomainError("zero base with negative exponent")
        return float(base) ** int(r)
    if base <= 0.0:
        raise EvalDomainError(f"non-integer power of non-positive base {base!r}")
    return math.exp(p * math.log(base))


# ---------------------------------------------------------------------------
# structure helpers

def free_vars(e: Expr, _memo: dict | None = None) -> frozenset:
    if _memo is None:
        _memo = {}
    got = _memo.get(id(e))
    if got is not None:
        return got
    if isinstance(e, Const):
        out = frozenset()
    elif isinstance(e, Var):
        out = frozenset((e.name,))
    elif isinstance(e, Bin):
        out = free_vars(e.lhs, _memo) | free_vars(e.rhs, _memo)
    elif isinstance(e, (Fn, Neg)):
        out = free_vars(e.arg, _memo)
    elif isinstance(e, Antideriv):
        out = (free_vars(e.integrand, _memo) - {e.var}) | free_vars(e.arg, _memo)
    elif isinstance(e, InverseFn):
        out = (free_vars(e.fwd, _memo) - {e.var}) | free_vars(e.arg, _memo)
    else:
        raise TypeError(f"not an Expr: {e!r}")
    _memo[id(e)] = out
    return out


def subst(e: Expr, mapping: Mapping[str, Expr | float]) -> Expr:
    """Simultaneous substitution of variables; replacements are not re-scanned."""
    m = {k: wrap(v) for k, v in mapping.items()}

    memo: dict[int, Expr] = {}

    def go(node: Expr, bound: frozenset) -> Expr:
        key = id(node)
        got = memo.get(key)
        if got is not None and not bound:
            return got
        if isinstance(node, Const):
            out = node
        elif isinstance(node, Var):
            out = m[node.name] if (node.name in m and node.name not in bound) else node
        elif isinstance(node, Bin):
            l, r = go(node.lhs, bound), go(node.rhs, bound)
            out = node if (l is node.lhs and r is node.rhs) else _BIN_CTOR[node.op](l, r)
        elif isinstance(node, Fn):
            a = go(node.arg, bound)
            out = node if a is node.arg else fn(node.name, a)
        elif isinstance(node, Neg):
            a = go(node.arg, bound)
            out = node if a is node.arg else neg(a)
        elif isinstance(node, Antideriv):
            integ = go(node.integrand, bound | {node.var})
            a = go(node.arg, bound)
            out = node if (integ is node.integrand and a is node.arg) else \
                Antideriv(integ, node.var, node.base, a)
        elif isinstance(node, InverseFn):
            fwd = go(node.fwd, bound | {node.var})
            a = go(node.arg, bound)
            out = node if (fwd is node.fwd and a is node.arg) else \
                InverseFn(fwd, node.var, node.lo, node.hi, a)
        else:
            raise TypeError(f"not an Expr: {node!r}")
        if not bound:
            memo[key] = out
        return out

    return go(e, frozenset())


_BIN_CTOR = {"+": add, "-": sub, "*": mul, "/": div, "^": pow_}


# ---------------------------------------------------------------------------
# evaluation

def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """IEEE double value of ``e`` with all free variables bound."""
    return _eval(e, dict(bindings), {})


def _eval(e: Expr, b: dict, memo: dict) -> float:
    key = id(e)
    got = memo.get(key)
    if got is not None:
        return got
    if isinstance(e, Const):
        v = e.value
    elif isinstance(e, Var):
        try:
            v = float(b[e.name])
        except KeyError:
            raise UnboundVariableError(f"unbound variable '{e.name}'", e) from None
    elif isinstance(e, Bin):
        l = _eval(e.lhs, b, memo)
        r = _eval(e.rhs, b, memo)
        op = e.op
        if op == "+":
            v = l + r
        elif op == "-":
            v = l - r
        elif op == "*":
            v = l * r
        elif op == "/":
            if r == 0.0:
                raise EvalDomainError("division by zero", e)
            v = l / r
        else:
            try:
                v = _pow_float(l, r)
            except EvalDomainError as err:
                raise EvalDomainError(err.args[0], e) from None
    elif isinstance(e, Fn):
        a = _eval(e.arg, b, memo)
        if e.name == "ln" and a <= 0.0:
            raise EvalDomainError(f"ln of non-positive value {a!r}", e)
        if e.name == "sqrt" and a < 0.0:
            raise EvalDomainError(f"sqrt of negative value {a!r}", e)
        try:
            v = _FN_NUM[e.name](a)
        except (ValueError, OverflowError) as err:
            raise EvalDomainError(f"{e.name}: {err}", e) from None
    elif isinstance(e, Neg):
        v = -_eval(e.arg, b, memo)
    elif isinstance(e, Antideriv):
        y = _eval(e.arg, b, memo)
        v = _quad_value(e, y, b)
    elif isinstance(e, InverseFn):
        s = _eval(e.arg, b, memo)
        v = _invert_value(e, s, b)
    else:
        raise TypeError(f"not an Expr: {e!r}")
    if math.isnan(v):
        raise EvalDomainError("evaluation produced NaN", e)
    memo[key] = v
    return v


def evaluate_scaled(e: Expr, bindings: Mapping[str, float]) -> tuple[float, float]:
    """Value plus the largest magnitude among all subexpression values."""
    memo: dict = {}
    val = _eval(e, dict(bindings), memo)
    scale = max((abs(v) for v in memo.values()), default=abs(val))
    return val, scale


def _quad_value(node: Antideriv, y: float, bindings: dict) -> float:
    def f(s: float) -> float:
        return _eval(node.integrand, {**bindings, node.var: s}, {})

    val, _err = _scipy_quad(f, node.base, y, epsabs=1e-12, epsrel=1e-12, limit=200)
    return val


def _invert_value(node: InverseFn, target: float, bindings: dict) -> float:
    def f(y: float) -> float:
        return _eval(node.fwd, {**bindings, node.var: y}, {})

    lo, hi = node.lo, node.hi
    flo, fhi = f(lo), f(hi)
    if flo > fhi:
        lo, hi, flo, fhi = hi, lo, fhi, flo
    pad = 1e-9 * (1.0 + abs(fhi - flo))
    if not (flo - pad <= target <= fhi + pad):
        raise EvalDomainError(f"inversion target {target!r} outside range "
                              f"[{flo!r}, {fhi!r}]", node)
    a, b = (node.lo, node.hi) if node.lo < node.hi else (node.hi, node.lo)
    fa = f(a)
    increasing = fa <= f(b)
    for _ in range(90):
        m = 0.5 * (a + b)
        fm = f(m)
        if (fm < target) == increasing:
            a = m
        else:
            b = m
        if b - a <= 1e-15 * max(1.0, abs(a)):
            break
    y = 0.5 * (a + b)
    dfwd = diff(node.fwd, node.var)
    for _ in range(4):
        fy = f(y) - target
        dy = _eval(dfwd, {**bindings, node.var: y}, {})
        if dy == 0.0:
            break
        step = fy / dy
        y -= step
        if abs(step) <= 1e-12 * max(1.0, abs(y)):
            break
    return min(max(y, min(node.lo, node.hi)), max(node.lo, node.hi))


def eval_grid(e: Expr, arrays: Mapping[str, np.ndarray]) -> np.ndarray:
    """Vectorized evaluation; domain violations come back as NaN, not errors."""
    arrs = {k: np.asarray(v, dtype=float) for k, v in arrays.items()}
    shape = np.broadcast_shapes(*(a.shape for a in arrs.values())) if arrs else ()
    out, _ = _eval_grid_walk(e, arrs, shape, {}, None)
    return np.broadcast_to(out, shape).copy() if shape else out


def eval_grid_scaled(e: Expr, arrays: Mapping[str, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized value plus pointwise max magnitude over all subexpressions."""
    arrs = {k: np.asarray(v, dtype=float) for k, v in arrays.items()}
    shape = np.broadcast_shapes(*(a.shape for a in arrs.values()))
    scale = np.zeros(shape)
    out, scale = _eval_grid_walk(e, arrs, shape, {}, scale)
    return np.broadcast_to(out, shape).copy(), scale


def _eval_grid_walk(e, arrs, shape, memo, scale):
    key = id(e)
    if key in memo:
        return memo[key], scale
    with np.errstate(all="ignore"):
        if isinstance(e, Const):
            v = np.asarray(e.value)
        elif isinstance(e, Var):
            if e.name not in arrs:
                raise UnboundVariableError(f"unbound variable '{e.name}'", e)
            v = arrs[e.name]
        elif isinstance(e, Bin):
            l, scale = _eval_grid_walk(e.lhs, arrs, shape, memo, scale)
            r, scale = _eval_grid_walk(e.rhs, arrs, shape, memo, scale)
            if e.op == "+":
                v = l + r
            elif e.op == "-":
                v = l - r
            elif e.op == "*":
                v = l * r
            elif e.op == "/":
                v = np.where(r != 0.0, l / np.where(r != 0.0, r, 1.0), np.nan)
            else:
                v = _np_pow(l, r, e.rhs)
        elif isinstance(e, Fn):
            a, scale = _eval_grid_walk(e.arg, arrs, shape, memo, scale)
            v = _NP_FN[e.name](a)
        elif isinstance(e, Neg):
            a, scale = _eval_grid_walk(e.arg, arrs, shape, memo, scale)
            v = -a
        elif isinstance(e, (Antideriv, InverseFn)):
            a, scale = _eval_grid_walk(e.arg, arrs, shape, memo, scale)
            a_full = np.broadcast_to(a, shape)
            flat = np.asarray(a_full, dtype=float).ravel()
            outv = np.empty_like(flat)
            other = {k: np.broadcast_to(arr, shape).ravel() for k, arr in arrs.items()}
            for i, target in enumerate(flat):
                point = {k: float(col[i]) for k, col in other.items()}
                try:
                    if isinstance(e, Antideriv):
                        outv[i] = _quad_value(e, float(target), point)
                    else:
                        outv[i] = _invert_value(e, float(target), point)
                except EvalError:
                    outv[i] = np.nan
            v = outv.reshape(shape)
        else:
            raise TypeError(f"not an Expr: {e!r}")
    memo[key] = v
    if scale is not None:
        scale = np.maximum(scale, np.abs(np.broadcast_to(v, shape)))
    return v, scale


def _np_pow(base, p, p_node):
    pv = _cval(p_node) if isinstance(p_node, Const) else None
    if pv is not None:
        r = round(pv)
        if abs(pv - r) <= _INT_TOL * max(1.0, abs(pv)):
            return np.power(base, int(r))
        return np.where(base > 0.0, np.power(np.where(base > 0.0, base, 1.0), pv), np.nan)
    return np.where(base > 0.0, np.exp(p * np.log(np.where(base > 0.0, base, 1.0))), np.nan)


_NP_FN = {
    "exp": np.exp,
    "ln": lambda a: np.where(a > 0.0, np.log(np.where(a > 0.0, a, 1.0)), np.nan),
    "sqrt": lambda a: np.where(a >= 0.0, np.sqrt(np.abs(a)), np.nan),
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "arctan": np.arctan,
}


# ---------------------------------------------------------------------------
# differentiation

def diff(e: Expr, var: str, order: int = 1) -> Expr:
    """Exact symbolic derivative of ``e`` with respect to ``var``."""
    if order < 1:
        raise ValueError("order must be >= 1")
    out = e
    for _ in range(order):
        out = _d(out, var, {})
    return out


def _d(e: Expr, v: str, memo: dict) -> Expr:
    key = id(e)
    got = memo.get(key)
    if got is not None:
        return got
    if isinstance(e, Const):
        out = ZERO
    elif isinstance(e, Var):
        out = ONE if e.name == v else ZERO
    elif isinstance(e, Bin):
        dl = _d(e.lhs, v, memo)
        dr = _d(e.rhs, v, memo)
        if e.op == "+":
            out = add(dl, dr)
        elif e.op == "-":
            out = sub(dl, dr)
        elif e.op == "*":
            out = add(mul(dl, e.rhs), mul(e.lhs, dr))
        elif e.op == "/":
            out = div(sub(mul(dl, e.rhs), mul(e.lhs, dr)), pow_(e.rhs, 2.0))
        else:  # power
            if dr == ZERO:
                # constant exponent: b * a^(b-1) * a'
                out = mul(mul(e.rhs, pow_(e.lhs, sub(e.rhs, ONE))), dl)
            else:
                out = mul(e, add(mul(dr, ln(e.lhs)), mul(e.rhs, div(dl, e.lhs))))
    elif isinstance(e, Fn):
        da = _d(e.arg, v, memo)
        name = e.name
        if name == "exp":
            out = mul(e, da)
        elif name == "ln":
            out = div(da, e.arg)
        elif name == "sqrt":
            out = div(da, mul(2.0, e))
        elif name == "sin":
            out = mul(fn("cos", e.arg), da)
        elif name == "cos":
            out = neg(mul(fn("sin", e.arg), da))
        elif name == "tanh":
            out = mul(sub(ONE, pow_(e, 2.0)), da)
        else:  # arctan
            out = div(da, add(ONE, pow_(e.arg, 2.0)))
    elif isinstance(e, Neg):
        out = neg(_d(e.arg, v, memo))
    elif isinstance(e, Antideriv):
        out = mul(subst(e.integrand, {e.var: e.arg}), _d(e.arg, v, memo))
    elif isinstance(e, InverseFn):
        dfwd = _d(e.fwd, e.var, {})
        out = div(_d(e.arg, v, memo), subst(dfwd, {e.var: e}))
    else:
        raise TypeError(f"not an Expr: {e!r}")
    memo[key] = out
    return out


# ---------------------------------------------------------------------------
# antiderivative

def antiderivative(e: Expr, v: str):
    """Exact antiderivative (zero constant) or the QUADRATURE marker.

    Closed subset: polynomials in ``v``, ``c*(a v + b)^p`` with constant
    ``p != -1`` (``p = -1`` gives a logarithm), ``c * exp(a v + b)``, and
    linear combinations of those with coefficients free of ``v``.
    """
    out = _anti(e, v)
    return out if out is not None else QUADRATURE


def _anti(e: Expr, v: str):
    if v not in free_vars(e):
        return mul(e, Var(v))
    poly = _as_polynomial(e, v)
    if poly is not None:
        terms = None
        for k, c in sorted(poly.items()):
            term = mul(div(c, float(k + 1)), pow_(Var(v), float(k + 1)))
            terms = term if terms is None else add(terms, term)
        return terms if terms is not None else ZERO
    if isinstance(e, Bin) and e.op in ("+", "-"):
        l = _anti(e.lhs, v)
        r = _anti(e.rhs, v)
        if l is None or r is None:
            return None
        return add(l, r) if e.op == "+" else sub(l, r)
    if isinstance(e, Neg):
        inner = _anti(e.arg, v)
        return None if inner is None else neg(inner)
    if isinstance(e, Bin) and e.op == "*":
        if v not in free_vars(e.lhs):
            inner = _anti(e.rhs, v)
            return None if inner is None else mul(e.lhs, inner)
        if v not in free_vars(e.rhs):
            inner = _anti(e.lhs, v)
            return None if inner is None else mul(inner, e.rhs)
        return None
    if isinstance(e, Bin) and e.op == "/":
        if v not in free_vars(e.rhs):
            inner = _anti(e.lhs, v)
            return None if inner is None else div(inner, e.rhs)
        lin = _as_linear(e.rhs, v)
        if lin is not None and v not in free_vars(e.lhs):
            a, b = lin
            av = _cval(a)
            if av is not None and av != 0.0:
                # c / (a v + b) -> (c/a) ln(a v + b)
                return mul(div(e.lhs, a), ln(e.rhs))
        return None
    if isinstance(e, Bin) and e.op == "^":
        p = _cval(e.rhs)
        lin = _as_linear(e.lhs, v)
        if lin is not None:
            a, b = lin
            av = _cval(a)
            if av is not None and av != 0.0:
                if p is not None and abs(p + 1.0) <= _INT_TOL:
                    return div(ln(e.lhs), a)
                if p is not None:
                    return div(pow_(e.lhs, p + 1.0), mul(a, p + 1.0))
                if v not in free_vars(e.rhs):
                    # symbolic exponent, constant in v; caller guarantees != -1
                    p1 = add(e.rhs, ONE)
                    return div(pow_(e.lhs, p1), mul(a, p1))
        return None
    if isinstance(e, Fn) and e.name == "exp":
        lin = _as_linear(e.arg, v)
        if lin is not None:
            a, _b = lin
            av = _cval(a)
            if av is not None and av != 0.0:
                return div(e, a)
    return None


def _as_linear(e: Expr, v: str):
    """Decompose ``e`` as ``a*v + b`` with a, b free of v; None if not linear."""
    poly = _as_polynomial(e, v, max_degree=1)
    if poly is None:
        return None
    return poly.get(1, ZERO), poly.get(0, ZERO)


def _as_polynomial(e: Expr, v: str, max_degree: int = 16):
    """Coefficient dict {degree: Expr} of ``e`` as a polynomial in v, else None."""
    if v not in free_vars(e):
        return {0: e}
    if isinstance(e, Var):
        return {1: ONE} if e.name == v else {0: e}
    if isinstance(e, Neg):
        inner = _as_polynomial(e.arg, v, max_degree)
        return None if inner is None else {k: neg(c) for k, c in inner.items()}
    if isinstance(e, Bin):
        if e.op in ("+", "-"):
            l = _as_polynomial(e.lhs, v, max_degree)
            r = _as_polynomial(e.rhs, v, max_degree)
            if l is None or r is None:
                return None
            out = dict(l)
            for k, c in r.items():
                cur = out.get(k)
                out[k] = (add(cur, c) if e.op == "+" else sub(cur, c)) if cur is not None \
                    else (c if e.op == "+" else neg(c))
            return out
        if e.op == "*":
            l = _as_polynomial(e.lhs, v, max_degree)
            r = _as_polynomial(e.rhs, v, max_degree)
            if l is None or r is None:
                return None
            if max(l, default=0) + max(r, default=0) > max_degree:
                return None
            out: dict[int, Expr] = {}
            for k1, c1 in l.items():
                for k2, c2 in r.items():
                    k = k1 + k2
                    term = mul(c1, c2)
                    out[k] = add(out[k], term) if k in out else term
            return out
        if e.op == "/":
            if v in free_vars(e.rhs):
                return None
            l = _as_polynomial(e.lhs, v, max_degree)
            if l is None:
                return None
            return {k: div(c, e.rhs) for k, c in l.items()}
        if e.op == "^":
            p = _cval(e.rhs)
            if p is None or abs(p - round(p)) > _INT_TOL or round(p) < 0:
                return None
            k = int(round(p))
            if k == 0:
                return {0: ONE}
            base = _as_polynomial(e.lhs, v, max_degree)
            if base is None or max(base, default=0) * k > max_degree:
                return None
            out = dict(base)
            for _ in range(k - 1):
                nxt: dict[int, Expr] = {}
                for k1, c1 in out.items():
                    for k2, c2 in base.items():
                        kk = k1 + k2
                        term = mul(c1, c2)
                        nxt[kk] = add(nxt[kk], term) if kk in nxt else term
                out = nxt
            return out
    return None


def antiderivative_expr(e: Expr, v: str, base: float) -> Expr:
    """Antiderivative as an Expr in ``v``: symbolic when possible, else an
    :class:`Antideriv` quadrature node anchored at ``base``."""
    out = antiderivative(e, v)
    if out is QUADRATURE:
        return Antideriv(e, v, base, Var(v))
    return out


# ---------------------------------------------------------------------------
# closed-form inversion (used by the gauge machinery)

def invert_expr(e: Expr, v: str, target: Expr | None = None):
    """Solve ``e(v) = s`` for v in closed form; None when outside the
    invertible set (linear, powers, exp, ln, sqrt, Moebius, compositions)."""
    s = target if target is not None else Var(v)
    return _invert(e, v, s)


def _invert(e: Expr, v: str, s: Expr):
    if isinstance(e, Var) and e.name == v:
        return s
    if v not in free_vars(e):
        return None
    if isinstance(e, Neg):
        return _invert(e.arg, v, neg(s))
    if isinstance(e, Bin):
        lf = v not in free_vars(e.lhs)
        rf = v not in free_vars(e.rhs)
        if e.op == "+":
            if lf:
                return _invert(e.rhs, v, sub(s, e.lhs))
            if rf:
                return _invert(e.lhs, v, sub(s, e.rhs))
        elif e.op == "-":
            if lf:
                return _invert(e.rhs, v, sub(e.lhs, s))
            if rf:
                return _invert(e.lhs, v, add(s, e.rhs))
        elif e.op == "*":
            if lf:
                return _invert(e.rhs, v, div(s, e.lhs))
            if rf:
                return _invert(e.lhs, v, div(s, e.rhs))
        elif e.op == "/":
            if rf:
                return _invert(e.lhs, v, mul(s, e.rhs))
            if lf:
                return _invert(e.rhs, v, div(e.lhs, s))
            # Moebius: (a v + b) / (c v + d)
            top = _as_linear(e.lhs, v)
            bot = _as_linear(e.rhs, v)
            if top is not None and bot is not None:
                a, b = top
                c, d = bot
                return div(sub(mul(d, s), b), sub(a, mul(c, s)))
        elif e.op == "^":
            p = _cval(e.rhs)
            if p is not None and p != 0.0:
                return _invert(e.lhs, v, pow_(s, 1.0 / p))
    if isinstance(e, Fn):
        if e.name == "exp":
            return _invert(e.arg, v, ln(s))
        if e.name == "ln":
            return _invert(e.arg, v, exp(s))
        if e.name == "sqrt":
            return _invert(e.arg, v, pow_(s, 2.0))
    return None


# ---------------------------------------------------------------------------
# identity testing

def default_zero_tol() -> float:
    """Zero-test tolerance; env var KAWAHARA_SEED_TOL overrides the 1e-9 default."""
    raw = os.environ.get("KAWAHARA_SEED_TOL")
    return float(raw) if raw else 1e-9


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def low_discrepancy(lo: float, hi: float, n: int,
                    exclusions: Iterable[float] = ()) -> np.ndarray:
    """Deterministic golden-ratio Kronecker sequence on [lo, hi]."""
    excl = list(exclusions)
    pts: list[float] = []
    i = 1
    guard = 8 * n + 16
    min_gap = 1e-9 * (hi - lo)
    while len(pts) < n and i <= guard:
        frac = (i * _GOLDEN) % 1.0
        p = lo + frac * (hi - lo)
        i += 1
        if any(abs(p - q) <= min_gap for q in excl):
            continue
        pts.append(p)
    return np.array(pts)


@dataclass(frozen=True)
class Domain:
    """Interval for one variable with known singular points excluded."""

    var: str
    lo: float
    hi: float
    exclusions: tuple = ()

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"domain needs lo < hi, got [{self.lo}, {self.hi}]")
        for p in self.exclusions:
            if not (self.lo <= p <= self.hi):
                raise ValueError(f"exclusion {p} outside [{self.lo}, {self.hi}]")
        object.__setattr__(self, "exclusions", tuple(float(p) for p in self.exclusions))

    def sample(self, n: int = 64) -> np.ndarray:
        return low_discrepancy(self.lo, self.hi, n, self.exclusions)

    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)


def is_zero(e: Expr, dom: Domain, params: Mapping[str, float] | None = None,
            eps: float | None = None, n: int = 64) -> bool:
    """Probabilistic identity test by low-discrepancy sampling.

    True iff |e| <= eps * (1 + max |subterm|) at every usable sample point.
    Points where evaluation fails are skipped; more than half failing is a
    SingularDomainError.
    """
    if eps is None:
        eps = default_zero_tol()
    base = dict(params) if params else {}
    pts = dom.sample(n)
    failures = 0
    for p in pts:
        try:
            val, scale = evaluate_scaled(e, {**base, dom.var: float(p)})
        except EvalError:
            failures += 1
            continue
        if abs(val) > eps * (1.0 + scale):
            return False
    if failures > len(pts) // 2:
        raise SingularDomainError(
            f"domain too singular: {failures}/{len(pts)} sample points failed")
    return True


# ---------------------------------------------------------------------------
# parsing and printing

_PREC = {"+": 10, "-": 10, "*": 20, "/": 20, "neg": 25, "^": 30}


def _prec(e: Expr) -> int:
    if isinstance(e, Bin):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    return 100


def _fmt_float(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_text(e: Expr) -> str:
    """Infix rendering; reparsing the output of a parsed tree reproduces it."""
    if isinstance(e, Const):
        return _fmt_float(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        if _prec(e.arg) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Fn):
        return f"{e.name}({to_text(e.arg)})"
    if isinstance(e, Bin):
        lt, rt = to_text(e.lhs), to_text(e.rhs)
        p = _PREC[e.op]
        if e.op == "^":
            if _prec(e.lhs) <= p:
                lt = f"({lt})"
            if _prec(e.rhs) < _PREC["neg"]:
                rt = f"({rt})"
        else:
            if _prec(e.lhs) < p:
                lt = f"({lt})"
            if _prec(e.rhs) <= p:
                rt = f"({rt})"
        if e.op == "^":
            return f"{lt}^{rt}"
        return f"{lt} {e.op} {rt}"
    if isinstance(e, Antideriv):
        return (f"integral({to_text(e.integrand)}, {e.var}, "
                f"{_fmt_float(e.base)})({to_text(e.arg)})")
    if isinstance(e, InverseFn):
        return f"inverse({to_text(e.fwd)}, {e.var})({to_text(e.arg)})"
    raise TypeError(f"not an Expr: {e!r}")


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens: list[tuple[str, str, int]] = []
        self._run()

    def _run(self):
        text = self.text
        i = 0
        while i < len(text):
            ch = text[i]
            if ch.isspace():
                i += 1
                continue
            if ch.isdigit() or (ch == "." and i + 1 < len(text) and text[i + 1].isdigit()):
                j = i
                seen_dot = False
                while j < len(text) and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                    if text[j] == ".":
                        seen_dot = True
                    j += 1
                if j < len(text) and text[j] in "eE":
                    k = j + 1
                    if k < len(text) and text[k] in "+-":
                        k += 1
                    if k < len(text) and text[k].isdigit():
                        while k < len(text) and text[k].isdigit():
                            k += 1
                        j = k
                self.tokens.append(("num", text[i:j], i))
                i = j
                continue
            if ch.isalpha() or ch == "_" or ch == "ω":
                j = i
                while j < len(text) and (text[j].isalnum() or text[j] in "_'ω′"):
                    j += 1
                name = text[i:j].replace("ω", "omega")
                self.tokens.append(("ident", name, i))
                i = j
                continue
            if ch in "+-*/^()":
                self.tokens.append((ch, ch, i))
                i += 1
                continue
            raise ParseError(f"unexpected character '{ch}'", i)
        self.tokens.append(("end", "", len(text)))


class _Parser:
    def __init__(self, text: str, known: frozenset):
        self.toks = _Tokenizer(text).tokens
        self.i = 0
        self.known = known

    def peek(self):
        return self.toks[self.i]

    def advance(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str):
        tok = self.peek()
        if tok[0] != kind:
            raise ParseError(f"unexpected token '{tok[1] or 'end of input'}'",
                             tok[2], expected={kind})
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected token '{tok[1]}'", tok[2],
                             expected={"+", "-", "*", "/", "^", "end"})
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            rhs = self.factor()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def factor(self) -> Expr:
        if self.peek()[0] == "-":
            self.advance()
            return neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "^":
            self.advance()
            return pow_(base, self.factor())
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        if tok[0] == "num":
            self.advance()
            return Const(float(tok[1]))
        if tok[0] == "ident":
            self.advance()
            name = tok[1]
            if self.peek()[0] == "(":
                if name not in FUNCTIONS:
                    raise UnknownIdentifierError(name, tok[2])
                self.advance()
                arg = self.expr()
                self.expect(")")
                return fn(name, arg)
            if name not in self.known:
                raise UnknownIdentifierError(name, tok[2])
            return Var(name)
        if tok[0] == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(f"unexpected token '{tok[1] or 'end of input'}'",
                         tok[2], expected={"number", "identifier", "(", "-"})


def parse(text: str, params: Iterable[str] = ()) -> Expr:
    """Parse an infix expression.  Identifiers other than t, x, u, omega
    and the declared ``params`` are rejected with their byte offset."""
    known = frozenset(BASE_VARIABLES) | frozenset(params)
    return _Parser(text, known).parse()
