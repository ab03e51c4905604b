"""Arithmetic expression DSL in the variables ``x`` and ``y``.

Grammar (precedence ``^`` > unary ``-`` > ``* /`` > ``+ -``, ``^`` right
associative)::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := "-" factor | power
    power  := atom ("^" factor)?
    atom   := number | "x" | "y" | ident "(" expr ("," expr)* ")" | "(" expr ")"

Functions: ``sin cos exp sqrt abs`` (one argument), ``min max`` (two or more).

Three evaluators share one AST: :func:`evaluate` (IEEE doubles, vectorised
over numpy arrays), :func:`eval_interval` / :func:`eval_interval_arrays`
(natural interval extension with outward rounding) and the sampled
:func:`lipschitz_estimate`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError, ParseError
from .grid import Rect

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "Expr", "Interval",
    "parse", "to_string", "evaluate", "eval_interval", "eval_interval_arrays",
    "lipschitz_estimate", "substitute", "is_constant", "num",
]

UNARY_FUNCS = frozenset({"sin", "cos", "exp", "sqrt", "abs"})
VARIADIC_FUNCS = frozenset({"min", "max"})
LIPSCHITZ_SAFETY = 1.25


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


Expr = Union[Num, Var, Neg, BinOp, Call]


def num(v: float) -> Expr:
    """Literal node; negative values become ``Neg(Num(-v))`` like parsed text."""
    v = float(v)
    return Neg(Num(-v)) if v < 0 else Num(v)


# --------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num | ident | op | eof
    text: str
    offset: int  # 1-based byte position


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        byte_off = len(text[:pos].encode("utf-8")) + 1
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", byte_off, "a token")
        start = m.start(m.lastgroup)
        off = len(text[:start].encode("utf-8")) + 1
        toks.append(_Tok(m.lastgroup, m.group(m.lastgroup), off))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text.encode("utf-8")) + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.pos]

    def _fail(self, expected: str):
        tok = self.cur
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ParseError(f"unexpected {found}", tok.offset, expected)

    def _accept(self, text: str) -> bool:
        if self.cur.kind == "op" and self.cur.text == text:
            self.pos += 1
            return True
        return False

    def _expect(self, text: str, expected: str | None = None):
        if not self._accept(text):
            self._fail(expected or repr(text).replace("'", '"'))

    def parse(self) -> Expr:
        e = self.expr()
        if self.cur.kind != "eof":
            self._fail('an operator or end of input')
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.cur.kind == "op" and self.cur.text in "+-":
            op = self.cur.text
            self.pos += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.cur.kind == "op" and self.cur.text in "*/":
            op = self.cur.text
            self.pos += 1
            e = BinOp(op, e, self.factor())
        return e

    def factor(self) -> Expr:
        if self._accept("-"):
            return Neg(self.factor())
        base = self.atom()
        if self._accept("^"):
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        tok = self.cur
        if tok.kind == "num":
            self.pos += 1
            return Num(float(tok.text))
        if tok.kind == "ident":
            if tok.text in ("x", "y"):
                self.pos += 1
                return Var(tok.text)
            if tok.text not in UNARY_FUNCS | VARIADIC_FUNCS:
                raise ParseError(f"unknown identifier {tok.text!r}", tok.offset,
                                 "x, y, a number or a known function")
            self.pos += 1
            self._expect("(")
            args = [self.expr()]
            unary = tok.text in UNARY_FUNCS
            while not unary and self._accept(","):
                args.append(self.expr())
            self._expect(")", '")"' if unary else '"," or ")"')
            if not unary and len(args) < 2:
                raise ParseError(f"{tok.text} needs at least two arguments", tok.offset)
            return Call(tok.text, tuple(args))
        if self._accept("("):
            e = self.expr()
            self._expect(")")
            return e
        self._fail("a number, x, y, a function or \"(\"")


def parse(text: str) -> Expr:
    """Parse ``text`` into an AST; raises :class:`ParseError`."""
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# Printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM_PREC = 5


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _NEG_PREC
    return _ATOM_PREC


def _wrap(e: Expr, need: bool) -> str:
    s = to_string(e)
    return f"({s})" if need else s


def to_string(e: Expr) -> str:
    """Render with minimal parentheses; ``parse(to_string(e)) == e``."""
    if isinstance(e, Num):
        if e.value < 0 or not math.isfinite(e.value):
            raise ValueError(f"literal {e.value!r} has no textual form")
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _prec(e.arg) < _NEG_PREC)
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_string(a) for a in e.args)})"
    p = _PREC[e.op]
    if e.op == "^":
        # base must be an atom; the exponent is a factor
        return (_wrap(e.left, _prec(e.left) < _ATOM_PREC) + "^"
                + _wrap(e.right, _prec(e.right) < _NEG_PREC))
    return (_wrap(e.left, _prec(e.left) < p) + f" {e.op} "
            + _wrap(e.right, _prec(e.right) <= p))


# --------------------------------------------------------------------------
# Structural helpers

def is_constant(e: Expr) -> bool:
    if isinstance(e, Var):
        return False
    if isinstance(e, Num):
        return True
    if isinstance(e, Neg):
        return is_constant(e.arg)
    if isinstance(e, BinOp):
        return is_constant(e.left) and is_constant(e.right)
    return all(is_constant(a) for a in e.args)


def substitute(e: Expr, **repl: Expr) -> Expr:
    """Replace variables, e.g. ``substitute(g, x=parse("2*x"))``."""
    if isinstance(e, Var):
        return repl.get(e.name, e)
    if isinstance(e, Num):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, **repl))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, **repl), substitute(e.right, **repl))
    return Call(e.func, tuple(substitute(a, **repl) for a in e.args))


def _int_exponent(e: Expr) -> int | None:
    if isinstance(e, Num) and e.value >= 0 and float(e.value).is_integer():
        return int(e.value)
    return None


# --------------------------------------------------------------------------
# Point evaluation

def _eval(e: Expr, x, y):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return x if e.name == "x" else y
    if isinstance(e, Neg):
        return -_eval(e.arg, x, y)
    if isinstance(e, BinOp):
        a = _eval(e.left, x, y)
        if e.op == "^":
            k = _int_exponent(e.right)
            if k is not None:
                return np.power(a, k) if k else np.ones_like(a)
            b = _eval(e.right, x, y)
            if np.any(np.asarray(a) <= 0):
                raise DomainError("power with non-integer exponent needs a positive base")
            return np.power(a, b)
        b = _eval(e.right, x, y)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0):
            raise DomainError("division by zero")
        return a / b
    args = [_eval(a, x, y) for a in e.args]
    f = e.func
    if f == "sqrt":
        if np.any(np.asarray(args[0]) < 0):
            raise DomainError("sqrt of a negative number")
        return np.sqrt(args[0])
    if f == "min":
        out = args[0]
        for a in args[1:]:
            out = np.minimum(out, a)
        return out
    if f == "max":
        out = args[0]
        for a in args[1:]:
            out = np.maximum(out, a)
        return out
    return {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}[f](args[0])


def evaluate(e: Expr, x, y):
    """Evaluate at a point, or elementwise over broadcastable arrays.

    Returns a ``float`` for scalar input. Raises :class:`DomainError` instead
    of producing NaN or infinity.
    """
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(e, xa, ya)
        out = np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(xa, ya).shape)
    if not np.all(np.isfinite(out)):
        raise DomainError(f"non-finite value evaluating {to_string(e)}")
    return float(out) if scalar else np.array(out)


# --------------------------------------------------------------------------
# Interval evaluation

@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    def __contains__(self, v) -> bool:
        return self.lo <= v <= self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def contains_interval(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi


_NINF, _PINF = -np.inf, np.inf
_TWO_PI = 2.0 * math.pi


def _dn(v, ulps=1):
    for _ in range(ulps):
        v = np.nextafter(v, _NINF)
    return v


def _up(v, ulps=1):
    for _ in range(ulps):
        v = np.nextafter(v, _PINF)
    return v


def _exact_or(v, exact, rounder):
    # results forced by a zero operand are exact and must stay so
    return np.where(exact, v, rounder(v))


def _imul(a, b):
    alo, ahi = a
    blo, bhi = b
    cands = [(alo, blo), (alo, bhi), (ahi, blo), (ahi, bhi)]
    prods = [p * q for p, q in cands]
    exact = [(p == 0) | (q == 0) for p, q in cands]
    los = [_exact_or(v, ex, _dn) for v, ex in zip(prods, exact)]
    his = [_exact_or(v, ex, _up) for v, ex in zip(prods, exact)]
    return np.minimum.reduce(los), np.maximum.reduce(his)


def _iadd(a, b):
    lo = a[0] + b[0]
    hi = a[1] + b[1]
    return (_exact_or(lo, (a[0] == 0) | (b[0] == 0), _dn),
            _exact_or(hi, (a[1] == 0) | (b[1] == 0), _up))


def _ineg(a):
    return -a[1], -a[0]


def _idiv(a, b):
    blo, bhi = b
    if np.any((blo <= 0) & (bhi >= 0)):
        raise DomainError("division by an interval containing zero")
    qs = [p / q for p in a for q in b]
    exact = [p == 0 for p in a for q in b]
    los = [_exact_or(v, ex, _dn) for v, ex in zip(qs, exact)]
    his = [_exact_or(v, ex, _up) for v, ex in zip(qs, exact)]
    return np.minimum.reduce(los), np.maximum.reduce(his)


def _ipow_int(a, k):
    lo, hi = a
    if k == 0:
        return np.ones_like(lo), np.ones_like(hi)
    if k == 1:
        return lo, hi
    plo, phi = np.power(lo, k), np.power(hi, k)
    if k % 2 == 1:
        return _dn(plo, 2), _up(phi, 2)
    amin = np.where(lo > 0, lo, np.where(hi < 0, -hi, 0.0))
    amax = np.maximum(np.abs(lo), np.abs(hi))
    rlo = np.power(amin, k)
    return _exact_or(rlo, amin == 0, lambda v: np.maximum(_dn(v, 2), 0.0)), _up(np.power(amax, k), 2)


def _iexp(a):
    return np.maximum(_dn(np.exp(a[0]), 2), 0.0), _up(np.exp(a[1]), 2)


def _ilog(a):
    return _dn(np.log(a[0]), 2), _up(np.log(a[1]), 2)


def _contains_point(lo, hi, phase):
    """Does ``[lo, hi]`` contain some ``phase + 2*pi*k``?"""
    k = np.ceil((lo - phase) / _TWO_PI)
    return phase + _TWO_PI * k <= hi


def _itrig(a, fn, max_phase, min_phase):
    lo, hi = a
    flo, fhi = fn(lo), fn(hi)
    rlo = _dn(np.minimum(flo, fhi), 2)
    rhi = _up(np.maximum(flo, fhi), 2)
    wide = (hi - lo) >= _TWO_PI
    rhi = np.where(wide | _contains_point(lo, hi, max_phase), 1.0, rhi)
    rlo = np.where(wide | _contains_point(lo, hi, min_phase), -1.0, rlo)
    return np.maximum(rlo, -1.0), np.minimum(rhi, 1.0)


def _isqrt(a):
    if np.any(a[0] < 0):
        raise DomainError("sqrt of an interval reaching below zero")
    lo = np.sqrt(a[0])
    return _exact_or(lo, a[0] == 0, lambda v: np.maximum(_dn(v), 0.0)), _up(np.sqrt(a[1]))


def _iabs(a):
    lo, hi = a
    rlo = np.where(lo >= 0, lo, np.where(hi <= 0, -hi, 0.0))
    return rlo, np.maximum(np.abs(lo), np.abs(hi))


def _ieval(e: Expr, box):
    if isinstance(e, Num):
        return e.value, e.value
    if isinstance(e, Var):
        return box[0] if e.name == "x" else box[1]
    if isinstance(e, Neg):
        return _ineg(_ieval(e.arg, box))
    if isinstance(e, BinOp):
        a = _ieval(e.left, box)
        if e.op == "^":
            k = _int_exponent(e.right)
            if k is not None:
                return _ipow_int(a, k)
            if np.any(a[0] <= 0):
                raise DomainError("power with non-integer exponent needs a positive base")
            return _iexp(_imul(_ieval(e.right, box), _ilog(a)))
        b = _ieval(e.right, box)
        if e.op == "+":
            return _iadd(a, b)
        if e.op == "-":
            return _iadd(a, _ineg(b))
        if e.op == "*":
            return _imul(a, b)
        return _idiv(a, b)
    args = [_ieval(a, box) for a in e.args]
    f = e.func
    if f == "min":
        return (np.minimum.reduce([a[0] for a in args]), np.minimum.reduce([a[1] for a in args]))
    if f == "max":
        return (np.maximum.reduce([a[0] for a in args]), np.maximum.reduce([a[1] for a in args]))
    a = args[0]
    if f == "sin":
        return _itrig(a, np.sin, 0.5 * math.pi, -0.5 * math.pi)
    if f == "cos":
        return _itrig(a, np.cos, 0.0, math.pi)
    if f == "exp":
        return _iexp(a)
    if f == "sqrt":
        return _isqrt(a)
    return _iabs(a)


def eval_interval_arrays(e: Expr, x_lo, x_hi, y_lo, y_hi) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`eval_interval` over arrays of boxes."""
    shape = np.broadcast(np.asarray(x_lo), np.asarray(x_hi), np.asarray(y_lo), np.asarray(y_hi)).shape
    box = ((np.broadcast_to(np.asarray(x_lo, dtype=float), shape),
            np.broadcast_to(np.asarray(x_hi, dtype=float), shape)),
           (np.broadcast_to(np.asarray(y_lo, dtype=float), shape),
            np.broadcast_to(np.asarray(y_hi, dtype=float), shape)))
    with np.errstate(all="ignore"):
        lo, hi = _ieval(e, box)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), shape).copy()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise DomainError(f"non-finite enclosure of {to_string(e)}")
    return lo, hi


def eval_interval(e: Expr, box: Rect) -> Interval:
    """Enclosure of the range of ``e`` over ``box``."""
    lo, hi = eval_interval_arrays(e, box.x_lo, box.x_hi, box.y_lo, box.y_hi)
    return Interval(float(lo), float(hi))


# --------------------------------------------------------------------------
# Lipschitz estimate

def lipschitz_estimate(e: Expr, box: Rect, grid: int = 16,
                       safety: float = LIPSCHITZ_SAFETY) -> float:
    """Heuristic (not certified) Lipschitz constant of ``e`` on ``box``.

    ``safety`` times the largest gradient norm over a ``grid x grid`` lattice,
    gradients by central differences clipped to the box.
    """
    if grid < 2:
        raise ValueError("grid must be >= 2")
    if is_constant(e):
        return 0.0
    xs = np.linspace(box.x_lo, box.x_hi, grid)
    ys = np.linspace(box.y_lo, box.y_hi, grid)
    X, Y = np.meshgrid(xs, ys)
    step = 1e-6 * max(box.width, box.height)
    xp, xm = np.minimum(X + step, box.x_hi), np.maximum(X - step, box.x_lo)
    yp, ym = np.minimum(Y + step, box.y_hi), np.maximum(Y - step, box.y_lo)
    gx = (evaluate(e, xp, Y) - evaluate(e, xm, Y)) / (xp - xm)
    gy = (evaluate(e, X, yp) - evaluate(e, X, ym)) / (yp - ym)
    return safety * float(np.max(np.hypot(gx, gy)))
