"""Vertical scaling matrices, primitivity and Perron-root enclosures.

Row ``i`` of the level-``n`` matrix (a word of length ``n``) has exactly
``N**2`` structural entries, in the columns ``shift(i) + d`` for each digit
``d``; the entry is a bound on ``|S|`` over the cell of the length-``n+1``
word ``i + d``. The upper matrix uses certified over-estimates of the sup,
the lower one certified under-estimates of the inf, so computed Perron
roots err on the conservative side.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import expr as ex
from .errors import SizeGuardError
from .grid import NodeGrid, Rect, Word, cell, cell_indices, make_maps

__all__ = [
    "BoundPair", "ScalingMatrix", "SpectralResult", "RhoLevel", "RhoSequence",
    "ConditionReport", "SpectralWarning",
    "cell_bounds", "abs_bounds_grid", "build", "is_primitive", "spectral_radius",
    "rho_sequence", "gamma_star", "sum_function", "check_conditions",
    "SIZE_GUARD",
]

SIZE_GUARD = 10 ** 7
DEFAULT_REFINE = 2
_CHUNK = 1 << 21
_EPS = np.finfo(float).eps


class SpectralWarning(UserWarning):
    """Enclosure is not certified (non-primitive matrix or unconverged)."""


@dataclass(frozen=True)
class BoundPair:
    lo: float
    hi: float
    sampled_lo: float
    sampled_hi: float


def _abs_S(S: ex.Expr) -> ex.Expr:
    return ex.Call("abs", (S,))


def abs_bounds_grid(S: ex.Expr, grid: NodeGrid, level: int, refine: int = DEFAULT_REFINE):
    """Bounds of ``|S|`` on every level-``level`` cell, arrays indexed ``[cy, cx]``.

    Each cell is split into ``(N**refine)**2`` subcells; ``lo``/``hi`` are the
    extreme interval endpoints over the subcells, ``sampled_*`` the extremes
    of ``|S|`` at subcell centres. Processed in row strips to bound memory.
    """
    if refine < 0:
        raise ValueError("refine must be >= 0")
    N = grid.N
    cells = N ** level
    R = N ** refine
    fine = cells * R
    h = grid.side / fine
    absS = _abs_S(S)
    xs = grid.x0 + np.arange(fine + 1) * h
    ys_all = grid.y0 + np.arange(fine + 1) * h
    out = [np.empty((cells, cells)) for _ in range(4)]
    strip = max(1, _CHUNK // (fine * R))
    for r0 in range(0, cells, strip):
        r1 = min(cells, r0 + strip)
        ys = ys_all[r0 * R:r1 * R + 1]
        XL, YL = np.meshgrid(xs[:-1], ys[:-1])
        XH, YH = np.meshgrid(xs[1:], ys[1:])
        lo, hi = ex.eval_interval_arrays(absS, XL, XH, YL, YH)
        mid = np.abs(ex.evaluate(S, 0.5 * (XL + XH), 0.5 * (YL + YH)))
        shape = (r1 - r0, R, cells, R)
        out[0][r0:r1] = lo.reshape(shape).min(axis=(1, 3))
        out[1][r0:r1] = hi.reshape(shape).max(axis=(1, 3))
        out[2][r0:r1] = mid.reshape(shape).min(axis=(1, 3))
        out[3][r0:r1] = mid.reshape(shape).max(axis=(1, 3))
    return tuple(out)


def cell_bounds(S: ex.Expr, grid: NodeGrid, w: Word, refine: int = DEFAULT_REFINE) -> BoundPair:
    """Certified enclosure of ``inf``/``sup`` of ``|S|`` on ``D_w``."""
    D = cell(grid, w)
    R = grid.N ** refine
    xs = np.linspace(D.x_lo, D.x_hi, R + 1)
    ys = np.linspace(D.y_lo, D.y_hi, R + 1)
    XL, YL = np.meshgrid(xs[:-1], ys[:-1])
    XH, YH = np.meshgrid(xs[1:], ys[1:])
    lo, hi = ex.eval_interval_arrays(_abs_S(S), XL, XH, YL, YH)
    mid = np.abs(ex.evaluate(S, 0.5 * (XL + XH), 0.5 * (YL + YH)))
    return BoundPair(float(lo.min()), float(hi.max()), float(mid.min()), float(mid.max()))


@dataclass(frozen=True, eq=False)
class ScalingMatrix:
    """Sparse ``N**(2n)`` square matrix with ``N**2`` structural entries per row."""

    n: int
    N: int
    kind: Literal["upper", "lower"]
    cols: np.ndarray = field(repr=False)
    vals: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.cols.shape[0]

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.vals > 0))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return (self.vals * v[self.cols]).sum(axis=1)

    def rows(self):
        """Per row, the list of ``(column, value)`` pairs."""
        return [list(zip(c.tolist(), v.tolist())) for c, v in zip(self.cols, self.vals)]

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.dim, self.dim))
        np.add.at(A, (np.repeat(np.arange(self.dim), self.cols.shape[1]), self.cols.ravel()),
                  self.vals.ravel())
        return A

    def pattern(self) -> np.ndarray:
        """Dense boolean positivity pattern."""
        P = np.zeros((self.dim, self.dim), dtype=bool)
        r = np.repeat(np.arange(self.dim), self.cols.shape[1])
        pos = self.vals.ravel() > 0
        P[r[pos], self.cols.ravel()[pos]] = True
        return P

    def to_matrix_market(self, fh=None) -> str | None:
        """Coordinate text export of the positive entries, 1-based, rows by word code."""
        lines = ["%%MatrixMarket matrix coordinate real general"]
        order = np.argsort(self.cols, axis=1, kind="stable")
        body = []
        for i in range(self.dim):
            for t in order[i]:
                v = float(self.vals[i, t])
                if v > 0:
                    body.append(f"{i + 1} {int(self.cols[i, t]) + 1} {v:.17g}")
        lines.append(f"{self.dim} {self.dim} {len(body)}")
        text = "\n".join(lines + body) + "\n"
        if fh is None:
            return text
        fh.write(text)
        return None


def _structure(n: int, N: int) -> np.ndarray:
    base = N * N
    rows = np.arange(base ** n, dtype=np.int64)
    return (rows % base ** (n - 1))[:, None] * base + np.arange(base, dtype=np.int64)[None, :]


def build(S: ex.Expr, grid: NodeGrid, n: int, refine: int = DEFAULT_REFINE
          ) -> tuple[ScalingMatrix, ScalingMatrix]:
    """The level-``n`` upper and lower vertical scaling matrices."""
    if n < 1:
        raise ValueError("n must be >= 1")
    N = grid.N
    if N ** (2 * (n + 1)) > SIZE_GUARD:
        raise SizeGuardError(f"N^(2(n+1)) = {N ** (2 * (n + 1))} cell bounds exceed {SIZE_GUARD}")
    lo, hi, _, _ = abs_bounds_grid(S, grid, n + 1, refine)
    cx, cy = cell_indices(n + 1, N)
    lo_w, hi_w = lo[cy, cx], hi[cy, cx]
    cols = _structure(n, N)
    rows_n = N ** (2 * n)
    # entry (i, shift(i)+d) belongs to the word i+d, whose code is i*N^2 + d
    hi_v = hi_w.reshape(rows_n, N * N)
    lo_v = np.maximum(lo_w.reshape(rows_n, N * N), 0.0)
    for a in (cols, hi_v, lo_v):
        a.setflags(write=False)
    return (ScalingMatrix(n, N, "upper", cols, hi_v),
            ScalingMatrix(n, N, "lower", cols, lo_v))


# --------------------------------------------------------------------------
# Primitivity

_DENSE_LIMIT = 1024


def _primitive_by_squaring(P: np.ndarray) -> bool:
    d = P.shape[0]
    wielandt = (d - 1) ** 2 + 1
    A = P.astype(np.float32)
    power = 1
    while True:
        if A.all():
            return True
        if power >= wielandt:
            return False
        A = (A @ A > 0).astype(np.float32)
        power *= 2


def _primitive_by_period(cols: np.ndarray, positive: np.ndarray) -> bool:
    """Strong connectivity plus period one, by breadth-first levels."""
    d = cols.shape[0]
    succ = [cols[i][positive[i]] for i in range(d)]

    def bfs(adj):
        level = np.full(d, -1, dtype=np.int64)
        level[0] = 0
        frontier = [0]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if level[v] < 0:
                        level[v] = level[u] + 1
                        nxt.append(int(v))
            frontier = nxt
        return level

    level = bfs(succ)
    if np.any(level < 0):
        return False
    pred = [[] for _ in range(d)]
    for u in range(d):
        for v in succ[u]:
            pred[int(v)].append(u)
    if np.any(bfs(pred) < 0):
        return False
    g = 0
    for u in range(d):
        for v in succ[u]:
            g = math.gcd(g, int(level[u] + 1 - level[v]))
            if g == 1:
                return True
    return g == 1


def is_primitive(m, method: str = "auto") -> bool:
    """Whether some power of the matrix is entrywise positive.

    ``m`` is a :class:`ScalingMatrix` or a dense nonnegative array.
    ``method`` is ``"squaring"`` (boolean repeated squaring up to the
    Wielandt exponent), ``"period"`` (graph test) or ``"auto"``.
    """
    if isinstance(m, ScalingMatrix):
        positive = m.vals > 0
        cols, d = m.cols, m.dim
        dense = None
    else:
        dense = np.asarray(m) > 0
        d = dense.shape[0]
    if method == "auto":
        method = "squaring" if d <= _DENSE_LIMIT else "period"
    if method == "squaring":
        P = dense if dense is not None else m.pattern()
        if not (P.any(axis=1).all() and P.any(axis=0).all()):
            return False
        return _primitive_by_squaring(P)
    if dense is not None:
        cols = np.tile(np.arange(d), (d, 1))
        positive = dense
    return _primitive_by_period(cols, positive)


# --------------------------------------------------------------------------
# Spectral radius

@dataclass
class SpectralResult:
    rho_lo: float
    rho_hi: float
    iterations: int
    eigvec: np.ndarray = field(repr=False)
    certified: bool = True
    note: str | None = None

    @property
    def width(self) -> float:
        return self.rho_hi - self.rho_lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.rho_lo + self.rho_hi)

    def to_dict(self) -> dict:
        return {"rho_lo": self.rho_lo, "rho_hi": self.rho_hi, "width": self.width,
                "iterations": self.iterations, "certified": self.certified, "note": self.note}


class _Dense:
    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)
        self.dim = self.A.shape[0]
        self.row_terms = self.dim

    def matvec(self, v):
        return self.A @ v

    def row_sums(self):
        return self.A.sum(axis=1), self.A.sum(axis=0)


def _as_operator(m):
    if isinstance(m, ScalingMatrix):
        op = m
        row = m.vals.sum(axis=1)
        col = np.bincount(m.cols.ravel(), weights=m.vals.ravel(), minlength=m.dim)
        return op, m.cols.shape[1], row, col
    d = _Dense(m)
    row, col = d.row_sums()
    return d, d.row_terms, row, col


def spectral_radius(m, tol: float = 1e-8, max_iter: int = 10_000,
                    check_primitive: bool = True) -> SpectralResult:
    """Perron root enclosure by power iteration with Collatz-Wielandt bounds.

    ``v <- M v / |M v|_1`` from the all-ones vector; at every step
    ``min (Mv)_i/v_i <= rho <= max (Mv)_i/v_i``. Bounds are widened by the
    floating-point error of the products. If the iterate has zero entries
    the upper bound falls back to the smaller of the max row and column
    sums and the result is flagged non-certified.
    """
    op, terms, row, col = _as_operator(m)
    d = op.dim
    primitive = is_primitive(m) if check_primitive else True
    rel = (terms + 2) * _EPS
    norm_bound = float(min(row.max(), col.max()))
    v = np.full(d, 1.0 / d)
    lo = hi = 0.0
    full_support = True
    it = 0
    for it in range(1, max_iter + 1):
        w = op.matvec(v)
        total = w.sum()
        pos = v > 0
        ratios = w[pos] / v[pos]
        lo = float(ratios.min()) * (1 - rel)
        full_support = bool(pos.all())
        hi = float(ratios.max()) * (1 + rel) if full_support else norm_bound
        if total == 0:
            lo = hi = 0.0
            break
        v = w / total
        if hi - lo <= tol:
            break
    certified = primitive and full_support and hi - lo <= tol
    note = None
    if not primitive:
        note = "matrix is not primitive; enclosure not certified"
    elif not full_support:
        note = "iterate lost positivity; upper bound from row/column sums"
    elif hi - lo > tol:
        note = f"not converged to tol {tol:g} after {it} iterations"
    if note:
        warnings.warn(note, SpectralWarning, stacklevel=2)
    return SpectralResult(float(max(lo, 0.0)), float(max(hi, lo)), it, v, bool(certified), note)


@dataclass
class RhoLevel:
    n: int
    upper: SpectralResult
    lower: SpectralResult
    upper_primitive: bool
    lower_primitive: bool

    def to_dict(self) -> dict:
        return {"n": self.n, "upper": self.upper.to_dict(), "lower": self.lower.to_dict(),
                "upper_primitive": self.upper_primitive,
                "lower_primitive": self.lower_primitive}


@dataclass
class RhoSequence:
    levels: list[RhoLevel]
    matrices: list[tuple[ScalingMatrix, ScalingMatrix]] = field(default_factory=list, repr=False)

    @property
    def rho_star_hat(self) -> float:
        """Upper bound of ``rho(upper_n)`` at the finest level."""
        return self.levels[-1].upper.rho_hi

    @property
    def rho_lower_hat(self) -> float:
        """Lower bound of ``rho(lower_n)`` at the finest level."""
        return self.levels[-1].lower.rho_lo

    @property
    def lower_primitive_from(self) -> int | None:
        """Smallest level at which the lower matrix was found primitive."""
        for lv in self.levels:
            if lv.lower_primitive:
                return lv.n
        return None

    def to_dict(self) -> dict:
        return {"levels": [lv.to_dict() for lv in self.levels],
                "rho_star_hat": self.rho_star_hat,
                "rho_lower_hat": self.rho_lower_hat,
                "lower_primitive_from": self.lower_primitive_from}


def rho_sequence(S: ex.Expr, grid: NodeGrid, n_max: int, refine: int = DEFAULT_REFINE,
                 tol: float = 1e-8, max_iter: int = 10_000, keep_matrices: bool = False
                 ) -> RhoSequence:
    """Perron-root enclosures of both scaling matrices for ``n = 1..n_max``."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    levels, mats = [], []
    for n in range(1, n_max + 1):
        up, low = build(S, grid, n, refine)
        up_p, low_p = is_primitive(up), is_primitive(low)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SpectralWarning)
            ru = spectral_radius(up, tol, max_iter, check_primitive=False)
            rl = spectral_radius(low, tol, max_iter, check_primitive=False)
        for r, prim in ((ru, up_p), (rl, low_p)):
            if not prim:
                r.certified = False
                r.note = "matrix is not primitive; enclosure not certified"
        levels.append(RhoLevel(n, ru, rl, up_p, low_p))
        if keep_matrices:
            mats.append((up, low))
    return RhoSequence(levels, mats)


# --------------------------------------------------------------------------
# Sum function and the lower-bound conditions

def _neumaier_sum(terms) -> np.ndarray:
    s = np.zeros_like(terms[0])
    c = np.zeros_like(terms[0])
    for t in terms:
        u = s + t
        c += np.where(np.abs(s) >= np.abs(t), (s - u) + t, (t - u) + s)
        s = u
    return s + c


def sum_function(S: ex.Expr, grid: NodeGrid, X, Y) -> np.ndarray:
    """``gamma(x, y) = sum over digits w of |S(L_w(x, y))|``."""
    us, vs = make_maps(grid)
    terms = [np.abs(ex.evaluate(S, u(np.asarray(X, float)), v(np.asarray(Y, float))) + 0.0)
             for v in vs for u in us]
    terms = [np.broadcast_to(t, np.broadcast(np.asarray(X), np.asarray(Y)).shape).astype(float)
             for t in terms]
    return _neumaier_sum(terms)


def gamma_star(S: ex.Expr, grid: NodeGrid, samples: int = 1001,
               lambda_S: float | None = None) -> float:
    """Heuristic lower estimate of ``min gamma`` over ``D``.

    Sampled minimum on a ``samples x samples`` lattice minus
    ``lambda_S * N**2 * diag / 2`` with ``diag`` the lattice cell diagonal.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    D = grid.domain
    xs = np.linspace(D.x_lo, D.x_hi, samples)
    ys = np.linspace(D.y_lo, D.y_hi, samples)
    X, Y = np.meshgrid(xs, ys)
    gmin = float(sum_function(S, grid, X, Y).min())
    if lambda_S is None:
        lambda_S = ex.lipschitz_estimate(S, D, 64)
    diag = math.sqrt(2.0) * grid.side / (samples - 1)
    return gmin - lambda_S * grid.N ** 2 * diag / 2.0


@dataclass
class ConditionReport:
    a5: str  # verified | refuted | inconclusive
    sign: str | None
    a5_refine: int | None
    zero_cells: dict[int, int]
    zero_set: str  # none | finite | curve
    gamma_star: float
    a4: str  # holds | fails
    nonvanishing: bool
    inconclusive_cells: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def a4_or_a5(self) -> bool:
        return self.a4 == "holds" or self.a5 == "verified"

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["zero_cells"] = {str(k): v for k, v in self.zero_cells.items()}
        return d


def _box_arrays(D: Rect, k: int):
    m = 2 ** k
    xs = np.linspace(D.x_lo, D.x_hi, m + 1)
    ys = np.linspace(D.y_lo, D.y_hi, m + 1)
    XL, YL = np.meshgrid(xs[:-1], ys[:-1])
    XH, YH = np.meshgrid(xs[1:], ys[1:])
    return xs, ys, XL, XH, YL, YH


def check_conditions(S: ex.Expr, grid: NodeGrid, refine_max: int = 8,
                     zero_levels: tuple[int, ...] = (3, 4, 5, 6, 7),
                     gamma_samples: int = 1001, lambda_S: float | None = None
                     ) -> ConditionReport:
    """Heuristic and interval checks of sign-definiteness, zero set and ``gamma_*``.

    Sign-definiteness is certified when every box of a ``2**k`` subdivision
    has an enclosure of one strict sign; it is refuted when samples reach
    zero or change sign. The zero set is called a curve when the number of
    boxes whose enclosure contains 0 keeps growing by at least 1.5x per
    halving of the box size.
    """
    D = grid.domain
    notes: list[str] = []
    a5, sign, a5_refine, undecided = "inconclusive", None, None, 0
    for k in range(refine_max + 1):
        xs, ys, XL, XH, YL, YH = _box_arrays(D, k)
        lo, hi = ex.eval_interval_arrays(S, XL, XH, YL, YH)
        X, Y = np.meshgrid(xs, ys)
        vals = ex.evaluate(S, X, Y)
        if np.any(vals == 0) or (np.any(vals > 0) and np.any(vals < 0)):
            a5, a5_refine = "refuted", k
            break
        if np.all(lo > 0):
            a5, sign, a5_refine = "verified", "+", k
            break
        if np.all(hi < 0):
            a5, sign, a5_refine = "verified", "-", k
            break
        undecided = int(np.count_nonzero((lo <= 0) & (hi >= 0)))
    if a5 == "inconclusive":
        notes.append(f"{undecided} boxes at refine {refine_max} straddle zero")

    counts: dict[int, int] = {}
    nonvanishing = True
    for k in zero_levels:
        _, _, XL, XH, YL, YH = _box_arrays(D, k)
        lo, hi = ex.eval_interval_arrays(S, XL, XH, YL, YH)
        counts[k] = int(np.count_nonzero((lo <= 0) & (hi >= 0)))
        if np.any((lo == 0) & (hi == 0)):
            nonvanishing = False
    last = [counts[k] for k in sorted(counts)]
    if last[-1] == 0:
        zero_set = "none"
    elif len(last) >= 2 and last[-1] >= 8 and last[-1] >= 1.5 * last[-2]:
        zero_set = "curve"
    else:
        zero_set = "finite"

    gam = gamma_star(S, grid, gamma_samples, lambda_S)
    a4 = "holds" if gam >= 1.0 and zero_set != "curve" else "fails"
    if a4 == "holds" and zero_set == "finite":
        notes.append("finitely many zeros is a sampling heuristic")
    return ConditionReport(a5, sign, a5_refine, counts, zero_set, gam, a4, nonvanishing,
                           undecided if a5 == "inconclusive" else 0, notes)
