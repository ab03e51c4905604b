"""The iterated function system and its attractor function ``f``.

``f`` is never iterated to a fixed point. Level ``k + 1`` grid points are
exactly the images of level ``k`` grid points under the ``N**2`` maps, so

    f(L_w(p)) = S(L_w(p)) * (f(p) - g(p)) + h(L_w(p))

fills the finer grid without any interpolation error.
"""

from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as ex
from .errors import ConsistencyError, DomainError, ValidationError
from .grid import Digit, NodeGrid, Rect, make_maps

__all__ = [
    "FisSystem", "GridFunction", "ValidationReport",
    "q_pieces", "eval_q", "eval_q_array", "evaluate", "sample",
    "sup_abs_f", "validate", "certify_sup_abs", "with_estimates",
    "bilinear_corner_expr", "lagrange_expr",
]

M_F_INFLATION = 1.05
INTERP_TOL = 1e-9
HARD_INTERP_TOL = 1e-6
AGREE_TOL = 1e-9
HARD_AGREE_TOL = 1e-6


@dataclass(frozen=True)
class FisSystem:
    grid: NodeGrid
    S: ex.Expr
    g: ex.Expr
    h: ex.Expr
    lambda_S: float | None = None
    lambda_q: float | None = None
    s_max: float | None = None
    M_f: float | None = None

    @classmethod
    def from_strings(cls, grid: NodeGrid, S: str, g: str, h: str, **kw) -> "FisSystem":
        return cls(grid, ex.parse(S), ex.parse(g), ex.parse(h), **kw)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples ``values[r, c] = f(x0 + c*step, y0 + r*step)``, ``step = |I|/N**level``."""

    level: int
    N: int
    x0: float
    y0: float
    side: float
    values: np.ndarray = field(repr=False)
    max_mismatch: float = 0.0

    def __post_init__(self):
        n = self.N ** self.level + 1
        if self.values.shape != (n, n):
            raise ValueError(f"values must be {n}x{n}")
        self.values.setflags(write=False)

    @property
    def step(self) -> float:
        return self.side / self.N ** self.level

    def coords(self) -> np.ndarray:
        return self.x0 + np.arange(self.N ** self.level + 1) * self.side / self.N ** self.level

    def subsample(self, level: int) -> "GridFunction":
        if not 0 <= level <= self.level:
            raise ValueError(f"cannot subsample level {self.level} to {level}")
        s = self.N ** (self.level - level)
        return GridFunction(level, self.N, self.x0, self.y0, self.side,
                            self.values[::s, ::s].copy())

    def to_csv(self, fh=None) -> str | None:
        """Write the heightmap; returns the text when ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        out.write(f"# fisdim level={self.level} N={self.N}\n")
        for row in self.values:
            out.write(",".join(format(float(v), ".17g") for v in row))
            out.write("\n")
        return out.getvalue() if fh is None else None


# --------------------------------------------------------------------------
# Node-data helpers

def bilinear_corner_expr(grid: NodeGrid) -> str:
    """Bilinear function matching ``z`` at the four corners of ``D``."""
    X = f"((x - {float(grid.x0)!r}) / {float(grid.side)!r})"
    Y = f"((y - {float(grid.y0)!r}) / {float(grid.side)!r})"
    z = np.asarray(grid.z, dtype=float).tolist()
    N = grid.N
    return (f"{z[0][0]!r}*(1 - {X})*(1 - {Y}) + {z[N][0]!r}*{X}*(1 - {Y})"
            f" + {z[0][N]!r}*(1 - {X})*{Y} + {z[N][N]!r}*{X}*{Y}")


def _lagrange_basis(var: str, t0: float, side: float, N: int, k: int) -> str:
    factors = []
    for m in range(N + 1):
        if m != k:
            tm = float(t0 + m * side / N)
            tk = float(t0 + k * side / N)
            factors.append(f"({var} - {tm!r}) / {tk - tm!r}")
    return "*".join(factors)


def lagrange_expr(grid: NodeGrid) -> str:
    """Tensor-product polynomial interpolating every node of ``grid``."""
    terms = []
    for i in range(grid.N + 1):
        bx = _lagrange_basis("x", grid.x0, grid.side, grid.N, i)
        for j in range(grid.N + 1):
            zij = float(grid.z[i, j])
            if zij == 0.0:
                continue
            by = _lagrange_basis("y", grid.y0, grid.side, grid.N, j)
            terms.append(f"({zij!r})*{bx}*{by}")
    return " + ".join(terms) if terms else "0"


# --------------------------------------------------------------------------
# q

def _inverse_expr(m, var: str, N: int) -> ex.Expr:
    v = ex.Var(var)
    if m.a > 0:
        return ex.BinOp("*", ex.BinOp("-", v, ex.num(m.b)), ex.Num(float(N)))
    return ex.BinOp("*", ex.BinOp("-", ex.num(m.b), v), ex.Num(float(N)))


def _digit_rect(grid: NodeGrid, i: int, j: int) -> Rect:
    return Rect(grid.x(i - 1), grid.x(i), grid.y(j - 1), grid.y(j))


def q_pieces(sys: FisSystem) -> list[tuple[Digit, Rect, ex.Expr]]:
    """``q`` restricted to each ``D_w`` as an expression: ``h - S * g o L_w^{-1}``."""
    us, vs = make_maps(sys.grid)
    N = sys.grid.N
    out = []
    for code in range(N * N):
        d = Digit.from_code(code, N)
        g_back = ex.substitute(sys.g, x=_inverse_expr(us[d.i - 1], "x", N),
                               y=_inverse_expr(vs[d.j - 1], "y", N))
        q = ex.BinOp("-", sys.h, ex.BinOp("*", sys.S, g_back))
        out.append((d, _digit_rect(sys.grid, d.i, d.j), q))
    return out


def _lowest_index(t, t0: float, side: float, N: int):
    """Smallest ``k`` in ``1..N`` with ``t`` in ``[t_{k-1}, t_k]``."""
    nodes = t0 + np.arange(N + 1) * side / N
    k = np.searchsorted(nodes, t, side="left")
    return np.clip(k, 1, N)


def eval_q_array(sys: FisSystem, x, y):
    """Vectorised :func:`eval_q`."""
    grid = sys.grid
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tol = 1e-12 * grid.side
    if np.any((x < grid.x0 - tol) | (x > grid.xN + tol) | (y < grid.y0 - tol) | (y > grid.yN + tol)):
        raise DomainError("q evaluated outside D")
    i = _lowest_index(x, grid.x0, grid.side, grid.N)
    j = _lowest_index(y, grid.y0, grid.side, grid.N)
    us, vs = make_maps(grid)
    a = np.array([u.a for u in us])[i - 1]
    b = np.array([u.b for u in us])[i - 1]
    c = np.array([v.a for v in vs])[j - 1]
    d = np.array([v.b for v in vs])[j - 1]
    xb, yb = (x - b) / a, (y - d) / c
    return ex.evaluate(sys.h, x, y) - ex.evaluate(sys.S, x, y) * ex.evaluate(sys.g, xb, yb)


def eval_q(sys: FisSystem, p: Sequence[float]) -> float:
    """``q(p) = h(p) - S(p) g(L_w^{-1}(p))`` for the lowest-code digit cell holding ``p``."""
    return float(eval_q_array(sys, p[0], p[1]))


# --------------------------------------------------------------------------
# Validation

@dataclass
class ValidationReport:
    s_max: float
    s_max_sampled: float
    s_max_method: str
    node_residual: float
    node_residual_at: tuple[int, int] | None
    corner_residual: float
    corner_residual_at: tuple[int, int] | None
    lambda_S: float | None
    lambda_q: float | None
    lambda_source: str
    checks: dict[str, str] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        """No hard failure."""
        return not any(f.get("hard") for f in self.failures)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ok"] = self.ok
        return d


def certify_sup_abs(S: ex.Expr, box: Rect, max_refine: int = 8) -> tuple[float, float, str]:
    """Interval upper bound and sampled lower bound of ``sup |S|`` on ``box``.

    Refines uniformly (``2**k`` boxes per axis) until the bound drops below 1
    or a sample reaches 1. Returns ``(upper, sampled, method)``.
    """
    absS = ex.Call("abs", (S,))
    best = np.inf
    sampled = 0.0
    k = 0
    for k in range(max_refine + 1):
        m = 2 ** k
        xs = np.linspace(box.x_lo, box.x_hi, m + 1)
        ys = np.linspace(box.y_lo, box.y_hi, m + 1)
        XL, YL = np.meshgrid(xs[:-1], ys[:-1])
        XH, YH = np.meshgrid(xs[1:], ys[1:])
        _, hi = ex.eval_interval_arrays(absS, XL, XH, YL, YH)
        best = min(best, float(hi.max()))
        X, Y = np.meshgrid(xs, ys)
        sampled = max(sampled, float(np.max(np.abs(ex.evaluate(S, X, Y)))))
        if best < 1.0 or sampled >= 1.0:
            break
    return best, sampled, f"natural interval extension on {2 ** k}x{2 ** k} boxes"


def validate(sys: FisSystem, estimate_lipschitz: bool = True, lip_grid: int = 64,
             q_grid: int = 16) -> ValidationReport:
    """Check ``|S| < 1``, node interpolation of ``h``, corner interpolation of ``g``."""
    grid = sys.grid
    failures: list[dict] = []
    checks: dict[str, str] = {}

    try:
        s_up, s_samp, method = certify_sup_abs(sys.S, grid.domain)
    except DomainError as err:
        s_up, s_samp, method = np.inf, np.nan, f"domain error: {err}"
    if s_up < 1.0:
        checks["s_max"] = "pass"
    else:
        checks["s_max"] = "fail"
        why = ("sampled |S| reaches 1" if s_samp >= 1.0
               else "could not certify |S| < 1")
        failures.append({"constraint": "s_max", "hard": True,
                         "detail": f"{why}: upper bound {s_up!r}, sampled max {s_samp!r}"})

    node_res, node_at = _residuals(sys.h, grid, all_nodes=True)
    corner_res, corner_at = _residuals(sys.g, grid, all_nodes=False)
    for name, res, at, expr_name in (("h_nodes", node_res, node_at, "h"),
                                     ("g_corners", corner_res, corner_at, "g")):
        if res <= INTERP_TOL:
            checks[name] = "pass"
            continue
        hard = res > HARD_INTERP_TOL
        checks[name] = "fail" if hard else "warn"
        failures.append({"constraint": name, "hard": hard, "node": list(at),
                         "detail": f"|{expr_name}(x_i,y_j) - z_ij| = {res!r} at (i,j)={at}"})

    lam_S, lam_q = sys.lambda_S, sys.lambda_q
    source = "user" if lam_S is not None and lam_q is not None else "estimated"
    if estimate_lipschitz:
        try:
            if lam_S is None:
                lam_S = ex.lipschitz_estimate(sys.S, grid.domain, lip_grid)
            if lam_q is None:
                lam_q = max(ex.lipschitz_estimate(q, rect, q_grid) for _, rect, q in q_pieces(sys))
        except DomainError as err:
            failures.append({"constraint": "lipschitz", "hard": True, "detail": str(err)})

    return ValidationReport(
        s_max=float(s_up), s_max_sampled=float(s_samp), s_max_method=method,
        node_residual=node_res, node_residual_at=node_at,
        corner_residual=corner_res, corner_residual_at=corner_at,
        lambda_S=lam_S, lambda_q=lam_q, lambda_source=source,
        checks=checks, failures=failures)


def _residuals(e: ex.Expr, grid: NodeGrid, all_nodes: bool):
    idx = range(grid.N + 1) if all_nodes else (0, grid.N)
    worst, at = 0.0, None
    for i in idx:
        for j in idx:
            try:
                r = abs(ex.evaluate(e, grid.x(i), grid.y(j)) - grid.z[i, j])
            except DomainError:
                r = np.inf
            if at is None or r > worst:
                worst, at = float(r), (i, j)
    return worst, at


def with_estimates(sys: FisSystem, gf: GridFunction | None = None,
                   report: ValidationReport | None = None) -> FisSystem:
    """Fill ``lambda_S``, ``lambda_q``, ``s_max`` and (given ``gf``) ``M_f``."""
    report = report or validate(sys)
    if not report.ok:
        raise ValidationError("system failed validation", report.failures)
    M_f = sys.M_f
    if gf is not None:
        M_f = M_F_INFLATION * sup_abs_f(gf)
    return dataclasses.replace(sys, lambda_S=report.lambda_S, lambda_q=report.lambda_q,
                               s_max=report.s_max, M_f=M_f)


# --------------------------------------------------------------------------
# Attractor evaluation

def _level_coords(grid: NodeGrid, level: int) -> np.ndarray:
    n = grid.N ** level
    return grid.x0 + np.arange(n + 1) * grid.side / n


def evaluate(sys: FisSystem, m: int, check: bool = True) -> GridFunction:
    """Exact samples of ``f`` on the level-``m`` grid of ``(N**m + 1)**2`` points."""
    if m < 1:
        raise ValueError("level m must be >= 1")
    grid = sys.grid
    if check:
        report = validate(sys, estimate_lipschitz=False)
        if not report.ok:
            raise ValidationError("refusing to evaluate an invalid system", report.failures)
    N = grid.N
    values = np.array(grid.z, dtype=float).T  # rows follow y
    worst = 0.0
    for k in range(1, m):
        M = N ** k
        xs = _level_coords(grid, k)
        ys = grid.y0 - grid.x0 + xs
        xf = _level_coords(grid, k + 1)
        yf = grid.y0 - grid.x0 + xf
        Xc, Yc = np.meshgrid(xs, ys)
        Xf, Yf = np.meshgrid(xf, yf)
        Sf = ex.evaluate(sys.S, Xf, Yf)
        Hf = ex.evaluate(sys.h, Xf, Yf)
        delta = values - ex.evaluate(sys.g, Xc, Yc)
        new = np.empty((N * M + 1, N * M + 1))
        filled = np.zeros(new.shape, dtype=bool)
        for code in range(N * N):
            i, j = code % N + 1, code // N + 1
            cs = slice((i - 1) * M, i * M + 1)
            rs = slice((j - 1) * M, j * M + 1)
            src = delta
            if i % 2 == 0:
                src = src[:, ::-1]
            if j % 2 == 0:
                src = src[::-1, :]
            block = Sf[rs, cs] * src + Hf[rs, cs]
            seen = filled[rs, cs]
            if seen.any():
                worst = max(worst, float(np.max(np.abs(block[seen] - new[rs, cs][seen]))))
            tile = new[rs, cs]
            tile[~seen] = block[~seen]
            filled[rs, cs] = True
        # coarse points are already known; keep them and record the disagreement
        worst = max(worst, float(np.max(np.abs(new[::N, ::N] - values))))
        new[::N, ::N] = values
        if worst > HARD_AGREE_TOL:
            raise ConsistencyError(
                f"grid values disagree by {worst:.3g} at level {k + 1}; "
                "g and h do not match the node data")
        values = new
    return GridFunction(m, N, grid.x0, grid.y0, grid.side, values, worst)


def sample(e: ex.Expr, domain: Rect, N: int, m: int) -> GridFunction:
    """Sample an expression on the level-``m`` grid of ``domain``."""
    n = N ** m
    xs = domain.x_lo + np.arange(n + 1) * domain.width / n
    ys = domain.y_lo + np.arange(n + 1) * domain.height / n
    X, Y = np.meshgrid(xs, ys)
    vals = np.array(np.broadcast_to(ex.evaluate(e, X, Y), X.shape), dtype=float)
    return GridFunction(m, N, domain.x_lo, domain.y_lo, domain.width, vals)


def sup_abs_f(gf: GridFunction) -> float:
    """``max |f|`` over the samples: a lower estimate of ``sup |f|``."""
    return float(np.max(np.abs(gf.values)))
