"""Oscillations of sampled functions over the nested cells ``D_w``.

All oscillations here are max - min over the grid samples that lie in a
closed cell, hence lower estimates of the true oscillation that increase
with the sampling level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ResolutionError
from .fif import FisSystem, GridFunction
from .grid import Rect, Word, cell_index, cell_indices

__all__ = [
    "OscVector", "OscConstants", "SandwichResult",
    "cell_extrema", "osc_grid", "osc", "osc_sum", "osc_vector",
    "constants", "sandwich_diagnostic", "step_jump",
    "DEFAULT_MARGIN",
]

DEFAULT_MARGIN = 2


def _closed_blocks(A: np.ndarray, s: int, reduce, combine) -> np.ndarray:
    # block b spans columns b*s .. (b+1)*s inclusive
    rows, cols = A.shape
    nb = (cols - 1) // s
    inner = reduce(A[:, :-1].reshape(rows, nb, s), axis=2)
    return combine(inner, A[:, s::s])


def cell_extrema(gf: GridFunction, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Max and min of the samples in every closed level-``level`` cell, indexed ``[cy, cx]``."""
    if level > gf.level:
        raise ResolutionError(f"cells of level {level} need a grid of level >= {level},"
                              f" have {gf.level}")
    s = gf.N ** (gf.level - level)
    A = gf.values
    mx = _closed_blocks(A, s, np.max, np.maximum)
    mx = _closed_blocks(mx.T, s, np.max, np.maximum).T
    mn = _closed_blocks(A, s, np.min, np.minimum)
    mn = _closed_blocks(mn.T, s, np.min, np.minimum).T
    return mx, mn


def osc_grid(gf: GridFunction, level: int) -> np.ndarray:
    """Oscillation of every level-``level`` cell, indexed ``[cy, cx]``."""
    mx, mn = cell_extrema(gf, level)
    return mx - mn


def _check_margin(gf: GridFunction, level: int, margin: int):
    if level + margin > gf.level:
        raise ResolutionError(
            f"level-{level} cells need samples of level >= {level + margin}"
            f" (margin {margin}), have {gf.level}")


def osc(gf: GridFunction, cell: Rect) -> float:
    """Oscillation of the samples inside a closed rectangle."""
    step = gf.step
    eps = 1e-9
    c0 = math.ceil((cell.x_lo - gf.x0) / step - eps)
    c1 = math.floor((cell.x_hi - gf.x0) / step + eps)
    r0 = math.ceil((cell.y_lo - gf.y0) / step - eps)
    r1 = math.floor((cell.y_hi - gf.y0) / step + eps)
    last = gf.values.shape[0] - 1
    c0, r0 = max(c0, 0), max(r0, 0)
    c1, r1 = min(c1, last), min(r1, last)
    if c1 - c0 < 1 or r1 - r0 < 1:
        raise ResolutionError(f"cell {cell} holds fewer than 2x2 samples at level {gf.level}")
    block = gf.values[r0:r1 + 1, c0:c1 + 1]
    return float(block.max() - block.min())


def osc_sum(gf: GridFunction, n: int, p: Word | None = None,
            margin: int = DEFAULT_MARGIN) -> float:
    """``O_n(f, D_p)``: sum of oscillations over the cells ``D_{pw}``, ``|w| = n``."""
    p = p if p is not None else Word.empty(gf.N)
    level = len(p) + n
    _check_margin(gf, level, margin)
    G = osc_grid(gf, level)
    cx, cy = cell_index(p)
    b = gf.N ** n
    return float(G[cy * b:(cy + 1) * b, cx * b:(cx + 1) * b].sum())


@dataclass(frozen=True, eq=False)
class OscVector:
    """``entries[code(w)] = O_k(f, D_w)`` for ``w`` of length ``n``."""

    n: int
    k: int
    N: int
    entries: np.ndarray = field(repr=False)

    @property
    def norm1(self) -> float:
        return float(np.abs(self.entries).sum())

    def to_csv(self, fh=None) -> str | None:
        lines = [f"# fisdim oscvector n={self.n} k={self.k}", "word_code,value"]
        lines += [f"{c},{float(v):.17g}" for c, v in enumerate(self.entries)]
        text = "\n".join(lines) + "\n"
        if fh is None:
            return text
        fh.write(text)
        return None


def osc_vector(gf: GridFunction, n: int, k: int, margin: int = DEFAULT_MARGIN) -> OscVector:
    """The oscillation vector ``V(f, n, k)``."""
    _check_margin(gf, n + k, margin)
    G = osc_grid(gf, n + k)
    Nn, Nk = gf.N ** n, gf.N ** k
    B = G.reshape(Nn, Nk, Nn, Nk).sum(axis=(1, 3))
    cx, cy = cell_indices(n, gf.N)
    entries = B[cy, cx]
    entries.setflags(write=False)
    return OscVector(n, k, gf.N, entries)


@dataclass(frozen=True)
class OscConstants:
    beta: float
    n: int
    N: int
    u_entry: float

    def u(self) -> np.ndarray:
        """The constant vector ``u_n`` on words of length ``n``."""
        return np.full(self.N ** (2 * self.n), self.u_entry)


def constants(sys: FisSystem, n: int) -> OscConstants:
    """``beta = sqrt(2) (2 lambda_S M_f + lambda_q) |I|`` and ``u_n = beta N^-n``."""
    missing = [k for k in ("lambda_S", "lambda_q", "M_f") if getattr(sys, k) is None]
    if missing:
        raise ValueError(f"system lacks {', '.join(missing)}; run fif.with_estimates first")
    beta = math.sqrt(2.0) * (2.0 * sys.lambda_S * sys.M_f + sys.lambda_q) * sys.grid.side
    N = sys.grid.N
    return OscConstants(beta, n, N, beta * float(N) ** (-n))


def step_jump(gf: GridFunction) -> float:
    """Largest difference between neighbouring samples."""
    v = gf.values
    return float(max(np.abs(np.diff(v, axis=0)).max(), np.abs(np.diff(v, axis=1)).max()))


@dataclass
class SandwichResult:
    n: int
    k: int
    slack: float
    lower_ok: bool
    upper_ok: bool
    lower_violation: float
    upper_violation: float

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok


def sandwich_diagnostic(sys: FisSystem, gf: GridFunction, upper, lower, k: int,
                        margin: int = DEFAULT_MARGIN) -> SandwichResult:
    """Check ``lower V(k-1) - N^k u_n <= V(k) <= upper V(k-1) + N^k u_n`` up to slack.

    ``upper``/``lower`` are the level-``n`` scaling matrices. Every entry of
    ``V(f, n, k)`` sums ``N**(2k)`` sampled oscillations, each of which may fall
    short of the true one by about one neighbour jump, so the slack per entry
    is ``2 * step_jump(gf) * N**(2k)``.
    """
    n = upper.n
    N = gf.N
    if k < 1:
        raise ValueError("k must be >= 1")
    prev = osc_vector(gf, n, k - 1, margin).entries
    cur = osc_vector(gf, n, k, margin).entries
    term = N ** k * constants(sys, n).u_entry
    slack = 2.0 * step_jump(gf) * N ** (2 * k)
    lo_side = lower.matvec(prev) - term
    hi_side = upper.matvec(prev) + term
    lo_viol = float(np.max(lo_side - cur - slack))
    hi_viol = float(np.max(cur - hi_side - slack))
    return SandwichResult(n, k, slack, lo_viol <= 0, hi_viol <= 0,
                          max(lo_viol, 0.0), max(hi_viol, 0.0))
