"""Interpolation domain, digit/word combinatorics and the contractive maps.

Conventions
-----------
* ``z[i][j]`` is the height at node ``(x_i, y_j)``: first index runs along x.
* A digit ``(i, j)`` has ``1 <= i, j <= N`` and code ``(i-1) + N*(j-1)``.
* A word is coded most-significant-digit first in base ``N**2``, so numeric
  order of codes equals lexicographic order of words.
* Cells are addressed combinatorially: ``D_w`` for ``|w| = n`` is the square
  with integer position ``(cx, cy)`` in the level-``n`` tiling of ``D`` into
  ``N**n x N**n`` squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "NodeGrid",
    "Digit",
    "Word",
    "AffineMap1D",
    "Rect",
    "make_maps",
    "map_word",
    "cell",
    "cell_index",
    "cell_indices",
    "shift",
    "words",
]


@dataclass(frozen=True)
class Rect:
    """Closed axis-parallel rectangle ``[x_lo, x_hi] x [y_lo, y_hi]``."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self):
        if not (self.x_lo <= self.x_hi and self.y_lo <= self.y_hi):
            raise ValueError(f"empty rectangle {self}")

    @property
    def width(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def height(self) -> float:
        return self.y_hi - self.y_lo

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_lo + self.x_hi), 0.5 * (self.y_lo + self.y_hi))

    def contains(self, p: Sequence[float], tol: float = 0.0) -> bool:
        x, y = p
        return (self.x_lo - tol <= x <= self.x_hi + tol
                and self.y_lo - tol <= y <= self.y_hi + tol)

    def split(self, k: int) -> list["Rect"]:
        """Uniform ``k x k`` subdivision, row-major from the lower-left."""
        xs = np.linspace(self.x_lo, self.x_hi, k + 1)
        ys = np.linspace(self.y_lo, self.y_hi, k + 1)
        return [Rect(xs[a], xs[a + 1], ys[b], ys[b + 1])
                for b in range(k) for a in range(k)]


@dataclass(frozen=True)
class AffineMap1D:
    """``t -> a*t + b``."""

    a: float
    b: float

    def __call__(self, t):
        return self.a * t + self.b

    def inverse(self, t):
        return (t - self.b) / self.a


@dataclass(frozen=True, eq=False)
class NodeGrid:
    """Uniform square interpolation grid with heights ``z[i][j]``."""

    N: int
    x0: float
    xN: float
    y0: float
    yN: float
    z: np.ndarray = field(repr=False)

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        object.__setattr__(self, "z", z)
        z.setflags(write=False)
        if int(self.N) != self.N or self.N < 2:
            raise ValueError("N must be an integer >= 2")
        if not (self.x0 < self.xN and self.y0 < self.yN):
            raise ValueError("domain endpoints must satisfy x0 < xN and y0 < yN")
        if not np.isclose(self.xN - self.x0, self.yN - self.y0, rtol=1e-12, atol=0.0):
            raise ValueError("domain must be square (N=M >= 2 and |I|=|J|)")
        if z.shape != (self.N + 1, self.N + 1):
            raise ValueError("z must be (N+1)x(N+1)")
        if not np.all(np.isfinite(z)):
            raise ValueError("z must be finite")

    @property
    def side(self) -> float:
        """``|I| = |J|``."""
        return self.xN - self.x0

    @property
    def domain(self) -> Rect:
        return Rect(self.x0, self.xN, self.y0, self.yN)

    def x(self, i) -> float:
        return self.x0 + i * self.side / self.N

    def y(self, j) -> float:
        return self.y0 + j * self.side / self.N

    def nodes(self) -> Iterator[tuple[int, int, float, float, float]]:
        """Yield ``(i, j, x_i, y_j, z_ij)`` for all nodes."""
        for i in range(self.N + 1):
            for j in range(self.N + 1):
                yield i, j, self.x(i), self.y(j), float(self.z[i, j])

    def __eq__(self, other):
        if not isinstance(other, NodeGrid):
            return NotImplemented
        return ((self.N, self.x0, self.xN, self.y0, self.yN)
                == (other.N, other.x0, other.xN, other.y0, other.yN)
                and np.array_equal(self.z, other.z))

    __hash__ = None


@dataclass(frozen=True, order=True)
class Digit:
    i: int
    j: int
    N: int = field(compare=False)

    def __post_init__(self):
        if not (1 <= self.i <= self.N and 1 <= self.j <= self.N):
            raise ValueError(f"digit ({self.i},{self.j}) outside [1,{self.N}]^2")

    @property
    def code(self) -> int:
        return (self.i - 1) + self.N * (self.j - 1)

    @classmethod
    def from_code(cls, code: int, N: int) -> "Digit":
        if not 0 <= code < N * N:
            raise ValueError(f"digit code {code} outside [0,{N * N})")
        return cls(code % N + 1, code // N + 1, N)


@dataclass(frozen=True)
class Word:
    """Finite word over the digit set; the empty word has ``digits == ()``."""

    digits: tuple[Digit, ...]
    N: int

    def __post_init__(self):
        object.__setattr__(self, "digits", tuple(self.digits))
        if any(d.N != self.N for d in self.digits):
            raise ValueError("mixed digit bases in word")

    @classmethod
    def empty(cls, N: int) -> "Word":
        return cls((), N)

    @classmethod
    def of(cls, N: int, *pairs: tuple[int, int]) -> "Word":
        """``Word.of(2, (2, 1), (1, 2))``."""
        return cls(tuple(Digit(i, j, N) for i, j in pairs), N)

    @classmethod
    def from_code(cls, code: int, n: int, N: int) -> "Word":
        base = N * N
        if not 0 <= code < base ** n:
            raise ValueError(f"word code {code} outside [0,{base ** n})")
        out = []
        for _ in range(n):
            code, d = divmod(code, base)
            out.append(Digit.from_code(d, N))
        return cls(tuple(reversed(out)), N)

    def __len__(self) -> int:
        return len(self.digits)

    def __add__(self, other: "Word") -> "Word":
        if other.N != self.N:
            raise ValueError("cannot concatenate words over different digit sets")
        return Word(self.digits + other.digits, self.N)

    @property
    def code(self) -> int:
        c = 0
        base = self.N * self.N
        for d in self.digits:
            c = c * base + d.code
        return c

    def pairs(self) -> list[tuple[int, int]]:
        return [(d.i, d.j) for d in self.digits]


def words(n: int, N: int) -> Iterator[Word]:
    """All words of length ``n`` in code order."""
    for c in range((N * N) ** n):
        yield Word.from_code(c, n, N)


def shift(w: Word | int, n: int | None = None, N: int | None = None):
    """Drop the first digit.

    Accepts a :class:`Word`, or an integer code together with its length
    ``n`` and base ``N``, in which case an integer code is returned.
    """
    if isinstance(w, Word):
        if len(w) == 0:
            raise ValueError("shift of the empty word")
        return Word(w.digits[1:], w.N)
    if n is None or N is None:
        raise TypeError("integer codes need n and N")
    if n < 1:
        raise ValueError("shift of the empty word")
    return w % (N * N) ** (n - 1)


def make_maps(g: NodeGrid) -> tuple[list[AffineMap1D], list[AffineMap1D]]:
    """The maps ``u_1..u_N`` (onto ``I_i``) and ``v_1..v_N`` (onto ``J_j``).

    Odd-indexed maps preserve orientation, even-indexed maps reverse it.
    """
    N = g.N

    def build(t0, k):
        t = lambda m: t0 + m * g.side / N
        if k % 2 == 1:
            return AffineMap1D(1.0 / N, t(k - 1) - t0 / N)
        return AffineMap1D(-1.0 / N, t(k) + t0 / N)

    us = [build(g.x0, i) for i in range(1, N + 1)]
    vs = [build(g.y0, j) for j in range(1, N + 1)]
    return us, vs


def map_word(g: NodeGrid, w: Word, p: Sequence[float]) -> tuple[float, float]:
    """``L_w(p) = L_{w_1}(L_{w_2}(... L_{w_n}(p)))``."""
    us, vs = make_maps(g)
    x, y = p
    for d in reversed(w.digits):
        x, y = us[d.i - 1](x), vs[d.j - 1](y)
    return x, y


def _child_pos(k: int, pos, n: int, N: int):
    """Position at level ``n`` of ``L_k`` applied to a level-``n-1`` position."""
    span = N ** (n - 1)
    if k % 2 == 1:
        return (k - 1) * span + pos
    return k * span - 1 - pos


def cell_index(w: Word) -> tuple[int, int]:
    """Integer position ``(cx, cy)`` of ``D_w`` in the level-``|w|`` tiling."""
    cx = cy = 0
    for depth, d in enumerate(reversed(w.digits), start=1):
        cx = _child_pos(d.i, cx, depth, w.N)
        cy = _child_pos(d.j, cy, depth, w.N)
    return cx, cy


@lru_cache(maxsize=32)
def _cell_indices(n: int, N: int) -> tuple[np.ndarray, np.ndarray]:
    cx = np.zeros(1, dtype=np.int64)
    cy = np.zeros(1, dtype=np.int64)
    for level in range(1, n + 1):
        # code = first_digit * (N^2)^(level-1) + code(rest): stack blocks by first digit
        xs, ys = [], []
        for code in range(N * N):
            i, j = code % N + 1, code // N + 1
            xs.append(_child_pos(i, cx, level, N))
            ys.append(_child_pos(j, cy, level, N))
        cx, cy = np.concatenate(xs), np.concatenate(ys)
    cx.setflags(write=False)
    cy.setflags(write=False)
    return cx, cy


def cell_indices(n: int, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Positions of ``D_w`` for all ``w`` of length ``n``, indexed by word code."""
    return _cell_indices(n, N)


def cell(g: NodeGrid, w: Word) -> Rect:
    """``D_w = L_w(D)``, a square of side ``|I| / N**|w|``."""
    cx, cy = cell_index(w)
    h = g.side / g.N ** len(w)
    return Rect(g.x0 + cx * h, g.x0 + (cx + 1) * h, g.y0 + cy * h, g.y0 + (cy + 1) * h)
