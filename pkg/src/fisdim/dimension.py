"""Box-dimension bounds, estimators and the full analysis report."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import fif
from .errors import ResolutionError
from .fif import FisSystem, GridFunction
from .oscillation import DEFAULT_MARGIN, cell_extrema, osc_grid
from .scaling import DEFAULT_REFINE, SIZE_GUARD, ConditionReport, RhoSequence, check_conditions, rho_sequence

__all__ = [
    "Unavailable", "ExactDimension", "BoxCount", "Divergence", "DimensionReport",
    "HypothesisWarning",
    "dim_from_rho", "dim_upper", "dim_lower", "dim_exact",
    "boxcount", "osc_estimator", "divergence_diagnostic", "analyze",
    "default_eval_level", "default_dim_level", "default_n_max",
]

GROWTH_FACTOR = 1.2
BOUNDED_RTOL = 0.02


class HypothesisWarning(UserWarning):
    """A hypothesis of a dimension bound could not be confirmed numerically."""


@dataclass(frozen=True)
class Unavailable:
    reason: str

    def to_dict(self) -> dict:
        return {"status": "unavailable", "reason": self.reason}


def dim_from_rho(rho: float, N: int) -> float:
    """``max(2, 1 + log(rho) / log(N))``; ``rho <= 0`` gives 2."""
    if rho <= 0:
        return 2.0
    return max(2.0, 1.0 + math.log(rho) / math.log(N))


def dim_upper(rho_star_hat: float, N: int, conditions: ConditionReport | None = None) -> float:
    """Upper bound of the upper box dimension from the upper Perron root."""
    if conditions is None or not conditions.nonvanishing:
        warnings.warn("S not confirmed to be nonzero on every subrectangle",
                      HypothesisWarning, stacklevel=2)
    return dim_from_rho(rho_star_hat, N)


def dim_lower(rho_lower_hat: float, N: int, diverging: bool,
              conditions: ConditionReport) -> float | Unavailable:
    """Lower bound of the lower box dimension, when its hypotheses are evidenced."""
    if not conditions.a4_or_a5:
        return Unavailable("neither the gamma/zero-set condition nor sign-definiteness verified")
    if not diverging:
        return Unavailable("limsup hypothesis not evidenced: O_p/N^p not seen to diverge")
    return dim_from_rho(rho_lower_hat, N)


@dataclass(frozen=True)
class ExactDimension:
    status: str  # value | 2 | inconclusive
    lo: float | None = None
    hi: float | None = None
    reason: str = ""

    @property
    def value(self) -> float | None:
        if self.status == "2":
            return 2.0
        if self.status == "value":
            return 0.5 * (self.lo + self.hi)
        return None

    def to_dict(self) -> dict:
        return {"status": self.status, "lo": self.lo, "hi": self.hi,
                "value": self.value, "reason": self.reason}


def dim_exact(conditions: ConditionReport, rho_seq: RhoSequence, verdict: str,
              N: int) -> ExactDimension:
    """Exact box dimension when ``S`` is sign-definite, else inconclusive.

    ``verdict`` is the divergence diagnostic verdict.
    """
    if conditions.a5 != "verified":
        return ExactDimension("inconclusive", reason="S not certified sign-definite")
    r_lo, r_hi = rho_seq.rho_lower_hat, rho_seq.rho_star_hat
    if r_lo > N and verdict == "diverging":
        return ExactDimension("value", dim_from_rho(r_lo, N), dim_from_rho(r_hi, N),
                              "rho_S > N and O_p/N^p diverging")
    if r_hi <= N:
        return ExactDimension("2", 2.0, 2.0, "rho_S <= N")
    if verdict == "bounded":
        return ExactDimension("2", 2.0, 2.0, "O_p/N^p bounded")
    return ExactDimension("inconclusive", dim_from_rho(r_lo, N), dim_from_rho(r_hi, N),
                          f"rho enclosure [{r_lo:.6g}, {r_hi:.6g}] vs N={N} with verdict {verdict}")


@dataclass
class BoxCount:
    table: list[tuple[int, float, int]]  # (n, eps_n, count)
    slope: float
    intercept: float

    def to_dict(self) -> dict:
        return {"estimate": self.slope, "intercept": self.intercept,
                "table": [{"n": n, "eps": e, "count": c} for n, e, c in self.table]}


def _need(gf: GridFunction, level: int):
    if level + DEFAULT_MARGIN > gf.level:
        raise ResolutionError(f"level {level} needs samples of level >= {level + DEFAULT_MARGIN},"
                              f" have {gf.level}")


def boxcount(gf: GridFunction, n_lo: int, n_hi: int) -> BoxCount:
    """Coordinate-cube counts at ``eps_n = |I| N**-n`` and their log-log slope."""
    if not 1 <= n_lo < n_hi:
        raise ValueError("need 1 <= n_lo < n_hi")
    _need(gf, n_hi)
    table = []
    for n in range(n_lo, n_hi + 1):
        eps = gf.side / gf.N ** n
        mx, mn = cell_extrema(gf, n)
        count = int((np.floor(mx / eps) - np.floor(mn / eps) + 1).sum())
        table.append((n, eps, count))
    xs = np.array([n for n, _, _ in table]) * math.log(gf.N)
    ys = np.log([c for _, _, c in table])
    slope, intercept = np.polyfit(xs, ys, 1)
    return BoxCount(table, float(slope), float(intercept))


def _osc_sums(gf: GridFunction, p_max: int) -> list[float]:
    _need(gf, p_max)
    return [float(osc_grid(gf, p).sum()) for p in range(1, p_max + 1)]


def osc_estimator(gf: GridFunction, n_max: int) -> list[float]:
    """``e_n = 1 + log(O_n + N**n) / (n log N)`` for ``n = 1..n_max``."""
    N = gf.N
    return [1.0 + math.log(o + N ** n) / (n * math.log(N))
            for n, o in enumerate(_osc_sums(gf, n_max), start=1)]


@dataclass
class Divergence:
    verdict: str  # diverging | bounded | inconclusive
    ratios: list[tuple[int, float]]

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "heuristic": True,
                "ratios": [{"p": p, "ratio": r} for p, r in self.ratios]}


def divergence_diagnostic(gf: GridFunction, p_max: int) -> Divergence:
    """Heuristic verdict on whether ``O_p / N**p`` grows without bound.

    ``diverging`` when each of the last three ratios is at least 1.2 times
    the ratio two levels earlier; ``bounded`` when the last two ratios agree
    within 2%; otherwise ``inconclusive``.
    """
    N = gf.N
    r = [o / N ** p for p, o in enumerate(_osc_sums(gf, p_max), start=1)]
    ratios = list(enumerate(r, start=1))
    verdict = "inconclusive"
    if len(r) >= 5 and all(r[k] >= GROWTH_FACTOR * r[k - 2] and r[k] > 0
                           for k in range(len(r) - 3, len(r))):
        verdict = "diverging"
    elif len(r) >= 2 and abs(r[-1] - r[-2]) <= BOUNDED_RTOL * abs(r[-1]):
        verdict = "bounded"
    return Divergence(verdict, ratios)


# --------------------------------------------------------------------------
# Full pipeline

DEFAULT_N_MAX = 3


def default_n_max(N: int) -> int:
    """``DEFAULT_N_MAX`` lowered until ``N**(2(n+1))`` fits the size guard."""
    n = DEFAULT_N_MAX
    while n > 1 and N ** (2 * (n + 1)) > SIZE_GUARD:
        n -= 1
    return n


def default_eval_level(n: int, k: int = 0) -> int:
    """``max(n + k + 2, 6)``: the level used by ``render`` and ``osc``."""
    return max(n + k + DEFAULT_MARGIN, 6)


EVAL_POINTS = 2 ** 23


def default_dim_level(N: int, n_max: int) -> int:
    """Finest level whose grid fits ``EVAL_POINTS`` samples, at least ``default_eval_level``.

    The divergence verdict needs five ratios, so level 6 alone is too coarse.
    """
    m = default_eval_level(n_max)
    while (N ** (m + 1) + 1) ** 2 <= EVAL_POINTS:
        m += 1
    return m


@dataclass
class DimensionReport:
    N: int
    settings: dict
    validation: dict
    conditions: ConditionReport
    rho: RhoSequence
    upper_bound: float
    lower_bound: float | Unavailable
    exact: ExactDimension
    boxcount: BoxCount
    osc_estimator_sequence: list[float]
    divergence: Divergence
    M_f: float
    lambda_S: float
    lambda_q: float
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        lb = self.lower_bound
        return {
            "N": self.N,
            "settings": self.settings,
            "validation": self.validation,
            "conditions": self.conditions.to_dict(),
            "spectra": self.rho.to_dict(),
            "upper_bound": self.upper_bound,
            "lower_bound": lb.to_dict() if isinstance(lb, Unavailable)
            else {"status": "available", "value": lb},
            "exact": self.exact.to_dict(),
            "boxcount": self.boxcount.to_dict(),
            "osc_estimator_sequence": self.osc_estimator_sequence,
            "divergence": self.divergence.to_dict(),
            "estimates": {"M_f": self.M_f, "lambda_S": self.lambda_S, "lambda_q": self.lambda_q},
            "warnings": self.warnings,
        }

    def to_text(self) -> str:
        lb = self.lower_bound
        lb_s = f"unavailable ({lb.reason})" if isinstance(lb, Unavailable) else f"{lb:.6f}"
        ex = self.exact
        if ex.status == "value":
            ex_s = f"{ex.value:.6f}  in [{ex.lo:.6f}, {ex.hi:.6f}]"
        elif ex.status == "2":
            ex_s = "2"
        else:
            ex_s = "inconclusive"
        lines = [
            f"fisdim dimension report (N={self.N})",
            f"  upper bound          {self.upper_bound:.6f}",
            f"  lower bound          {lb_s}",
            f"  exact                {ex_s}  [{ex.reason}]",
            f"  box-count estimate   {self.boxcount.slope:.6f}",
            f"  divergence           {self.divergence.verdict} (heuristic)",
            f"  A5 {self.conditions.a5}, A4 {self.conditions.a4},"
            f" gamma_* ~ {self.conditions.gamma_star:.6f}",
            "",
            "  n   rho(upper) enclosure            rho(lower) enclosure",
        ]
        for lv in self.rho.levels:
            lines.append(f"  {lv.n:<3d} [{lv.upper.rho_lo:.10f}, {lv.upper.rho_hi:.10f}]"
                         f"  [{lv.lower.rho_lo:.10f}, {lv.lower.rho_hi:.10f}]")
        lines += ["", "  n   eps            count          e_n        O_n/N^n"]
        est = dict(enumerate(self.osc_estimator_sequence, start=1))
        rat = dict(self.divergence.ratios)
        for n, eps, count in self.boxcount.table:
            lines.append(f"  {n:<3d} {eps:<14.6g} {count:<14d} {est.get(n, float('nan')):<10.6f}"
                         f" {rat.get(n, float('nan')):.6g}")
        for w in self.warnings:
            lines.append(f"  warning: {w}")
        return "\n".join(lines) + "\n"


def analyze(sys: FisSystem, level: int | None = None, n_max: int | None = None,
            refine: int = DEFAULT_REFINE, tol: float = 1e-8) -> DimensionReport:
    """Validate, evaluate, and compute every bound and estimate for ``sys``."""
    N = sys.grid.N
    n_max = n_max or default_n_max(N)
    level = level or default_dim_level(N, n_max)
    report = fif.validate(sys)
    gf = fif.evaluate(sys, level)
    sysx = fif.with_estimates(sys, gf, report)
    conds = check_conditions(sys.S, sys.grid, lambda_S=sysx.lambda_S)
    seq = rho_sequence(sys.S, sys.grid, n_max, refine, tol)
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        upper = dim_upper(seq.rho_star_hat, N, conds)
    notes += [str(w.message) for w in caught]
    for lv in seq.levels:
        for kind, r in (("upper", lv.upper), ("lower", lv.lower)):
            if r.note:
                notes.append(f"n={lv.n} {kind}: {r.note}")
    p_max = level - DEFAULT_MARGIN
    div = divergence_diagnostic(gf, p_max)
    lower = dim_lower(seq.rho_lower_hat, N, div.verdict == "diverging", conds)
    exact = dim_exact(conds, seq, div.verdict, N)
    bc = boxcount(gf, 2, p_max) if p_max > 2 else boxcount(gf, 1, max(p_max, 2))
    settings = {"eval_level": level, "n_max": n_max, "refine": refine, "tol": tol,
                "boxcount_window": [bc.table[0][0], bc.table[-1][0]], "p_max": p_max,
                "margin": DEFAULT_MARGIN, "M_f_inflation": fif.M_F_INFLATION}
    return DimensionReport(N, settings, report.to_dict(), conds, seq, upper, lower, exact, bc,
                           osc_estimator(gf, p_max), div, sysx.M_f, sysx.lambda_S,
                           sysx.lambda_q, notes)
