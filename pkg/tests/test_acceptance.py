"""The ten acceptance criteria, one test each, each printing a PASS/FAIL line.

Run standalone with ``python3 tests/test_acceptance.py`` or under pytest,
where the lines are repeated in the terminal summary.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent))

from fisdim import expr as ex  # noqa: E402
from fisdim import fif, scaling  # noqa: E402
from fisdim.cli import load  # noqa: E402
from fisdim.dimension import analyze, boxcount  # noqa: E402
from fisdim.grid import Digit, NodeGrid, Rect, Word, map_word  # noqa: E402
from fisdim.oscillation import osc_sum, osc_vector, sandwich_diagnostic  # noqa: E402

from conftest import CONFIGS, config_system  # noqa: E402

RESULTS: list[str] = []


def report(k: int, ok: bool, detail: str):
    line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def zero_grid(N, side=1.0):
    return NodeGrid(N, 0.0, side, 0.0, side, np.zeros((N + 1, N + 1)))


def test_1_constant_spectral_exactness():
    worst_w, worst_t, bad = 0.0, 0.0, []
    for s in (0.4, 0.6, 0.7):
        for N in (2, 3):
            t0 = time.perf_counter()
            seq = scaling.rho_sequence(ex.parse(repr(s)), zero_grid(N), 3)
            dt = time.perf_counter() - t0
            worst_t = max(worst_t, dt)
            target = s * N * N
            for lv in seq.levels:
                for r in (lv.upper, lv.lower):
                    worst_w = max(worst_w, r.width)
                    if not (r.rho_lo <= target <= r.rho_hi and r.width <= 1e-8):
                        bad.append((s, N, lv.n))
            if dt >= 10:
                bad.append((s, N, "time"))
    report(1, not bad, f"max width {worst_w:.2e}, slowest case {worst_t:.2f}s, failures {bad}")


def test_2_monotone_chain():
    bad, gaps_all = [], {}
    for S in ("0.3 + 0.2*x", "0.5 + 0.4*sin(3*(x+y))", "-0.2 - 0.5*x*y"):
        lv = scaling.rho_sequence(ex.parse(S), zero_grid(2), 4).levels
        for a, b in zip(lv, lv[1:]):
            if a.lower.rho_lo > b.lower.rho_hi + a.lower.width + b.lower.width:
                bad.append((S, a.n, "lower"))
            if b.lower.rho_lo > b.upper.rho_hi + b.lower.width + b.upper.width:
                bad.append((S, b.n, "cross"))
            if b.upper.rho_lo > a.upper.rho_hi + a.upper.width + b.upper.width:
                bad.append((S, a.n, "upper"))
        gaps = [x.upper.rho_hi - x.lower.rho_lo for x in lv]
        gaps_all[S] = [round(g, 4) for g in gaps]
        if not all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:])):
            bad.append((S, "gap"))
    report(2, not bad, f"gaps {gaps_all}, failures {bad}")


def test_3_dimension_dichotomy():
    out, bad = {}, []
    for name in ("const_s06", "const_s04", "plane"):
        t0 = time.perf_counter()
        rep = analyze(config_system(name))
        dt = time.perf_counter() - t0
        out[name] = (rep.exact.status, rep.exact.value, rep.divergence.verdict, round(dt, 1))
        if dt >= 30:
            bad.append((name, "time"))
    s06, s04, pl = out["const_s06"], out["const_s04"], out["plane"]
    if not (s06[0] == "value" and abs(s06[1] - 2.263034) <= 1e-6):
        bad.append("const_s06")
    if s04[0] != "2":
        bad.append("const_s04")
    if not (pl[0] == "2" and pl[2] == "bounded"):
        bad.append("plane")
    report(3, not bad, f"{out}, failures {bad}")


def test_4_boxcount_cross_validation():
    exact = analyze(config_system("const_s06"), level=8).exact.value
    s06 = boxcount(fif.evaluate(config_system("const_s06"), 8), 2, 6).slope
    plane = boxcount(fif.evaluate(config_system("plane"), 8), 2, 6).slope
    ok = abs(s06 - exact) <= 0.15 and abs(plane - 2.0) <= 0.1
    report(4, ok, f"S=0.6 box count {s06:.4f} vs spectral {exact:.6f}; plane {plane:.4f} vs 2")


def _self_affinity(sys_, m_points=5, npts=200, seed=11):
    grid = sys_.grid
    N = grid.N
    gf = fif.evaluate(sys_, m_points + 1)
    rng = np.random.default_rng(seed)
    n = N ** m_points
    worst = 0.0
    for _ in range(npts):
        d = Digit.from_code(int(rng.integers(N * N)), N)
        r, c = (int(v) for v in rng.integers(0, n + 1, 2))
        p = (grid.x0 + c * grid.side / n, grid.y0 + r * grid.side / n)
        fp = gf.values[r * N, c * N]
        q = map_word(grid, Word((d,), N), p)
        lhs = gf.values[round((q[1] - grid.y0) / gf.step), round((q[0] - grid.x0) / gf.step)]
        rhs = ex.evaluate(sys_.S, *q) * fp + fif.eval_q(sys_, q)
        worst = max(worst, abs(lhs - rhs))
    return worst


def test_5_interpolation_and_self_affinity():
    rows, bad = [], []
    for path in CONFIGS:
        sys_ = load(path).system()
        N = sys_.grid.N
        gf = fif.evaluate(sys_, 5)
        s = N ** 4
        interp = float(np.max(np.abs(gf.values[::s, ::s].T - sys_.grid.z)))
        aff = _self_affinity(sys_)
        rows.append(f"{path.stem}={interp:.1e}/{aff:.1e}")
        if interp > 1e-12 or aff > 1e-9:
            bad.append(path.stem)
    report(5, not bad, f"interp/self-affinity {' '.join(rows)}, failures {bad}")


def _random_function(rng) -> str:
    a, b, c, d, e, f, g = (float(v) for v in rng.uniform(-2, 2, 7))
    k1, k2 = (float(v) for v in rng.uniform(0.5, 6, 2))
    return (f"{a!r}*sin({k1!r}*x + {b!r}*y) + {c!r}*x*y + {d!r}*cos({k2!r}*y)"
            f" + {e!r}*exp({f!r}*x) + {g!r}*abs(x - y)")


def test_6_lipschitz_oscillation_bound():
    rng = np.random.default_rng(2024)
    D = Rect(0.0, 1.0, 0.0, 1.0)
    worst, bad = 0.0, []
    for t in range(10):
        text = _random_function(rng)
        e = ex.parse(text)
        lam = ex.lipschitz_estimate(e, D, 64)
        gf = fif.sample(e, D, 2, 7)
        for n in range(1, 6):
            ratio = osc_sum(gf, n) / (math.sqrt(2) * lam * 2 ** n)
            worst = max(worst, ratio)
            if ratio > 1:
                bad.append((t, n))
    report(6, not bad, f"max O_n / bound = {worst:.4f}, failures {bad}")


def test_7_oscillation_vector_identity():
    worst = 0.0
    for name in ("const_s06", "lipschitz_s", "n3_const"):
        sys_ = config_system(name)
        gf = fif.evaluate(sys_, 8 if sys_.grid.N == 2 else 6)
        for n in range(1, 4):
            for k in range(0, 4):
                if n + k + 2 > gf.level:
                    continue
                v = osc_vector(gf, n, k)
                o = osc_sum(gf, n + k)
                worst = max(worst, abs(v.norm1 - o) / max(1.0, o))
    report(7, worst <= 1e-12, f"max relative |‖V‖₁ - O_(n+k)| = {worst:.2e}")


def test_8_sandwich():
    bad, total = [], 0
    for name in ("const_s06", "lipschitz_s"):
        sys_ = config_system(name)
        gf = fif.evaluate(sys_, 8)
        full = fif.with_estimates(sys_, gf)
        for n in range(1, 4):
            up, low = scaling.build(sys_.S, sys_.grid, n)
            for k in range(1, 4):
                total += 1
                res = sandwich_diagnostic(full, gf, up, low, k)
                if not res.ok:
                    bad.append((name, n, k, res.lower_violation, res.upper_violation))
    report(8, not bad, f"{total - len(bad)}/{total} (n,k) pairs within slack, failures {bad}")


def _primitive(A):
    d = A.shape[0]
    B = (A > 0).astype(float)
    M = np.eye(d)
    for _ in range((d - 1) ** 2 + 1):
        M = np.minimum(M @ B, 1)
    return bool(np.all(M > 0))


def test_9_spectral_oracle():
    rng = np.random.default_rng(99)
    made, bad, worst_w, worst_it = 0, [], 0.0, 0
    while made < 50:
        d = int(rng.integers(1, 17))
        A = rng.uniform(0, 1, (d, d)) * (rng.uniform(size=(d, d)) < rng.uniform(0.2, 1.0))
        if not _primitive(A):
            continue
        made += 1
        rho = float(max(abs(np.linalg.eigvals(A))))
        r = scaling.spectral_radius(A, tol=1e-8, max_iter=10_000)
        slack = 1e-12 * rho
        worst_w = max(worst_w, r.width)
        worst_it = max(worst_it, r.iterations)
        if not (r.rho_lo - slack <= rho <= r.rho_hi + slack and r.width <= 1e-8):
            bad.append((made, d, r.rho_lo, rho, r.rho_hi, r.iterations))
    report(9, not bad, f"50 matrices, max width {worst_w:.2e}, max iterations {worst_it},"
                       f" failures {bad}")


def test_10_condition_checks():
    g2 = zero_grid(2)
    sine = scaling.check_conditions(ex.parse("0.5+0.4*sin(3*(x+y))"), g2)
    line = scaling.check_conditions(ex.parse("x-0.5"), g2)
    gammas = {(N, s): scaling.gamma_star(ex.parse(repr(s)), zero_grid(N))
              for N in (2, 3) for s in (0.4, 0.6, 0.7)}
    exact = all(v == N * N * s for (N, s), v in gammas.items())
    ok = (sine.a5 == "verified" and line.a5 == "refuted" and line.zero_set == "curve" and exact)
    report(10, ok, f"sine A5 {sine.a5} (refine {sine.a5_refine}); x-0.5 A5 {line.a5},"
                   f" zero set {line.zero_set}; gamma_* exact {exact}")


if __name__ == "__main__":
    failed = 0
    tests = [(int(n.split("_")[1]), fn) for n, fn in globals().items() if n.startswith("test_")]
    for _, fn in sorted(tests, key=lambda t: t[0]):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
