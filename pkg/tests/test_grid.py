import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fisdim.grid import (Digit, NodeGrid, Rect, Word, cell, cell_index, cell_indices, make_maps,
                         map_word, shift, words)


def unit_grid(N=2, side=1.0, x0=0.0, y0=0.0):
    return NodeGrid(N, x0, x0 + side, y0, y0 + side, np.zeros((N + 1, N + 1)))


def test_rejects_bad_grids():
    with pytest.raises(ValueError, match="N=M >= 2 and \\|I\\|=\\|J\\|"):
        NodeGrid(2, 0, 1, 0, 2, np.zeros((3, 3)))
    with pytest.raises(ValueError, match="z must be \\(N\\+1\\)x\\(N\\+1\\)"):
        NodeGrid(2, 0, 1, 0, 1, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        NodeGrid(1, 0, 1, 0, 1, np.zeros((2, 2)))


def test_nodes_uniform():
    g = unit_grid(3, side=3.0, x0=1.0, y0=-1.0)
    assert [g.x(i) for i in range(4)] == [1.0, 2.0, 3.0, 4.0]
    assert [g.y(j) for j in range(4)] == [-1.0, 0.0, 1.0, 2.0]


def test_maps_n2():
    us, _ = make_maps(unit_grid(2))
    assert us[0](0.3) == pytest.approx(0.15)
    assert us[1](0.0) == 1.0 and us[1](1.0) == 0.5
    assert us[0].a == 0.5 and us[1].a == -0.5


def test_map_n3_odd():
    us, vs = make_maps(unit_grid(3, side=3.0))
    assert us[2](0.0) == pytest.approx(2.0)
    assert us[2](1.5) == pytest.approx(2.5)
    assert vs[1](0.0) == pytest.approx(2.0)


def test_shared_node_identities():
    g = unit_grid(3, side=3.0)
    us, vs = make_maps(g)
    assert us[0](g.x(0)) == g.x(0)
    for i in range(1, 3):
        # neighbouring maps meet at the shared node
        assert us[i - 1](g.x(3) if i % 2 else g.x(0)) == pytest.approx(g.x(i))
        assert us[i](g.x(3) if i % 2 else g.x(0)) == pytest.approx(g.x(i))


def test_map_word_examples():
    g = unit_grid(2)
    assert map_word(g, Word.empty(2), (0.3, 0.7)) == (0.3, 0.7)
    assert map_word(g, Word.of(2, (1, 1), (1, 1)), (1, 1)) == (0.25, 0.25)
    assert map_word(g, Word.of(2, (2, 1)), (0, 0)) == (1.0, 0.0)


def test_cell_examples():
    g = unit_grid(2)
    assert cell(g, Word.empty(2)) == g.domain
    assert cell(g, Word.of(2, (1, 1), (1, 1))) == Rect(0, 0.25, 0, 0.25)
    assert cell(g, Word.of(2, (2, 2))) == Rect(0.5, 1, 0.5, 1)


def test_shift_examples():
    w = Word.of(2, (2, 1), (1, 2))
    assert shift(w) == Word.of(2, (1, 2))
    assert shift(Word.of(2, (2, 2))) == Word.empty(2)
    assert w.code == 6
    assert shift(6, 2, 2) == 2
    with pytest.raises(ValueError):
        shift(Word.empty(2))


@pytest.mark.parametrize("N", [2, 3])
def test_codes_round_trip(N):
    for n in range(4):
        for code in range((N * N) ** n):
            w = Word.from_code(code, n, N)
            assert w.code == code and len(w) == n
    for c in range(N * N):
        d = Digit.from_code(c, N)
        assert d.code == c and d == Digit(d.i, d.j, N)


def _word(N, max_len=4):
    return st.lists(st.tuples(st.integers(1, N), st.integers(1, N)), max_size=max_len).map(
        lambda ps: Word.of(N, *ps))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_composition(data):
    N = data.draw(st.sampled_from([2, 3]))
    g = unit_grid(N, side=2.0, x0=-1.0, y0=0.5)
    p = data.draw(_word(N))
    w = data.draw(_word(N))
    rng = np.random.default_rng(len(p.digits) * 31 + len(w.digits))
    for x, y in rng.uniform(0, 1, (100, 2)):
        pt = (-1.0 + 2 * x, 0.5 + 2 * y)
        a = map_word(g, p + w, pt)
        b = map_word(g, p, map_word(g, w, pt))
        assert a == pytest.approx(b, abs=1e-12)


@pytest.mark.parametrize("N,n", [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2), (3, 3)])
def test_cells_tile_domain(N, n):
    # the index map is a bijection onto the N^n x N^n cell positions
    seen = set()
    for w in words(n, N):
        seen.add(cell_index(w))
    assert seen == set(itertools.product(range(N ** n), repeat=2))


@pytest.mark.parametrize("N,n", [(2, 3), (3, 2)])
def test_cell_matches_image_of_domain(N, n):
    g = unit_grid(N, side=3.0, x0=1.0, y0=2.0)
    for w in words(n, N):
        corners = [map_word(g, w, (x, y)) for x in (g.x0, g.xN) for y in (g.y0, g.yN)]
        xs, ys = zip(*corners)
        r = cell(g, w)
        assert (min(xs), max(xs), min(ys), max(ys)) == pytest.approx(
            (r.x_lo, r.x_hi, r.y_lo, r.y_hi), abs=1e-12)


def test_cell_indices_vectorised():
    cx, cy = cell_indices(3, 2)
    for w in words(3, 2):
        assert (cx[w.code], cy[w.code]) == cell_index(w)
    with pytest.raises(ValueError):
        cx[0] = 1
