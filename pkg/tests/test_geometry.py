import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from plap.errors import EmptyGrid, InvalidInput, SegmentCalibrationFailed
from plap.geometry import (
    Ball, Box, CosBump, DifferenceBall, Intersection, Interval, SlabWithBall, StraightLine,
    Translate, Union, Waveguide, Whip, arc_length, build_grid, indicator, waveguide_curvature,
    whip_layout, whip_translations,
)

coord = st.floats(-6, 6, allow_nan=False)


def test_indicator_examples():
    assert indicator(Interval(0.0, 1.0), 0.5)
    assert not indicator(Ball((0.0, 0.0), 1.0), (1.0, 0.0))
    assert indicator(Whip(2), (-5.0, 0.0))


def test_indicator_dimension_mismatch():
    with pytest.raises(InvalidInput):
        indicator(Ball((0.0, 0.0), 1.0), (0.1, 0.2, 0.3))


def test_primitives_reject_bad_parameters():
    with pytest.raises(InvalidInput):
        Interval(1.0, 0.0)
    with pytest.raises(InvalidInput):
        Ball((0.0, 0.0), -1.0)
    with pytest.raises(InvalidInput):
        SlabWithBall(0.5, 0.0)
    with pytest.raises(InvalidInput):
        Waveguide(CosBump(0), 1.0)  # halfwidth * max curvature = 1


@given(x1=st.floats(-40, -1e-3), x2=coord)
def test_whip_tail_is_straight_half_strip(x1, x2):
    assert indicator(Whip(3), (x1, x2)) == (abs(x2) < 0.5)


@given(x=coord, y=coord, R=st.floats(0.1, 4))
def test_difference_ball_indicator(x, y, R):
    inner = SlabWithBall(0.5, 1.5)
    pt = np.array([[x, y]])
    expect = inner.contains(pt)[0] and math.hypot(x, y) > R
    assert bool(DifferenceBall(inner, R).contains(pt)[0]) == expect


def test_set_operations():
    a, b = Ball((0.0, 0.0), 1.0), Ball((1.0, 0.0), 1.0)
    pts = np.array([[0.5, 0.0], [-0.9, 0.0], [1.9, 0.0], [3.0, 0.0]])
    assert Union((a, b)).contains(pts).tolist() == [True, True, True, False]
    assert Intersection((a, b)).contains(pts).tolist() == [True, False, False, False]
    assert Translate(a, (1.0, 0.0)).contains(pts).tolist() == b.contains(pts).tolist()


def test_build_grid_interval_nodes():
    g = build_grid(Interval(0.0, 1.0), 0.25, Box((-1.0,), (2.0,)))
    assert g.n_interior == 3
    assert np.allclose(np.sort(g.coords[:, 0]), [0.25, 0.5, 0.75])


def test_build_grid_disc_area():
    g = build_grid(Ball((0.0, 0.0), 1.0), 1 / 128, Box.centered(2.5))
    assert abs(g.n_interior * g.mass / math.pi - 1) < 0.02


def test_build_grid_empty():
    with pytest.raises(EmptyGrid):
        build_grid(Ball((0.0, 0.0), 0.05), 0.1, Box.centered(1.0))


def test_build_grid_deterministic():
    spec = SlabWithBall(0.5, 1.2)
    g1 = build_grid(spec, 1 / 16, Box.centered(6.0))
    g2 = build_grid(spec, 1 / 16, Box.centered(6.0))
    assert g1.index_lo == g2.index_lo and np.array_equal(g1.interior_mask, g2.interior_mask)


def _nodes(g):
    return set(map(tuple, g.global_index.tolist()))


@given(r1=st.floats(0.3, 2.0), dr=st.floats(0.0, 1.0), cx=st.floats(-0.5, 0.5))
def test_monotone_masking(r1, dr, cx):
    win, h = Box.centered(7.0), 1 / 8
    small = build_grid(Ball((cx, 0.0), r1), h, win)
    big = build_grid(Ball((cx, 0.0), r1 + dr), h, win)
    assert _nodes(small) <= _nodes(big)


def test_interior_nodes_have_inside_neighbourhood():
    spec = Ball((0.0, 0.0), 1.0)
    g = build_grid(spec, 1 / 16, Box.centered(2.5))
    h = g.h
    for off in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)]:
        assert np.all(spec.contains(g.coords + 0.999 * h * np.array(off)))


def test_curvature_examples():
    assert waveguide_curvature(StraightLine(), s=1.3) == 0.0
    assert waveguide_curvature(CosBump(0), s=0.0) == pytest.approx(-1.0, abs=1e-12)
    s0 = float(arc_length(2, math.pi))
    assert waveguide_curvature(CosBump(2), s=s0 + 0.1) == 0.0


def test_arc_length_matches_quadrature():
    for n in (0, 1, 3):
        for t in (0.3, 1.7, math.pi):
            ref = quad(lambda x: math.hypot(1.0, math.sin(x) / (n + 1)), 0.0, t, epsabs=1e-13)[0]
            assert float(arc_length(n, t)) == pytest.approx(ref, rel=1e-11)


@given(n=st.integers(0, 6), s=st.floats(-4, 4))
def test_curvature_formula_bound(n, s):
    k = waveguide_curvature(CosBump(n), s=s)
    assert abs(k) <= CosBump(n).max_curvature + 1e-12


def test_waveguide_non_overlap_sampled():
    for n in range(4):
        wg = Waveguide(CosBump(n), 0.5)
        s = np.linspace(-4.5, 4.5, 2001)
        kmax = max(abs(waveguide_curvature(wg.curve, s=x)) for x in s)
        assert wg.halfwidth * kmax < 1


def test_cosbump_distance_on_curve():
    c = CosBump(1)
    t = np.linspace(-3.0, 3.0, 11)
    pts = np.c_[t, (1 + np.cos(t)) / 2]
    assert np.allclose(c.distance(pts), 0.0, atol=1e-9)


def test_whip_translations_recursion():
    L = (4.0, 5.0, 6.5)
    tau = whip_translations(L)
    assert tau[0] == L[0]
    assert tau[2] == pytest.approx(2 * (L[0] + L[1]) + L[2])


def test_whip_pieces_are_disjoint_translates():
    w = Whip(3, (4.0, 5.0, 6.0))
    for n in range(3):
        piece = w.piece(n)
        lo, hi = piece.bbox()
        assert lo[0] == pytest.approx(w.translations[n] - w.piece_lengths[n])
        assert hi[0] == pytest.approx(w.translations[n] + w.piece_lengths[n])


def test_whip_layout_reports_failure_on_coarse_search():
    # a margin no truncated piece can reach is reported, not silently clipped
    with pytest.raises(SegmentCalibrationFailed):
        whip_layout(1, 2.0, 1 / 8, margin=0.5, max_length=8.0)
