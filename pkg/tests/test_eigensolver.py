import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plap.eigensolver import (
    EigenResult, SolverOptions, check_disjoint, courant_fischer_p2, ls_upper_bound,
    piece_ground_states, rayleigh, residual_norm, solve_ground_state, solve_perturbed,
    sweep_perturbed,
)
from plap.energy import Field, PowerLaw, lp_norm_p, random_field, stiffness_matrix
from plap.errors import DisjointnessViolation, DivisionByZeroSignal, EmptyGrid, InvalidInput
from plap.geometry import Ball, Box, Interval, Union, build_grid
from plap.spectral import pi_p

OPTS = SolverOptions()


@pytest.fixture(scope="module")
def interval_gs():
    g = build_grid(Interval(0.0, 1.0), 1 / 256, Box((-0.5,), (1.5,)))
    return solve_ground_state(g, 2.0)


def _check_result(res: EigenResult, p):
    assert res.converged
    assert res.residual < OPTS.tol_residual
    assert lp_norm_p(res.u, p) == pytest.approx(1.0, abs=1e-12)
    hist = np.array(res.energy_history)
    assert np.all(np.diff(hist) <= 0)
    assert np.all(res.u.values >= 0)
    assert rayleigh(res.u, p) == pytest.approx(res.lam, rel=1e-12)


def test_interval_ground_state(interval_gs):
    _check_result(interval_gs, 2.0)
    assert abs(interval_gs.lam / math.pi ** 2 - 1) < 0.01


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.7])
def test_result_invariants(p):
    g = build_grid(Ball((0.0, 0.0), 1.0), 1 / 16, Box.centered(2.5))
    _check_result(solve_ground_state(g, p), p)


def test_pi_3_self_convergence():
    # (pi_3)^3 from the extrapolated 1D solve; the closed form 2 pi (p-1)^(1/p) / (p sin(pi/p)) gives 3.0469920
    coarse, fine = pi_p(3.0, 2.0 ** -8), pi_p(3.0, 2.0 ** -10)
    assert abs(fine - 3.046992) < 2e-6
    assert abs(fine - coarse) < 1e-5


def test_pi_p_monotone_refinement():
    dom, win = Interval(-0.5, 0.5), Box((-1.0,), (1.0,))
    lams = [solve_ground_state(build_grid(dom, 2.0 ** -k, win), 3.0).lam for k in (5, 6, 7, 8)]
    diffs = np.abs(np.diff(lams))
    assert np.all(np.diff(diffs) < 0)


def test_pi_2_is_pi():
    assert abs(pi_p(2.0) / math.pi - 1) < 1e-3


def test_rayleigh_scale_invariance_and_zero(small_disc, rng):
    u = random_field(small_disc, rng)
    for c in (-3.0, 0.01, 12.0):
        assert rayleigh(c * u, 2.5) == pytest.approx(rayleigh(u, 2.5), rel=1e-12)
    with pytest.raises(DivisionByZeroSignal):
        rayleigh(Field.zeros(small_disc), 2.0)


@settings(max_examples=15)
@given(seed=st.integers(0, 2 ** 16), p=st.sampled_from([1.5, 2.0, 3.0]))
def test_rayleigh_bounded_below_by_ground_state(small_disc, seed, p):
    lam = _gs_lam(p)
    u = random_field(small_disc, np.random.default_rng(seed))
    assert rayleigh(u, p) >= lam * (1 - 1e-10)


_cache = {}


def _gs_lam(p):
    if p not in _cache:
        g = build_grid(Ball((0.0, 0.0), 1.0), 1 / 8, Box.centered(2.5))
        _cache[p] = solve_ground_state(g, p).lam
    return _cache[p]


def test_residual_norm(interval_gs):
    res = interval_gs
    assert residual_norm(res.u, res.lam, 2.0) < OPTS.tol_residual
    assert residual_norm(res.u, res.lam + 1, 2.0) > 1.0
    u = random_field(res.u.grid, np.random.default_rng(0))
    assert residual_norm(u, 1.0, 2.0) > 0


def test_empty_grid():
    g = build_grid(Ball((0.0, 0.0), 1.0), 1 / 8, Box.centered(2.5))
    with pytest.raises(EmptyGrid):
        solve_ground_state(g.restrict(np.zeros(g.n_interior, bool)), 2.0)


def test_nonconvergence_reported():
    g = build_grid(Ball((0.0, 0.0), 1.0), 1 / 16, Box.centered(2.5))
    res = solve_ground_state(g, 3.0, SolverOptions(max_iters=2))
    assert not res.converged
    assert res.iterations == 2


def test_restarts_keep_best():
    g = build_grid(Ball((0.0, 0.0), 1.0), 1 / 16, Box.centered(2.5))
    res = solve_ground_state(g, 3.0, SolverOptions(restarts=3, seed=7))
    assert len(res.meta["restart_lambdas"]) == 3
    assert res.lam == min(res.meta["restart_lambdas"])


def test_components_take_minimum():
    spec = Union((Ball((-2.0, 0.0), 1.0), Ball((2.0, 0.0), 0.7)))
    g = build_grid(spec, 1 / 16, Box((-3.5, -1.5), (3.5, 1.5)))
    res = solve_ground_state(g, 2.0)
    assert res.meta["n_components"] == 2
    big = solve_ground_state(build_grid(Ball((-2.0, 0.0), 1.0), 1 / 16, Box((-3.5, -1.5), (3.5, 1.5))), 2.0)
    assert res.lam == pytest.approx(big.lam, rel=1e-9)


def test_scaling_law_exact():
    for p in (1.5, 2.5):
        l1 = solve_ground_state(build_grid(Ball((0.0, 0.0), 1.0), 1 / 16, Box.centered(3.0)), p).lam
        l2 = solve_ground_state(build_grid(Ball((0.0, 0.0), 2.0), 1 / 8, Box.centered(6.0)), p).lam
        assert abs(l2 - 2 ** -p * l1) <= 1e-12 * l1


def test_domain_monotonicity_p2_spectrum():
    win = Box.centered(3.0)
    small = build_grid(Ball((0.0, 0.0), 1.0), 1 / 16, win)
    big = build_grid(Ball((0.0, 0.0), 1.3), 1 / 16, win)
    assert np.all(np.array(courant_fischer_p2(small, 4)) >= np.array(courant_fischer_p2(big, 4)))
    for p in (1.5, 3.0):
        assert solve_ground_state(small, p).lam >= solve_ground_state(big, p).lam


def test_courant_fischer_interval_and_square():
    g = build_grid(Interval(0.0, 1.0), 1 / 512, Box((-0.5,), (1.5,)))
    vals = courant_fischer_p2(g, 3)
    assert np.allclose(np.array(vals) / (np.arange(1, 4) ** 2 * math.pi ** 2), 1, rtol=0.01)
    sq = build_grid(Box((0.0, 0.0), (1.0, 1.0)), 1 / 32, Box.centered(3.0))
    assert abs(courant_fischer_p2(sq, 1)[0] / (2 * math.pi ** 2) - 1) < 0.02
    with pytest.raises(InvalidInput):
        courant_fischer_p2(sq, 0)


def test_courant_fischer_sparse_path_matches_dense():
    g = build_grid(Ball((0.0, 0.0), 1.0), 1 / 16, Box.centered(2.5))
    assert g.n_interior > 400
    sub = g.restrict(np.arange(g.n_interior) < 300)
    dense = courant_fischer_p2(sub, 3)
    K = np.linalg.eigvalsh(stiffness_matrix(sub).toarray())
    assert np.allclose(dense, K[:3] / sub.mass, rtol=1e-10)
    sparse = courant_fischer_p2(g, 3)
    Kg = np.linalg.eigvalsh(stiffness_matrix(g).toarray())
    assert np.allclose(sparse, Kg[:3] / g.mass, rtol=1e-8)


def test_p2_agrees_with_linear_solver():
    g = build_grid(Ball((0.0, 0.0), 1.0), 1 / 16, Box.centered(2.5))
    lam = solve_ground_state(g, 2.0).lam
    assert abs(lam - courant_fischer_p2(g, 1)[0]) <= 1e-4 * lam


def _pieces():
    win = Box((-3.0, -1.5), (3.0, 1.5))
    g1 = build_grid(Ball((-1.5, 0.0), 1.0), 1 / 16, win)
    g2 = build_grid(Ball((1.5, 0.0), 0.5), 1 / 16, win)
    return g1, g2


def test_ls_upper_bound_is_max():
    g1, g2 = _pieces()
    res = piece_ground_states([g1, g2], 2.0)
    assert ls_upper_bound([g1, g2], 2.0) == max(r.lam for r in res)
    assert ls_upper_bound([g1], 2.0) == pytest.approx(solve_ground_state(g1, 2.0).lam)


def test_overlapping_pieces_rejected():
    g1, _ = _pieces()
    g3 = build_grid(Ball((-1.0, 0.0), 1.0), 1 / 16, Box((-3.0, -1.5), (3.0, 1.5)))
    with pytest.raises(DisjointnessViolation):
        check_disjoint([g1, g3])
    with pytest.raises(InvalidInput):
        piece_ground_states([], 2.0)


@pytest.fixture(scope="module")
def sweep():
    g = build_grid(Interval(0.0, 1.0), 1 / 128, Box((-0.5,), (1.5,)))
    return g, solve_ground_state(g, 2.0), sweep_perturbed(g, 2.0, PowerLaw(2.0), [0.001, 1.0, 0.1, 0.01])


def test_sweep_sorted_and_sandwiched(sweep):
    g, base, res = sweep
    eps = [r.meta["eps"] for r in res]
    lams = [r.lam for r in res]
    assert eps == sorted(eps, reverse=True)
    assert all(a >= b for a, b in zip(lams, lams[1:]))
    assert all(l >= base.lam for l in lams)
    assert all(r.converged and "linf_ratio" in r.meta for r in res)


def test_perturbed_small_eps_limit(sweep):
    g, base, _ = sweep
    r = solve_perturbed(g, 2.0, PowerLaw(2.0), 1e-12)
    assert abs(r.lam - base.lam) <= 1e-6 * base.lam
    with pytest.raises(InvalidInput):
        solve_perturbed(g, 2.0, PowerLaw(2.0), 0.0)


def test_single_member_sweep_matches_solve(sweep):
    g, _, _ = sweep
    one = sweep_perturbed(g, 2.0, PowerLaw(2.0), [0.1])[0]
    assert one.lam == pytest.approx(solve_perturbed(g, 2.0, PowerLaw(2.0), 0.1).lam, rel=1e-10)


def test_deterministic(small_disc):
    a = solve_ground_state(small_disc, 3.0)
    b = solve_ground_state(small_disc, 3.0)
    assert a.lam == b.lam and np.array_equal(a.u.values, b.u.values)
