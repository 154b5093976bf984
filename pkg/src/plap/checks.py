"""Quick invariant suite behind ``plap check``."""
from __future__ import annotations

import math

import numpy as np

from .eigensolver import SolverOptions, solve_ground_state
from .energy import (
    Field, dirichlet_energy_p, elementary_inequality_constant, energy_gradient,
)
from .geometry import Ball, Box, Interval, build_grid
from .spectral import check_caccioppoli, h_function, solve_h_inverse

P_VALUES = (1.5, 2.0, 3.0, 4.7)


def elementary_inequality(n: int = 100_000, seed: int = 0) -> bool:
    rng = np.random.default_rng(seed)
    ok = True
    for p in P_VALUES:
        cp = elementary_inequality_constant(p)
        a = rng.normal(size=(n, 2)) * rng.lognormal(size=(n, 1))
        b = rng.normal(size=(n, 2)) * rng.lognormal(size=(n, 1))
        eps = rng.uniform(1e-3, 1 - 1e-9, size=n)
        na, nab, nb = (np.linalg.norm(v, axis=1) ** p for v in (a, a + b, b))
        lhs = np.abs(nab - na)
        rhs = eps * na + cp * eps ** (1 - p) * nb
        ok &= bool(np.all(lhs <= rhs * (1 + 1e-12)))
    return ok


def h_round_trip(n: int = 100, seed: int = 0) -> bool:
    rng = np.random.default_rng(seed)
    return all(abs(h_function(solve_h_inverse(x, p), p) - x) < 1e-10
               for p in P_VALUES for x in rng.uniform(0.01, 0.99, n))


def _small_grid():
    return build_grid(Ball((0.0, 0.0), 1.0), 1 / 8, Box.centered(2.5))


def gradient_consistency(seed: int = 0, rtol: float = 1e-5) -> bool:
    rng = np.random.default_rng(seed)
    grid = _small_grid()
    ok = True
    for p in P_VALUES:
        u = Field(grid, rng.normal(size=grid.n_interior))
        v = Field(grid, rng.normal(size=grid.n_interior))
        t = 1e-6
        fd = (dirichlet_energy_p(u + t * v, p) - dirichlet_energy_p(u + (-t) * v, p)) / (2 * t)
        exact = float(energy_gradient(u, p).values @ v.values)
        ok &= abs(fd - exact) <= rtol * abs(exact)
    return bool(ok)


def homogeneity(seed: int = 0) -> bool:
    rng = np.random.default_rng(seed)
    grid = _small_grid()
    u = Field(grid, rng.normal(size=grid.n_interior))
    return all(math.isclose(dirichlet_energy_p(c * u, p), abs(c) ** p * dirichlet_energy_p(u, p), rel_tol=1e-12)
               for p in P_VALUES for c in (-2.5, 0.3, 7.0))


def scaling_law(p: float = 2.5) -> bool:
    h = 1 / 16
    l1 = solve_ground_state(build_grid(Ball((0.0, 0.0), 1.0), h, Box.centered(3.0)), p).lam
    l2 = solve_ground_state(build_grid(Ball((0.0, 0.0), 2.0), 2 * h, Box.centered(6.0)), p).lam
    return abs(l2 - 2 ** -p * l1) <= 1e-12 * l1


def domain_monotonicity(p: float = 3.0) -> bool:
    h = 1 / 16
    small = build_grid(Ball((0.0, 0.0), 1.0), h, Box.centered(3.0))
    big = build_grid(Ball((0.0, 0.0), 1.25), h, Box.centered(3.0))
    nodes = lambda g: set(map(tuple, g.global_index.tolist()))
    nested = nodes(small) <= nodes(big)
    opts = SolverOptions()
    return nested and solve_ground_state(small, p, opts).lam >= solve_ground_state(big, p, opts).lam


def interval_spectrum() -> bool:
    grid = build_grid(Interval(0.0, 1.0), 1 / 256, Box((-0.5,), (1.5,)))
    res = solve_ground_state(grid, 2.0)
    return res.converged and abs(res.lam / math.pi ** 2 - 1) < 0.01


def caccioppoli_interval() -> bool:
    grid = build_grid(Interval(-3.0, 3.0), 1 / 64, Box((-4.0,), (4.0,)))
    res = solve_ground_state(grid, 2.0)
    return all(check_caccioppoli(res.u, res.lam, R, d, 2.0) for R in (0.5, 1.0, 2.0) for d in (0.1, 0.3))


CHECKS = {
    "elementary_inequality": elementary_inequality,
    "h_inverse_round_trip": h_round_trip,
    "gradient_consistency": gradient_consistency,
    "p_homogeneity": homogeneity,
    "scaling_law": scaling_law,
    "domain_monotonicity": domain_monotonicity,
    "interval_spectrum": interval_spectrum,
    "caccioppoli": caccioppoli_interval,
}


def run_all() -> dict[str, bool]:
    return {name: bool(fn()) for name, fn in CHECKS.items()}
