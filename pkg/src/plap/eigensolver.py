"""Ground states, perturbed eigenpairs and disjoint-piece upper bounds.

The discrete Rayleigh quotient (E(u) + sum m V |u|^p) / sum m |u|^p is
minimized by projected descent on the l^p sphere: each step moves along a
search direction, backtracks until the Armijo condition holds and then
renormalizes.  The direction is the Newton step of the sphere-constrained
problem (a bordered sparse system) whenever that is a descent direction,
and a frozen-coefficient (Kacanov) preconditioned gradient otherwise.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import optimize
from scipy.ndimage import distance_transform_edt

from .energy import (
    Field, _check_p, _energy, _energy_grad, dirichlet_energy_p, element_gradients, energy_gradient,
    energy_hessian, kacanov_matrix, lp_norm_p, potential_values, stiffness_matrix,
)
from .errors import (
    DisjointnessViolation, DivisionByZeroSignal, EigenIterationFailed, EmptyGrid, InvalidInput,
)
from .geometry import Grid

__all__ = [
    "SolverOptions", "EigenResult", "rayleigh", "residual_norm", "solve_ground_state",
    "solve_perturbed", "sweep_perturbed", "piece_ground_states", "ls_upper_bound",
    "courant_fischer_p2", "check_disjoint",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    tol_residual: float = 1e-8
    tol_lambda: float = 1e-10
    max_iters: int = 500
    seed: int = 0
    restarts: int = 1
    stall_window: int = 10

    def __post_init__(self):
        if not (self.tol_residual > 0 and self.tol_lambda > 0):
            raise InvalidInput("solver tolerances must be > 0")
        if self.max_iters < 1:
            raise InvalidInput("max_iters must be >= 1")
        if self.restarts < 1:
            raise InvalidInput("restarts must be >= 1")
        if self.stall_window < 1:
            raise InvalidInput("stall_window must be >= 1")


@dataclass
class EigenResult:
    lam: float
    u: Field
    residual: float
    iterations: int
    converged: bool
    energy_history: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "lambda": self.lam, "residual": self.residual, "iterations": self.iterations,
            "converged": self.converged, **self.meta,
        }


# ------------------------------------------------------------ quotient

class _Quotient:
    """Rayleigh quotient with optional nodal potential on one grid."""

    def __init__(self, grid: Grid, p: float, vdiag: np.ndarray | None = None):
        self.grid, self.p, self.m = grid, p, grid.mass
        self.v = vdiag

    def normalize(self, u):
        return u / self.den(u) ** (1 / self.p)

    def num(self, u):
        e = _energy(self.grid, u, self.p)
        if self.v is not None:
            e += self.m * float(np.sum(self.v * np.abs(u) ** self.p))
        return e

    def den(self, u):
        return self.m * float(np.sum(np.abs(u) ** self.p))

    def value(self, u):
        return self.num(u) / self.den(u)

    def gradient(self, u, lam):
        """(grad N - lam grad D, grad D) at a normalized u."""
        p = self.p
        up = np.abs(u) ** (p - 1) * np.sign(u)
        c = p * self.m * up
        g = _energy_grad(self.grid, u, p) - lam * c
        if self.v is not None:
            g += p * self.m * self.v * up
        return g, c

    def _mass_curvature(self, u):
        p = self.p
        a = np.abs(u)
        if p != 2:
            # both weights degenerate where u is flat or tiny; floor them
            a = np.maximum(a, 1e-8 * a.max())
        return p * (p - 1) * self.m * a ** (p - 2)

    def bordered(self, u, lam, c):
        g = _elem_scale(self.grid, u)
        reg = 1e-6 * g if self.p != 2 else 0.0
        A = energy_hessian(self.grid, u, self.p, reg)
        w = self._mass_curvature(u)
        diag = (self.v - lam) * w if self.v is not None else -lam * w
        A = A + sp.diags(diag)
        col = sp.csc_matrix(c[:, None])
        return sp.bmat([[A, col], [col.T, None]], format="csc")

    def kacanov(self, u):
        p = self.p
        floor = 1e-6 * _elem_scale(self.grid, u)
        P = kacanov_matrix(self.grid, u, p, floor)
        if self.v is not None:
            P = P + sp.diags(self._mass_curvature(u) * self.v / (p - 1))
        return sp.csc_matrix(P)


def _elem_scale(grid, u):
    g = element_gradients(grid, u)
    s = float(np.sqrt(np.max(np.sum(g * g, axis=1)))) if len(g) else 1.0
    return s if s > 0 else 1.0


def _factor(M):
    try:
        with np.errstate(all="ignore"):
            return spla.splu(M, permc_spec="COLAMD")
    except RuntimeError:
        return None


def _solve(lu, rhs):
    if lu is None:
        return None
    with np.errstate(all="ignore"):
        x = lu.solve(rhs)
    return x if np.all(np.isfinite(x)) else None


_EPS = float(np.finfo(float).eps)


def _armijo(Q, u, lam, d, slope, c1=1e-4, t_min=1e-10):
    roundoff = abs(slope) <= 1e-13 * lam
    t = 1.0
    while t >= t_min:
        v = u + t * d
        if Q.den(v) > 0:
            v = Q.normalize(v)
            lv = Q.value(v)
            if roundoff:
                # the quotient no longer resolves the step; accept changes
                # within rounding so the eigenvector can keep improving
                return (v, min(lv, lam)) if lv <= lam * (1 + 4 * _EPS) else None
            if lv <= lam + c1 * t * slope:
                return v, lv
        elif roundoff:
            return None
        t *= 0.5
    return None


def _full_step(Q, u, lam, d):
    # with an indefinite Hessian the Newton step behaves like Rayleigh
    # quotient iteration: keep it only if the quotient strictly drops
    v = u + d
    if not Q.den(v) > 0:
        return None
    v = Q.normalize(v)
    lv = Q.value(v)
    return (v, lv) if lv < lam else None


def _subspace_step(Q, u, lam, dirs):
    """Minimize the quotient over u + span(dirs), in the spirit of LOBPCG."""
    nu = float(np.linalg.norm(u))
    basis = [d * (nu / nd) for d in dirs if d is not None and (nd := float(np.linalg.norm(d))) > 0]
    if not basis:
        return None
    B = np.column_stack(basis)

    def f(x):
        v = u + B @ x
        den = Q.den(v)
        if not den > 0:
            return math.inf, np.zeros_like(x)
        r = Q.num(v) / den
        g, _ = Q.gradient(v, r)
        return r, (B.T @ g) / den

    x0 = np.zeros(B.shape[1])
    x0[0] = 1.0
    with np.errstate(all="ignore"):
        sol = optimize.minimize(f, x0, jac=True, method="BFGS", options={"gtol": 1e-14 * lam, "maxiter": 50})
    v = u + B @ sol.x
    if not Q.den(v) > 0:
        return None
    v = Q.normalize(v)
    lv = Q.value(v)
    return (v, lv) if lv < lam else None


def _minimize(Q: _Quotient, u0: np.ndarray, opts: SolverOptions):
    m = Q.m
    u = Q.normalize(u0)
    lam = Q.value(u)
    hist = [lam]
    stall = nomove = 0
    cache = {"lu": None, "stale": True}
    frozen = False
    prev = None
    res = math.inf
    converged = False

    def newton(g, c):
        if cache["lu"] is None or (cache["stale"] and not frozen):
            cache["lu"] = _factor(Q.bordered(u, lam, c))
            cache["stale"] = False
        sol = _solve(cache["lu"], np.r_[-g, 0.0])
        return None if sol is None else sol[:-1]

    def kacanov(g, c):
        if Q.p == 2 and Q.v is None:
            # constant operator: one factorization serves every step
            if "K" not in cache:
                cache["K"] = _factor(Q.kacanov(u))
            return _solve(cache["K"], -g)
        return _solve(_factor(Q.kacanov(u)), -g)

    # Newton converges to whichever critical point is nearest, so it only
    # takes over once the preconditioned descent has settled; below p = 2
    # the mass curvature blows up near the boundary and the preconditioned
    # step stays the better default throughout
    polish = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        g, c = Q.gradient(u, lam)
        res = math.sqrt(float(np.sum(g * g)) / m)
        if res < opts.tol_residual and stall >= opts.stall_window:
            converged = True
            break
        step = None
        order = (newton, kacanov) if polish and Q.p >= 2 else (kacanov, newton)
        for direction in order:
            if direction is kacanov and frozen and res < opts.tol_residual:
                continue
            d = direction(g, c)
            if d is None:
                continue
            slope = float(g @ d)
            if direction is kacanov:
                # the previous step acts as momentum; plain preconditioned
                # descent crawls when the spectral gap is small
                step = _subspace_step(Q, u, lam, [d, prev])
            if step is None and slope < 0:
                step = _armijo(Q, u, lam, d, slope)
            elif direction is newton:
                step = _full_step(Q, u, lam, d)
            if step is not None:
                break
        chord_ok = step is not None and direction is newton
        if step is not None:
            v, lv = step
            prev = v - u
            rel = (lam - lv) / lam
            u, lam = v, lv
            cache["stale"] = True
            stall = stall + 1 if rel < opts.tol_lambda else 0
            polish = polish or rel < 1e-4
            nomove = 0
        else:
            stall += 1
            nomove += 1
            polish = True
            if nomove > opts.stall_window and res >= opts.tol_residual:
                break
        hist.append(lam)
        # chord iterations once close: keep the factorization while it keeps giving the step
        frozen = res < 1e2 * opts.tol_residual and chord_ok
    else:
        g, _ = Q.gradient(u, lam)
        res = math.sqrt(float(np.sum(g * g)) / m)
        converged = res < opts.tol_residual and stall >= opts.stall_window
    # sign normalization
    if np.sum(u) < 0:
        u = -u
    if np.any(u < 0):
        a = Q.normalize(np.abs(u))
        la = Q.value(a)
        if la <= lam:
            u, lam = a, la
            hist.append(lam)
    return u, lam, res, it, converged, hist


def _bump(grid: Grid) -> np.ndarray:
    dist = distance_transform_edt(np.pad(grid.interior_mask, 1))[1:-1, ...]
    if grid.dim == 2:
        dist = dist[:, 1:-1]
    return dist[grid.interior_mask].astype(float)


def _solve_single(grid: Grid, p: float, opts: SolverOptions, vdiag=None, u0=None):
    Q = _Quotient(grid, p, vdiag)
    base = _bump(grid) if u0 is None else np.abs(np.asarray(u0, dtype=float)) + 1e-12
    best = None
    restart_lams = []
    for r in range(opts.restarts):
        start = base
        if r > 0:
            rng = np.random.default_rng(opts.seed + r)
            start = base * (1 + 0.5 * rng.random(base.shape))
        out = _minimize(Q, start, opts)
        restart_lams.append(out[1])
        if best is None or out[1] < best[1]:
            best = out
    return best, restart_lams


def _solve_components(grid: Grid, p: float, opts: SolverOptions, vdiag=None, u0=None) -> EigenResult:
    if grid.n_interior == 0:
        raise EmptyGrid("grid has no interior nodes")
    comps = grid.components()
    found = []
    for sel in comps:
        sub = grid if len(comps) == 1 else grid.restrict(sel)
        vs = None if vdiag is None else vdiag[sel]
        us = None if u0 is None else np.asarray(u0)[sel]
        (u, lam, res, it, conv, hist), rl = _solve_single(sub, p, opts, vs, us)
        found.append((lam, sel, u, res, it, conv, hist, rl))
    lam, sel, u, res, it, conv, hist, rl = min(found, key=lambda f: f[0])
    values = np.zeros(grid.n_interior)
    values[sel] = u
    meta = {"n_components": len(comps), "restart_lambdas": rl}
    if len(comps) > 1:
        meta["component_lambdas"] = [f[0] for f in found]
    return EigenResult(float(lam), Field(grid, values), float(res), int(it), bool(conv),
                       [float(x) for x in hist], meta)


# ------------------------------------------------------------ public API

def rayleigh(u: Field, p: float) -> float:
    den = lp_norm_p(u, p)
    if den == 0:
        raise DivisionByZeroSignal("Rayleigh quotient of the zero field")
    return dirichlet_energy_p(u, p) / den


def residual_norm(u: Field, lam: float, p: float, V=None, eps: float = 0.0) -> float:
    """Lumped dual norm sqrt(sum r_i^2 / h^d) of the discrete eigen-residual."""
    vals = u.values
    m = u.grid.mass
    up = np.abs(vals) ** (p - 1) * np.sign(vals)
    r = energy_gradient(u, p).values - lam * p * m * up
    if V is not None and eps > 0:
        r += eps * p * m * potential_values(u.grid, V) * up
    return float(math.sqrt(np.sum(r * r) / m))


def solve_ground_state(grid: Grid, p: float, opts: SolverOptions | None = None) -> EigenResult:
    _check_p(p)
    return _solve_components(grid, p, opts or SolverOptions())


def solve_perturbed(grid: Grid, p: float, V, eps: float, opts: SolverOptions | None = None,
                    u0: Field | None = None) -> EigenResult:
    """Ground state of E(u) + eps sum m V |u|^p on the l^p sphere."""
    _check_p(p)
    if not eps > 0:
        raise InvalidInput("eps must be > 0")
    vdiag = eps * potential_values(grid, V)
    res = _solve_components(grid, p, opts or SolverOptions(), vdiag,
                            None if u0 is None else u0.values)
    res.meta["eps"] = float(eps)
    res.meta["linf_ratio"] = res.u.sup_norm() / res.lam ** (grid.dim / p ** 2)
    return res


def sweep_perturbed(grid: Grid, p: float, V, eps_list: Sequence[float],
                    opts: SolverOptions | None = None) -> list[EigenResult]:
    """Solve for decreasing amplitudes, warm starting from the previous eigenfunction."""
    eps = sorted((float(e) for e in eps_list), reverse=True)
    if not eps or any(e <= 0 for e in eps) or len(set(eps)) != len(eps):
        raise InvalidInput("eps_list must hold distinct positive amplitudes")
    out, prev = [], None
    for e in eps:
        r = solve_perturbed(grid, p, V, e, opts, u0=prev)
        out.append(r)
        prev = r.u
    bad = [r.meta["eps"] for r in out if not r.converged]
    if bad:
        log.warning("sweep members did not converge for eps=%s", bad)
    return out


def check_disjoint(subgrids: Sequence[Grid]):
    """Raise unless no element carries interior nodes of two different grids."""
    hs = {g.h for g in subgrids}
    if len(hs) != 1 or len({g.dim for g in subgrids}) != 1:
        raise InvalidInput("subgrids must share spacing and dimension")
    seen: dict[tuple, int] = {}
    for k, g in enumerate(subgrids):
        for row in map(tuple, g.elements[2]):
            j = seen.setdefault(row, k)
            if j != k:
                raise DisjointnessViolation(f"pieces {j} and {k} share element {row}")


def piece_ground_states(subgrids: Sequence[Grid], p: float,
                        opts: SolverOptions | None = None) -> list[EigenResult]:
    if len(subgrids) < 1:
        raise InvalidInput("need at least one piece")
    check_disjoint(subgrids)
    return [solve_ground_state(g, p, opts) for g in subgrids]


def ls_upper_bound(subgrids: Sequence[Grid], p: float, opts: SolverOptions | None = None) -> float:
    """max_i lambda_1(piece_i), an upper bound for the k-th minmax level of the union."""
    return max(r.lam for r in piece_ground_states(subgrids, p, opts))


def courant_fischer_p2(grid: Grid, k: int) -> list[float]:
    """Smallest k eigenvalues of the p = 2 problem K u = lam m u."""
    n = grid.n_interior
    if not 1 <= k <= n:
        raise InvalidInput(f"k must lie in [1, {n}]")
    K = stiffness_matrix(grid)
    if n <= 400 or k >= n - 1:
        vals = np.linalg.eigvalsh(K.toarray())[:k]
    else:
        try:
            vals = spla.eigsh(K.tocsc(), k=k, sigma=0, which="LM", return_eigenvectors=False)
        except spla.ArpackNoConvergence as exc:
            raise EigenIterationFailed(str(exc)) from exc
    return sorted(float(v) / grid.mass for v in vals)
