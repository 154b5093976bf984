"""Thresholds at infinity, decay constants and gap certificates."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import bisect

from .eigensolver import SolverOptions, piece_ground_states, solve_ground_state
from .energy import Field, element_gradients, elementary_inequality_constant
from .errors import EmptyGrid, GapViolation, InsufficientDecayData, InvalidInput
from .geometry import (
    Ball, Box, DifferenceBall, Intersection, Interval, SlabWithBall, StraightLine,
    Waveguide, Whip, build_grid, whip_layout,
)

__all__ = [
    "h_function", "solve_h_inverse", "DecayModel", "DecayFit", "theoretical_decay",
    "EpEstimate", "estimate_Ep", "estimate_r0", "fit_decay", "radial_profile",
    "check_caccioppoli", "gradient_decay_profile", "GapReport", "gap_certificate",
    "pi_p", "massive_core_radius", "disjoint_pieces", "default_layout",
]

APPLIES, NOT_APPLIES, INCONCLUSIVE = "APPLIES", "NOT_APPLIES", "INCONCLUSIVE"


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PLAP_THREADS", "1")))
    except ValueError:
        return 1


# ------------------------------------------------------------ h and its inverse

def _t_max(p: float) -> float:
    return min(1.0, 1.0 / (p - 1))


def h_function(t: float, p: float) -> float:
    """(1 - t)/(1 + t) * (1 - (p - 1) t), decreasing from 1 to 0 on [0, t_max]."""
    if not p > 1:
        raise InvalidInput("p must satisfy p > 1")
    if not 0 <= t <= _t_max(p) * (1 + 1e-15):
        raise InvalidInput(f"t = {t} outside [0, {_t_max(p)}]")
    return (1 - t) / (1 + t) * (1 - (p - 1) * t)


def solve_h_inverse(target: float, p: float) -> float:
    if not 0 < target < 1:
        raise InvalidInput("target must lie in (0, 1)")
    if not p > 1:
        raise InvalidInput("p must satisfy p > 1")
    tm = _t_max(p)
    return bisect(lambda t: h_function(t, p) - target, 0.0, tm, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                  maxiter=400)


# ------------------------------------------------------------ decay model

@dataclass(frozen=True)
class DecayFit:
    alpha_fit: float
    C_fit: float
    fit_range: tuple
    n_bins: int


@dataclass(frozen=True)
class DecayModel:
    lam: float
    Ep: float
    p: float
    eps_lambda: float
    C4: float
    alpha_theory: float
    r0: float
    C1: float
    alpha_fit: float = math.nan
    C_fit: float = math.nan
    fit_range: tuple = (math.nan, math.nan)

    @property
    def gradient_prefactor(self) -> float:
        p = self.p
        return (2 ** p * (p - 1) ** (p - 1) + 2 * self.lam) ** (1 / p) * self.C1

    def with_fit(self, fit: DecayFit) -> "DecayModel":
        return replace(self, alpha_fit=fit.alpha_fit, C_fit=fit.C_fit, fit_range=fit.fit_range)


def theoretical_decay(lam: float, Ep: float, p: float, r0: float = 0.0) -> DecayModel:
    if not p > 1:
        raise InvalidInput("p must satisfy p > 1")
    if not (lam > 0 and math.isfinite(Ep) and r0 >= 0):
        raise InvalidInput("need lambda > 0, finite Ep and r0 >= 0")
    if lam >= Ep:
        raise GapViolation(f"lambda = {lam} is not below Ep = {Ep}")
    eps = solve_h_inverse(0.5 * (1 + lam / Ep), p)
    cp = elementary_inequality_constant(p)
    C4 = 2 / (Ep - lam) * (eps ** (1 - p) * (1 + (1 - (p - 1) * eps) / (1 + eps) * cp) + lam)
    alpha = math.log1p(1 / C4) / p
    C1 = (1 + 1 / C4) ** ((r0 + 1) / p)
    return DecayModel(lam, Ep, p, eps, C4, alpha, r0, C1)


# ------------------------------------------------------------ pi_p

@lru_cache(maxsize=None)
def pi_p(p: float, h: float = 2.0 ** -10) -> float:
    """lambda_1(-1/2, 1/2)^(1/p), Richardson-extrapolated from spacings h and h/2."""
    if not p > 1:
        raise InvalidInput("p must satisfy p > 1")
    opts = SolverOptions()
    dom, win = Interval(-0.5, 0.5), Box((-1.0,), (1.0,))
    l1 = solve_ground_state(build_grid(dom, h, win), p, opts).lam
    l2 = solve_ground_state(build_grid(dom, h / 2, win), p, opts).lam
    return ((4 * l2 - l1) / 3) ** (1 / p)


# ------------------------------------------------------------ Ep tables

@dataclass(frozen=True)
class EpEstimate:
    table: list
    extrapolated: float
    monotone_ok: bool

    def rows(self):
        return [("R", "window", "lambda_ext")] + [tuple(r) for r in self.table]


def _exterior_lambda(spec, p, R, W, h, opts):
    window = Box.centered(W, spec.dim)
    try:
        grid = build_grid(DifferenceBall(spec, R), h, window)
    except EmptyGrid:
        return math.inf
    return solve_ground_state(grid, p, opts).lam


def estimate_Ep(spec, p: float, R_list: Sequence[float], window_list: Sequence[float], h: float,
                opts: SolverOptions | None = None, rtol: float = 1e-8) -> EpEstimate:
    """Table of lambda_1 of (spec cut to the centered box of side W) minus the closed ball B_R."""
    R_list, window_list = [float(r) for r in R_list], [float(w) for w in window_list]
    if not R_list or any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise InvalidInput("R_list must be nonempty and increasing")
    if not window_list or min(window_list) / 2 <= max(R_list):
        raise InvalidInput("every window half-width must exceed every R")
    opts = opts or SolverOptions()
    cells = [(R, W) for W in sorted(window_list) for R in R_list]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        lams = list(pool.map(lambda c: _exterior_lambda(spec, p, c[0], c[1], h, opts), cells))
    if all(math.isinf(v) for v in lams):
        # distinguish a bounded domain from one that misses the windows
        build_grid(spec, h, Box.centered(max(window_list), spec.dim))
    table = [(R, W, lam) for (R, W), lam in zip(cells, lams)]
    ok = True
    for W in window_list:
        col = [lam for R, w, lam in table if w == W]
        ok &= all(b >= a * (1 - rtol) for a, b in zip(col, col[1:]))
    for R in R_list:
        row = [lam for r, W, lam in table if r == R]
        ok &= all(b <= a * (1 + rtol) or math.isinf(a) for a, b in zip(row, row[1:]))
    return EpEstimate(table, table[-1][2], bool(ok))


def estimate_r0(ep: EpEstimate, eps_lambda: float) -> float:
    """Smallest tabulated R whose exterior level reaches (1 - eps) Ep."""
    W = max(w for _, w, _ in ep.table)
    for R, w, lam in ep.table:
        if w == W and lam >= (1 - eps_lambda) * ep.extrapolated:
            return R
    return max(R for R, _, _ in ep.table)


# ------------------------------------------------------------ decay fits

def radial_profile(u: Field, bin_width: float | None = None):
    """Per radial bin: (radius of the maximizing node, max |u|)."""
    grid = u.grid
    dr = bin_width or 2 * grid.h
    r = np.linalg.norm(grid.coords, axis=1)
    a = np.abs(u.values)
    bins = np.floor(r / dr).astype(int)
    order = np.lexsort((-a, bins))
    first = np.r_[True, bins[order][1:] != bins[order][:-1]]
    pick = order[first]
    return r[pick], a[pick]


def fit_decay(u: Field, floor: float = 1e-12, r_min: float | None = None,
              r_max: float | None = None, bin_width: float | None = None) -> DecayFit:
    """Least-squares fit log max|u| ~ log C - alpha r on the radial profile."""
    if not floor > 0:
        raise InvalidInput("floor must be > 0")
    r, M = radial_profile(u, bin_width)
    if len(M) == 0 or M.max() <= floor:
        raise InsufficientDecayData("field is below the floor everywhere")
    lo = r[np.argmax(M)] if r_min is None else r_min
    hi = np.inf if r_max is None else r_max
    sel = (M > floor) & (r >= lo) & (r <= hi)
    if sel.sum() < 4:
        raise InsufficientDecayData(f"only {int(sel.sum())} usable bins (need 4)")
    slope, icpt = np.polyfit(r[sel], np.log(M[sel]), 1)
    return DecayFit(float(-slope), float(np.exp(icpt)), (float(r[sel].min()), float(r[sel].max())),
                    int(sel.sum()))


# ------------------------------------------------------------ Caccioppoli and gradient tails

def _vertex_values(grid, values, func=None):
    """Values at element vertices, shape (n_el, d + 1): nodal field or f(coords)."""
    ids = grid.elements[2]
    if grid.dim == 1:
        verts = np.stack([ids[:, :1], ids[:, :1] + 1], axis=1)
    else:
        ci, cj, t = ids[:, 0], ids[:, 1], ids[:, 2]
        v1 = np.c_[ci + 1, cj + (t == 1)]
        v2 = np.c_[ci + (t == 0), cj + 1]
        verts = np.stack([np.c_[ci, cj], v1, v2], axis=1)
    if func is not None:
        return func(verts * grid.h), verts
    local = verts - np.array(grid.index_lo)
    num = grid.numbering[tuple(np.moveaxis(local, -1, 0))]
    vals = np.where(num >= 0, values[np.maximum(num, 0)], 0.0)
    return vals, verts


def _vertex_gradient(grid, vv):
    """Element gradient of P1 data given in the vertex order of _vertex_values."""
    h = grid.h
    if grid.dim == 1:
        return ((vv[:, 1] - vv[:, 0]) / h)[:, None]
    t = grid.elements[2][:, 2]
    # t = 0: (00, 10, 11); t = 1: (00, 11, 01)
    gx = np.where(t == 0, vv[:, 1] - vv[:, 0], vv[:, 1] - vv[:, 2]) / h
    gy = np.where(t == 0, vv[:, 2] - vv[:, 1], vv[:, 2] - vv[:, 0]) / h
    return np.c_[gx, gy]


def _cutoff(R):
    return lambda x: np.clip(np.linalg.norm(x, axis=-1) - R, 0.0, 1.0)


def caccioppoli_sides(u: Field, lam: float, R: float, delta: float, p: float):
    grid = u.grid
    _, area, _ = grid.elements
    v = np.abs(u.values)
    eta_v, _ = _vertex_values(grid, None, _cutoff(R))
    v_v, _ = _vertex_values(grid, v)
    gv = element_gradients(grid, v)
    geta = _vertex_gradient(grid, eta_v)
    gv_p = np.sum(gv * gv, axis=1) ** (p / 2)
    geta_p = np.sum(geta * geta, axis=1) ** (p / 2)
    eta_n = _cutoff(R)(grid.coords)
    lhs = (1 - (p - 1) * delta) * area * np.sum(gv_p * np.mean(eta_v ** p, axis=1))
    rhs = (delta ** (1 - p) * area * np.sum(geta_p * np.mean(v_v ** p, axis=1))
           + lam * grid.mass * np.sum(v ** p * eta_n ** p))
    return float(lhs), float(rhs)


def check_caccioppoli(u: Field, lam: float, R: float, delta: float, p: float) -> bool:
    if not 0 < delta < 1 / (p - 1):
        raise InvalidInput("delta must lie in (0, 1/(p-1))")
    lhs, rhs = caccioppoli_sides(u, lam, R, delta, p)
    return lhs <= rhs * (1 + 1e-8)


def gradient_decay_profile(u: Field, lam: float, p: float, R_list: Sequence[float],
                           model: DecayModel | None = None) -> list[tuple[float, float, float]]:
    """(R, ||grad u||_p outside B_{R+1}, envelope M exp(-alpha R)) per R."""
    grid = u.grid
    _, area, _ = grid.elements
    g = element_gradients(grid, u.values)
    dens = area * np.sum(g * g, axis=1) ** (p / 2)
    vv, verts = _vertex_values(grid, u.values)
    centroid = np.linalg.norm(verts.mean(axis=1) * grid.h, axis=1)
    out = []
    for R in R_list:
        tail = float(np.sum(dens[centroid > R + 1])) ** (1 / p)
        env = model.gradient_prefactor * math.exp(-model.alpha_theory * R) if model else math.nan
        out.append((float(R), tail, env))
    return out


# ------------------------------------------------------------ gap certificates

@dataclass
class GapReport:
    verdict: str
    k: int
    upper_bound: float
    ep_estimate: float
    safety: float
    piece_lambdas: list = field(default_factory=list)
    escape_fraction: float = math.nan
    ep_table: list = field(default_factory=list)
    monotone_ok: bool = True
    notes: str = ""

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict, "k": self.k, "upper_bound": self.upper_bound,
            "ep_estimate": self.ep_estimate, "safety": self.safety,
            "threshold": (1 - self.safety) * self.ep_estimate,
            "piece_lambdas": self.piece_lambdas, "escape_fraction": self.escape_fraction,
            "ep_table": [list(r) for r in self.ep_table], "monotone_ok": self.monotone_ok,
            "notes": self.notes,
        }


def _core_radius(spec) -> float:
    if isinstance(spec, SlabWithBall):
        return spec.ball_radius
    if isinstance(spec, Whip):
        return spec.end
    if isinstance(spec, Waveguide):
        return 0.0 if isinstance(spec.curve, StraightLine) else math.hypot(math.pi, spec.curve.amplitude)
    lo, hi = spec.bbox()
    ext = np.maximum(np.abs(lo), np.abs(hi))
    return float(np.linalg.norm(np.where(np.isfinite(ext), ext, 0.0)))


def default_layout(spec, h: float):
    """(ground-state window, R_list, window_list) suited to the domain."""
    rc = _core_radius(spec)
    R_list = [rc + 1, rc + 2, rc + 3]
    W = 2 * (rc + 3 + 10)
    if isinstance(spec, Whip):
        gs = Box((-10.0, -spec.halfwidth - 1), (spec.end + 10.0, 2.0 + spec.halfwidth + 1))
    elif spec.dim == 1:
        lo, hi = spec.bbox()
        gs = Box(tuple(np.maximum(lo, -W / 2) - 1), tuple(np.minimum(hi, W / 2) + 1))
    else:
        lo, hi = spec.bbox()
        half = rc + 8
        gs = Box(tuple(np.maximum(lo - 1, -half)), tuple(np.minimum(hi + 1, half)))
    return gs, R_list, [W]


def _snap(x, h):
    return round(x / h) * h


def disjoint_pieces(spec, k: int, h: float):
    """k pairwise disjoint subdomains (and their windows) of a bounded core of ``spec``."""
    if isinstance(spec, Whip):
        if k > spec.segments:
            raise InvalidInput(f"whip has only {spec.segments} bent pieces")
        out = []
        for n in range(k):
            L, tau = spec.piece_lengths[n], spec.translations[n]
            win = Box((tau - L, -spec.halfwidth - 2 * h), (tau + L, 2.0 / (n + 1) + spec.halfwidth + 2 * h))
            out.append((spec.piece(n), win))
        return out
    if isinstance(spec, (Ball, SlabWithBall)) and spec.dim == 2:
        ball = spec if isinstance(spec, Ball) else Ball((0.0, 0.0), spec.ball_radius)
        c, R = np.array(ball.center), ball.radius
        cuts = [_snap(c[0] - R + 2 * R * i / k, h) for i in range(k + 1)]
        cuts[0], cuts[-1] = c[0] - R - h, c[0] + R + h
        return [(Intersection((ball, Box((a, -math.inf), (b, math.inf)))),
                 Box((a, c[1] - R - h), (b, c[1] + R + h))) for a, b in zip(cuts, cuts[1:])]
    if isinstance(spec, (Interval, Box)) and all(np.isfinite(spec.bbox()[0])) and all(np.isfinite(spec.bbox()[1])):
        lo, hi = spec.bbox()
        cuts = [_snap(lo[0] + (hi[0] - lo[0]) * i / k, h) for i in range(k + 1)]
        cuts[0], cuts[-1] = lo[0], hi[0]
        out = []
        for a, b in zip(cuts, cuts[1:]):
            sub = Interval(a, b) if isinstance(spec, Interval) else Box((a,) + tuple(lo[1:]), (b,) + tuple(hi[1:]))
            win = Box(tuple(np.r_[a, lo[1:]] - h), tuple(np.r_[b, hi[1:]] + h))
            out.append((sub, win))
        return out
    raise InvalidInput(f"no disjoint-piece construction for {type(spec).__name__}")


def _calibrated(spec, p, h, margin, opts):
    if isinstance(spec, Whip) and spec.lengths is None:
        layout = whip_layout(spec.segments, p, h, margin, opts)
        return Whip(spec.segments, tuple(L for L, _, _ in layout), spec.halfwidth)
    return spec


def gap_certificate(spec, k: int, p: float, h: float, opts: SolverOptions | None = None, *,
                    safety: float = 0.05, margin: float = 0.10, window: Box | None = None,
                    R_list: Sequence[float] | None = None, window_list: Sequence[float] | None = None,
                    escape_threshold: float = 0.5) -> GapReport:
    """Compare an upper bound for the k-th level with the estimated threshold at infinity.

    APPLIES when bound < (1 - safety) * Ep estimate.  For k = 1 the verdict
    is NOT_APPLIES when the minimizer on the truncation puts at least
    ``escape_threshold`` of its L^p mass outside the smallest tabulated
    ball (the minimizing sequence runs off to infinity).  Otherwise the
    result is INCONCLUSIVE.
    """
    if int(k) != k or k < 1:
        raise InvalidInput("k must be a positive integer")
    if not 0 <= safety < 1:
        raise InvalidInput("safety must lie in [0, 1)")
    opts = opts or SolverOptions()
    spec = _calibrated(spec, p, h, margin, opts)
    gs_win, R_def, W_def = default_layout(spec, h)
    window = window or gs_win
    R_list = list(R_list or R_def)
    window_list = list(window_list or W_def)

    escape = math.nan
    if k == 1:
        res = solve_ground_state(build_grid(spec, h, window), p, opts)
        ub, lams = res.lam, [res.lam]
        r = np.linalg.norm(res.u.grid.coords, axis=1)
        mass = np.abs(res.u.values) ** p
        escape = float(mass[r > R_list[0]].sum() / mass.sum())
    else:
        grids = [build_grid(s, h, w) for s, w in disjoint_pieces(spec, k, h)]
        lams = [r.lam for r in piece_ground_states(grids, p, opts)]
        ub = max(lams)
    ep = estimate_Ep(spec, p, R_list, window_list, h, opts)
    Ep = ep.extrapolated
    if ub < (1 - safety) * Ep:
        verdict = APPLIES
    elif k == 1 and escape >= escape_threshold:
        verdict = NOT_APPLIES
    else:
        verdict = INCONCLUSIVE
    return GapReport(verdict, int(k), float(ub), float(Ep), safety, [float(x) for x in lams], escape,
                     ep.table, ep.monotone_ok)


def massive_core_radius(p: float, k: int = 1, h: float = 1 / 64, opts: SolverOptions | None = None) -> float:
    """Radius above which a ball attached to a unit-width slab certifies k levels."""
    unit = Ball((0.0, 0.0), 1.0)
    if k == 1:
        lam = solve_ground_state(build_grid(unit, h, Box.centered(2.5)), p, opts).lam
    else:
        grids = [build_grid(s, h, w) for s, w in disjoint_pieces(unit, k, h)]
        lam = max(r.lam for r in piece_ground_states(grids, p, opts))
    return lam ** (1 / p) / pi_p(p)
