"""Discrete p-Dirichlet energy, lumped L^p norms and potentials on a Grid.

The energy of a nodal field u is sum_T |T| |grad u|_T|^p over the P1
elements of the split-square triangulation; L^p norms use the lumped mass
h^d per node.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidField, InvalidInput
from .geometry import Grid

__all__ = [
    "Field", "PowerLaw", "AmplitudeSchedule", "dirichlet_energy_p", "lp_norm_p",
    "energy_gradient", "weighted_energy", "elementary_inequality_constant",
    "element_gradients", "energy_hessian", "kacanov_matrix",
]


def _check_p(p: float):
    if not p > 1:
        raise InvalidInput("p must satisfy p > 1")


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal values on the interior nodes of ``grid``; zero elsewhere."""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_interior,):
            raise InvalidField(f"field needs {self.grid.n_interior} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidField("field contains NaN or inf")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.n_interior))

    @classmethod
    def from_function(cls, grid: Grid, f) -> "Field":
        """Sample ``f`` (taking an (n, d) coordinate array) at the interior nodes."""
        return cls(grid, np.asarray(f(grid.coords), dtype=float))

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, c * self.values)

    __rmul__ = __mul__

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def lattice(self) -> np.ndarray:
        return self.grid.lattice_values(self.values)


@dataclass(frozen=True)
class PowerLaw:
    """V(x) = |x|^q, confining with alpha(R) = R^q."""
    q: float

    def __post_init__(self):
        if not self.q > 0:
            raise InvalidInput("PowerLaw exponent q must be > 0")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.atleast_2d(x), axis=1) ** self.q

    def confinement(self, R: float) -> float:
        return float(R) ** self.q


@dataclass(frozen=True)
class AmplitudeSchedule:
    """Strictly decreasing positive amplitudes eps_0 > eps_1 > ..."""
    values: tuple

    def __post_init__(self):
        v = tuple(float(e) for e in self.values)
        if not v or any(e <= 0 for e in v) or any(b >= a for a, b in zip(v, v[1:])):
            raise InvalidInput("amplitude schedule must be positive and strictly decreasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def geometric(cls, eps0: float, ratio: float, n: int) -> "AmplitudeSchedule":
        if not 0 < ratio < 1:
            raise InvalidInput("geometric ratio must lie in (0, 1)")
        return cls(tuple(eps0 * ratio ** k for k in range(n)))

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


# ------------------------------------------------------------ element kernels

def element_gradients(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Piecewise-constant gradients, shape (n_elements, d)."""
    G = grid.elements[0]
    return np.stack([g @ values for g in G], axis=1)


def _energy(grid: Grid, values: np.ndarray, p: float) -> float:
    _, area, _ = grid.elements
    g = element_gradients(grid, values)
    s = float(np.max(np.abs(g), initial=0.0))
    if s == 0.0:
        return 0.0
    g = g / s  # rescale so squaring cannot underflow or overflow
    return float(area * s ** p * np.sum(np.sum(g * g, axis=1) ** (p / 2)))


def _energy_grad(grid: Grid, values: np.ndarray, p: float) -> np.ndarray:
    G, area, _ = grid.elements
    g = element_gradients(grid, values)
    nrm2 = np.sum(g * g, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(nrm2 > 0, nrm2 ** ((p - 2) / 2), 0.0)
    out = np.zeros_like(values)
    for k, Gk in enumerate(G):
        out += Gk.T @ (p * area * w * g[:, k])
    return out


def energy_hessian(grid: Grid, values: np.ndarray, p: float, reg: float = 0.0) -> sp.csr_matrix:
    """Hessian of the energy, with |g|^2 replaced by |g|^2 + reg^2 in the weights."""
    G, area, _ = grid.elements
    g = element_gradients(grid, values)
    s = np.sum(g * g, axis=1) + reg * reg
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(s > 0, s ** ((p - 2) / 2), 0.0)
        w2 = np.where(s > 0, (p - 2) * s ** ((p - 4) / 2), 0.0)
    d = len(G)
    H = None
    for k in range(d):
        for l in range(d):
            coef = p * area * (w2 * g[:, k] * g[:, l] + (w if k == l else 0.0))
            term = G[k].T @ sp.diags(coef) @ G[l]
            H = term if H is None else H + term
    return sp.csr_matrix(H)


def kacanov_matrix(grid: Grid, values: np.ndarray, p: float, floor: float) -> sp.csr_matrix:
    """Frozen-coefficient operator p sum |T| max(|g|, floor)^(p-2) G^T G (SPD)."""
    G, area, _ = grid.elements
    g = element_gradients(grid, values)
    nrm = np.maximum(np.sqrt(np.sum(g * g, axis=1)), floor)
    D = sp.diags(p * area * nrm ** (p - 2))
    return sp.csr_matrix(sum(Gk.T @ D @ Gk for Gk in G))


# ------------------------------------------------------------ public API

def _values(u: Field) -> np.ndarray:
    if not isinstance(u, Field):
        raise InvalidField("expected a Field")
    if not np.all(np.isfinite(u.values)):
        raise InvalidField("field contains NaN or inf")
    return u.values


def dirichlet_energy_p(u: Field, p: float) -> float:
    _check_p(p)
    return _energy(u.grid, _values(u), p)


def lp_norm_p(u: Field, p: float) -> float:
    """Lumped sum_i h^d |u_i|^p (the p-th power of the norm)."""
    _check_p(p)
    return float(u.grid.mass * np.sum(np.abs(_values(u)) ** p))


def energy_gradient(u: Field, p: float) -> Field:
    _check_p(p)
    return Field(u.grid, _energy_grad(u.grid, _values(u), p))


def potential_values(grid: Grid, V) -> np.ndarray:
    return np.asarray(V(grid.coords), dtype=float)


def weighted_energy(u: Field, V, eps: float, p: float) -> float:
    _check_p(p)
    if not eps >= 0:
        raise InvalidInput("eps must be >= 0")
    vals = _values(u)
    extra = eps * u.grid.mass * np.sum(potential_values(u.grid, V) * np.abs(vals) ** p)
    return _energy(u.grid, vals, p) + float(extra)


def elementary_inequality_constant(p: float) -> float:
    """c_p with ||a+b|^p - |a|^p| <= eps |a|^p + c_p eps^(1-p) |b|^p for 0 < eps < 1."""
    _check_p(p)
    return 1.0 + (2.0 ** (p - 1) * (p - 1)) ** (p - 1)


def stiffness_matrix(grid: Grid) -> sp.csr_matrix:
    """P1 stiffness sum_T |T| G^T G, so that E(u) = u^T K u for p = 2."""
    G, area, _ = grid.elements
    return sp.csr_matrix(area * sum(Gk.T @ Gk for Gk in G))


def random_field(grid: Grid, rng: np.random.Generator, scale: float = 1.0) -> Field:
    return Field(grid, scale * rng.standard_normal(grid.n_interior))

