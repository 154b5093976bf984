"""Domain descriptions and their masked lattice discretizations.

Domains are small frozen dataclasses with a vectorized ``contains`` and a
bounding box.  ``build_grid`` turns a domain and a bounded window into a
:class:`Grid` whose interior nodes carry the unknowns of a P1 space on the
split-square triangulation of the lattice ``h Z^d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Sequence, Union as TUnion

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.spatial import cKDTree
from scipy.special import ellipeinc

from .errors import EmptyGrid, InvalidInput, SegmentCalibrationFailed

__all__ = [
    "StraightLine", "CosBump", "Interval", "Box", "Ball", "SlabWithBall",
    "Waveguide", "Whip", "Union", "Intersection", "DifferenceBall", "Translate",
    "Grid", "indicator", "build_grid", "whip_layout", "whip_translations",
    "waveguide_curvature", "arc_length", "bump_half_length",
]

_INF = math.inf


def _as_points(x, dim: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        if dim == 1 and pts.shape[0] != 1:
            pts = pts[:, None]
        else:
            pts = pts[None, :]
    if pts.shape[-1] != dim:
        raise InvalidInput(f"point dimension {pts.shape[-1]} does not match domain dimension {dim}")
    return pts


# ---------------------------------------------------------------- curves

@dataclass(frozen=True)
class StraightLine:
    """The horizontal axis."""

    def distance(self, pts: np.ndarray) -> np.ndarray:
        return np.abs(pts[:, 1])

    @property
    def max_curvature(self) -> float:
        return 0.0

    def extent(self) -> tuple[float, float]:
        return 0.0, 0.0


@dataclass(frozen=True)
class CosBump:
    """Graph of (1 + cos t)/(n + 1) on (-pi, pi), continued by the axis."""
    n: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise InvalidInput("CosBump index n must be a nonnegative integer")

    @property
    def amplitude(self) -> float:
        return 2.0 / (self.n + 1)

    @property
    def max_curvature(self) -> float:
        # |kappa| peaks at the crest, where it equals 1/(n+1)
        return 1.0 / (self.n + 1)

    def extent(self) -> tuple[float, float]:
        return 0.0, self.amplitude

    def distance(self, pts: np.ndarray) -> np.ndarray:
        x, y = pts[:, 0], pts[:, 1]
        a = 1.0 / (self.n + 1)
        tree, ts = _bump_tree(self.n)
        d, i = tree.query(pts)
        t = ts[i]
        # a few Newton steps on the foot-point equation
        for _ in range(5):
            g, g1, g2 = a * (1 + np.cos(t)), -a * np.sin(t), -a * np.cos(t)
            f = (t - x) + (g - y) * g1
            fp = 1 + g1 * g1 + (g - y) * g2
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(np.abs(fp) > 1e-12, f / fp, 0.0)
            t = np.clip(t - step, -np.pi, np.pi)
        d = np.minimum(d, np.hypot(t - x, a * (1 + np.cos(t)) - y))
        left = np.where(x <= -np.pi, np.abs(y), np.hypot(x + np.pi, y))
        right = np.where(x >= np.pi, np.abs(y), np.hypot(x - np.pi, y))
        return np.minimum(d, np.minimum(left, right))


@lru_cache(maxsize=None)
def _bump_tree(n: int):
    ts = np.linspace(-np.pi, np.pi, 8001)
    return cKDTree(np.c_[ts, (1 + np.cos(ts)) / (n + 1)]), ts


CurveSpec = TUnion[StraightLine, CosBump]


def _ellip_m(n: int) -> float:
    return -1.0 / (n + 1) ** 2


def arc_length(n: int, t) -> np.ndarray:
    """Arc length of the bump graph from its crest (t=0) to parameter t."""
    # s(t) = int_0^t sqrt(1 + sin^2/(n+1)^2) = E(t | -1/(n+1)^2)
    return ellipeinc(np.asarray(t, dtype=float), _ellip_m(n))


def bump_half_length(n: int) -> float:
    """Arc length s0 of the bent part between the crest and either foot."""
    return float(arc_length(n, np.pi))


def _phi(n: int, s: float) -> float:
    if s == 0.0:
        return 0.0
    return brentq(lambda t: float(arc_length(n, t)) - s, -np.pi, np.pi, xtol=1e-13, rtol=1e-15)


def waveguide_curvature(spec: CurveSpec, n: int | None = None, s=0.0):
    """Signed curvature of the curve at arc length ``s`` measured from the crest."""
    s_arr = np.asarray(s, dtype=float)
    if isinstance(spec, StraightLine):
        return np.zeros_like(s_arr) if s_arr.ndim else 0.0
    n = spec.n if n is None else n
    s0 = bump_half_length(n)
    k2 = (n + 1) ** 2

    def one(si):
        if abs(si) >= s0:
            return 0.0
        ph = _phi(n, si)
        return -k2 * math.cos(ph) / (k2 + math.sin(ph) ** 2) ** 1.5

    if s_arr.ndim == 0:
        return one(float(s_arr))
    return np.array([one(float(v)) for v in s_arr.ravel()]).reshape(s_arr.shape)


# ---------------------------------------------------------------- domains

class _Domain:
    dim: int

    def contains(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


@dataclass(frozen=True)
class Interval(_Domain):
    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise InvalidInput("Interval needs a < b")

    @property
    def dim(self) -> int:
        return 1

    def contains(self, pts):
        return (pts[:, 0] > self.a) & (pts[:, 0] < self.b)

    def bbox(self):
        return np.array([self.a]), np.array([self.b])


@dataclass(frozen=True)
class Box(_Domain):
    """Open box; infinite bounds give slabs and half spaces."""
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or len(lo) not in (1, 2):
            raise InvalidInput("Box bounds must have equal length 1 or 2")
        if not all(b > a for a, b in zip(lo, hi)):
            raise InvalidInput("Box needs lo < hi in every coordinate")

    @classmethod
    def centered(cls, width: float, dim: int = 2) -> "Box":
        return cls((-width / 2,) * dim, (width / 2,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def bounded(self) -> bool:
        return all(np.isfinite(self.lo)) and all(np.isfinite(self.hi))

    def contains(self, pts):
        lo, hi = np.array(self.lo), np.array(self.hi)
        return np.all((pts > lo) & (pts < hi), axis=1)

    def bbox(self):
        return np.array(self.lo), np.array(self.hi)


@dataclass(frozen=True)
class Ball(_Domain):
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        object.__setattr__(self, "center", c)
        if len(c) not in (1, 2):
            raise InvalidInput("Ball center must have 1 or 2 coordinates")
        if not self.radius > 0:
            raise InvalidInput("Ball radius must be > 0")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, pts):
        return np.linalg.norm(pts - np.array(self.center), axis=1) < self.radius

    def bbox(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class SlabWithBall(_Domain):
    """Vertical slab (-a, a) x R with a centered disc of radius R attached."""
    slab_halfwidth: float
    ball_radius: float

    def __post_init__(self):
        if not (self.slab_halfwidth > 0 and self.ball_radius > 0):
            raise InvalidInput("SlabWithBall needs slab_halfwidth > 0 and ball_radius > 0")

    @property
    def dim(self) -> int:
        return 2

    def contains(self, pts):
        return (np.abs(pts[:, 0]) < self.slab_halfwidth) | (np.hypot(pts[:, 0], pts[:, 1]) < self.ball_radius)

    def bbox(self):
        w = max(self.slab_halfwidth, self.ball_radius)
        return np.array([-w, -_INF]), np.array([w, _INF])


@dataclass(frozen=True)
class Waveguide(_Domain):
    """Points within ``halfwidth`` of the curve."""
    curve: CurveSpec
    halfwidth: float

    def __post_init__(self):
        if not self.halfwidth > 0:
            raise InvalidInput("Waveguide halfwidth must be > 0")
        if self.halfwidth * self.curve.max_curvature >= 1:
            raise InvalidInput("Waveguide overlaps itself: halfwidth * max|curvature| must be < 1")

    @property
    def dim(self) -> int:
        return 2

    def contains(self, pts):
        return self.curve.distance(pts) < self.halfwidth

    def bbox(self):
        lo, hi = self.curve.extent()
        return np.array([-_INF, lo - self.halfwidth]), np.array([_INF, hi + self.halfwidth])


DEFAULT_WHIP_LENGTH = 10.0


@dataclass(frozen=True)
class Whip(_Domain):
    """Straight half strip followed by ``segments`` bent pieces, then straight again.

    Piece n is the bump waveguide of index n cut to |x| <= L_n and shifted
    by tau_n along the axis.  Without explicit ``lengths`` every piece uses
    DEFAULT_WHIP_LENGTH; use :func:`whip_layout` to calibrate them.
    """
    segments: int
    lengths: tuple | None = None
    halfwidth: float = 0.5

    def __post_init__(self):
        if int(self.segments) != self.segments or self.segments < 1:
            raise InvalidInput("Whip segments must be a positive integer")
        if self.lengths is not None:
            ls = tuple(float(v) for v in self.lengths)
            if len(ls) != self.segments:
                raise InvalidInput("Whip needs one length per segment")
            if not all(v > math.pi for v in ls):
                raise InvalidInput("Whip lengths must exceed pi")
            object.__setattr__(self, "lengths", ls)

    @property
    def dim(self) -> int:
        return 2

    @property
    def piece_lengths(self) -> tuple:
        return self.lengths if self.lengths is not None else (DEFAULT_WHIP_LENGTH,) * self.segments

    @property
    def translations(self) -> list[float]:
        return whip_translations(self.piece_lengths)

    @property
    def end(self) -> float:
        return self.translations[-1] + self.piece_lengths[-1]

    def piece(self, n: int) -> "Translate":
        """Bent piece n as a standalone open domain at its place in the whip."""
        L = self.piece_lengths[n]
        local = Intersection((Waveguide(CosBump(n), self.halfwidth), Box((-L, -_INF), (L, _INF))))
        return Translate(local, (self.translations[n], 0.0))

    def contains(self, pts):
        x, y = pts[:, 0], pts[:, 1]
        out = (np.abs(y) < self.halfwidth) & ((x < 0) | (x > self.end))
        for n, (L, tau) in enumerate(zip(self.piece_lengths, self.translations)):
            sel = np.abs(x - tau) <= L
            if np.any(sel):
                local = np.c_[x[sel] - tau, y[sel]]
                out[sel] |= CosBump(n).distance(local) < self.halfwidth
        return out

    def bbox(self):
        return np.array([-_INF, -self.halfwidth]), np.array([_INF, 2.0 + self.halfwidth])


@dataclass(frozen=True)
class Union(_Domain):
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        _check_parts(self.parts)

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def contains(self, pts):
        out = np.zeros(len(pts), dtype=bool)
        for part in self.parts:
            out |= part.contains(pts)
        return out

    def bbox(self):
        boxes = [part.bbox() for part in self.parts]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)


@dataclass(frozen=True)
class Intersection(_Domain):
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        _check_parts(self.parts)

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def contains(self, pts):
        out = np.ones(len(pts), dtype=bool)
        for part in self.parts:
            out &= part.contains(pts)
        return out

    def bbox(self):
        boxes = [part.bbox() for part in self.parts]
        return np.max([b[0] for b in boxes], axis=0), np.min([b[1] for b in boxes], axis=0)


@dataclass(frozen=True)
class DifferenceBall(_Domain):
    """``inner`` with the closed ball of radius R about the origin removed."""
    inner: _Domain
    R: float

    def __post_init__(self):
        if not self.R >= 0:
            raise InvalidInput("DifferenceBall radius must be >= 0")

    @property
    def dim(self) -> int:
        return self.inner.dim

    def contains(self, pts):
        return self.inner.contains(pts) & (np.linalg.norm(pts, axis=1) > self.R)

    def bbox(self):
        return self.inner.bbox()


@dataclass(frozen=True)
class Translate(_Domain):
    inner: _Domain
    shift: tuple

    def __post_init__(self):
        s = tuple(float(v) for v in np.atleast_1d(self.shift))
        object.__setattr__(self, "shift", s)
        if len(s) != self.inner.dim:
            raise InvalidInput("shift dimension does not match domain")

    @property
    def dim(self) -> int:
        return self.inner.dim

    def contains(self, pts):
        return self.inner.contains(pts - np.array(self.shift))

    def bbox(self):
        lo, hi = self.inner.bbox()
        s = np.array(self.shift)
        return lo + s, hi + s


def _check_parts(parts):
    if not parts:
        raise InvalidInput("set operation needs at least one part")
    if len({p.dim for p in parts}) != 1:
        raise InvalidInput("set operation parts must share a dimension")


DomainSpec = TUnion[Interval, Box, Ball, SlabWithBall, Waveguide, Whip, Union,
                    Intersection, DifferenceBall, Translate]


def indicator(spec: DomainSpec, x) -> np.ndarray | bool:
    """Membership of a point (or an (n, d) array of points) in the open set."""
    scalar = np.ndim(x) <= 1 and not (spec.dim == 1 and np.ndim(x) == 1 and np.size(x) > 1)
    pts = _as_points(x, spec.dim)
    out = spec.contains(pts)
    return bool(out[0]) if scalar else out


# ---------------------------------------------------------------- grids

_STAR = {
    1: np.array([[1], [-1]]),
    2: np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1]]),
}
# pairs of star offsets spanning the six triangles around a node
_TRIANGLES = np.array([
    [[1, 0], [1, 1]], [[1, 1], [0, 1]], [[0, 1], [-1, 0]],
    [[-1, 0], [-1, -1]], [[-1, -1], [0, -1]], [[0, -1], [1, 0]],
])
_PULL = 1.0 - 1e-9


@dataclass(frozen=True, eq=False)
class Grid:
    """Masked lattice: node (i, j) sits at (index_lo + (i, j)) * h."""
    h: float
    index_lo: tuple
    dims: tuple
    interior_mask: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def origin(self) -> np.ndarray:
        return np.array(self.index_lo, dtype=float) * self.h

    @property
    def mass(self) -> float:
        return self.h ** self.dim

    @cached_property
    def node_index(self) -> np.ndarray:
        """Local lattice indices of the interior nodes, shape (n, d)."""
        return np.argwhere(self.interior_mask)

    @cached_property
    def global_index(self) -> np.ndarray:
        return self.node_index + np.array(self.index_lo)

    @cached_property
    def coords(self) -> np.ndarray:
        return self.global_index * self.h

    @property
    def n_interior(self) -> int:
        return int(self.node_index.shape[0])

    @cached_property
    def numbering(self) -> np.ndarray:
        """Lattice array holding the unknown number of each interior node, -1 elsewhere."""
        num = -np.ones(self.dims, dtype=np.int64)
        num[self.interior_mask] = np.arange(self.n_interior)
        return num

    @cached_property
    def elements(self):
        """(gradient operators, element area, element global ids) for all active elements."""
        return _assemble_elements(self)

    def restrict(self, keep: np.ndarray) -> "Grid":
        """Grid with only the interior nodes flagged by ``keep`` (per unknown)."""
        mask = np.zeros(self.dims, dtype=bool)
        idx = self.node_index[np.asarray(keep, dtype=bool)]
        mask[tuple(idx.T)] = True
        mask.flags.writeable = False
        return Grid(self.h, self.index_lo, self.dims, mask)

    def components(self) -> list[np.ndarray]:
        """Boolean selectors (per unknown) of the connected pieces of the mask."""
        from scipy.sparse.csgraph import connected_components
        G = self.elements[0]
        A = sum(abs(g).T @ abs(g) for g in G)
        ncomp, labels = connected_components(sp.csr_matrix(A), directed=False)
        return [labels == c for c in range(ncomp)]

    def lattice_values(self, values: np.ndarray) -> np.ndarray:
        """Scatter per-unknown values into a zero-padded lattice array."""
        full = np.zeros(self.dims)
        full[self.interior_mask] = values
        return full


def _assemble_elements(grid: Grid):
    num = grid.numbering
    h = grid.h
    if grid.dim == 1:
        (nx,) = grid.dims
        a, b = num[:-1], num[1:]
        keep = (a >= 0) | (b >= 0)
        a, b = a[keep], b[keep]
        ids = (np.arange(nx - 1)[keep] + grid.index_lo[0]).astype(np.int64)[:, None]
        G = [_difference_matrix(b, a, h, grid.n_interior)]
        return G, h, ids
    nx, ny = grid.dims
    v00, v10, v11, v01 = num[:-1, :-1], num[1:, :-1], num[1:, 1:], num[:-1, 1:]
    ci, cj = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    Gx, Gy, ids = [], [], []
    # lower triangle (00, 10, 11) and upper triangle (00, 11, 01)
    for t, verts, ex, ey in (
        (0, (v00, v10, v11), (v10, v00), (v11, v10)),
        (1, (v00, v11, v01), (v11, v01), (v01, v00)),
    ):
        keep = (verts[0] >= 0) | (verts[1] >= 0) | (verts[2] >= 0)
        Gx.append((ex[0][keep], ex[1][keep]))
        Gy.append((ey[0][keep], ey[1][keep]))
        ids.append(np.c_[ci[keep] + grid.index_lo[0], cj[keep] + grid.index_lo[1], np.full(keep.sum(), t)])
    n = grid.n_interior
    gx = _difference_matrix(np.concatenate([g[0] for g in Gx]), np.concatenate([g[1] for g in Gx]), h, n)
    gy = _difference_matrix(np.concatenate([g[0] for g in Gy]), np.concatenate([g[1] for g in Gy]), h, n)
    return [gx, gy], h * h / 2, np.concatenate(ids).astype(np.int64)


def _difference_matrix(plus, minus, h, n):
    """Sparse rows (u[plus] - u[minus]) / h, dropping masked (-1) entries."""
    m = len(plus)
    rows = np.r_[np.arange(m), np.arange(m)]
    cols = np.r_[plus, minus]
    vals = np.r_[np.full(m, 1.0 / h), np.full(m, -1.0 / h)]
    ok = cols >= 0
    return sp.csr_matrix((vals[ok], (rows[ok], cols[ok])), shape=(m, n))


def build_grid(spec: DomainSpec, h: float, window: Box) -> Grid:
    """Discretize ``spec`` intersected with the open ``window``.

    A lattice node is interior when it lies in the domain and, if any of its
    stencil neighbours does not, when the points just short of those
    neighbours and the centroids of the adjacent triangles all do.
    """
    if not h > 0:
        raise InvalidInput("grid spacing h must be > 0")
    if not isinstance(window, Box) or not window.bounded:
        raise InvalidInput("window must be a bounded Box")
    d = spec.dim
    if window.dim != d:
        raise InvalidInput("window dimension does not match domain")
    blo, bhi = spec.bbox()
    lo = np.maximum(np.array(window.lo), blo)
    hi = np.minimum(np.array(window.hi), bhi)
    if np.any(hi <= lo):
        raise EmptyGrid("domain does not meet the window")
    ilo = np.floor(lo / h - 1e-9).astype(int) - 1
    ihi = np.ceil(hi / h + 1e-9).astype(int) + 1
    dims = tuple(int(v) for v in ihi - ilo + 1)

    axes = [(ilo[k] + np.arange(dims[k])) * h for k in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)

    def inside(q):
        return spec.contains(q) & window.contains(q)

    node_in = inside(pts).reshape(dims)
    border = np.zeros(dims, dtype=bool)
    for k in range(d):
        sl = [slice(None)] * d
        sl[k] = 0
        border[tuple(sl)] = True
        sl[k] = -1
        border[tuple(sl)] = True
    cand = node_in & ~border

    star = _STAR[d]
    all_nb = cand.copy()
    for off in star:
        shifted = np.zeros(dims, dtype=bool)
        src = tuple(slice(max(o, 0), dims[k] + min(o, 0)) for k, o in enumerate(off))
        dst = tuple(slice(max(-o, 0), dims[k] + min(-o, 0)) for k, o in enumerate(off))
        shifted[dst] = node_in[src]
        all_nb &= shifted

    mask = all_nb.copy()
    edge = np.argwhere(cand & ~all_nb)
    if len(edge):
        base = pts.reshape(dims + (d,))[tuple(edge.T)]
        ok = np.ones(len(edge), dtype=bool)
        for off in star:
            ok &= inside(base + _PULL * h * off)
        if d == 2:
            for a, b in _TRIANGLES:
                ok &= inside(base + h * (a + b) / 3.0)
        mask[tuple(edge[ok].T)] = True

    if not mask.any():
        raise EmptyGrid("no interior nodes at this resolution")
    mask.flags.writeable = False
    return Grid(float(h), tuple(int(v) for v in ilo), dims, mask)


# ---------------------------------------------------------------- whip

def whip_translations(lengths: Sequence[float]) -> list[float]:
    """Shifts tau_0 = L_0, tau_n = 2 (L_0 + ... + L_{n-1}) + L_n."""
    taus, acc = [], 0.0
    for L in lengths:
        taus.append(2 * acc + L)
        acc += L
    return taus


def _piece_grid(n: int, L: float, h: float, halfwidth: float = 0.5) -> Grid:
    local = Intersection((Waveguide(CosBump(n), halfwidth), Box((-L, -_INF), (L, _INF))))
    amp = 2.0 / (n + 1)
    window = Box((-L, -halfwidth - 2 * h), (L, amp + halfwidth + 2 * h))
    return build_grid(local, h, window)


@lru_cache(maxsize=256)
def _piece_level(n: int, L: float, p: float, h: float, opts) -> float:
    # pieces do not depend on how many segments follow, so calibrations share them
    from .eigensolver import solve_ground_state

    return solve_ground_state(_piece_grid(n, L, h), p, opts).lam


def whip_layout(n_segments: int, p: float, h: float, margin: float = 0.10,
                opts=None, max_length: float = 24.0) -> list[tuple[float, float, float]]:
    """Calibrate the whip piece lengths on the lattice of spacing ``h``.

    For each piece the smallest lattice length L > pi is sought with
    discrete lambda_1 of the piece below pi_p(p, h)^p * (1 - margin).
    Returns (L_n, tau_n, amplitude_n) triples.
    """
    from .eigensolver import SolverOptions, solve_ground_state
    from .spectral import pi_p

    if int(n_segments) != n_segments or n_segments < 1:
        raise InvalidInput("n_segments must be a positive integer")
    if not p > 1:
        raise InvalidInput("p must satisfy p > 1")
    if not h > 0:
        raise InvalidInput("h must be > 0")
    if not 0 <= margin < 1:
        raise InvalidInput("margin must lie in [0, 1)")
    opts = opts or SolverOptions()
    target = pi_p(p, h) ** p * (1 - margin)

    def lam(n, L):
        return _piece_level(n, L, p, h, opts)

    def snap(L):
        return math.ceil(L / h - 1e-9) * h

    lengths = []
    for n in range(n_segments):
        lo = snap(math.pi + h)
        L = lo
        while lam(n, L) >= target:
            lo = L
            L = snap(2 * L)
            if L > max_length:
                if lam(n, snap(max_length)) < target:
                    L = snap(max_length)
                    break
                raise SegmentCalibrationFailed(
                    f"piece {n}: discrete lambda_1 stays above {target:.6g} up to length {max_length}; "
                    "the lattice is too coarse or the margin too large")
        # bisection on the lattice between a failing and a passing length
        good = L
        while round((good - lo) / h) > 1:
            mid = snap((good + lo) / 2)
            if lam(n, mid) < target:
                good = mid
            else:
                lo = mid
        lengths.append(good)
    taus = whip_translations(lengths)
    return [(L, t, 2.0 / (n + 1)) for n, (L, t) in enumerate(zip(lengths, taus))]
