"""Lattice discretisation of planar convex domains and the wide-stencil operator.

Nodes of the lattice ``lo + h * (i, j)`` are classified as

* interior: inside the domain at distance greater than ``snap * h`` from the boundary,
* boundary-band: not interior, but reached by the stencil of some interior node,
* exterior: everything else (not stored).

Second differences along integer directions ``e`` are scaled by ``|e h|^-2``.
They can be taken in two ways:

* ``dirichlet=None``: stencil neighbours use the values stored on band nodes
  (useful for sampled functions);
* ``dirichlet=g``: a neighbour that is not interior is replaced by the linear
  extrapolation from the centre node through the point where the stencil ray
  leaves the domain, carrying the boundary datum ``g`` there.  This is the
  closure used for the Dirichlet problem; it keeps the scheme monotone.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .domain import ConvexDomain
from .errors import GeometryError, ResolutionError

INTERIOR = 1
BAND = 0
LABELS = {INTERIOR: "interior", BAND: "boundary-band"}


def stencil_directions(width: int):
    """Primitive integer directions and their orthogonal partners.

    Returns ``(vectors, pairs)``; ``pairs[j] = (k, k_perp)`` indexes ``vectors``.
    The axis pair comes first.
    """
    if width not in (1, 2, 3):
        raise ValueError("stencil width must be 1, 2 or 3")
    firsts = []
    for a in range(1, width + 1):
        for b in range(0, width + 1):
            if math.gcd(a, b) == 1:
                firsts.append((a, b))
    firsts.sort(key=lambda ab: (ab[0] ** 2 + ab[1] ** 2, ab))
    vectors, pairs = [], []
    for a, b in firsts:
        vectors.append((a, b))
        vectors.append((-b, a))
        pairs.append((len(vectors) - 2, len(vectors) - 1))
    return np.array(vectors, dtype=int), pairs


def _closure_coefficients(closure, tp, tm):
    """Centre and neighbour weights of the second difference (before ``1/|e h|^2``).

    ``tp, tm`` are the distances to the two neighbours (or boundary crossings)
    in units of the step.  Both rules are monotone: neighbour weights are
    positive and the centre weight is minus their sum.
    """
    if closure == "linear":
        # ghost value u0 + (g - u0)/t on each cut side
        cp, cm = 1.0 / tp, 1.0 / tm
    elif closure == "quadratic":
        cp, cm = 2.0 / (tp * (tp + tm)), 2.0 / (tm * (tp + tm))
    else:
        raise ValueError(f"unknown closure {closure!r}")
    return -(cp + cm), (cp, cm)


@dataclass(eq=False)
class Grid:
    domain: ConvexDomain
    h: float
    width: int
    snap: float
    origin: np.ndarray
    shape: tuple
    index: np.ndarray          # lattice -> active node index, -1 when not stored
    lattice: np.ndarray        # (N, 2) integer lattice coordinates of active nodes
    points: np.ndarray         # (N, 2) coordinates
    kind: np.ndarray           # INTERIOR or BAND per active node
    n_interior: int
    directions: np.ndarray     # (K, 2) integer directions
    pairs: list
    nbr: np.ndarray            # (K, 2, n_interior) neighbour index for sign +1 / -1
    frac: np.ndarray           # (K, 2, n_interior) boundary crossing in units of the step
    cut: np.ndarray            # (K, 2, n_interior, 2) boundary datum location
    projection: np.ndarray     # (n_band, 2) nearest boundary point of band nodes
    band_distance: np.ndarray  # (n_band,) distance of band nodes to the boundary
    closure: str = "linear"    # "linear" extrapolation or "quadratic" (Shortley-Weller)

    @property
    def n_nodes(self):
        return len(self.points)

    @property
    def interior_points(self):
        return self.points[: self.n_interior]

    @property
    def spacing(self):
        """``|e h|`` per direction."""
        return self.h * np.linalg.norm(self.directions, axis=1)

    @cached_property
    def is_cut(self):
        return self.nbr >= self.n_interior

    @cached_property
    def interior_distance(self):
        return self.domain.distance(self.interior_points)

    def describe(self):
        return {"h": self.h, "stencil_width": self.width, "snap": self.snap,
                "interior_nodes": self.n_interior,
                "band_nodes": self.n_nodes - self.n_interior,
                "direction_pairs": len(self.pairs), "closure": self.closure}

    # -- Dirichlet closure as sparse linear maps --------------------------
    @cached_property
    def closure_matrices(self):
        """Per direction ``k``: sparse ``A_k`` and boundary weights so that
        ``Delta_k u = A_k u_int + sum_s w_ks * g(cut_ks)``."""
        m = self.n_interior
        rows = np.arange(m)
        mats, weights = [], []
        for k, hk in enumerate(self.spacing):
            r_list, c_list = [rows], [rows]
            diag, coefs = _closure_coefficients(self.closure, self.frac[k, 0], self.frac[k, 1])
            v_list = [diag]
            w_k = np.zeros((2, m))
            for s in range(2):
                cut = self.is_cut[k, s]
                w_k[s] = np.where(cut, coefs[s], 0.0) / hk**2
                inner = ~cut
                r_list.append(rows[inner])
                c_list.append(self.nbr[k, s, inner])
                v_list.append(coefs[s][inner])
            A = sp.csr_matrix((np.concatenate(v_list) / hk**2,
                               (np.concatenate(r_list), np.concatenate(c_list))), shape=(m, m))
            mats.append(A)
            weights.append(w_k)
        return mats, np.array(weights)

    @cached_property
    def gradient_matrices(self):
        """Sparse ``G_x, G_y`` and boundary weights for the closure gradient.

        Three-point formula on the (possibly shortened) axis stencil; it reduces
        to the centred difference away from the boundary.
        """
        m = self.n_interior
        rows = np.arange(m)
        out, wts = [], []
        for axis in (0, 1):
            k = int(np.flatnonzero((self.directions == np.eye(2, dtype=int)[axis]).all(axis=1))[0])
            tp, tm = self.frac[k, 0] * self.h, self.frac[k, 1] * self.h
            cp = tm**2 / (tp * tm * (tp + tm))
            cm = -tp**2 / (tp * tm * (tp + tm))
            c0 = -(cp + cm)
            r_list, c_list, v_list = [rows], [rows], [c0]
            w = np.zeros((2, m))
            for s, coef in ((0, cp), (1, cm)):
                cut = self.is_cut[k, s]
                w[s] = np.where(cut, coef, 0.0)
                inner = ~cut
                r_list.append(rows[inner])
                c_list.append(self.nbr[k, s, inner])
                v_list.append(coef[inner])
            G = sp.csr_matrix((np.concatenate(v_list), (np.concatenate(r_list), np.concatenate(c_list))),
                              shape=(m, m))
            out.append(G)
            wts.append((k, w))
        return out, wts

    def boundary_values(self, dirichlet):
        """Datum at every cut location, shape ``(K, 2, n_interior)``."""
        if dirichlet is None:
            raise ValueError("no boundary datum given")
        if np.isscalar(dirichlet):
            return np.full(self.frac.shape, float(dirichlet))
        pts = self.cut.reshape(-1, 2)
        return np.asarray(dirichlet(pts), dtype=float).reshape(self.frac.shape)


def build_grid(domain: ConvexDomain, h: float, stencil_width: int = 1, snap: float = 0.1,
               closure: str = "linear") -> Grid:
    """Lattice discretisation with spacing ``h`` and wide stencil of given width."""
    if domain.dim != 2:
        raise GeometryError("grids are only available for planar domains")
    if closure not in ("linear", "quadratic"):
        raise ValueError(f"unknown closure {closure!r}")
    if not 0 < h <= domain.diameter() / 4:
        raise ResolutionError(f"spacing h={h} must satisfy 0 < h <= diameter/4")
    vectors, pairs = stencil_directions(stencil_width)
    lo, hi = domain.bounding_box()
    margin = stencil_width + 1
    counts = np.ceil((hi - lo) / h - 1e-9).astype(int)
    shape = tuple(int(c) + 1 + 2 * margin for c in counts)
    origin = lo - margin * h
    ii, jj = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    lat_all = np.stack([ii.ravel(), jj.ravel()], axis=1)
    pts_all = origin + h * lat_all
    sd = domain.signed_distance(pts_all)
    interior = sd > snap * h
    if not interior.any():
        raise ResolutionError("grid has no interior nodes")

    lat_int = lat_all[interior]
    reached = np.zeros(shape, dtype=bool)
    for v in vectors:
        for sign in (1, -1):
            nb = lat_int + sign * v
            reached[nb[:, 0], nb[:, 1]] = True
    int_grid = interior.reshape(shape)
    band_grid = reached & ~int_grid

    index = np.full(shape, -1, dtype=int)
    n_int = int(int_grid.sum())
    index[int_grid] = np.arange(n_int)
    n_band = int(band_grid.sum())
    index[band_grid] = n_int + np.arange(n_band)
    lattice = np.empty((n_int + n_band, 2), dtype=int)
    lattice[index[int_grid]] = np.argwhere(int_grid)
    lattice[index[band_grid]] = np.argwhere(band_grid)
    points = origin + h * lattice
    kind = np.where(np.arange(len(points)) < n_int, INTERIOR, BAND)

    K = len(vectors)
    nbr = np.empty((K, 2, n_int), dtype=int)
    frac = np.ones((K, 2, n_int))
    cut = np.empty((K, 2, n_int, 2))
    xi = points[:n_int]
    for k, v in enumerate(vectors):
        for s, sign in enumerate((1, -1)):
            nb = lattice[:n_int] + sign * v
            nbr[k, s] = index[nb[:, 0], nb[:, 1]]
            cut[k, s] = points[nbr[k, s]]
            outside = nbr[k, s] >= n_int
            if outside.any():
                step = sign * h * v.astype(float)
                t = domain.ray_exit(xi[outside], step)
                frac[k, s, outside] = t
                cut[k, s, outside] = xi[outside] + t[:, None] * step
    band_pts = points[n_int:]
    projection = domain.nearest_boundary_point(band_pts) if n_band else np.empty((0, 2))
    band_distance = np.abs(domain.signed_distance(band_pts)) if n_band else np.empty(0)
    return Grid(domain=domain, h=float(h), width=stencil_width, snap=snap, origin=origin,
                shape=shape, index=index, lattice=lattice, points=points, kind=kind,
                n_interior=n_int, directions=vectors, pairs=pairs, nbr=nbr, frac=frac, cut=cut,
                projection=projection, band_distance=band_distance, closure=closure)


@dataclass(eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise ValueError("values must cover every interior and band node")

    @classmethod
    def sample(cls, grid: Grid, func):
        return cls(grid, np.asarray(func(grid.points), dtype=float))

    @classmethod
    def from_interior(cls, grid: Grid, interior_values, band=0.0):
        """Interior values plus a band datum (scalar or callable at projections)."""
        vals = np.empty(grid.n_nodes)
        vals[: grid.n_interior] = interior_values
        vals[grid.n_interior:] = band if np.isscalar(band) else band(grid.projection)
        return cls(grid, vals)

    @property
    def interior(self):
        return self.values[: self.grid.n_interior]

    def copy(self):
        return GridFunction(self.grid, self.values.copy())

    def to_csv(self, path_or_buf=None):
        """Columns x1, x2, value, classification."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x1", "x2", "value", "classification"])
        for (x1, x2), v, k in zip(self.grid.points, self.values, self.grid.kind):
            writer.writerow([repr(float(x1)), repr(float(x2)), repr(float(v)), LABELS[int(k)]])
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        with open(path_or_buf, "w") as fh:
            fh.write(text)
        return None

    @classmethod
    def from_csv(cls, grid: Grid, path):
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        pts = np.array([[float(r["x1"]), float(r["x2"])] for r in rows])
        vals = np.array([float(r["value"]) for r in rows])
        lat = np.rint((pts - grid.origin) / grid.h).astype(int)
        if np.any(lat < 0) or np.any(lat >= np.array(grid.shape)):
            raise ValueError("CSV nodes do not belong to the grid")
        idx = grid.index[lat[:, 0], lat[:, 1]]
        if np.any(idx < 0) or len(set(idx.tolist())) != grid.n_nodes:
            raise ValueError("CSV nodes do not match the grid's active nodes")
        out = np.empty(grid.n_nodes)
        out[idx] = vals
        return cls(grid, out)


# -- discrete operators ---------------------------------------------------

def second_differences(grid: Grid, u: GridFunction, dirichlet=None):
    """``Delta_e u`` for every stencil direction, shape ``(K, n_interior)``."""
    vals = u.values
    ui = vals[: grid.n_interior]
    hk2 = grid.spacing[:, None] ** 2
    if dirichlet is None:
        return (vals[grid.nbr[:, 0]] + vals[grid.nbr[:, 1]] - 2 * ui) / hk2
    g = grid.boundary_values(dirichlet)
    v = np.where(grid.is_cut, g, vals[np.minimum(grid.nbr, grid.n_interior - 1)])
    c0, (cp, cm) = _closure_coefficients(grid.closure, grid.frac[:, 0], grid.frac[:, 1])
    return (c0 * ui + cp * v[:, 0] + cm * v[:, 1]) / hk2


def pair_products(grid: Grid, d2):
    a = np.stack([d2[k] for k, _ in grid.pairs])
    b = np.stack([d2[kp] for _, kp in grid.pairs])
    return np.maximum(a, 0.0) * np.maximum(b, 0.0)


def ma_operator(grid: Grid, u: GridFunction, dirichlet=None) -> GridFunction:
    """``min over pairs (e, e_perp) of (Delta_e u)^+ (Delta_e_perp u)^+`` at interior nodes.

    Band entries of the result are zero.
    """
    prod = pair_products(grid, second_differences(grid, u, dirichlet))
    out = np.zeros(grid.n_nodes)
    out[: grid.n_interior] = prod.min(axis=0)
    return GridFunction(grid, out)


def gradient(grid: Grid, u: GridFunction, dirichlet=None):
    """Discrete gradient at interior nodes, shape ``(n_interior, 2)``.

    Centred differences; with a Dirichlet datum the axis stencil is shortened
    to the boundary crossing at nodes next to the band.
    """
    vals = u.values
    if dirichlet is None:
        out = np.empty((grid.n_interior, 2))
        for axis in (0, 1):
            k = int(np.flatnonzero((grid.directions == np.eye(2, dtype=int)[axis]).all(axis=1))[0])
            out[:, axis] = (vals[grid.nbr[k, 0]] - vals[grid.nbr[k, 1]]) / (2 * grid.h)
        return out
    mats, wts = grid.gradient_matrices
    g = grid.boundary_values(dirichlet)
    ui = vals[: grid.n_interior]
    out = np.empty((grid.n_interior, 2))
    for axis in (0, 1):
        k, w = wts[axis]
        out[:, axis] = mats[axis] @ ui + np.sum(w * g[k], axis=0)
    return out


def convexity_defect(grid: Grid, u: GridFunction, dirichlet=None) -> float:
    """``max over interior nodes and directions of (-Delta_e u)^+``."""
    d2 = second_differences(grid, u, dirichlet)
    return float(np.maximum(-d2, 0.0).max())


def hessian_2x2(grid: Grid, u: GridFunction, dirichlet=None):
    """Per-node symmetric matrix from axis and unit-diagonal second differences."""
    d2 = second_differences(grid, u, dirichlet)
    dirs = [tuple(d) for d in grid.directions]
    uxx = d2[dirs.index((1, 0))]
    uyy = d2[dirs.index((0, 1))]
    uxy = (d2[dirs.index((1, 1))] - d2[dirs.index((-1, 1))]) / 2
    return np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -2)
