"""Bounded convex domains and the boundary geometry the barrier needs.

Three shapes are supported: balls (``Disk``, any dimension), axis-aligned
ellipsoids (``Ellipse``, any dimension) and strictly convex polygons
(``Polygon``, plane only).  All point queries accept either a single point of
shape ``(n,)`` or a batch of shape ``(m, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import BoundaryError, DomainMembershipError, GeometryError

TOL = 1e-10


class Membership(IntEnum):
    EXTERIOR = -1
    BOUNDARY = 0
    INTERIOR = 1


def _as_points(x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def _unbatch(values, single):
    return values[0] if single else values


class ConvexDomain:
    """Common interface.  Subclasses implement the geometric primitives."""

    kind: str
    dim: int

    # -- primitives provided by subclasses -------------------------------
    def signed_distance(self, x):
        """Positive inside, zero on the boundary, negative outside."""
        raise NotImplementedError

    def nearest_boundary_point(self, x):
        raise NotImplementedError

    def inward_normal(self, p):
        """Unit inward normal at a boundary point (bisector at corners)."""
        raise NotImplementedError

    def ray_exit(self, x, v):
        """Smallest ``t >= 0`` with ``x + t v`` on the boundary, for x in the closure."""
        raise NotImplementedError

    def diameter(self) -> float:
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    def boundary_points(self, count: int):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    # -- shared behaviour ------------------------------------------------
    def contains(self, x):
        sd = self.signed_distance(x)
        codes = np.where(sd > TOL, Membership.INTERIOR,
                         np.where(sd >= -TOL, Membership.BOUNDARY, Membership.EXTERIOR))
        if np.ndim(codes) == 0:
            return Membership(int(codes))
        return codes.astype(np.int8)

    def distance(self, x):
        """Euclidean distance to the boundary for points of the closed domain."""
        sd = np.asarray(self.signed_distance(x))
        if np.any(sd < -TOL):
            raise DomainMembershipError("point outside the closed domain")
        d = np.maximum(sd, 0.0)
        return float(d) if d.ndim == 0 else d

    def sample_interior(self, rng, count: int):
        lo, hi = self.bounding_box()
        out = []
        have = 0
        while have < count:
            pts = rng.uniform(lo, hi, size=(2 * (count - have) + 16, self.dim))
            pts = pts[self.signed_distance(pts) > TOL]
            out.append(pts)
            have += len(pts)
        return np.concatenate(out)[:count]

    def check_point_dim(self, x):
        if np.shape(x)[-1] != self.dim:
            raise GeometryError(f"expected points of dimension {self.dim}")


@dataclass(frozen=True, eq=False)
class Disk(ConvexDomain):
    center: np.ndarray
    radius: float
    kind = "disk"

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise GeometryError("disk center must be a point of dimension >= 2")
        if not self.radius > 0:
            raise GeometryError("radius must be strictly positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.size

    def signed_distance(self, x):
        pts, single = _as_points(x)
        return _unbatch(self.radius - np.linalg.norm(pts - self.center, axis=1), single)

    def nearest_boundary_point(self, x):
        pts, single = _as_points(x)
        y = pts - self.center
        norm = np.linalg.norm(y, axis=1, keepdims=True)
        fallback = np.zeros(self.dim)
        fallback[-1] = -1.0
        direction = np.where(norm > 0, y / np.where(norm > 0, norm, 1.0), fallback)
        return _unbatch(self.center + self.radius * direction, single)

    def inward_normal(self, p):
        pts, single = _as_points(p)
        y = self.center - pts
        return _unbatch(y / np.linalg.norm(y, axis=1, keepdims=True), single)

    def ray_exit(self, x, v):
        pts, single = _as_points(x)
        v = np.broadcast_to(np.asarray(v, dtype=float), pts.shape)
        y = pts - self.center
        a = np.einsum("ij,ij->i", v, v)
        b = np.einsum("ij,ij->i", y, v)
        c = np.einsum("ij,ij->i", y, y) - self.radius**2
        t = (-b + np.sqrt(np.maximum(b * b - a * c, 0.0))) / a
        return _unbatch(np.maximum(t, 0.0), single)

    def diameter(self):
        return 2.0 * self.radius

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def boundary_points(self, count):
        return self.center + self.radius * _sphere_points(self.dim, count)

    def to_dict(self):
        return {"kind": "disk", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Ellipse(ConvexDomain):
    """Axis-aligned ellipsoid ``sum(((x - center) / semi_axes)**2) <= 1``."""

    center: np.ndarray
    semi_axes: np.ndarray
    kind = "ellipse"

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        a = np.asarray(self.semi_axes, dtype=float)
        if c.ndim != 1 or c.size < 2 or a.shape != c.shape:
            raise GeometryError("center and semi-axes must be matching points of dimension >= 2")
        if np.any(a <= 0):
            raise GeometryError("semi-axes must be strictly positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "semi_axes", a)

    @property
    def dim(self):
        return self.center.size

    def _foot(self, pts):
        # Closest boundary point via the Lagrange parameter t:
        # p_i = a_i^2 y_i / (a_i^2 + t), sum (p_i / a_i)^2 = 1.
        a2 = self.semi_axes**2
        y = pts - self.center
        inside = np.sum((y / self.semi_axes) ** 2, axis=1) <= 1.0
        amin = a2.min()
        lo = np.where(inside, -amin, 0.0)
        hi = np.where(inside, 0.0, np.linalg.norm(y, axis=1) * np.sqrt(a2.max()) + a2.max())

        def excess(t):
            denom = a2 + t[:, None]
            num = self.semi_axes * y
            terms = np.where(num == 0.0, 0.0, num / np.where(denom == 0.0, 1.0, denom))
            return np.sum(terms**2, axis=1) - 1.0

        for _ in range(200):
            mid = 0.5 * (lo + hi)
            above = excess(mid) > 0.0
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        t = 0.5 * (lo + hi)
        with np.errstate(invalid="ignore", divide="ignore"):
            p = a2 * y / (a2 + t[:, None])

        # Degenerate interior case: (near) zero component along the shortest
        # axes.  Inside the evolute the root sits at t = -amin and the foot has
        # a free component there, which the bisection cannot resolve.
        short = np.isclose(a2, amin)
        degenerate = inside & np.all(np.abs(y[:, short]) <= 1e-9 * np.sqrt(amin), axis=1)
        if np.any(degenerate):
            yd = y[degenerate]
            pd = np.zeros_like(yd)
            long = ~short
            pd[:, long] = a2[long] * yd[:, long] / (a2[long] - amin)
            rem = 1.0 - np.sum((pd[:, long] / self.semi_axes[long]) ** 2, axis=1)
            ok = (rem >= 0) | ~np.all(np.isfinite(p[degenerate]), axis=1)
            k = int(np.flatnonzero(short)[0])
            side = np.where(yd[:, k] > 0, 1.0, -1.0)
            pd[:, k] = side * self.semi_axes[k] * np.sqrt(np.maximum(rem, 0.0))
            idx = np.flatnonzero(degenerate)[ok]
            p[idx] = pd[ok]
        # remove the residual bisection error radially
        p = p / np.sqrt(np.sum((p / self.semi_axes) ** 2, axis=1))[:, None]
        return p + self.center

    def signed_distance(self, x):
        pts, single = _as_points(x)
        y = pts - self.center
        inside = np.sum((y / self.semi_axes) ** 2, axis=1) <= 1.0
        d = np.linalg.norm(self._foot(pts) - pts, axis=1)
        return _unbatch(np.where(inside, d, -d), single)

    def nearest_boundary_point(self, x):
        pts, single = _as_points(x)
        return _unbatch(self._foot(pts), single)

    def inward_normal(self, p):
        pts, single = _as_points(p)
        g = -(pts - self.center) / self.semi_axes**2
        return _unbatch(g / np.linalg.norm(g, axis=1, keepdims=True), single)

    def ray_exit(self, x, v):
        pts, single = _as_points(x)
        v = np.broadcast_to(np.asarray(v, dtype=float), pts.shape) / self.semi_axes
        y = (pts - self.center) / self.semi_axes
        a = np.einsum("ij,ij->i", v, v)
        b = np.einsum("ij,ij->i", y, v)
        c = np.einsum("ij,ij->i", y, y) - 1.0
        t = (-b + np.sqrt(np.maximum(b * b - a * c, 0.0))) / a
        return _unbatch(np.maximum(t, 0.0), single)

    def diameter(self):
        return 2.0 * float(self.semi_axes.max())

    def bounding_box(self):
        return self.center - self.semi_axes, self.center + self.semi_axes

    def boundary_points(self, count):
        return self.center + self.semi_axes * _sphere_points(self.dim, count)

    def to_dict(self):
        return {"kind": "ellipse", "center": self.center.tolist(),
                "semi_axes": self.semi_axes.tolist()}


def _turns(v):
    edges = np.roll(v, -1, axis=0) - v
    nxt = np.roll(edges, -1, axis=0)
    return edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]


@dataclass(frozen=True, eq=False)
class Polygon(ConvexDomain):
    """Strictly convex polygon; vertices are stored counterclockwise."""

    vertices: np.ndarray
    kind = "polygon"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError("polygon vertices must be a (k, 2) array")
        if len(v) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        cross = _turns(v)
        if np.all(cross < -TOL):
            v = v[::-1].copy()
            cross = _turns(v)
        if not np.all(cross > TOL):
            raise GeometryError("vertices must be strictly convex (consecutive turns of one sign)")
        edges = np.roll(v, -1, axis=0) - v
        object.__setattr__(self, "vertices", v)
        lengths = np.linalg.norm(edges, axis=1)
        object.__setattr__(self, "_edges", edges)
        object.__setattr__(self, "_lengths", lengths)
        object.__setattr__(self, "_normals", np.stack([-edges[:, 1], edges[:, 0]], axis=1) / lengths[:, None])

    dim = 2

    def _line_distances(self, pts):
        return np.einsum("mkj,kj->mk", pts[:, None, :] - self.vertices[None], self._normals)

    def signed_distance(self, x):
        pts, single = _as_points(x)
        line = self._line_distances(pts)
        inside = np.all(line >= 0.0, axis=1)
        outside_d = np.linalg.norm(self._segment_feet(pts) - pts, axis=1)
        return _unbatch(np.where(inside, line.min(axis=1), -outside_d), single)

    def _segment_feet(self, pts):
        rel = pts[:, None, :] - self.vertices[None]
        s = np.clip(np.einsum("mkj,kj->mk", rel, self._edges) / self._lengths**2, 0.0, 1.0)
        feet = self.vertices[None] + s[..., None] * self._edges[None]
        dist = np.linalg.norm(feet - pts[:, None, :], axis=2)
        best = dist.argmin(axis=1)
        return feet[np.arange(len(pts)), best]

    def nearest_boundary_point(self, x):
        pts, single = _as_points(x)
        return _unbatch(self._segment_feet(pts), single)

    def inward_normal(self, p):
        pts, single = _as_points(p)
        out = np.empty_like(pts)
        for i, q in enumerate(pts):
            near_vertex = np.linalg.norm(self.vertices - q, axis=1) < 1e-9
            if np.any(near_vertex):
                k = int(np.flatnonzero(near_vertex)[0])
                nrm = self._normals[k] + self._normals[k - 1]
            else:
                k = int(np.argmin(np.abs(self._line_distances(q[None])[0])))
                nrm = self._normals[k]
            out[i] = nrm / np.linalg.norm(nrm)
        return _unbatch(out, single)

    def ray_exit(self, x, v):
        pts, single = _as_points(x)
        v = np.broadcast_to(np.asarray(v, dtype=float), pts.shape)
        line = np.maximum(self._line_distances(pts), 0.0)
        rate = v @ self._normals.T
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = np.where(rate < -1e-15, line / -rate, np.inf)
        return _unbatch(t.min(axis=1), single)

    def diameter(self):
        diff = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.linalg.norm(diff, axis=2).max())

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def boundary_points(self, count):
        cum = np.concatenate([[0.0], np.cumsum(self._lengths)])
        s = np.arange(count) * cum[-1] / count
        k = np.searchsorted(cum, s, side="right") - 1
        frac = (s - cum[k]) / self._lengths[k]
        return self.vertices[k] + frac[:, None] * self._edges[k]

    def to_dict(self):
        return {"kind": "polygon", "vertices": self.vertices.tolist()}


def _sphere_points(dim, count):
    """Deterministic, roughly uniform unit vectors; in 2D the first is -e2."""
    if dim == 2:
        theta = -np.pi / 2 + 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if dim == 3:
        k = np.arange(count) + 0.5
        z = -1.0 + 2.0 * k / count
        phi = np.pi * (1 + 5**0.5) * k
        rho = np.sqrt(1 - z**2)
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    g = np.random.default_rng(0).standard_normal((count, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def disk(center, radius) -> Disk:
    return Disk(np.asarray(center, dtype=float), radius)


def ellipse(center, semi_axes) -> Ellipse:
    return Ellipse(np.asarray(center, dtype=float), np.asarray(semi_axes, dtype=float))


def polygon(vertices) -> Polygon:
    return Polygon(np.asarray(vertices, dtype=float))


def unit_square(lo=0.0, hi=1.0) -> Polygon:
    return polygon([[lo, lo], [hi, lo], [hi, hi], [lo, hi]])


def from_dict(desc: dict) -> ConvexDomain:
    kind = desc.get("kind")
    if kind == "disk":
        return disk(desc["center"], desc["radius"])
    if kind == "ellipse":
        return ellipse(desc["center"], desc["semi_axes"])
    if kind == "polygon":
        return polygon(desc["vertices"])
    raise GeometryError(f"unknown domain kind {kind!r}")


# -- operations -----------------------------------------------------------

def distance_to_boundary(domain: ConvexDomain, x):
    """Exact Euclidean distance ``dist(x, boundary)`` for x in the closed domain."""
    return domain.distance(x)


def diameter(domain: ConvexDomain) -> float:
    return domain.diameter()


def contains(domain: ConvexDomain, x):
    return domain.contains(x)


@dataclass(frozen=True)
class BoundaryFrame:
    """Rigid motion ``y = R (x + translation)`` sending ``base_point`` to 0.

    The rotation maps the chosen inward normal at ``base_point`` to ``+e_n``,
    so the image of the domain sits in the closed upper half-space.
    """

    base_point: np.ndarray
    translation: np.ndarray
    rotation: np.ndarray

    def forward(self, x):
        return (np.asarray(x, dtype=float) + self.translation) @ self.rotation.T

    def inverse(self, y):
        return np.asarray(y, dtype=float) @ self.rotation - self.translation

    @property
    def normal(self):
        return self.rotation[-1]


def _rotation_to_last_axis(nu):
    n = nu.size
    if n == 2:
        phi = np.pi / 2 - np.arctan2(nu[1], nu[0])
        c, s = np.cos(phi), np.sin(phi)
        return np.array([[c, -s], [s, c]])
    e = np.zeros(n)
    e[-1] = 1.0
    v = nu - e
    if np.linalg.norm(v) < 1e-14:
        return np.eye(n)
    rot = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    if np.linalg.det(rot) < 0:
        rot[0] = -rot[0]
    return rot


def boundary_frame(domain: ConvexDomain, x0, normal=None) -> BoundaryFrame:
    """Frame placing boundary point ``x0`` at the origin, domain in ``{y_n >= 0}``.

    ``normal`` optionally selects an inward normal from the normal cone at a
    corner; by default the bisector of the adjacent edge normals is used.
    """
    x0 = np.asarray(x0, dtype=float)
    domain.check_point_dim(x0)
    if abs(domain.signed_distance(x0)) > TOL:
        raise BoundaryError("base point is not on the boundary")
    p = domain.nearest_boundary_point(x0)
    if normal is None:
        nu = domain.inward_normal(p)
    else:
        nu = np.asarray(normal, dtype=float)
        nu = nu / np.linalg.norm(nu)
        _check_normal(domain, p, nu)
    rot = _rotation_to_last_axis(nu)
    return BoundaryFrame(base_point=p, translation=-p, rotation=rot)


def _check_normal(domain, p, nu):
    if isinstance(domain, Polygon):
        ok = np.all((domain.vertices - p) @ nu >= -1e-9)
    else:
        ok = np.linalg.norm(nu - domain.inward_normal(p)) < 1e-8
    if not ok:
        raise BoundaryError("normal is not an inward normal of a supporting half-space")
