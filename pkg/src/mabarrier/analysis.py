"""Post-solve diagnostics: boundary decay exponent, interior Hessian and gradient bounds."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .barrier import BarrierParams, build_barrier
from .errors import InsufficientDataError, LevelError
from .grid import Grid, GridFunction, gradient, hessian_2x2
from .rhs import RhsSpec, eval_f
from .solver import SolveConfig, global_bounds, solve

MIN_SAMPLES = 20
NEGLIGIBLE = 1e-14
DET_SLACK = 0.2


@dataclass
class HolderFit:
    exponent: float
    amplitude: float
    residual: float
    band: tuple
    samples: int
    lambda0: float | None = None

    @property
    def passed(self):
        return self.lambda0 is None or self.exponent >= self.lambda0 - 0.05

    def to_dict(self):
        return {"exponent": self.exponent, "amplitude": self.amplitude, "residual": self.residual,
                "band": list(self.band), "samples": self.samples, "lambda0": self.lambda0,
                "passed": self.passed}


def holder_exponent_fit(grid: Grid, u: GridFunction, band=None, mask=None, lambda0=None,
                        depth=None) -> HolderFit:
    """Least-squares slope of ``log|u|`` against ``log d`` over interior nodes in ``band``.

    ``depth`` overrides the distance to the boundary (e.g. the distance to a
    single flat face); ``mask`` restricts the nodes used.
    """
    lo_default, hi_default = 2 * grid.h, grid.domain.diameter() / 8
    lo, hi = band if band is not None else (lo_default, hi_default)
    if not 0 < lo < hi <= hi_default + 1e-12:
        raise ValueError(f"band must satisfy 0 < lo < hi <= diameter/8, got {(lo, hi)}")
    d = grid.interior_distance if depth is None else np.asarray(depth, dtype=float)
    vals = np.abs(u.interior)
    keep = (d >= lo) & (d <= hi) & (vals > NEGLIGIBLE)
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    if keep.sum() < MIN_SAMPLES:
        raise InsufficientDataError(f"only {int(keep.sum())} usable samples in band {(lo, hi)}")
    X, Y = np.log(d[keep]), np.log(vals[keep])
    slope, icept = np.polyfit(X, Y, 1)
    resid = float(np.sqrt(np.mean((Y - (slope * X + icept)) ** 2)))
    return HolderFit(float(slope), float(math.exp(icept)), resid, (float(lo), float(hi)),
                     int(keep.sum()), lambda0)


@dataclass
class InteriorBounds:
    level: float
    nodes: int
    eigen_range: tuple
    det_range: tuple
    f_range: tuple
    gradient_max: float
    distance: float
    R0: float

    @property
    def strictly_convex(self):
        return self.eigen_range[0] > 0

    @property
    def det_pinched(self):
        lo, hi = self.f_range
        return self.det_range[0] >= (1 - DET_SLACK) * lo and self.det_range[1] <= (1 + DET_SLACK) * hi

    @property
    def gradient_bounded(self):
        return self.gradient_max <= self.R0

    @property
    def passed(self):
        return self.strictly_convex and self.det_pinched and self.gradient_bounded

    def to_dict(self):
        return {"region": {"kind": "sublevel", "level": self.level, "nodes": self.nodes,
                           "distance_to_boundary": self.distance},
                "eigen_range": list(self.eigen_range), "det_range": list(self.det_range),
                "f_range": list(self.f_range), "gradient_max": self.gradient_max, "R0": self.R0,
                "verdicts": {"strictly_convex": self.strictly_convex, "det_pinched": self.det_pinched,
                             "gradient_bounded": self.gradient_bounded},
                "passed": self.passed}


def sublevel_mask(grid: Grid, u: GridFunction, t: float):
    """Interior nodes with ``u < t``."""
    return u.interior < t


def interior_bounds(grid: Grid, u: GridFunction, t: float, spec: RhsSpec,
                    params: BarrierParams | None = None) -> InteriorBounds:
    U = u.interior
    if not (U.min() < t < 0):
        raise LevelError(f"level {t} must lie in (min u, 0) = ({U.min()}, 0)")
    mask = sublevel_mask(grid, u, t)
    if not mask.any():
        raise LevelError(f"sublevel set for t={t} has no nodes")
    params = params or build_barrier(grid.domain, spec)
    H = hessian_2x2(grid, u, 0.0)[mask]
    eig = np.linalg.eigvalsh(H)
    det = np.linalg.det(H)
    q = gradient(grid, u, 0.0)[mask]
    x = grid.interior_points[mask]
    f = eval_f(spec, grid.domain, x, U[mask], q)
    dist = float(grid.interior_distance[mask].min())
    lo, _ = global_bounds(params)
    return InteriorBounds(
        level=float(t), nodes=int(mask.sum()),
        eigen_range=(float(eig.min()), float(eig.max())),
        det_range=(float(det.min()), float(det.max())),
        f_range=(float(f.min()), float(f.max())),
        gradient_max=float(np.linalg.norm(q, axis=1).max()),
        distance=dist, R0=float(-lo / dist))


def refinement_study(domain, spec: RhsSpec, config: SolveConfig, hs, exact, solver=None):
    """Max-norm error against ``exact`` at each ``h`` and log2 ratios of successive errors.

    ``solver(domain, spec, config) -> GridFunction`` replaces the default solve.
    """
    rows = []
    for h in hs:
        cfg = SolveConfig(**{**config.to_dict(), "h": h})
        if solver is None:
            u, rep = solve(domain, spec, cfg)
            residual = rep.residual
        else:
            u, residual = solver(domain, spec, cfg), 0.0
        err = float(np.max(np.abs(u.interior - exact(u.grid.interior_points))))
        rows.append({"h": float(h), "error": err, "residual": float(residual), "eoc": None})
    for prev, row in zip(rows, rows[1:]):
        if prev["error"] > 0 and row["error"] > 0:
            row["eoc"] = math.log(prev["error"] / row["error"]) / math.log(prev["h"] / row["h"])
    return rows


def eoc_table_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["h", "error", "eoc", "residual"])
    for r in rows:
        writer.writerow([repr(r["h"]), repr(r["error"]), "" if r["eoc"] is None else repr(r["eoc"]),
                         repr(r["residual"])])
    return buf.getvalue()


def errors_decrease(rows):
    return all(b["error"] < a["error"] for a, b in zip(rows, rows[1:]))
