"""Discrete Dirichlet problem ``MA_h[u] = f_h(x, u, grad_h u)``, ``u = 0`` on the boundary.

The unknowns are the interior node values.  The residual is taken in n-th
root form, ``MA_h[u]^(1/n) - f_h^(1/n)``, which is what both the explicit
(Euler) map and the Newton iteration drive to zero.  Singular right-hand
sides are handled by continuation in a floor ``zeta`` on ``|z|``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .barrier import BarrierParams, build_barrier, perron_lower_envelope
from .domain import ConvexDomain, disk
from .errors import ConfigError, DivergenceError, GeometryError
from .grid import Grid, GridFunction, build_grid, convexity_defect, gradient, ma_operator, second_differences
from .rhs import RhsSpec, check_structure, eval_f

log = logging.getLogger(__name__)

NONSINGULAR_FLOOR = 1e-12
STRICT_MARGIN = 1e-10


def regularized_rhs(spec: RhsSpec, domain: ConvexDomain, x, z, q, zeta):
    """``f`` evaluated with ``z`` replaced by ``min(z, -zeta)``."""
    if not zeta > 0:
        raise ValueError("zeta must be positive")
    return eval_f(spec, domain, x, np.minimum(z, -zeta), q)


@dataclass
class SolveConfig:
    h: float = 1 / 32
    stencil_width: int = 2
    scheme: str = "newton-after-euler"
    dt: float | None = None
    tolerance: float = 1e-8
    max_iterations: int = 20000
    newton_iterations: int = 60
    newton_switch: float | None = None  # default 1e3 * tolerance
    euler_warmup: int = 200
    zeta0: float = 1.0
    zeta_min: float | None = None       # default h**2
    boundary_points: int = 16
    snap: float = 0.1
    closure: str = "linear"
    divergence_window: int = 100
    negativity_center: tuple | None = None
    negativity_radius: float | None = None

    def __post_init__(self):
        if self.scheme not in ("euler", "newton-after-euler"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not self.h > 0 or not self.tolerance > 0:
            raise ConfigError("h and tolerance must be positive")
        if self.dt is not None and not self.dt >= 0:
            raise ConfigError("dt must be non-negative")
        if self.max_iterations < 1 or self.boundary_points < 1:
            raise ConfigError("max_iterations and boundary_points must be >= 1")
        if self.stencil_width not in (1, 2, 3):
            raise ConfigError("stencil width must be 1, 2 or 3")
        if self.closure not in ("linear", "quadratic"):
            raise ConfigError(f"unknown closure {self.closure!r}")
        if not 0 < self.zeta0:
            raise ConfigError("zeta0 must be positive")

    @property
    def switch(self):
        return 1e3 * self.tolerance if self.newton_switch is None else self.newton_switch

    @property
    def floor(self):
        return self.h**2 if self.zeta_min is None else self.zeta_min

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass
class SolveReport:
    stages: list = field(default_factory=list)
    residual: float = float("inf")
    converged: bool = False
    flags: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    dt: float | None = None
    wall_time: float = 0.0

    @property
    def iterations(self):
        return [s["euler_iterations"] + s["newton_iterations"] for s in self.stages]

    @property
    def passed(self):
        return self.converged and all(self.flags.values())

    def to_dict(self, timing=False):
        out = {"converged": self.converged, "residual": self.residual, "stages": self.stages,
               "flags": self.flags, "details": self.details, "grid": self.grid, "dt": self.dt,
               "passed": self.passed}
        if timing:
            out["wall_time"] = self.wall_time
        return out


class DiscreteProblem:
    """Residual and Jacobian of the closure scheme on a fixed grid."""

    def __init__(self, grid: Grid, spec: RhsSpec, zeta: float):
        if spec.n != 2:
            raise ConfigError("the lattice solver is planar; spec dimension must be 2")
        self.grid = grid
        self.spec = spec
        self.zeta = zeta
        self.mats, _ = grid.closure_matrices
        self.x = grid.interior_points
        self.root = 1.0 / spec.n
        self._pa = np.array([k for k, _ in grid.pairs])
        self._pb = np.array([kp for _, kp in grid.pairs])

    def with_zeta(self, zeta):
        return DiscreteProblem(self.grid, self.spec, zeta)

    def second_differences(self, U):
        return np.stack([A @ U for A in self.mats])

    def grad(self, U):
        if not self.spec.depends_on_q:
            return np.zeros((len(U), 2))
        (gx, gy), _ = self.grid.gradient_matrices
        return np.stack([gx @ U, gy @ U], axis=1)

    def rhs(self, U, q=None):
        q = self.grad(U) if q is None else q
        return regularized_rhs(self.spec, self.grid.domain, self.x, U, q, self.zeta)

    def parts(self, U):
        """Per-node active pair and the convexified operator value.

        Each pair contributes ``(a+ b+)^(1/n) + min(a, 0) + min(b, 0)``, which
        is monotone, agrees with ``MA_h^(1/n)`` on convex iterates and keeps a
        nonzero slope where a direction is concave.
        """
        d2 = self.second_differences(U)
        a, b = d2[self._pa], d2[self._pb]
        val = ((np.maximum(a, 0.0) * np.maximum(b, 0.0)) ** self.root
               + np.minimum(a, 0.0) + np.minimum(b, 0.0))
        active = val.argmin(axis=0)
        cols = np.arange(len(U))
        return d2, a[active, cols], b[active, cols], active, val[active, cols]

    def residual(self, U):
        *_, val = self.parts(U)
        return val - self.rhs(U) ** self.root

    def true_residual(self, U):
        d2 = self.second_differences(U)
        prod = np.maximum(d2[self._pa], 0.0) * np.maximum(d2[self._pb], 0.0)
        return prod.min(axis=0) ** self.root - self.rhs(U) ** self.root

    def _rhs_derivatives(self, U):
        q = self.grad(U)
        f = self.rhs(U, q)
        step = 1e-7 * np.maximum(np.abs(U), self.zeta)
        fz = (self.rhs(U + step, q) - self.rhs(U - step, q)) / (2 * step)
        dq = []
        if self.spec.depends_on_q:
            for axis in range(2):
                e = np.zeros(2)
                e[axis] = 1e-7 * (1 + np.abs(q).max())
                dq.append((regularized_rhs(self.spec, self.grid.domain, self.x, U, q + e, self.zeta)
                           - regularized_rhs(self.spec, self.grid.domain, self.x, U, q - e, self.zeta))
                          / (2 * e[axis]))
        return f, fz, dq

    def jacobian(self, U):
        _, a, b, active, _ = self.parts(U)
        scale = np.maximum(np.abs(a), np.abs(b)).max() + 1.0
        eps = 1e-12 * scale
        at, bt = np.maximum(a, eps), np.maximum(b, eps)
        r = self.root
        convex = (a >= 0) & (b >= 0)
        # d/da (a b)^r = r a^(r-1) b^r on the convex branch, slope 1 on a concave direction
        ca = np.where(convex, r * at ** (r - 1) * bt**r, (a < 0).astype(float))
        cb = np.where(convex, r * bt ** (r - 1) * at**r, (b < 0).astype(float))
        m = len(U)
        K = len(self.mats)
        coef = np.zeros((K, m))
        cols = np.arange(m)
        coef[self._pa[active], cols] += ca
        coef[self._pb[active], cols] += cb
        J = sum(sp.diags(coef[k]) @ self.mats[k] for k in range(K))
        f, fz, dq = self._rhs_derivatives(U)
        droot = r * f ** (r - 1)
        J = J - sp.diags(droot * fz)
        if dq:
            (gx, gy), _ = self.grid.gradient_matrices
            J = J - sp.diags(droot * dq[0]) @ gx - sp.diags(droot * dq[1]) @ gy
        return sp.csc_matrix(J)

    def lipschitz(self, U):
        """Largest diagonal magnitude of the Jacobian: the explicit-step bound."""
        return float(np.abs(self.jacobian(U).diagonal()).max())


def euler_step(grid: Grid, u: GridFunction, spec: RhsSpec, dt: float, zeta: float) -> GridFunction:
    """``u + dt (MA_h[u]^(1/n) - f_h^(1/n))`` at interior nodes, zero datum on the band."""
    prob = DiscreteProblem(grid, spec, zeta)
    U = u.interior + dt * prob.residual(u.interior)
    return GridFunction.from_interior(grid, U, 0.0)


def global_bounds(params: BarrierParams):
    """``[-M0 N0 l^(lambda0+1), 0]``: every solution lies in this interval."""
    return -params.M0 * params.N0 * params.l ** (params.lambda0 + 1), 0.0


def negativity_constants(domain: ConvexDomain, spec: RhsSpec, x0, r0, samples=60):
    """``(eta0, eps0)``: minimum of f on the compact set K0 and the chosen ``eps0``."""
    x0 = np.asarray(x0, dtype=float)
    if not domain.distance(x0) > r0 > 0:
        raise GeometryError("closed ball must lie inside the domain")
    n = spec.n
    if n == 2:
        rad = np.linspace(0.0, 1.0, samples)
        ang = np.linspace(0.0, 2 * np.pi, 2 * samples, endpoint=False)
        R, T = np.meshgrid(rad, ang)
        unit = np.stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()], axis=1)
    else:
        rng = np.random.default_rng(0)
        g = rng.standard_normal((samples**2, n))
        unit = g / np.linalg.norm(g, axis=1, keepdims=True) * rng.uniform(0, 1, (samples**2, 1)) ** (1 / n)
    xs = x0 + r0 * unit
    qs = r0 * unit
    rng = np.random.default_rng(1)
    pick = rng.integers(0, len(qs), size=len(xs))
    eta = np.inf
    # every x against the q-extremes, plus random pairs
    probes = [np.zeros(n)] + [r0 * e for e in np.vstack([np.eye(n), -np.eye(n)])]
    z = -r0**2 / 2
    for q in probes:
        eta = min(eta, float(np.min(eval_f(spec, domain, xs, z, np.broadcast_to(q, xs.shape)))))
    eta = min(eta, float(np.min(eval_f(spec, domain, xs, z, qs[pick]))))
    eps = min(1.0, eta ** (1.0 / n)) / 2
    return eta, eps


def interior_negativity_bound(domain: ConvexDomain, spec: RhsSpec, x0, r0) -> float:
    """``-eps0 r0^2 / 2``, an upper bound for the solution at ``x0``."""
    _, eps = negativity_constants(domain, spec, x0, r0)
    return -eps * r0**2 / 2


@dataclass
class ComparisonVerdict:
    status: str  # "pass", "fail" or "inapplicable"
    max_violation: float
    tolerance: float
    reason: str = ""

    @property
    def passed(self):
        return self.status == "pass"

    def to_dict(self):
        return {"status": self.status, "max_violation": self.max_violation,
                "tolerance": self.tolerance, "reason": self.reason}


def check_comparison(grid: Grid, u_sub: GridFunction, phi, spec: RhsSpec, region=None) -> ComparisonVerdict:
    """Check ``u_sub <= phi`` given a strict discrete supersolution ``phi``.

    ``phi`` is a callable evaluated at nodes.  ``region`` restricts the check to
    a convex subdomain; its boundary layer is formed by the stencil neighbours
    of the region's interior nodes.
    """
    pts = grid.points
    inside = np.zeros(grid.n_nodes, dtype=bool)
    inside[: grid.n_interior] = True
    if region is not None:
        inside &= region.signed_distance(pts) > 0
    rows = np.flatnonzero(inside[: grid.n_interior])
    if rows.size == 0:
        return ComparisonVerdict("inapplicable", 0.0, 0.0, "region contains no interior nodes")
    ring = np.unique(grid.nbr[:, :, rows].ravel())
    ring = ring[~inside[ring]]

    phi_fn = GridFunction.sample(grid, phi)
    d2 = second_differences(grid, phi_fn)[:, rows]
    tol = 10 * grid.h**2 * float(np.abs(d2).max())
    ma_phi = ma_operator(grid, phi_fn).values[rows]
    phi_rows = phi_fn.values[rows]
    if np.any(phi_rows >= 0):
        return ComparisonVerdict("inapplicable", 0.0, tol, "phi must be negative inside")
    q = gradient(grid, phi_fn)[rows]
    f_phi = eval_f(spec, grid.domain, pts[rows], phi_rows, q, check_interior=False)
    # strictness must beat rounding in the second differences
    if not np.all(ma_phi < f_phi * (1 - STRICT_MARGIN)):
        return ComparisonVerdict("inapplicable", 0.0, tol, "phi is not a strict supersolution")
    reach = grid.spacing.max()
    slope = float(np.abs(gradient(grid, phi_fn)[rows]).max())
    if np.any(u_sub.values[ring] > phi_fn.values[ring] + tol) or np.any(phi_fn.values[ring] > slope * reach + tol):
        return ComparisonVerdict("inapplicable", 0.0, tol, "boundary ordering u_sub <= phi <= 0 fails")
    viol = float(np.max(u_sub.values[rows] - phi_rows))
    return ComparisonVerdict("pass" if viol <= tol else "fail", viol, tol)


# -- the solve -------------------------------------------------------------

def _max(v):
    return float(np.max(np.abs(v))) if v.size else 0.0


def _default_ball(domain):
    lo, hi = domain.bounding_box()
    if hasattr(domain, "center"):
        c = np.asarray(domain.center, dtype=float)
    elif hasattr(domain, "vertices"):
        c = domain.vertices.mean(axis=0)
    else:
        c = (lo + hi) / 2
    return c, 0.5 * domain.distance(c)


def _run_stage(prob, U, cfg, dt, report_stage):
    """Drive the residual below the tolerance at fixed zeta.  Returns ``U``."""
    F = prob.residual(U)
    res = _max(F)
    best, growth = res, 0
    euler_budget = cfg.max_iterations if cfg.scheme == "euler" else min(cfg.euler_warmup, cfg.max_iterations)
    target = cfg.tolerance if cfg.scheme == "euler" else cfg.switch
    it = 0
    while res > target and it < euler_budget:
        U = U + dt * F
        F = prob.residual(U)
        new = _max(F)
        growth = growth + 1 if new > res else 0
        res = new
        it += 1
        if not np.isfinite(res) or growth >= cfg.divergence_window:
            report_stage.update(euler_iterations=it, newton_iterations=0, residual=res)
            raise DivergenceError(f"Euler residual grew for {growth} consecutive iterations")
    report_stage["euler_iterations"] = it
    newton = 0
    if cfg.scheme == "newton-after-euler":
        while res > cfg.tolerance and newton < cfg.newton_iterations:
            J = prob.jacobian(U)
            try:
                delta = spla.spsolve(J, -F)
            except RuntimeError:
                delta = np.full_like(U, np.nan)
            merit = np.linalg.norm(F)
            step, accepted = 1.0, False
            if np.all(np.isfinite(delta)):
                for _ in range(40):
                    trial = U + step * delta
                    Ft = prob.residual(trial)
                    if np.all(np.isfinite(Ft)) and np.linalg.norm(Ft) < (1 - 1e-4 * step) * merit:
                        accepted = True
                        break
                    step *= 0.5
            if not accepted:
                # line search failed: a burst of explicit steps before retrying
                for _ in range(cfg.divergence_window):
                    U = U + dt * F
                    F = prob.residual(U)
                it += cfg.divergence_window
                res = _max(F)
                newton += 1
                continue
            U, F = trial, Ft
            res = _max(F)
            newton += 1
        report_stage["euler_iterations"] = it
    report_stage.update(newton_iterations=newton, residual=res)
    return U, res


def solve(domain: ConvexDomain, spec: RhsSpec, config: SolveConfig | None = None, init=None,
          grid: Grid | None = None):
    """Solve the Dirichlet problem; returns ``(GridFunction, SolveReport)``.

    ``init`` overrides the Perron-envelope initial guess (callable on points or
    array of interior values).
    """
    cfg = config or SolveConfig()
    t0 = time.perf_counter()
    structure = check_structure(spec, domain, 2000)
    if not (structure.positive and structure.nondecreasing and structure.envelope_ok):
        raise ConfigError(f"right-hand side fails the structure check: {structure.to_dict()}")
    params = build_barrier(domain, spec)
    grid = grid or build_grid(domain, cfg.h, cfg.stencil_width, cfg.snap, cfg.closure)
    envelope = perron_lower_envelope(domain, spec, cfg.boundary_points, params)
    perron = envelope(grid.interior_points)

    if init is None:
        U = perron.copy()
    elif callable(init):
        U = np.asarray(init(grid.interior_points), dtype=float)
    else:
        U = np.array(init, dtype=float)

    report = SolveReport(grid=grid.describe())
    zetas = _zeta_schedule(spec, cfg)
    prob = DiscreteProblem(grid, spec, zetas[0] if spec.singular_in_z else NONSINGULAR_FLOOR)
    L = prob.lipschitz(U)
    if cfg.dt is None:
        dt = 0.5 / L
    else:
        dt = cfg.dt
        if dt * L >= 1:
            raise ConfigError(f"dt={dt} violates the stability bound dt*L < 1 (L={L:.4g})")
    report.dt = dt

    sandwich_ok = True
    for k, zeta in enumerate(zetas):
        prob = prob.with_zeta(zeta) if spec.singular_in_z else prob
        stage = {"zeta": zeta if spec.singular_in_z else None}
        if k > 0:
            # stiffness grows as the floor drops
            dt = min(dt, 0.5 / prob.lipschitz(U)) if cfg.dt is None else dt
        try:
            U, res = _run_stage(prob, U, cfg, dt, stage)
        except DivergenceError as exc:
            report.stages.append(stage)
            report.wall_time = time.perf_counter() - t0
            exc.report = report
            raise
        report.stages.append(stage)
        sandwich_ok &= bool(np.all(U >= perron - 1e-9) and np.all(U <= 1e-12))
        log.debug("stage zeta=%s residual=%.3e", zeta, res)
        if spec.singular_in_z and np.all(U < -zeta) and res <= cfg.tolerance:
            break
    report.residual = _max(prob.true_residual(U))
    report.converged = bool(report.residual <= cfg.tolerance)
    u = GridFunction.from_interior(grid, U, 0.0)
    _populate_flags(report, grid, u, spec, params, perron, cfg, prob.zeta, sandwich_ok)
    report.wall_time = time.perf_counter() - t0
    return u, report


def _zeta_schedule(spec, cfg):
    if not spec.singular_in_z:
        return [NONSINGULAR_FLOOR]
    zetas, z = [], cfg.zeta0
    while z > cfg.floor:
        zetas.append(z)
        z /= 2
    zetas.append(max(z, cfg.floor))
    return zetas


def _populate_flags(report, grid, u, spec, params, perron, cfg, zeta, sandwich_ok):
    U = u.interior
    lo, hi = global_bounds(params)
    slack = cfg.h
    x0, r0 = (np.asarray(cfg.negativity_center, dtype=float), cfg.negativity_radius) \
        if cfg.negativity_center is not None else _default_ball(grid.domain)
    if cfg.negativity_center is not None and r0 is None:
        r0 = 0.5 * grid.domain.distance(x0)
    eta0, eps0 = negativity_constants(grid.domain, spec, x0, r0)
    phi = lambda x: eps0 * (-r0**2 / 2 + np.sum((np.atleast_2d(x) - x0) ** 2, axis=1) / 2)
    ball = disk(x0, r0)
    in_ball = ball.signed_distance(grid.interior_points) >= 0
    negativity_gap = float(np.max(U[in_ball] - phi(grid.interior_points[in_ball]))) if in_ball.any() else 0.0
    comparison = check_comparison(grid, u, phi, spec, region=ball)
    defect = convexity_defect(grid, u, 0.0)
    node0 = int(np.argmin(np.linalg.norm(grid.interior_points - x0, axis=1)))
    report.flags = {
        "residual": report.residual <= cfg.tolerance,
        "boundary_datum": bool(np.all(u.values[grid.n_interior:] == 0.0)),
        "global_bound": bool(np.all(U >= lo - slack) and np.all(U <= hi + slack)),
        "lower_envelope": bool(np.all(U >= perron - 1e-9) and np.all(U <= 0.0)),
        "interior_negativity": negativity_gap <= 0.0,
        "convexity_defect": defect <= 10 * cfg.tolerance,
        "comparison_oracle": comparison.passed,
    }
    report.details = {
        "barrier": params.constants(),
        "global_bounds": [lo, hi],
        "min_u": float(U.min()),
        "perron_gap_min": float(np.min(U - perron)),
        "sandwich_all_stages": sandwich_ok,
        "negativity": {"x0": list(map(float, x0)), "r0": float(r0), "eta0": eta0, "eps0": eps0,
                       "bound": -eps0 * r0**2 / 2, "u_at_nearest_node": float(U[node0]),
                       "max_gap_on_ball": negativity_gap},
        "convexity_defect": defect,
        "comparison": comparison.to_dict(),
        "final_zeta": zeta,
        "floor_active_nodes": int(np.sum(U > -zeta)) if spec.singular_in_z else 0,
    }


@dataclass
class CrosscheckResult:
    status: str  # "ok" or "inapplicable"
    difference: float | None
    reports: tuple = ()


def uniqueness_crosscheck(domain: ConvexDomain, spec: RhsSpec, config: SolveConfig | None = None):
    """Solve from the Perron envelope and from a flat start; report ``max |u_A - u_B|``."""
    structure = check_structure(spec, domain, 2000)
    if not (structure.strict_claimed and structure.strictly_increasing):
        return CrosscheckResult("inapplicable", None)
    cfg = config or SolveConfig()
    grid = build_grid(domain, cfg.h, cfg.stencil_width, cfg.snap, cfg.closure)
    ua, ra = solve(domain, spec, cfg, grid=grid)
    flat = -domain.diameter() ** 2
    ub, rb = solve(domain, spec, cfg, init=np.full(grid.n_interior, flat), grid=grid)
    return CrosscheckResult("ok", float(np.max(np.abs(ua.values - ub.values))), (ra, rb))
