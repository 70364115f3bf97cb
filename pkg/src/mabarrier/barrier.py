"""Explicit boundary barrier and its constants.

For a boundary point mapped to the origin with the domain in the upper
half-space, write ``y = (y', y_n)`` and ``r = |y'|``.  The barrier is

    W(y) = -M0 * y_n**lam0 * sqrt(N0**2 l**2 - r**2),

with ``l`` the domain diameter.  The constants are chosen so that
``det D^2 W > A d^(beta-n-1) |W|^(-alpha) (1+|grad W|^2)^(gamma/2)`` in the
domain, which makes ``W`` a strict classical subsolution for every right-hand
side obeying that envelope bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .domain import BoundaryFrame, ConvexDomain, boundary_frame
from .errors import DomainMembershipError, StructureError
from .rhs import RhsSpec, check_envelope_parameters, envelope_bound

HALF_SPACE_TOL = 1e-12


def choose_lambda0(n, alpha, beta, gamma) -> float:
    """Midpoint rule ``min(s, 1) / 2`` with ``s = (beta+1-n-gamma) / (n+alpha-gamma)``.

    ``s`` is the root of ``lam (n+alpha-gamma) + n-1-beta+gamma = 0``.
    """
    if beta < n + 1 or not gamma < min(n + alpha, beta - n + 1):
        raise StructureError("parameters violate beta >= n+1, gamma < min(n+alpha, beta-n+1)")
    s = (beta + 1 - n - gamma) / (n + alpha - gamma)
    lam = min(s, 1.0) / 2
    assert lam * (n + alpha - gamma) + n - 1 - beta + gamma < 0
    return lam


def choose_N0(lambda0) -> float:
    if not 0 < lambda0 < 1:
        raise StructureError(f"lambda0 must lie in (0, 1), got {lambda0}")
    return math.sqrt(2.0 / (1.0 - lambda0))


def compute_C1(lam, M, N, l, gamma) -> float:
    """Lower-bound constant for ``(1+|grad W|^2)^(-gamma/2)`` in units of ``(|W|/y_n)^(-gamma)``."""
    first = ((1.0 / (lam**2 * M**2 * l ** (2 * lam) * (N**2 - 1)) + 1.0) ** (-gamma / 2)
             * (lam**2 + 1.0 / (N**2 - 1) ** 2) ** (-gamma / 2))
    return min(first, lam ** (-gamma))


def compute_C2(N0, l, alpha, gamma, n) -> float:
    """Exact minimum of ``(N0^2 l^2 - r^2)^((alpha-gamma-n)/2)`` over ``r in [0, l]``."""
    e = (alpha - gamma - n) / 2
    if e >= 0:
        return ((N0**2 - 1) * l**2) ** e
    return (N0**2 * l**2) ** e


def subsolution_product(n, A, alpha, beta, gamma, l, lambda0, N0, M) -> float:
    """Guaranteed lower bound of ``det D^2 W / envelope`` for amplitude ``M``."""
    return (compute_C1(lambda0, M, N0, l, gamma) * compute_C2(N0, l, alpha, gamma, n) / A
            * lambda0 * (1 - lambda0) / 2 * M ** (n + alpha - gamma) * N0**2
            * l ** (lambda0 * (n + alpha - gamma) + n + 1 - beta + gamma))


def choose_M0(n, A, alpha, beta, gamma, l, lambda0, N0):
    """Smallest ``M`` in 2, 4, 8, ... with product > 1.  Returns ``(M0, product)``."""
    M = 2.0
    while M <= 2.0**64:
        product = subsolution_product(n, A, alpha, beta, gamma, l, lambda0, N0, M)
        if product > 1:
            return M, product
        M *= 2
    raise OverflowError("no amplitude M <= 2**64 satisfies the subsolution inequality")


@dataclass(frozen=True)
class BarrierParams:
    n: int
    A: float
    alpha: float
    beta: float
    gamma: float
    l: float
    lambda0: float
    N0: float
    M0: float
    C1: float
    C2: float
    residual: float
    frame: BoundaryFrame | None = None

    def __post_init__(self):
        n, a, b, g = self.n, self.alpha, self.beta, self.gamma
        if not self.lambda0 * (n + a - g) + n - 1 - b + g < 0:
            raise StructureError("lambda0 violates the exponent inequality")
        if not 0 < self.lambda0 < 1:
            raise StructureError("lambda0 outside (0, 1)")
        if self.N0 != math.sqrt(2 / (1 - self.lambda0)):
            raise StructureError("N0 must equal sqrt(2 / (1 - lambda0))")
        if not (self.M0 > 1 and self.residual > 0 and self.C1 > 0 and self.C2 > 0):
            raise StructureError("barrier constants violate positivity requirements")

    def at(self, frame: BoundaryFrame) -> "BarrierParams":
        return replace(self, frame=frame)

    def constants(self) -> dict:
        return {"n": self.n, "A": self.A, "alpha": self.alpha, "beta": self.beta,
                "gamma": self.gamma, "l": self.l, "lambda0": self.lambda0, "N0": self.N0,
                "M0": self.M0, "C1": self.C1, "C2": self.C2, "inequality_residual": self.residual}


def barrier_constants(n, A, alpha, beta, gamma, l) -> BarrierParams:
    check_envelope_parameters(n, A, alpha, beta, gamma)
    lam = choose_lambda0(n, alpha, beta, gamma)
    N0 = choose_N0(lam)
    M0, product = choose_M0(n, A, alpha, beta, gamma, l, lam, N0)
    return BarrierParams(n=n, A=A, alpha=alpha, beta=beta, gamma=gamma, l=l, lambda0=lam,
                         N0=N0, M0=M0, C1=compute_C1(lam, M0, N0, l, gamma),
                         C2=compute_C2(N0, l, alpha, gamma, n), residual=product - 1)


def build_barrier(domain: ConvexDomain, spec: RhsSpec, x0=None, normal=None) -> BarrierParams:
    """Constants from the right-hand side's envelope; frame at ``x0`` when given."""
    if not spec.claims_envelope:
        raise StructureError(f"{spec.kind} spec carries no envelope parameters")
    if spec.n != domain.dim:
        raise StructureError("spec and domain dimensions differ")
    params = barrier_constants(spec.n, *spec.envelope_params, domain.diameter())
    if x0 is not None:
        params = params.at(boundary_frame(domain, x0, normal))
    return params


# -- evaluation ----------------------------------------------------------

def _frame_coords(params, x):
    y = np.atleast_2d(params.frame.forward(x))
    yn = y[:, -1]
    if np.any(yn < -HALF_SPACE_TOL):
        raise DomainMembershipError("point lies outside the barrier's half-space")
    yp = y[:, :-1]
    r2 = np.sum(yp * yp, axis=1)
    if np.any(r2 > (params.N0 * params.l) ** 2):
        raise DomainMembershipError("point outside the barrier's radial range r <= N0 l")
    return yp, np.maximum(yn, 0.0), r2


def eval_W(params: BarrierParams, x):
    single = np.ndim(x) == 1
    _, yn, r2 = _frame_coords(params, x)
    w = -params.M0 * yn**params.lambda0 * np.sqrt((params.N0 * params.l) ** 2 - r2)
    return float(w[0]) if single else w


def eval_W_derivs(params: BarrierParams, x):
    """Gradient and Hessian of W in frame coordinates.

    The tangential block is ``(W_r/r) I + M y_n^lam (N^2l^2-r^2)^(-3/2) y' y'^T``,
    which is smooth across the axis ``r = 0``.
    """
    single = np.ndim(x) == 1
    yp, yn, r2 = _frame_coords(params, x)
    if np.any(yn <= 0):
        raise DomainMembershipError("derivatives are singular on the flat boundary y_n = 0")
    lam, M = params.lambda0, params.M0
    s = (params.N0 * params.l) ** 2 - r2
    m, n = len(yn), params.n
    wr_over_r = M * yn**lam / np.sqrt(s)
    grad = np.empty((m, n))
    grad[:, :-1] = wr_over_r[:, None] * yp
    grad[:, -1] = -lam * M * yn ** (lam - 1) * np.sqrt(s)
    hess = np.zeros((m, n, n))
    k = n - 1
    hess[:, :k, :k] = (wr_over_r[:, None, None] * np.eye(k)
                       + (M * yn**lam * s**-1.5)[:, None, None] * yp[:, :, None] * yp[:, None, :])
    mixed = (lam * M * yn ** (lam - 1) / np.sqrt(s))[:, None] * yp
    hess[:, :k, -1] = mixed
    hess[:, -1, :k] = mixed
    hess[:, -1, -1] = lam * (1 - lam) * M * yn ** (lam - 2) * np.sqrt(s)
    if single:
        return grad[0], hess[0]
    return grad, hess


def to_global(params: BarrierParams, grad, hess):
    """Rotate frame-coordinate derivatives back to the original coordinates."""
    R = params.frame.rotation
    return grad @ R, np.einsum("ki,...kl,lj->...ij", R, hess, R)


def det_D2W(params: BarrierParams, x):
    """Closed form ``lam M^n N^2 l^2 y_n^(n lam-2) (1-(1+r^2/(N^2 l^2)) lam) (N^2 l^2-r^2)^(-n/2)``."""
    single = np.ndim(x) == 1
    _, yn, r2 = _frame_coords(params, x)
    if np.any(yn <= 0):
        raise DomainMembershipError("det D^2 W is singular on the flat boundary y_n = 0")
    lam, M, N, l, n = params.lambda0, params.M0, params.N0, params.l, params.n
    val = (lam * M**n * N**2 * l**2 * yn ** (n * lam - 2)
           * (1 - (1 + r2 / (N**2 * l**2)) * lam) * (N**2 * l**2 - r2) ** (-n / 2))
    return float(val[0]) if single else val


@dataclass
class SubsolutionReport:
    samples: int
    min_ratio: float
    argmin: list
    constants: dict
    base_point: list

    @property
    def passed(self):
        return self.min_ratio > 1

    def to_dict(self):
        return {"samples": self.samples, "min_ratio": self.min_ratio, "argmin": self.argmin,
                "base_point": self.base_point, "constants": self.constants,
                "passed": self.passed}


def verify_subsolution(params: BarrierParams, spec: RhsSpec, domain: ConvexDomain,
                       samples: int, seed=0, points=None) -> SubsolutionReport:
    """Minimum of ``det D^2 W / envelope(x, W, grad W)`` over interior samples.

    The comparison is against the envelope, i.e. the largest right-hand side
    allowed by the claimed bound, not against the right-hand side's own f.
    """
    if points is None:
        points = domain.sample_interior(np.random.default_rng(seed), samples)
    w = eval_W(params, points)
    grad_y, _ = eval_W_derivs(params, points)
    ratio = det_D2W(params, points) / envelope_bound(spec, domain, points, w, grad_y)
    k = int(np.argmin(ratio))
    return SubsolutionReport(len(points), float(ratio[k]), points[k].tolist(),
                             params.constants(), params.frame.base_point.tolist())


class PerronEnvelope:
    """Pointwise maximum of barriers pinned at finitely many boundary points."""

    def __init__(self, params: BarrierParams, frames):
        self.params = params
        self.members = [params.at(fr) for fr in frames]

    @property
    def base_points(self):
        return np.array([m.frame.base_point for m in self.members])

    def __call__(self, x):
        single = np.ndim(x) == 1
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(len(pts), -np.inf)
        for member in self.members:
            out = np.maximum(out, eval_W(member, pts))
        return float(out[0]) if single else out


def perron_lower_envelope(domain: ConvexDomain, spec: RhsSpec, boundary_point_count: int,
                          params: BarrierParams | None = None) -> PerronEnvelope:
    if boundary_point_count < 1:
        raise ValueError("boundary_point_count must be >= 1")
    params = params or build_barrier(domain, spec)
    frames = [boundary_frame(domain, p) for p in domain.boundary_points(boundary_point_count)]
    return PerronEnvelope(params, frames)
