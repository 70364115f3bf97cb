"""Right-hand sides ``f(x, z, q)`` of ``det D^2 u = f(x, u, grad u)``.

Every family is defined on ``Omega x (-inf, 0) x R^n``.  A spec may carry
envelope parameters ``(A, alpha, beta, gamma)`` asserting

    0 < f(x, z, q) <= A d_x^(beta-n-1) |z|^(-alpha) (1 + |q|^2)^(gamma/2),

which is all the barrier construction uses.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .domain import TOL, ConvexDomain
from .errors import DomainMembershipError, StructureError

KINDS = ("envelope", "gauss-curvature", "minkowski", "hilbert", "manufactured")


# -- coefficient functions -----------------------------------------------

@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, x):
        x = np.atleast_2d(x)
        return np.full(len(x), float(self.value))

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class Paraboloid:
    """``scale * (|x - center|^2 - radius^2) / 2``; convex for ``scale > 0``."""

    center: tuple
    radius: float = 1.0
    scale: float = 1.0

    def __call__(self, x):
        x = np.atleast_2d(x)
        c = np.asarray(self.center, dtype=float)
        return self.scale * (np.sum((x - c) ** 2, axis=1) - self.radius**2) / 2

    def to_dict(self):
        return {"kind": "paraboloid", "center": list(self.center),
                "radius": self.radius, "scale": self.scale}


def coefficient_from_dict(desc):
    if isinstance(desc, (int, float)):
        return Constant(float(desc))
    kind = desc.get("kind")
    if kind == "constant":
        return Constant(float(desc["value"]))
    if kind == "paraboloid":
        return Paraboloid(tuple(desc["center"]), float(desc.get("radius", 1.0)),
                          float(desc.get("scale", 1.0)))
    raise StructureError(f"unknown coefficient kind {kind!r}")


# -- RhsSpec ----------------------------------------------------------------

def check_envelope_parameters(n, A, alpha, beta, gamma):
    if not A > 0:
        raise StructureError(f"A must be positive, got {A}")
    if beta < n + 1:
        raise StructureError(f"beta must be >= n+1 = {n + 1}, got {beta}")
    bound = min(n + alpha, beta - n + 1)
    if not gamma < bound:
        raise StructureError(f"gamma must be < min(n+alpha, beta-n+1) = {bound}, got {gamma}")


@dataclass(frozen=True)
class RhsSpec:
    kind: str
    n: int
    A: float | None = None
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    g: Callable | None = None
    c: Callable | None = None
    u_star: Callable | None = None
    # exponent used by the non-envelope families (gauss-curvature: gamma, minkowski: alpha)
    power: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise StructureError(f"unknown rhs kind {self.kind!r}")
        if self.n < 2:
            raise StructureError("dimension must be >= 2")
        if self.claims_envelope:
            check_envelope_parameters(self.n, self.A, self.alpha, self.beta, self.gamma)

    # -- factories -------------------------------------------------------
    @classmethod
    def envelope(cls, n, A=1.0, alpha=0.0, beta=None, gamma=0.0):
        beta = n + 1 if beta is None else beta
        return cls("envelope", n, float(A), float(alpha), float(beta), float(gamma))

    @classmethod
    def gauss_curvature(cls, n, g=1.0, gamma=0.0, A=None):
        g = Constant(float(g)) if np.isscalar(g) else g
        A = _default_bound(g, A)
        return cls("gauss-curvature", n, A, 0.0, float(n + 1), float(gamma), g=g, power=float(gamma))

    @classmethod
    def minkowski(cls, n, g=1.0, alpha=0.0, A=None):
        g = Constant(float(g)) if np.isscalar(g) else g
        A = _default_bound(g, A)
        return cls("minkowski", n, A, float(alpha), float(n + 1), 0.0, g=g, power=float(alpha))

    @classmethod
    def hilbert(cls, n):
        return cls("hilbert", n, 1.0, float(n + 2), float(n + 1), 0.0, power=float(n + 2))

    @classmethod
    def manufactured(cls, n, u_star, c=1.0, envelope=None):
        """``c(x) exp(z - u_star(x))``.  ``envelope`` is an optional ``(A, alpha, beta, gamma)``."""
        c = Constant(float(c)) if np.isscalar(c) else c
        if envelope is None:
            return cls("manufactured", n, c=c, u_star=u_star)
        A, alpha, beta, gamma = envelope
        return cls("manufactured", n, float(A), float(alpha), float(beta), float(gamma),
                   c=c, u_star=u_star)

    # -- properties -----------------------------------------------------
    @property
    def claims_envelope(self) -> bool:
        return self.A is not None

    @property
    def envelope_params(self):
        if not self.claims_envelope:
            return None
        return self.A, self.alpha, self.beta, self.gamma

    @property
    def claims_strict(self) -> bool:
        """Whether f is claimed strictly increasing in z."""
        if self.kind in ("hilbert", "manufactured"):
            return True
        if self.kind in ("envelope", "minkowski"):
            return self.alpha > 0
        return False

    @property
    def singular_in_z(self) -> bool:
        """``f`` blows up as ``z -> 0-``."""
        return self.kind in ("envelope", "minkowski", "hilbert") and self.alpha > 0

    @property
    def depends_on_q(self) -> bool:
        return self.kind in ("envelope", "gauss-curvature") and self.gamma != 0

    def to_dict(self):
        out = {"kind": self.kind, "n": self.n}
        if self.kind == "envelope":
            out.update(A=self.A, alpha=self.alpha, beta=self.beta, gamma=self.gamma)
        elif self.kind == "gauss-curvature":
            out.update(g=_coef_dict(self.g), gamma=self.gamma, A=self.A)
        elif self.kind == "minkowski":
            out.update(g=_coef_dict(self.g), alpha=self.alpha, A=self.A)
        elif self.kind == "manufactured":
            out.update(c=_coef_dict(self.c), u_star=_coef_dict(self.u_star))
            if self.claims_envelope:
                out["envelope"] = [self.A, self.alpha, self.beta, self.gamma]
        return out


def _coef_dict(fn):
    return fn.to_dict() if hasattr(fn, "to_dict") else repr(fn)


def _default_bound(g, A):
    if A is not None:
        return float(A)
    if isinstance(g, Constant):
        return float(g.value)
    raise StructureError("an explicit envelope constant A is required for non-constant g")


def rhs_from_dict(desc: dict, n: int) -> RhsSpec:
    kind = desc.get("kind")
    n = int(desc.get("n", n))
    if kind == "envelope":
        return RhsSpec.envelope(n, desc.get("A", 1.0), desc.get("alpha", 0.0),
                                desc.get("beta"), desc.get("gamma", 0.0))
    if kind == "gauss-curvature":
        return RhsSpec.gauss_curvature(n, coefficient_from_dict(desc.get("g", 1.0)),
                                       desc.get("gamma", 0.0), desc.get("A"))
    if kind == "minkowski":
        return RhsSpec.minkowski(n, coefficient_from_dict(desc.get("g", 1.0)),
                                 desc.get("alpha", 0.0), desc.get("A"))
    if kind == "hilbert":
        return RhsSpec.hilbert(n)
    if kind == "manufactured":
        env = desc.get("envelope")
        return RhsSpec.manufactured(n, coefficient_from_dict(desc["u_star"]),
                                    coefficient_from_dict(desc.get("c", 1.0)),
                                    tuple(env) if env is not None else None)
    raise StructureError(f"unknown rhs kind {kind!r}")


# -- evaluation ----------------------------------------------------------

def _prepare(spec, domain, x, z, q):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    z = np.broadcast_to(np.asarray(z, dtype=float), (len(x),))
    q = np.broadcast_to(np.asarray(q, dtype=float), x.shape)
    if x.shape[1] != spec.n:
        raise StructureError(f"spec is for dimension {spec.n}, got points of dimension {x.shape[1]}")
    if np.any(z >= 0):
        raise DomainMembershipError("f is only defined for z < 0")
    return x, z, q, single


def _envelope(n, A, alpha, beta, gamma, d, z, q):
    return (A * d ** (beta - n - 1) * np.abs(z) ** (-alpha)
            * (1.0 + np.sum(q * q, axis=1)) ** (gamma / 2))


def _interior_distance(domain, x):
    sd = domain.signed_distance(x)
    if np.any(sd <= TOL):
        raise DomainMembershipError("f is only defined in the open domain")
    return sd


def eval_f(spec: RhsSpec, domain: ConvexDomain, x, z, q, check_interior=True):
    """Evaluate ``f(x, z, q)``; vectorised over leading batch axis."""
    x, z, q, single = _prepare(spec, domain, x, z, q)
    if spec.kind == "envelope":
        val = _envelope(spec.n, *spec.envelope_params, _interior_distance(domain, x), z, q)
    else:
        if check_interior:
            _interior_distance(domain, x)
        if spec.kind == "gauss-curvature":
            val = spec.g(x) * (1.0 + np.sum(q * q, axis=1)) ** (spec.power / 2)
        elif spec.kind == "minkowski":
            val = spec.g(x) * np.abs(z) ** (-spec.power)
        elif spec.kind == "hilbert":
            val = np.abs(z) ** (-spec.power)
        else:
            val = spec.c(x) * np.exp(z - spec.u_star(x))
    return float(val[0]) if single else val


def envelope_bound(spec: RhsSpec, domain: ConvexDomain, x, z, q):
    """``A d_x^(beta-n-1) |z|^(-alpha) (1+|q|^2)^(gamma/2)`` for the claimed envelope."""
    if not spec.claims_envelope:
        raise StructureError(f"{spec.kind} spec makes no envelope claim")
    x, z, q, single = _prepare(spec, domain, x, z, q)
    val = _envelope(spec.n, *spec.envelope_params, _interior_distance(domain, x), z, q)
    return float(val[0]) if single else val


@dataclass
class StructureReport:
    samples: int
    min_f: float
    envelope_gap: float | None  # max of (f - envelope) / envelope; None when no claim
    nondecreasing: bool
    strict_claimed: bool
    strictly_increasing: bool

    @property
    def positive(self):
        return self.min_f > 0

    @property
    def envelope_ok(self):
        return self.envelope_gap is None or self.envelope_gap <= 1e-12

    @property
    def passed(self):
        strict_ok = self.strictly_increasing or not self.strict_claimed
        return self.positive and self.envelope_ok and self.nondecreasing and strict_ok

    def to_dict(self):
        return {"samples": self.samples, "min_f": self.min_f, "envelope_gap": self.envelope_gap,
                "positive": self.positive, "envelope_ok": self.envelope_ok,
                "nondecreasing": self.nondecreasing, "strict_claimed": self.strict_claimed,
                "strictly_increasing": self.strictly_increasing, "passed": self.passed}


def sample_arguments(spec, domain, rng, count, zmin=-10.0, zmax=-1e-3, qmax=10.0):
    """Random ``(x, z, q)``: x interior, z log-uniform in [zmin, zmax], |q| <= qmax."""
    x = domain.sample_interior(rng, count)
    z = -np.exp(rng.uniform(np.log(-zmax), np.log(-zmin), size=count))
    dirs = rng.standard_normal((count, spec.n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    q = dirs * qmax * rng.uniform(0, 1, size=(count, 1)) ** (1.0 / spec.n)
    return x, z, q


def check_structure(spec: RhsSpec, domain: ConvexDomain, sample_count: int, seed=0) -> StructureReport:
    """Sampled check of positivity, the envelope bound and monotonicity in z."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    x, z, q = sample_arguments(spec, domain, rng, sample_count)
    f = eval_f(spec, domain, x, z, q)
    gap = None
    if spec.claims_envelope:
        env = envelope_bound(spec, domain, x, z, q)
        gap = float(np.max((f - env) / env))
    z2 = -np.exp(rng.uniform(np.log(1e-3), np.log(10.0), size=sample_count))
    lo, hi = np.minimum(z, z2), np.maximum(z, z2)
    keep = lo < hi
    f_lo = eval_f(spec, domain, x[keep], lo[keep], q[keep])
    f_hi = eval_f(spec, domain, x[keep], hi[keep], q[keep])
    nondecreasing = bool(np.all(f_lo <= f_hi * (1 + 1e-12)))
    strictly = bool(np.all(f_lo < f_hi))
    return StructureReport(sample_count, float(f.min()), gap, nondecreasing,
                           spec.claims_strict, strictly)
