import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from mabarrier.barrier import (barrier_constants, build_barrier, choose_lambda0, choose_M0, choose_N0,
                               compute_C1, compute_C2, det_D2W, eval_W, eval_W_derivs, perron_lower_envelope,
                               subsolution_product, to_global, verify_subsolution)
from mabarrier.domain import boundary_frame, disk, unit_square
from mabarrier.errors import DomainMembershipError, StructureError
from mabarrier.rhs import RhsSpec

D = disk((0, 0), 1)


def fd_grad_hess(fn, x, step=1e-5):
    n = len(x)
    g = np.empty(n)
    H = np.empty((n, n))
    E = np.eye(n) * step
    f0 = fn(x)
    for i in range(n):
        g[i] = (fn(x + E[i]) - fn(x - E[i])) / (2 * step)
        for j in range(n):
            H[i, j] = (fn(x + E[i] + E[j]) - fn(x + E[i] - E[j]) - fn(x - E[i] + E[j])
                       + fn(x - E[i] - E[j])) / (4 * step * step) if i != j else \
                      (fn(x + E[i]) - 2 * f0 + fn(x - E[i])) / step**2
    return g, H


@pytest.mark.parametrize("params, lam", [((2, 0, 3, 0), 0.5), ((2, 4, 3, 0), 1 / 6), ((2, 0, 5, 1), 0.5),
                                         ((3, 5, 4, 0), 0.125)])
def test_lambda0(params, lam):
    n, a, b, g = params
    got = choose_lambda0(n, a, b, g)
    assert got == pytest.approx(lam)
    assert got * (n + a - g) + n - 1 - b + g < 0


@pytest.mark.parametrize("params", [(2, 0, 2.5, 0), (2, 0, 3, 2), (2, 4, 3, 2)])
def test_lambda0_rejects(params):
    with pytest.raises(StructureError):
        choose_lambda0(*params)


@pytest.mark.parametrize("lam, N", [(0.5, 2.0), (1 / 6, math.sqrt(2.4)), (0.9, math.sqrt(20))])
def test_N0(lam, N):
    assert choose_N0(lam) == pytest.approx(N, rel=1e-15)
    assert choose_N0(lam) > math.sqrt(2)


@pytest.mark.parametrize("lam", [0.0, 1.0, -0.2])
def test_N0_rejects(lam):
    with pytest.raises(StructureError):
        choose_N0(lam)


@pytest.mark.parametrize("M, N, l", [(2, 2, 1), (8, 3, 2), (100, 2.5, 0.3)])
def test_C1_trivial_and_negative_gamma(M, N, l):
    assert compute_C1(0.5, M, N, l, 0.0) == 1.0
    assert compute_C1(0.5, M, N, l, -2.0) == pytest.approx(0.25)


def test_C1_positive_gamma():
    first = (1 / (0.25 * 16 * 2 * 3) + 1) ** -1 * (0.25 + 1 / 9) ** -1
    assert first == pytest.approx(2.6585, abs=1e-4)
    assert compute_C1(0.5, 4, 2, 2, 2) == pytest.approx(first)


@pytest.mark.parametrize("args, expected", [((2.0, 2.0, 2, 0, 2), 1.0), ((2.0, 2.0, 0, 0, 2), 0.0625),
                                            ((math.sqrt(2.4), 2.0, 4, 0, 2), 5.6)])
def test_C2(args, expected):
    assert compute_C2(*args) == pytest.approx(expected)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.1, 5.0), st.floats(0.2, 4.0), st.floats(-3, 6), st.floats(-2, 3), st.integers(2, 4))
def test_C2_is_the_minimum_over_r(N, l, alpha, gamma, n):
    e = (alpha - gamma - n) / 2
    r = np.linspace(0, l, 2001)
    vals = (N**2 * l**2 - r**2) ** e
    assert compute_C2(N, l, alpha, gamma, n) == pytest.approx(vals.min(), rel=1e-9)


def test_M0_doubling_trace():
    lam, N = 0.5, 2.0
    products = [subsolution_product(2, 1, 0, 3, 0, 2, lam, N, M) for M in (2, 4, 8)]
    np.testing.assert_allclose(products, [0.25, 1.0, 4.0])
    M0, product = choose_M0(2, 1, 0, 3, 0, 2, lam, N)
    assert M0 == 8 and product == pytest.approx(4.0)


def test_M0_hilbert():
    p = barrier_constants(2, 1, 4, 3, 0, 2)
    assert p.lambda0 == pytest.approx(1 / 6) and p.M0 > 1 and p.residual > 0


ADMISSIBLE = st.tuples(st.integers(2, 3), st.floats(0.1, 10), st.floats(0, 6), st.floats(0, 4),
                       st.floats(-2, 4), st.floats(0.5, 4))


def _admissible(t):
    n, A, a, db, g, l = t
    b = n + 1 + db
    assume(g < min(n + a, b - n + 1) - 0.5)
    return n, A, a, b, g, l


@settings(max_examples=60, deadline=None)
@given(ADMISSIBLE)
def test_product_increases_along_doubling(t):
    n, A, a, b, g, l = _admissible(t)
    lam = choose_lambda0(n, a, b, g)
    N = choose_N0(lam)
    seq = [subsolution_product(n, A, a, b, g, l, lam, N, 2.0**k) for k in range(1, 12)]
    assert all(y > x for x, y in zip(seq, seq[1:]))


@settings(max_examples=40, deadline=None)
@given(ADMISSIBLE)
def test_constructed_barrier_is_subsolution(t):
    n, A, a, b, g, l = _admissible(t)
    dom = disk(np.zeros(n), l / 2)
    spec = RhsSpec.envelope(n, A, a, b, g)
    params = build_barrier(dom, spec)
    assert params.residual > 0 and params.C1 > 0 and params.C2 > 0
    assert params.N0 == math.sqrt(2 / (1 - params.lambda0))
    member = params.at(boundary_frame(dom, dom.boundary_points(3)[1]))
    assert verify_subsolution(member, spec, dom, 500).min_ratio > 1


def _south(params):
    return params.at(boundary_frame(D, (0, -1)))


def test_W_examples():
    p = _south(build_barrier(D, RhsSpec.envelope(2, 1, 0, 3, 0)))
    assert (p.lambda0, p.N0, p.M0, p.l) == (0.5, 2.0, 8.0, 2.0)
    assert eval_W(p, np.array([0.0, 0.0])) == pytest.approx(-32.0)      # frame (r, y_n) = (0, 1)
    assert eval_W(p, np.array([0.4, -1.0])) == 0.0                      # y_n = 0
    corner = eval_W(p, np.array([2.0, 1.0]))                            # frame (l, l)
    assert corner == pytest.approx(-8 * 2**0.5 * 2 * math.sqrt(3))
    assert det_D2W(p, np.array([0.0, 0.0])) == pytest.approx(16.0)
    with pytest.raises(DomainMembershipError):
        eval_W(p, np.array([0.0, -1.5]))
    with pytest.raises(DomainMembershipError):
        eval_W_derivs(p, np.array([0.3, -1.0]))


def test_axis_has_no_mixed_term():
    p = _south(build_barrier(D, RhsSpec.hilbert(2)))
    _, H = eval_W_derivs(p, np.array([0.0, -0.4]))
    assert H[0, 1] == 0.0 and H[1, 0] == 0.0


@pytest.mark.parametrize("spec, dom", [(RhsSpec.envelope(2, 1, 0, 3, 0), D), (RhsSpec.hilbert(2), D),
                                       (RhsSpec.envelope(2, 1, 1, 4, 2), unit_square()),
                                       (RhsSpec.envelope(3, 1, 5, 4, 0), disk((0, 0, 0), 1))])
def test_derivatives_against_finite_differences(spec, dom, rng):
    base = dom.boundary_points(5)[2]
    p = build_barrier(dom, spec, base)
    pts = dom.sample_interior(rng, 20)
    pts = pts[p.frame.forward(pts)[:, -1] > 0.05]
    for x in pts:
        y = p.frame.forward(x)
        in_frame = lambda yy: eval_W(p, p.frame.inverse(yy))
        g_fd, H_fd = fd_grad_hess(in_frame, y)
        g, H = eval_W_derivs(p, x)
        assert np.linalg.norm(g - g_fd) <= 1e-5 * np.linalg.norm(g)
        assert np.linalg.norm(H - H_fd) <= 1e-4 * np.linalg.norm(H)
        assert det_D2W(p, x) == pytest.approx(np.linalg.det(H), rel=1e-10)
        # rotated back to the original coordinates
        gg, HH = to_global(p, g, H)
        g_x, H_x = fd_grad_hess(lambda xx: eval_W(p, xx), x)
        assert np.linalg.norm(gg - g_x) <= 1e-5 * np.linalg.norm(gg)
        assert np.linalg.norm(HH - H_x) <= 1e-4 * np.linalg.norm(HH)


def test_planar_det_equals_2x2_minor(rng):
    p = _south(build_barrier(D, RhsSpec.envelope(2, 1, 0, 3, 0)))
    pts = D.sample_interior(rng, 50)
    _, H = eval_W_derivs(p, pts)
    minor = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] ** 2
    np.testing.assert_allclose(det_D2W(p, pts), minor, rtol=1e-12)


@pytest.mark.parametrize("spec", [RhsSpec.envelope(2, 1, 0, 3, 0), RhsSpec.hilbert(2)])
def test_verify_subsolution_passes(spec):
    p = build_barrier(D, spec, (0, -1))
    rep = verify_subsolution(p, spec, D, 10_000)
    assert rep.passed and rep.min_ratio > 1
    assert rep.to_dict()["constants"]["M0"] == p.M0


def test_corrupted_amplitude_fails():
    spec = RhsSpec.envelope(2, 1, 0, 3, 0)
    p = build_barrier(D, spec, (0, -1))
    weak = replace(p, M0=p.M0 / 4)
    rep = verify_subsolution(weak, spec, D, 10_000)
    assert not rep.passed


def test_perron_envelope_vanishes_at_base_points():
    spec = RhsSpec.envelope(2, 1, 0, 3, 0)
    env = perron_lower_envelope(D, spec, 16)
    np.testing.assert_allclose(env(env.base_points), 0.0, atol=1e-12)
    single = perron_lower_envelope(D, spec, 1)
    fr = single.members[0]
    pts = D.sample_interior(np.random.default_rng(3), 100)
    np.testing.assert_array_equal(single(pts), eval_W(fr, pts))
    # centre sits at depth 1 for every member
    assert env(np.zeros(2)) == pytest.approx(-8 * math.sqrt(16.0))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 24), st.integers(0, 1000))
def test_perron_envelope_nonpositive(count, seed):
    env = perron_lower_envelope(D, RhsSpec.hilbert(2), count)
    pts = D.sample_interior(np.random.default_rng(seed), 50)
    assert np.all(env(pts) <= 0)
