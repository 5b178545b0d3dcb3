"""Polynomial, continuation and fixed-point kernel tests."""
from __future__ import annotations

import cmath
import math

import numpy as np
import pytest

from explat.core import (
    BranchPointOnPath,
    NonConvergence,
    PathSegment,
    Poly,
    continue_root,
    finite_diff_jacobian,
    fixed_point_solve,
    poly_roots,
)

RNG = np.random.default_rng(20260816)


def _elementary_symmetric(roots):
    """Coefficients of prod (z - r) via repeated convolution, ascending."""
    coeffs = np.array([1.0 + 0j])
    for r in roots:
        coeffs = np.convolve(coeffs, np.array([-r, 1.0 + 0j]))
    return coeffs


def test_poly_eval_and_degree():
    p = Poly((1, 0, 2))  # 1 + 2 z^2
    assert p.degree == 2
    assert p(2.0) == pytest.approx(9.0)
    assert p.deriv().coeffs == (0j, 4 + 0j)
    # trailing zero coefficients are stripped
    assert Poly((3, 1, 0, 0)).degree == 1


def test_poly_roots_vieta_degree7():
    # degree-7 poly with random coefficients in the unit disc; returned
    # roots must reproduce the coefficients through Vieta to 1e-8
    for _ in range(5):
        low = RNG.uniform(-1, 1, size=(7, 2))
        coeffs = tuple(complex(a, b) for a, b in low) + (1.0 + 0j,)
        p = Poly(coeffs)
        roots = poly_roots(p)
        assert len(roots) == 7
        rebuilt = _elementary_symmetric(roots)
        assert np.max(np.abs(rebuilt - np.array(coeffs))) < 1e-8


def test_poly_roots_sum_matches_trace():
    coeffs = (2 - 1j, 0.5j, -3.0, 1.0 + 1j, 2.0)
    p = Poly(coeffs)
    roots = poly_roots(p)
    assert sum(roots) == pytest.approx(-coeffs[3] / coeffs[4], abs=1e-8)


def test_poly_roots_triple_root_cluster():
    # (z-1)^3 = -1 + 3z - 3z^2 + z^3: repeated root reported three times
    p = Poly((-1, 3, -3, 1))
    roots = poly_roots(p)
    assert len(roots) == 3
    for r in roots:
        assert abs(r - 1.0) < 1e-4
    # with a cluster window wide enough for the root conditioning the
    # copies are averaged onto a single value
    coarse = poly_roots(p, tol=1e-6)
    assert len({r for r in coarse}) == 1
    assert abs(coarse[0] - 1.0) < 1e-5


def test_poly_roots_rejects_constant():
    with pytest.raises(ValueError):
        poly_roots(Poly((3.0,)))


def _sqrt_family(z):
    return Poly((-z, 0, 1))  # w^2 - z


def test_continue_root_sqrt_through_upper_half_plane():
    # w^2 = z, start at root +1 of z=1, walk 1 -> i -> -1; lands on i
    r = continue_root(_sqrt_family, PathSegment(1.0, 1j, 0.2), 1.0)
    r = continue_root(_sqrt_family, PathSegment(1j, -1.0, 0.2), r)
    assert abs(r - 1j) < 1e-10


def test_continue_root_reversal_identity():
    r = continue_root(_sqrt_family, PathSegment(1.0, 2.0 + 1j, 0.3), 1.0)
    back = continue_root(_sqrt_family, PathSegment(2.0 + 1j, 1.0, 0.3), r)
    assert abs(back - 1.0) < 1e-10


def test_continue_root_full_loop_flips_sqrt_branch():
    # square loop around 0 composes to the other branch of sqrt
    corners = [1.0, 1j, -1.0, -1j, 1.0]
    r = 1.0 + 0j
    for a, b in zip(corners, corners[1:]):
        r = continue_root(_sqrt_family, PathSegment(a, b, 0.2), r)
    assert abs(r + 1.0) < 1e-10


def test_continue_root_loop_off_discriminant_is_identity():
    # family w^2 - z has its only branch point at z=0; a loop not
    # enclosing it returns the starting root
    corners = [3.0, 3.0 + 1j, 4.0 + 1j, 4.0, 3.0]
    r = continue_root(_sqrt_family, PathSegment(3.0, 3.0, 0.2), cmath.sqrt(3))
    for a, b in zip(corners, corners[1:]):
        r = continue_root(_sqrt_family, PathSegment(a, b, 0.2), r)
    assert abs(r - cmath.sqrt(3)) < 1e-10


def test_continue_root_through_branch_point_raises():
    with pytest.raises(BranchPointOnPath):
        continue_root(_sqrt_family, PathSegment(1.0, -1.0, 0.2), 1.0)


def test_fixed_point_matches_independent_newton():
    # e^z = z near 2*pi*i*10: fixed point of z -> lam + Log z
    lam = 2j * math.pi * 10
    res = fixed_point_solve(lambda z: lam + np.log(z), np.array([lam]), tol=1e-13)
    z_star = complex(res.z[0])
    assert abs(cmath.exp(z_star) - z_star) < 1e-10
    # independent oracle: plain Newton on h(z) = e^z - z from the same seed
    w = lam + cmath.log(lam)
    for _ in range(60):
        w = w - (cmath.exp(w) - w) / (cmath.exp(w) - 1.0)
    assert abs(z_star - w) < 1e-9
    assert res.ratio < 0.5


def test_fixed_point_iteration_count_bound():
    # linear contraction with known ratio q: iteration count obeys
    # ceil(log(tol / |z1 - z0|) / log q) + 2
    q = 0.5
    tol = 1e-12
    res = fixed_point_solve(lambda z: q * z, np.array([1.0 + 0j]), tol=tol)
    first = 0.5  # |z1 - z0| for z0 = 1
    bound = math.ceil(math.log(tol / first) / math.log(q)) + 2
    assert res.iterations <= bound
    assert abs(res.ratio - q) < 1e-6


def test_fixed_point_divergence_raises():
    with pytest.raises(NonConvergence):
        fixed_point_solve(lambda z: 2.0 * z + 1.0, np.array([1.0 + 0j]), max_iter=200)


def test_finite_diff_jacobian_quadratic():
    f = lambda z: np.array([z[0] ** 2 + z[1], 3.0 * z[1] ** 2])
    z = np.array([1.0 + 1j, 2.0 - 0.5j])
    jac = finite_diff_jacobian(f, z, h=1e-6)
    expect = np.array([[2.0 * z[0], 1.0], [0.0, 6.0 * z[1]]])
    assert np.max(np.abs(jac - expect)) < 1e-7


def test_finite_diff_jacobian_log_map_two_step_sizes():
    # d/dz of Log z at a far sector point stays below 1/2 and the two
    # step sizes agree, confirming the O(h^2) behaviour
    z = np.array([200.0 * cmath.exp(0.9j)])
    f = lambda v: np.log(v)
    j1 = finite_diff_jacobian(f, z, h=1e-4)
    j2 = finite_diff_jacobian(f, z, h=5e-5)
    assert abs(j1[0, 0]) < 0.5
    assert abs(j1[0, 0] - j2[0, 0]) < 1e-10
    assert abs(j1[0, 0] - 1.0 / z[0]) < 1e-9
