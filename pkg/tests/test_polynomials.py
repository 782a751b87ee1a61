from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracstrat.geometry import sphere_area, unit_sphere_rule
from fracstrat.polynomials import (HomogeneousSolution, Polynomial, cone_splitting_check, count_real_roots, exact,
                                   harmonic_basis_dimension, harmonic_boundary_basis, isolated_critical_origin,
                                   lift_to_symmetric, model_poly, odd_model_poly, even_model_poly, solution_space,
                                   solution_space_dim, verify_weighted_harmonic, weighted_residual)
from fracstrat.strata import critical_count_near_model

A_VALUES = (-0.9, -0.5, 0.0, 0.5, 0.9)


def poly(nvars, items):
    return Polynomial.from_terms(nvars, [(e, Fraction(c)) for e, c in items])


def ratio_to(P: Polynomial, Q: Polynomial):
    """The constant c with P == c Q, or None."""
    if set(P.terms) != set(Q.terms):
        return None
    ratios = {P.terms[e] / Q.terms[e] for e in P.terms}
    return ratios.pop() if len(ratios) == 1 else None


# family members

def test_degree_zero_and_one():
    assert set(model_poly(0, 0).poly.terms) == {(0, 0)}
    assert set(odd_model_poly(1, exact(0.5)).poly.terms) == {(1, 0)}


@pytest.mark.parametrize("a", A_VALUES)
def test_degree_two_is_the_special_solution(a):
    af = exact(a)
    ref = poly(2, [((2, 0), 1), ((0, 2), -1 / (1 + af))])
    assert ratio_to(even_model_poly(2, af).poly, ref) is not None


def test_unweighted_members_are_classical():
    assert ratio_to(even_model_poly(2, 0).poly, poly(2, [((2, 0), 1), ((0, 2), -1)])) is not None
    assert ratio_to(odd_model_poly(3, 0).poly, poly(2, [((3, 0), 1), ((1, 2), -3)])) is not None


@pytest.mark.parametrize("k", range(0, 9))
def test_unweighted_members_match_real_or_imaginary_parts(k):
    # harmonic in (x, y) and even in y: Re (y + i x)^k up to sign/scale
    P = model_poly(k, 0).poly
    coeffs = {}
    for j in range(k + 1):
        # (y + i x)^k = sum C(k,j) y^{k-j} (i x)^j
        c = comb(k, j) * (1j ** j)
        coeffs[(j, k - j)] = c
    part = "real" if k % 2 == 0 else "imag"
    ref = poly(2, [(e, int(round(c.real if part == "real" else c.imag))) for e, c in coeffs.items()
                   if round(c.real if part == "real" else c.imag) != 0])
    assert ratio_to(P, ref) is not None


@pytest.mark.parametrize("a", A_VALUES)
@pytest.mark.parametrize("d", range(0, 9))
def test_every_member_has_zero_residual(a, d):
    P = model_poly(d, exact(a))
    assert verify_weighted_harmonic(P).is_zero
    for m in (3, 4):
        assert verify_weighted_harmonic(lift_to_symmetric(P, m)).is_zero


def test_family_parity_errors():
    with pytest.raises(ValueError):
        even_model_poly(3, 0)
    with pytest.raises(ValueError):
        odd_model_poly(2, 0)


def test_members_are_normalised():
    for d, a in [(2, 0.5), (3, -0.5), (4, 0.0)]:
        P = model_poly(d, exact(a))
        pts, w = unit_sphere_rule(2, a, 2 * d + 2)
        assert np.dot(w, P(pts) ** 2) / sphere_area(2) == pytest.approx(1.0, rel=1e-12)


def test_lift_of_linear_member():
    L = lift_to_symmetric(model_poly(1, 0), 3)
    assert set(L.poly.terms) == {(1, 0, 0)}
    assert L.symmetry_rank >= 1


def test_lift_normalisation_against_monte_carlo():
    a = 0.5
    P2 = model_poly(2, exact(a))
    P3 = lift_to_symmetric(P2, 3)
    rng = np.random.default_rng(7)
    x = rng.normal(size=(400_000, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    mc = np.mean(np.abs(x[:, 2]) ** a * P3(x) ** 2)
    assert mc == pytest.approx(1.0, rel=1e-2)
    assert P3.symmetry_rank == 1


def test_lift_requires_two_variables():
    with pytest.raises(ValueError):
        lift_to_symmetric(lift_to_symmetric(model_poly(2, 0), 3), 4)


# residual operator

def test_residual_of_special_solution_and_counterexample():
    a = Fraction(1, 3)
    special = HomogeneousSolution(poly(2, [((2, 0), 1), ((0, 2), -1 / (1 + a))]), 2, a)
    assert verify_weighted_harmonic(special).is_zero
    bad = HomogeneousSolution(poly(2, [((2, 0), 1), ((0, 2), 1)]), 2, a)
    res = verify_weighted_harmonic(bad)
    assert res.terms == {(0, 1): 4 + 2 * a}


def test_residual_rejects_non_polynomial_input():
    with pytest.raises(TypeError):
        verify_weighted_harmonic(lambda p: p[..., 1] ** 0.5)
    with pytest.raises(ValueError):
        verify_weighted_harmonic(HomogeneousSolution(poly(2, [((0, 1), 1)]), 1, Fraction(0)))


@pytest.mark.parametrize("n,d", [(1, 3), (2, 2), (2, 4), (3, 3)])
def test_solution_space(n, d):
    a = Fraction(-1, 4)
    space = solution_space(n, d, a)
    assert len(space) == solution_space_dim(n, d)
    for P in space:
        assert weighted_residual(P, a).is_zero
        assert P.is_homogeneous() and P.is_even_in(n)


@settings(max_examples=40, deadline=None)
@given(d=st.integers(0, 6), num=st.integers(-9, 9), lam=st.fractions(min_value=-3, max_value=3))
def test_members_are_homogeneous_and_exact(d, num, lam):
    a = Fraction(num, 10)
    P = model_poly(d, a).poly
    assert P.is_exact() and P.is_homogeneous()
    # P(lam x, lam y) = lam^d P(x, y), coefficient by coefficient
    scaled = Polynomial(2, {e: c * lam ** sum(e) for e, c in P.terms.items() if c * lam ** sum(e) != 0})
    assert scaled.terms == P.scaled(lam ** d).terms


# boundary harmonic basis

@pytest.mark.parametrize("n,d,dim", [(2, 2, 2), (3, 2, 5), (3, 3, 7), (1, 1, 1), (2, 0, 1)])
def test_harmonic_basis(n, d, dim):
    basis = harmonic_boundary_basis(n, d)
    assert len(basis) == dim == harmonic_basis_dimension(n, d)
    if n >= 2:
        pts, w = unit_sphere_rule(n, 0.0, 2 * d + 2)
        V = np.stack([b(pts) for b in basis], axis=1)
        np.testing.assert_allclose((V * w[:, None]).T @ V / sphere_area(n), np.eye(dim), atol=1e-10)
        for b in basis:
            assert b.poly.laplacian().max_abs_coeff() < 1e-10


# cone splitting

def test_cone_split_degenerate_point_in_subspace():
    P = poly(3, [((2, 0, 0), 1), ((0, 2, 0), -1)])
    res = cone_splitting_check(P, [[0, 0, 1]], [0, 0, 2])
    assert res.degenerate and not res.holds


def test_cone_split_enlarges_rank():
    P = poly(3, [((2, 0, 0), 1)])
    res = cone_splitting_check(P, [], [0, 1, 0])
    assert res.holds and res.rank == 1
    res2 = cone_splitting_check(P, [[0, 1, 0]], [0, 0, 1])
    assert res2.holds and res2.rank == 2


def test_cone_split_witness():
    P = poly(2, [((2, 0), 1), ((0, 2), -1)])
    res = cone_splitting_check(P, [], [1, 0])
    assert not res.holds and res.witness is not None


def test_linear_polynomial_has_full_minus_one_symmetry():
    P = model_poly(1, Fraction(1, 2))
    L = lift_to_symmetric(P, 4)
    assert L.symmetry_rank == 3


# critical points

@pytest.mark.parametrize("k,a", [(2, 0.3), (4, 0.0), (6, -0.5), (6, 0.5), (5, 0.9), (8, -0.9)])
def test_isolated_critical_origin(k, a):
    assert isolated_critical_origin(model_poly(k, exact(a)))


def test_isolated_critical_detects_degenerate_polynomial():
    P = HomogeneousSolution(poly(2, [((2, 0), 1)]), 2, Fraction(0))
    assert not isolated_critical_origin(P)
    with pytest.raises(ValueError):
        isolated_critical_origin(model_poly(1, 0))


def test_sturm_root_count():
    # (t - 1)(t + 2)(t^2 + 1), coefficients low to high
    p = [Fraction(c) for c in (-2, 1, -1, 1, 1)]
    assert count_real_roots(p) == 2


def test_critical_count_of_model_and_constant_shift():
    P = lift_to_symmetric(model_poly(2, exact(0.0)), 3)
    base = critical_count_near_model(P, P, r=0.5, h=1 / 32)
    assert base.total == 1

    class Shifted:
        m = 3

        def __call__(self, p):
            return P(p) + 1e-3

        def gradient(self, p):
            return P.gradient(p)

    assert critical_count_near_model(Shifted(), P, r=0.5, h=1 / 32).per_plane == base.per_plane
