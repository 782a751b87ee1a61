import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from fracstrat.experiments import solve_corpus_field, random_polynomial
from fracstrat.frequency import (CallableField, FitSpaceEmpty, GridField, PolynomialField, SumField,
                                 almost_monotonicity_fit, classify_scales, doubling_report, frequency,
                                 frequency_profile, functional_H, monotonicity_report,
                                 poincare_trace_ratio, rescale_field, small_frequency_screen,
                                 sphere_mean_identity_residual, symmetry_defect, symmetry_defects, tangent_map)
from fracstrat.geometry import GeometryError
from fracstrat.polynomials import exact, extension_of_monomial, lift_to_symmetric, model_poly


def member(d, a, m=2):
    P = model_poly(d, exact(a))
    return P if m == 2 else lift_to_symmetric(P, m)


def constant_field(m, a, c=1.0):
    return CallableField(lambda p: np.full(p.shape[:-1], c), lambda p: np.zeros(p.shape), m, a)


@pytest.fixture(scope="module")
def solved():
    rng = np.random.default_rng(3)
    data = random_polynomial(2, 3, rng)
    return GridField(solve_corpus_field(data, 0.0, 1 / 32))


# functionals

@pytest.mark.parametrize("a", [-0.5, 0.0, 0.5])
def test_unnormalised_H_of_constant(a):
    U = constant_field(2, a)
    assert functional_H(U, 0, 1.0, model=False) == pytest.approx(2 * special.beta((1 + a) / 2, 0.5), rel=1e-12)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_linear_member_has_unit_frequency(m):
    U = PolynomialField(member(1, 0.0, m), 0.0)
    for r in (0.1, 0.5, 1.0):
        assert frequency(U, 0, r) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
@pytest.mark.parametrize("a", [-0.5, 0.5])
def test_homogeneous_member_profile_is_constant(d, a):
    prof = frequency_profile(PolynomialField(member(d, a, 3), a), 0, 0.8, 0.5, 6)
    np.testing.assert_allclose(prof.N, d, atol=1e-6)
    assert monotonicity_report(prof, tol=1e-8).ok
    assert almost_monotonicity_fit(prof).C <= 1e-8


def test_normalised_profile_removes_constant():
    U = PolynomialField(member(2, 0.25), 0.25, offset=1.0)
    prof = frequency_profile(U, 0, 0.8, 0.5, 5, normalized=True)
    np.testing.assert_allclose(prof.N, 2, atol=1e-6)
    assert frequency_profile(U, 0, 0.8, 0.5, 5).N.max() < 2


def test_solved_field_profile(solved):
    prof = frequency_profile(solved, 0, 0.5)
    assert np.all(prof.H > 0) and np.all(np.isfinite(prof.N))
    assert prof.radii.min() >= 10 * solved.h * (1 - 1e-12)
    assert monotonicity_report(prof, tol=1e-3).ok


def test_profile_needs_resolved_scale(solved):
    with pytest.raises(GeometryError):
        frequency_profile(solved, 0, 0.2, 0.5, 3, min_cells=100)
    with pytest.raises(GeometryError):
        functional_H(solved, 0, 5.0)


def test_monotonicity_detector_flags_swapped_entries():
    prof = frequency_profile(PolynomialField(member(2, 0.0), 0.0), 0, 0.8, 0.5, 4)
    I = prof.I.copy()
    I[[1, 2]] = I[[2, 1]] * np.array([1.5, 1.0])
    bad = dataclasses.replace(prof, I=I)
    assert len(monotonicity_report(bad, tol=1e-8).violations) == 1


# doubling

@pytest.mark.parametrize("d", [0, 1, 2, 3])
def test_doubling_ratio_of_members(d):
    U = PolynomialField(member(d, 0.5, 2), 0.5) if d else constant_field(2, 0.5)
    prof = frequency_profile(U, 0, 0.8, 0.5, 5)
    rep = doubling_report(prof, U)
    np.testing.assert_allclose(rep.ratios, 4.0 ** d, rtol=1e-10)
    if d:
        assert rep.identity_residuals.max() <= 1e-4


def test_identity_residual_of_unnormalised_functional():
    U = PolynomialField(member(2, -0.5, 3), -0.5)
    prof = frequency_profile(U, 0, 0.8, 0.5, 4, model=False)
    assert doubling_report(prof, U).identity_residuals.max() <= 1e-4


def test_sphere_mean_identity(solved):
    for r in (0.2, 0.4):
        assert sphere_mean_identity_residual(solved, 0, r) <= 1e-4


# rescaling

@settings(max_examples=20, deadline=None)
@given(t=st.floats(0.2, 2.0), r=st.floats(0.05, 0.4), d=st.integers(1, 4))
def test_frequency_is_scale_invariant(t, r, d):
    U = PolynomialField(member(d, 0.3, 3), 0.3)
    x = np.array([0.1, -0.05])
    V = rescale_field(U, x, t)
    assert frequency(V, 0, r / t) == pytest.approx(frequency(U, x, r), rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(0.1, 10.0), r=st.floats(0.1, 0.9), seed=st.integers(0, 1000))
def test_poincare_ratio_invariant_under_scaling(c, r, seed):
    P = random_polynomial(3, 3, np.random.default_rng(seed))
    U = PolynomialField(P, 0.2)
    V = PolynomialField(P, 0.2, scale=c)
    assert poincare_trace_ratio(V, 0, r) == pytest.approx(poincare_trace_ratio(U, 0, r), rel=1e-10)


def test_poincare_ratio_of_constant():
    a, r = 0.5, 0.7
    ratio = poincare_trace_ratio(constant_field(2, a), 0, r)
    sphere = 2 * special.beta((1 + a) / 2, 0.5)
    assert ratio == pytest.approx(sphere / (2 + a) * r ** (2 + a) / (r * sphere * r ** (1 + a)), rel=1e-12)


# tangent maps and defects

def test_tangent_map_fixed_point_and_constant():
    P = member(3, 0.5)
    U = PolynomialField(P, 0.5)
    tm = tangent_map(U, 0, 0.3)
    pts = np.random.default_rng(0).uniform(-0.7, 0.7, (20, 2))
    np.testing.assert_allclose(tm.field.value(pts), P(pts), rtol=1e-10, atol=1e-12)
    assert tangent_map(constant_field(2, 0.5, 3.0), 0, 0.3).status == "constant"


def test_tangent_map_of_affine_field():
    U = CallableField(lambda p: 2 + 3 * p[..., 0],
                      lambda p: np.stack([3 + 0 * p[..., 0], 0 * p[..., 0]], -1), 2, 0.0)
    tm = tangent_map(U, 0, 0.5)
    pts = np.array([[0.3, 0.1], [-0.2, 0.4]])
    np.testing.assert_allclose(tm.field.value(pts), np.sqrt(2) * pts[:, 0], rtol=1e-12)


def test_defect_of_lifted_member():
    U = PolynomialField(member(2, 0.0, 3), 0.0)
    rep = symmetry_defect(U, 0, 0.4, 1, d_max=3)
    assert rep.defect <= 1e-6
    assert abs(abs(rep.subspace[0, 1]) - 1) <= 1e-6


def test_defect_grows_with_perturbation_squared():
    # a degree-3 member cannot be absorbed by rotating the invariant line;
    # the defect is a squared distance, so it scales like delta^2
    base = member(2, 0.0, 3)
    pert = extension_of_monomial((1, 2), 0)
    etas = []
    for delta in (0.1, 0.05):
        U = SumField([PolynomialField(base, 0.0), PolynomialField(pert, 0.0)], [1.0, delta])
        etas.append(symmetry_defect(U, 0, 0.4, 1, d_max=3).defect)
    assert etas[0] > 0 and etas[1] > 0
    assert etas[0] / etas[1] == pytest.approx(4.0, rel=0.2)


def test_nonlinear_member_is_far_from_top_symmetry():
    U = PolynomialField(member(2, 0.0, 3), 0.0)
    assert symmetry_defect(U, 0, 0.4, 2, d_max=3).defect > 0.1
    with pytest.raises(FitSpaceEmpty):
        symmetry_defect(U, 0, 0.4, 3)


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_defects_nondecreasing_in_k(seed):
    P = random_polynomial(3, 3, np.random.default_rng(seed))
    U = PolynomialField(P, 0.0)
    d = [r.defect for r in symmetry_defects(U, 0, 0.5, d_max=3)]
    assert all(d[k] <= d[k + 1] for k in range(len(d) - 1))


# scales and screens

def test_member_has_no_bad_scales():
    U = PolynomialField(member(2, 0.5, 2), 0.5)
    cl = classify_scales(U, 0, eps=1e-3, J=5, r_max=0.8)
    assert cl.bad_count == 0


def test_small_frequency_screen():
    U = PolynomialField(member(2, 0.0), 0.0, offset=1.0, scale=1e-3)
    res = small_frequency_screen(U, 0, 0.5)
    assert res.status == "confirmed" and res.margin > 0.99
    assert small_frequency_screen(PolynomialField(member(2, 0.0), 0.0), 0, 0.5).status == "above-threshold"
