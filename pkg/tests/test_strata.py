import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracstrat.frequency import PolynomialField
from fracstrat.polynomials import exact, lift_to_symmetric, model_poly
from fracstrat.strata import (SetGeometry, boundary_split, compute_stratum_defects, effective_cover, extract_critical,
                              extract_nodal, extract_singular, greedy_vitali_count, hausdorff_estimate,
                              quantitative_stratum, resolution_floor, sample_box, tube_volume, unit_ball_volume)


def quad(coeffs):
    """f = sum c_i x_i^2 with its gradient."""
    c = np.asarray(coeffs, dtype=float)
    return (lambda p: np.sum(c * p ** 2, axis=-1)), (lambda p: 2 * c * p)


def lifted(d, a=0.0, m=3):
    return PolynomialField(lift_to_symmetric(model_poly(d, exact(a)), m), a)


# nodal sets

@pytest.mark.parametrize("dim", [2, 3])
def test_nodal_measure_of_hyperplane(dim):
    S = sample_box(lambda p: p[..., 0] + 0.013, None, dim, 1.1, 1 / 64)
    Z = extract_nodal(S, window_radius=1.0)
    assert Z.measure == pytest.approx(unit_ball_volume(dim - 1), rel=0.02)


def test_nodal_measure_of_crossing_lines():
    f, g = quad([1, -1])
    Z = extract_nodal(sample_box(f, g, 2, 1.1, 1 / 64), window_radius=1.0)
    assert Z.measure == pytest.approx(4.0, rel=0.02)


def test_nodal_set_of_constant_is_empty():
    Z = extract_nodal(sample_box(lambda p: np.ones(p.shape[:-1]), None, 2, 0.5, 1 / 16))
    assert Z.geometry.is_empty and Z.measure == 0


# critical and singular sets

def test_saddle_has_one_critical_cluster():
    f, g = quad([1, -1])
    C = extract_critical(sample_box(f, g, 2, 0.5, 1 / 32), certificate="miranda")
    assert C.clusters == 1
    assert np.linalg.norm(C.geometry.points, axis=1).max() <= 2 / 32


def test_parabolic_cylinder_has_critical_sheet():
    f, g = quad([1, 0])
    C = extract_critical(sample_box(f, g, 2, 0.5, 1 / 32), tau=0.1)
    pts = C.geometry.points
    assert np.abs(pts[:, 0]).max() <= 1 / 32
    assert np.ptp(pts[:, 1]) >= 0.9


def test_degree_three_critical_clusters_match_algebra():
    # the 2-D degree-3 member has an isolated critical point at 0 only
    P = model_poly(3, exact(0.0))
    C = extract_critical(sample_box(P, P.gradient, 2, 0.5, 1 / 32))
    assert C.clusters == 1


def test_tau_below_floor_is_rejected():
    f, g = quad([1, -1])
    S = sample_box(f, g, 2, 0.5, 1 / 16)
    with pytest.raises(ValueError):
        extract_critical(S, tau=0.5 * resolution_floor(S))
    with pytest.raises(ValueError):
        extract_critical(S, certificate="guess")


def test_singular_cells_include_even_order_zeros():
    # shift the nodes off x1 = 0 so no corner value is exactly zero
    f, g = quad([1, 0])
    Sg = extract_singular(sample_box(f, g, 2, 0.5, 1 / 32, center=[1 / 96, 0.0]), tau=0.1)
    assert len(Sg.cells) > 0
    assert all(c == "touch-bound" for c in Sg.certificates)
    f1, g1 = (lambda p: 1 + p[..., 0] ** 2), (lambda p: np.stack([2 * p[..., 0], 0 * p[..., 1]], -1))
    assert len(extract_singular(sample_box(f1, g1, 2, 0.5, 1 / 32), tau=0.1).cells) == 0


def test_extraction_is_deterministic():
    f, g = quad([1, -1])
    S = sample_box(f, g, 2, 0.5, 1 / 32)
    a, b = extract_nodal(S), extract_nodal(S)
    np.testing.assert_array_equal(a.cells, b.cells)
    assert a.measure == b.measure


# distances, tubes and content

def test_distance_to_primitives():
    G = SetGeometry(3, points=np.array([[1.0, 0, 0]]), segments=np.array([[[0, 0, 0], [0, 1.0, 0]]]),
                    triangles=np.array([[[0, 0, 1.0], [1, 0, 1], [0, 1, 1]]]))
    q = np.array([[1.0, 0, 0.2], [0, 2.0, 0], [0.2, 0.2, 1.5], [-1.0, 0.5, 0]])
    np.testing.assert_allclose(G.distance(q), [0.2, 1.0, 0.5, 1.0], atol=1e-12)


def test_tube_volume_of_point():
    G = SetGeometry(2, points=np.zeros((1, 2)))
    radii = np.geomspace(8 / 128, 0.2, 6)
    curve = tube_volume(G, radii, voxel=1 / 256, window_radius=0.5)
    np.testing.assert_allclose(curve.volumes, np.pi * radii ** 2, rtol=0.05)
    assert curve.exponent == pytest.approx(2.0, abs=0.1)


def test_tube_volume_of_segment_and_plane():
    seg = SetGeometry(2, segments=np.array([[[-1.0, 0.1], [1.0, -0.1]]]))
    assert tube_volume(seg, np.geomspace(0.02, 0.2, 6)).exponent == pytest.approx(1.0, abs=0.1)
    plane = SetGeometry(3, triangles=np.array([[[-1, -1, 0], [1, -1, 0], [-1, 1, 0]],
                                               [[1, 1, 0], [1, -1, 0], [-1, 1, 0.0]]]))
    # radii small against the window so the ball's curvature does not bias the slope
    curve = tube_volume(plane, np.geomspace(1 / 32, 0.1, 5), voxel=1 / 96)
    assert curve.exponent == pytest.approx(1.0, abs=0.1)


def test_tube_volume_errors():
    G = SetGeometry(2, points=np.zeros((1, 2)))
    with pytest.raises(ValueError):
        tube_volume(G, [1 / 512, 0.1])
    with pytest.raises(ValueError):
        tube_volume(SetGeometry(2), [0.1, 0.2])


@settings(max_examples=20, deadline=None)
@given(pts=st.lists(st.tuples(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4)), min_size=1, max_size=6),
       radii=st.lists(st.floats(0.04, 0.3), min_size=2, max_size=5))
def test_tube_volume_nondecreasing(pts, radii):
    G = SetGeometry(2, points=np.array(pts))
    curve = tube_volume(G, sorted(set(radii)) if len(set(radii)) > 1 else [0.04, 0.3], voxel=1 / 64)
    assert np.all(np.diff(curve.volumes) >= 0)


def test_hausdorff_content():
    seg = SetGeometry(2, segments=np.array([[[0.0, 0.0], [1.0, 0.0]]]))
    est = hausdorff_estimate(seg, 1, [0.1, 0.05, 0.02, 0.01])
    assert est.is_plateau and est.plateau == pytest.approx(1.0, rel=0.1)
    pt = SetGeometry(2, points=np.zeros((1, 2)))
    assert hausdorff_estimate(pt, 1, [0.1, 0.01, 0.001]).contents[-1] < 0.01
    assert hausdorff_estimate(pt, 0, [0.1, 0.01]).plateau == pytest.approx(1.0)


def test_greedy_vitali_is_order_independent():
    rng = np.random.default_rng(1)
    P = rng.uniform(size=(200, 2))
    assert greedy_vitali_count(P, 0.1) == greedy_vitali_count(P[::-1], 0.1)


# strata and covers

@pytest.fixture(scope="module")
def deg2_defects():
    U = lifted(2)
    rng = np.random.default_rng(5)
    samples = np.vstack([[0.0, 0.0], [0.0, 0.3], rng.uniform(-0.3, 0.3, (6, 2))])
    return U, compute_stratum_defects(U, samples, [0.4, 0.2, 0.1], d_max=3)


def test_stratum_of_lifted_member(deg2_defects):
    U, D = deg2_defects
    S1 = quantitative_stratum(U, 1, 0.1, 0.1, defects=D)
    # within distance r of the invariant line x1 = 0, including the line itself
    assert np.abs(S1[:, 0]).max() <= 0.1
    assert {(0.0, 0.0), (0.0, 0.3)} <= {tuple(p) for p in S1}
    S0 = quantitative_stratum(U, 0, 0.1, 0.1, defects=D)
    assert len(S0) == 0


@settings(max_examples=25, deadline=None)
@given(eps=st.floats(1e-3, 0.5), shrink=st.floats(0.1, 1.0), k=st.integers(0, 1), ridx=st.integers(0, 2))
def test_stratum_inclusions(deg2_defects, eps, shrink, k, ridx):
    _, D = deg2_defects
    r = D.radii[ridx]
    base = D.stratum_mask(k, eps, r)
    assert np.all(D.stratum_mask(k + 1, eps, r)[base])
    assert np.all(D.stratum_mask(k, eps * shrink, r)[base])
    if ridx > 0:
        assert np.all(D.stratum_mask(k, eps, D.radii[ridx - 1])[base])


def test_linear_member_has_empty_low_strata():
    U = lifted(1)
    samples = np.array([[0.0, 0.0], [0.2, -0.1]])
    D = compute_stratum_defects(U, samples, [0.4, 0.2], d_max=2)
    for k in range(U.m - 1):
        assert len(quantitative_stratum(U, k, 1e-6, 0.2, defects=D)) == 0


def test_cover_of_singleton_stratum():
    U = lifted(2)
    samples = np.zeros((1, 2))
    leaves = [effective_cover(U, 0, 0.1, 0.25, j, samples, root_radius=0.5, d_max=3).leaf_count for j in (2, 4)]
    assert max(leaves) <= 4
    cov = effective_cover(U, 0, 0.1, 0.25, 3, samples, root_radius=0.5, d_max=3)
    assert cov.coverage() == 1.0
    assert cov.leaf_count <= cov.leaf_bound()


def test_boundary_split():
    f2 = lambda p: p[..., 0] ** 2 - p[..., 1] ** 2
    res = boundary_split(f2, np.zeros((1, 2)))
    assert len(res.horizontal) == 1 and res.ratios[0] < 1e-3
    f1 = lambda p: p[..., 0] ** 2
    res = boundary_split(f1, np.array([[0.0, 0.2], [0.0, -0.3]]))
    assert len(res.vertical) == 2 and np.all(res.degrees == 2)
