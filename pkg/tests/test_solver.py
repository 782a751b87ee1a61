import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.special import gamma as gamma_fn

from fracstrat.experiments import closed_form_errors, symbol_error
from fracstrat.geometry import GeometryError, WeightedGrid, d_gamma, quadratic_conformal_chart
from fracstrat.solver import (ExtensionProblem, SolverError, assemble, export_trace_rows, frac_laplacian_extension,
                              frac_laplacian_pv, interior_residual, neumann_trace, node_points, pcg, solve_perturbed,
                              solve_problem)


def special(a):
    return lambda p: p[..., 0] ** 2 - p[..., -1] ** 2 / (1 + a)


@pytest.mark.parametrize("a", [-0.5, 0.0, 0.5, 0.9])
def test_inserted_exact_solution_residual_converges(a):
    # measured on a fixed subregion away from y = 0 and the top face
    res = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        grid = WeightedGrid(1, h, 1.0, 1.0, a)
        pb = ExtensionProblem(grid, (1 - a) / 2, boundary_data=lambda x: x[..., 0] ** 2, top="dirichlet",
                              boundary_values=special(a))
        pts = node_points(grid)
        r = interior_residual(assemble(pb), special(a)(pts))
        inside = (pts[..., 1] >= 0.25) & (pts[..., 1] <= 0.75) & (np.abs(pts[..., 0]) <= 0.5)
        res.append(np.abs(r[inside]).max())
    if a == 0.0:
        # the stencil is exact on quadratics when the weight is constant
        assert max(res) < 1e-10
    else:
        orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
        assert orders.min() >= 1.8


@pytest.mark.parametrize("a", [-0.5, 0.5])
def test_closed_form_recovery_is_second_order(a):
    errs = closed_form_errors(a, (1 / 8, 1 / 16, 1 / 32))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.8


@pytest.mark.parametrize("gamma", [0.25, 0.5, 0.75])
def test_trace_of_special_solution_vanishes_inside(gamma):
    a = 1 - 2 * gamma
    h = 1 / 32
    grid = WeightedGrid(1, h, 1.0, 1.0, a)
    vals, sol, tr = frac_laplacian_extension(lambda x: x[..., 0] ** 2, gamma, grid, top="dirichlet",
                                             boundary_values=special(a))
    inner = np.abs(grid.x_nodes()) <= 0.5
    assert np.abs(vals[inner]).max() <= 3 * h ** 2 * abs(d_gamma(gamma) / (2 * gamma))
    assert tr.branch == "flux"


def test_sine_symbol():
    assert symbol_error(h=1 / 64) <= 0.02


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_pv_route_on_gaussian(s):
    # (-Lap)^s exp(-x^2/2) at 0 = 2^s Gamma(s + 1/2) / sqrt(pi)
    f = lambda p: np.exp(-np.sum(np.asarray(p) ** 2, axis=-1) / 2)
    want = 2 ** s * gamma_fn(s + 0.5) / np.sqrt(np.pi)
    got = frac_laplacian_pv(f, s, [0.0], far_field_mean=0.0, truncation_radius=12.0)
    assert got == pytest.approx(want, rel=1e-3)


def test_pv_needs_far_field_information():
    with pytest.raises(ValueError):
        frac_laplacian_pv(lambda p: 0 * p[..., 0], 0.5, [0.0])


def test_trace_methods_agree_for_positive_a():
    a = 0.5
    grid = WeightedGrid(1, 1 / 32, 1.0, 1.0, a)
    pb = ExtensionProblem(grid, 0.25, boundary_data=lambda x: np.cos(np.pi * x[..., 0] / 2), top="dirichlet")
    sol = solve_problem(pb)
    flux = neumann_trace(sol, "flux").values
    fit = neumann_trace(sol, "fit")
    assert fit.branch == "profile-fit"
    inner = np.abs(grid.x_nodes()) <= 0.5
    assert np.abs(flux[inner] - fit.values[inner]).max() < 0.05 * np.abs(flux[inner]).max()
    with pytest.raises(ValueError):
        neumann_trace(sol, "spline")


def test_even_bottom_has_zero_trace_and_reflects():
    grid = WeightedGrid(1, 1 / 16, 1.0, 1.0, 0.0)
    pb = ExtensionProblem(grid, 0.5, bottom="even", top="dirichlet",
                          boundary_values=lambda p: p[..., 0] ** 2 - p[..., 1] ** 2)
    sol = solve_problem(pb)
    assert np.all(neumann_trace(sol).values == 0)
    D = sol.doubled_values()
    np.testing.assert_array_equal(D, D[::-1])
    exact = node_points(grid)
    assert np.abs(sol.values - (exact[..., 0] ** 2 - exact[..., 1] ** 2)).max() < 1e-3


def test_perturbed_chart_stays_close_to_flat():
    grid = WeightedGrid(2, 1 / 8, 1.0, 1.0, 0.0)
    f = lambda x: x[..., 0] * x[..., 1]
    flat = solve_problem(ExtensionProblem(grid, 0.5, boundary_data=f))
    pert = solve_perturbed(ExtensionProblem(grid, 0.5, boundary_data=f, chart=quadratic_conformal_chart(3, 1e-3)))
    assert np.abs(flat.values - pert.values).max() < 1e-2
    with pytest.raises(ValueError):
        solve_perturbed(ExtensionProblem(grid, 0.5, boundary_data=f))


def test_problem_validation():
    grid = WeightedGrid(1, 1 / 8, 1.0, 1.0, 0.0)
    with pytest.raises(GeometryError):
        ExtensionProblem(grid, 0.25)
    with pytest.raises(GeometryError):
        ExtensionProblem(grid, 1.5)
    with pytest.raises(ValueError):
        ExtensionProblem(grid, 0.5, bottom="odd")
    with pytest.raises(ValueError):
        ExtensionProblem(grid, 0.5, boundary_data=np.zeros(3))
    with pytest.raises(ValueError):
        ExtensionProblem(grid, 0.5, boundary_data=lambda x: np.full(x.shape[:-1], np.nan))


def test_pcg_matches_direct_solve_and_reports_failure():
    n = 50
    A = sp.diags([-np.ones(n - 1), 2.5 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")
    b = np.arange(n, dtype=float)
    x, its, hist = pcg(A, b, tol=1e-12)
    np.testing.assert_allclose(A @ x, b, atol=1e-9)
    assert hist[-1] <= 1e-12 and its == len(hist) - 1
    with pytest.raises(SolverError):
        pcg(A, b, tol=1e-14, max_iter=2)
    with pytest.raises(SolverError):
        pcg(sp.diags([-np.ones(n)], [0], format="csr"), b)


def test_trace_rows_layout():
    grid = WeightedGrid(1, 1 / 8, 1.0, 1.0, 0.0)
    vals, sol, tr = frac_laplacian_extension(lambda x: x[..., 0] ** 2, 0.5, grid)
    rows = export_trace_rows(sol, tr, 0.5)
    assert rows.shape == (grid.nx, 4)
    np.testing.assert_allclose(rows[:, 3], vals)


@settings(max_examples=10, deadline=None)
@given(c=st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3), gamma=st.sampled_from([0.25, 0.5, 0.75]))
def test_solution_is_linear_in_data(c, gamma):
    grid = WeightedGrid(1, 1 / 8, 1.0, 1.0, 1 - 2 * gamma)
    f = lambda x: np.cos(x[..., 0]) + x[..., 0]
    v1, _, _ = frac_laplacian_extension(f, gamma, grid)
    v2, _, _ = frac_laplacian_extension(lambda x: c * f(x), gamma, grid)
    np.testing.assert_allclose(v2, c * v1, rtol=1e-7, atol=1e-8 * abs(c))
