"""Finite-volume solver for -div(rho^a grad U) + rho^a J U = rho^a F on a
weighted half box, Neumann-trace extraction, and the two fractional
Laplacian routes (extension and principal value).

Arrays on the half grid are y-major: ``values[j, i_1, ..., i_n]`` with row 0
the trace row at y = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi, roots_legendre

from .geometry import (GeometryError, MetricChart, WeightedGrid, c_n_gamma, d_gamma, flat_chart,
                       metric_scalar_curvature, pv_constant, sphere_area, unit_sphere_rule)


class SolverError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history if history is not None else []


@dataclass(frozen=True)
class ExtensionProblem:
    """Boundary value problem on the half box [-L, L]^n x [0, Y].

    bottom: ``dirichlet`` imposes U = f on y = 0; ``even`` imposes zero
    weighted flux there (the even extension is then a solution across y = 0).
    top: ``neumann`` (zero weighted flux) or ``dirichlet``.
    Lateral faces are Dirichlet unless the grid is periodic.  Dirichlet values
    come from ``boundary_values(points)`` or are zero.
    """

    grid: WeightedGrid
    gamma: float
    boundary_data: object = None
    chart: Optional[MetricChart] = None
    zeroth_order: bool = False
    bottom: str = "dirichlet"
    top: str = "neumann"
    boundary_values: Optional[Callable] = None
    source: Optional[Callable] = None

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise GeometryError("gamma must lie in (0, 1)")
        if abs(self.grid.a - (1.0 - 2.0 * self.gamma)) > 1e-12:
            raise GeometryError("grid weight exponent must equal 1 - 2 gamma")
        if self.bottom not in ("dirichlet", "even"):
            raise ValueError(f"unknown bottom condition {self.bottom!r}")
        if self.top not in ("neumann", "dirichlet"):
            raise ValueError(f"unknown top condition {self.top!r}")
        if self.bottom == "dirichlet":
            f = self.trace_values()
            if not np.all(np.isfinite(f)):
                raise ValueError("boundary data is not finite at every trace node")
        if self.chart is not None:
            if self.chart.m != self.grid.m:
                raise GeometryError("chart dimension does not match the grid")
            if not self.chart.diagonal:
                raise GeometryError("only diagonal metrics are supported by the flux discretisation")
            if self.chart.rho is not None:
                raise GeometryError("custom defining functions are not supported; the solver uses |y|")

    @property
    def a(self) -> float:
        return 1.0 - 2.0 * self.gamma

    @property
    def effective_chart(self) -> MetricChart:
        return self.chart if self.chart is not None else flat_chart(self.grid.m)

    def trace_values(self) -> np.ndarray:
        g = self.grid
        shape = (g.nx,) * g.n
        if self.boundary_data is None:
            return np.zeros(shape)
        if callable(self.boundary_data):
            xs = np.stack(np.meshgrid(*([g.x_nodes()] * g.n), indexing="ij"), axis=-1)
            return np.asarray(self.boundary_data(xs), dtype=float).reshape(shape)
        arr = np.asarray(self.boundary_data, dtype=float)
        if arr.shape != shape:
            raise ValueError(f"boundary data has shape {arr.shape}, expected {shape}")
        return arr


def node_points(grid: WeightedGrid) -> np.ndarray:
    """Coordinates of the half-grid nodes, shape grid-half-shape + (m,)."""
    axes = [grid.y_levels_half()] + [grid.x_nodes()] * grid.n
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh[1:] + mesh[:1], axis=-1)


def half_shape(grid: WeightedGrid) -> tuple:
    return (grid.ny_half + 1,) + (grid.nx,) * grid.n


@dataclass
class LinearSystem:
    problem: ExtensionProblem
    matrix: sp.csr_matrix
    rhs: np.ndarray
    unknown: np.ndarray          # boolean mask on the half grid
    fixed_values: np.ndarray     # half grid with Dirichlet data filled in
    faces: tuple                 # (p, q, c) into the extended value vector
    extra_values: np.ndarray     # Dirichlet values living off-grid (top face)
    mass: np.ndarray             # rho^a sqrt(g) cell measure per node (half grid)
    zeroth: np.ndarray           # J per node (zeros when disabled)

    def extended(self, values: np.ndarray) -> np.ndarray:
        return np.concatenate([values.ravel(), self.extra_values])


def _metric_factors(chart: MetricChart, pts: np.ndarray, axis: int) -> np.ndarray:
    """sqrt(det g) g^{axis,axis} at pts; ``axis`` counts coordinates (x..., y)."""
    if chart.is_flat:
        return np.ones(pts.shape[:-1])
    g = chart.metric(pts)
    diag = np.einsum("...ii->...i", g)
    if np.any(diag <= 0):
        raise GeometryError("metric is not positive definite at a face midpoint")
    return np.sqrt(np.prod(diag, axis=-1)) / diag[..., axis]


def _sqrt_det(chart: MetricChart, pts: np.ndarray) -> np.ndarray:
    if chart.is_flat:
        return np.ones(pts.shape[:-1])
    g = chart.metric(pts)
    return np.sqrt(np.prod(np.einsum("...ii->...i", g), axis=-1))


def assemble(problem: ExtensionProblem) -> LinearSystem:
    """Symmetric system of the flux-form discretisation.

    y-faces use the exact conductance of the one-dimensional profile
    y^a U_y = const between neighbouring levels; x-faces carry the exact
    integral of y^a over the cell height."""
    g = problem.grid
    chart = problem.effective_chart
    a = g.a
    n, h = g.n, g.h
    shape = half_shape(g)
    size = int(np.prod(shape))
    idx = np.arange(size).reshape(shape)
    pts = node_points(g)
    ylev = g.y_levels_half()
    W = g.cell_y_weight()  # per interior row
    aligned = g.layout == "aligned"

    unknown = np.zeros(shape, dtype=bool)
    unknown[1:] = True
    if not g.periodic:
        for ax in range(1, n + 1):
            sl = [slice(None)] * (n + 1)
            sl[ax] = 0
            unknown[tuple(sl)] = False
            sl[ax] = -1
            unknown[tuple(sl)] = False
    if problem.top == "dirichlet" and aligned:
        unknown[-1] = False

    fixed = np.zeros(shape)
    if problem.bottom == "dirichlet":
        fixed[0] = problem.trace_values()
    bv = problem.boundary_values
    bmask = ~unknown
    bmask[0] = False
    if bv is not None and np.any(bmask):
        fixed[bmask] = np.asarray(bv(pts[bmask]), dtype=float)

    P, Q, C = [], [], []

    # x-faces
    for ax in range(1, n + 1):
        lo = [slice(1, None)] + [slice(None)] * n
        hi = [slice(1, None)] + [slice(None)] * n
        if g.periodic:
            p = idx[tuple(lo)]
            q = np.roll(idx, -1, axis=ax)[tuple(hi)]
            mid = pts[tuple(lo)].copy()
            mid[..., ax - 1] += h / 2
        else:
            lo[ax] = slice(0, -1)
            hi[ax] = slice(1, None)
            p = idx[tuple(lo)]
            q = idx[tuple(hi)]
            mid = 0.5 * (pts[tuple(lo)] + pts[tuple(hi)])
        wrow = W.reshape((-1,) + (1,) * n)
        c = h ** (n - 2) * wrow * _metric_factors(chart, mid, ax - 1)
        c = np.broadcast_to(c, p.shape)
        P.append(p.ravel())
        Q.append(q.ravel())
        C.append(c.ravel())

    # y-faces between rows (row 0 is the trace row)
    first = 0 if problem.bottom == "dirichlet" else 1
    for j in range(first, g.ny_half):
        y0, y1 = ylev[j], ylev[j + 1]
        cond = (1 - a) / (y1 ** (1 - a) - y0 ** (1 - a))
        mid = 0.5 * (pts[j] + pts[j + 1])
        c = h ** n * cond * _metric_factors(chart, mid, n)
        P.append(idx[j].ravel())
        Q.append(idx[j + 1].ravel())
        C.append(np.broadcast_to(c, idx[j].shape).ravel())

    extra = np.zeros(0)
    if problem.top == "dirichlet" and not aligned:
        Y = g.Y
        ytop = ylev[-1]
        cond = (1 - a) / (Y ** (1 - a) - ytop ** (1 - a))
        top_pts = pts[-1].copy()
        top_pts[..., n] = Y
        mid = 0.5 * (pts[-1] + top_pts)
        c = h ** n * cond * _metric_factors(chart, mid, n)
        extra = (np.asarray(bv(top_pts), dtype=float).ravel() if bv is not None
                 else np.zeros(idx[-1].size))
        P.append(idx[-1].ravel())
        Q.append(size + np.arange(idx[-1].size))
        C.append(np.broadcast_to(c, idx[-1].shape).ravel())

    P = np.concatenate(P)
    Q = np.concatenate(Q)
    C = np.concatenate(C)

    # drop faces between two fixed values
    ext_unknown = np.concatenate([unknown.ravel(), np.zeros(len(extra), dtype=bool)])
    keep = ext_unknown[P] | ext_unknown[Q]
    P, Q, C = P[keep], Q[keep], C[keep]

    mass = np.zeros(shape)
    mass[1:] = h ** n * W.reshape((-1,) + (1,) * n) * _sqrt_det(chart, pts[1:])
    zeroth = np.zeros(shape)
    if problem.zeroth_order:
        if n < 2:
            raise GeometryError("the zeroth-order term needs n >= 2")
        R = metric_scalar_curvature(chart, pts[1:], h=h)
        zeroth[1:] = c_n_gamma(n, problem.gamma) * R

    uidx = -np.ones(size, dtype=int)
    uidx[unknown.ravel()] = np.arange(int(unknown.sum()))
    uidx = np.concatenate([uidx, -np.ones(len(extra), dtype=int)])
    fvals = np.concatenate([fixed.ravel(), extra])
    nu = int(unknown.sum())

    up, uq = uidx[P], uidx[Q]
    rows, cols, data = [], [], []
    diag = np.zeros(nu)
    rhs = np.zeros(nu)
    mp, mq = up >= 0, uq >= 0
    np.add.at(diag, up[mp], C[mp])
    np.add.at(diag, uq[mq], C[mq])
    both = mp & mq
    rows += [up[both], uq[both]]
    cols += [uq[both], up[both]]
    data += [-C[both], -C[both]]
    only_p = mp & ~mq
    np.add.at(rhs, up[only_p], C[only_p] * fvals[Q[only_p]])
    only_q = mq & ~mp
    np.add.at(rhs, uq[only_q], C[only_q] * fvals[P[only_q]])

    um = unknown.ravel()
    diag += (mass * zeroth).ravel()[um]
    if problem.source is not None:
        rhs += (mass.ravel() * np.asarray(problem.source(pts.reshape(-1, g.m)), dtype=float))[um]
    if np.any(diag <= 0):
        raise SolverError("system is not positive definite after the zeroth-order term; refine the grid "
                          "or use a shifted formulation")
    rows.append(np.arange(nu))
    cols.append(np.arange(nu))
    data.append(diag)
    A = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(nu, nu))
    A.sum_duplicates()
    return LinearSystem(problem=problem, matrix=A, rhs=rhs, unknown=unknown, fixed_values=fixed,
                        faces=(P, Q, C), extra_values=extra, mass=mass, zeroth=zeroth)


def pcg(A, b, tol=1e-10, max_iter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Returns (x, iterations, history of relative residuals).  Raises if a
    non-positive curvature direction appears or the tolerance is missed."""
    n = len(b)
    max_iter = max_iter or max(1000, 10 * n)
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), 0, [0.0]
    z = dinv * r
    p = z.copy()
    rz = r @ z
    history = [np.linalg.norm(r) / bnorm]
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError("matrix is not positive definite (non-positive curvature in CG)", history)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        history.append(res)
        if res <= tol:
            return x, it, history
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge in {max_iter} iterations (residual {history[-1]:.3e})", history)


@dataclass
class SolutionField:
    problem: ExtensionProblem
    values: np.ndarray
    iterations: int
    residual: float
    history: list = field(repr=False, default_factory=list)
    energy: float = 0.0
    zeroth_energy: float = 0.0

    @property
    def grid(self) -> WeightedGrid:
        return self.problem.grid

    def doubled_values(self) -> np.ndarray:
        """Values on the doubled grid levels (mirror rows first, trace row once)."""
        v = self.values
        return np.concatenate([v[:0:-1], v], axis=0)

    def mirrored_interior(self) -> np.ndarray:
        """Interior rows mirrored across y = 0, without the trace row.

        On the offset layout these rows form a uniform grid with spacing h."""
        v = self.values[1:]
        return np.concatenate([v[::-1], v], axis=0)


def _extrapolate_even_trace(values: np.ndarray, ylev: np.ndarray) -> np.ndarray:
    y1, y2 = ylev[1], ylev[2]
    return (y2 ** 2 * values[1] - y1 ** 2 * values[2]) / (y2 ** 2 - y1 ** 2)


def solve(system: LinearSystem, tol: float = 1e-10, max_iter: Optional[int] = None) -> SolutionField:
    u, its, hist = pcg(system.matrix, system.rhs, tol=tol, max_iter=max_iter)
    values = system.fixed_values.copy()
    values[system.unknown] = u
    pb = system.problem
    if pb.bottom == "even":
        values[0] = _extrapolate_even_trace(values, pb.grid.y_levels_half())
    ext = system.extended(values)
    P, Q, C = system.faces
    energy = float(np.sum(C * (ext[P] - ext[Q]) ** 2))
    zeroth = float(np.sum(system.mass * system.zeroth * values ** 2))
    return SolutionField(problem=pb, values=values, iterations=its, residual=hist[-1], history=hist,
                         energy=energy, zeroth_energy=zeroth)


def solve_problem(problem: ExtensionProblem, tol: float = 1e-10, max_iter: Optional[int] = None) -> SolutionField:
    return solve(assemble(problem), tol=tol, max_iter=max_iter)


def solve_perturbed(problem: ExtensionProblem, tol: float = 1e-10, max_iter: Optional[int] = None) -> SolutionField:
    """Solve with the chart metric and the zeroth-order term J = C_{n,gamma} R."""
    if problem.chart is None:
        raise ValueError("perturbed solve needs a metric chart")
    if not problem.zeroth_order and problem.grid.n >= 2:
        from dataclasses import replace
        problem = replace(problem, zeroth_order=True)
    return solve_problem(problem, tol=tol, max_iter=max_iter)


def interior_residual(system: LinearSystem, values: np.ndarray) -> np.ndarray:
    """Discrete equation residual per unknown node, divided by the cell measure."""
    ext = system.extended(values)
    P, Q, C = system.faces
    acc = np.zeros(ext.shape)
    flux = C * (ext[Q] - ext[P])
    np.add.at(acc, P, flux)
    np.add.at(acc, Q, -flux)
    acc = acc[: values.size].reshape(values.shape)
    acc -= system.mass * system.zeroth * values
    if system.problem.source is not None:
        pts = node_points(system.problem.grid)
        acc += system.mass * system.problem.source(pts)
    out = np.zeros(values.shape)
    out[system.unknown] = acc[system.unknown] / system.mass[system.unknown]
    return out


def boundary_pairing(system: LinearSystem, values: np.ndarray) -> float:
    """Discrete boundary integral of U times the outward weighted flux."""
    ext = system.extended(values)
    P, Q, C = system.faces
    n_ext = len(ext)
    unk = np.concatenate([system.unknown.ravel(), np.zeros(n_ext - values.size, dtype=bool)])
    total = 0.0
    for a_, b_ in ((P, Q), (Q, P)):
        sel = ~unk[a_] & unk[b_]
        total += float(np.sum(C[sel] * (ext[a_[sel]] - ext[b_[sel]]) * ext[a_[sel]]))
    sel = ~unk[P] & ~unk[Q]
    total += float(np.sum(C[sel] * (ext[P[sel]] - ext[Q[sel]]) ** 2))
    return total


# ---------------------------------------------------------------------------
# trace


FIT_CONDITION_LIMIT = 1e6


@dataclass(frozen=True)
class TraceResult:
    values: np.ndarray
    branch: str
    fit_residual: np.ndarray = field(repr=False, default=None)
    condition: float = 0.0


def neumann_trace(solution: SolutionField, method: str = "flux") -> TraceResult:
    """lim y^a dU/dy at every trace node.

    ``flux`` (default) reads the weighted flux through the bottom face of the
    first cell, (1 - a)(U(y_1) - f)/y_1^{1-a}; the discrete equations make it
    equal to the column balance, so it inherits the O(h^2) accuracy of the
    scheme.  ``fit`` fits U - f on the first three levels by
    c y^{1-a} + e y^2 and returns (1 - a) c; it divides nodal errors by
    y^{1-a} and is only accurate when a > 0.  When the two fit columns are
    nearly collinear the fit falls back to the flux branch."""
    g = solution.grid
    a = g.a
    V = solution.values
    f = V[0]
    shape = f.shape
    ylev = g.y_levels_half()
    if method not in ("flux", "fit"):
        raise ValueError(f"unknown trace method {method!r}")
    if solution.problem.bottom == "even":
        return TraceResult(values=np.zeros(shape), branch="even", fit_residual=np.zeros(shape))
    cond = 0.0
    if method == "fit":
        y = ylev[1:4]
        D = (V[1:4] - f[None]).reshape(3, -1)
        B = np.stack([y ** (1 - a), y ** 2], axis=1)
        cond = float(np.linalg.cond(B / np.linalg.norm(B, axis=0)))
        if cond < FIT_CONDITION_LIMIT:
            coef, *_ = np.linalg.lstsq(B, D, rcond=None)
            resid = D - B @ coef
            return TraceResult(values=((1 - a) * coef[0]).reshape(shape), branch="profile-fit",
                               fit_residual=np.abs(resid).max(axis=0).reshape(shape), condition=cond)
    y1 = ylev[1]
    trace = (1 - a) * (V[1] - f) / y1 ** (1 - a)
    return TraceResult(values=trace, branch="flux", fit_residual=np.zeros(shape), condition=cond)


def frac_laplacian_extension(f, gamma: float, grid: WeightedGrid, chart: Optional[MetricChart] = None,
                             trace_method: str = "flux", **problem_kw):
    """Extension-route P_{2 gamma} f = d_gamma / (2 gamma) * lim y^a U_y.

    Returns (values on the trace nodes, solution field, trace result)."""
    problem = ExtensionProblem(grid=grid, gamma=gamma, boundary_data=f, chart=chart, **problem_kw)
    sol = solve_problem(problem)
    tr = neumann_trace(sol, trace_method)
    return d_gamma(gamma) / (2 * gamma) * tr.values, sol, tr


def export_trace_rows(solution: SolutionField, trace: TraceResult, gamma: float):
    g = solution.grid
    xs = np.stack(np.meshgrid(*([g.x_nodes()] * g.n), indexing="ij"), axis=-1).reshape(-1, g.n)
    f = solution.values[0].ravel()
    t = trace.values.ravel()
    p = d_gamma(gamma) / (2 * gamma) * t
    return np.column_stack([xs, f, t, p])


# ---------------------------------------------------------------------------
# principal-value route


def _direction_rule(n: int, order: int):
    """Unit directions and weights summing to |S^{n-1}|."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        t = 2 * np.pi * (np.arange(order) + 0.5) / order
        return np.stack([np.cos(t), np.sin(t)], axis=1), np.full(order, 2 * np.pi / order)
    return unit_sphere_rule(n, 0.0, order)


def frac_laplacian_pv(f: Callable, gamma: float, x, *, support_radius: Optional[float] = None,
                      far_field_mean: Optional[float] = None, truncation_radius: Optional[float] = None,
                      inner_radius: float = 0.05, panel_length: float = 0.05, radial_order: int = 8,
                      angular_order: int = 48) -> float:
    """(-Delta)^gamma f(x) from the singular integral with the symbol-normalising constant.

    Inner ball: the symmetrised difference 2f(x) - f(x+z) - f(x-z) cancels the
    linear Taylor term; the remaining r^{1-2 gamma} singularity is absorbed by
    Gauss-Jacobi.  Annulus: composite Gauss-Legendre in log r.  Beyond the
    truncation radius f is replaced by its declared far-field mean (zero for
    compact support) and integrated in closed form."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(x)
    if support_radius is None and far_field_mean is None:
        raise ValueError("declare either a compact support radius or a far-field mean")
    mean = 0.0 if far_field_mean is None else float(far_field_mean)
    if truncation_radius is None:
        truncation_radius = (np.linalg.norm(x) + support_radius) if support_radius is not None else 40.0
    R = max(float(truncation_radius), 2 * inner_radius)
    dirs, dw = _direction_rule(n, angular_order)
    area = sphere_area(n) if n > 1 else 2.0
    fx = float(f(x[None, :])[0])
    two_s = 2 * gamma

    # inner ball
    t, w = roots_jacobi(radial_order, 0.0, 1.0 - two_s)  # weight (1+t)^{1-2g}
    r = inner_radius * (t + 1) / 2
    w = w * (inner_radius / 2) ** (2 - two_s)
    pts_p = x + r[:, None, None] * dirs[None]
    pts_m = x - r[:, None, None] * dirs[None]
    sym = (2 * fx - f(pts_p.reshape(-1, n)).reshape(len(r), -1) - f(pts_m.reshape(-1, n)).reshape(len(r), -1)) / 2
    g = (sym @ dw) / r ** 2
    inner = float(np.dot(w, g))

    # annulus in log r
    edges = [inner_radius]
    while edges[-1] < R:
        edges.append(min(R, edges[-1] + min(panel_length, edges[-1])))
    edges = np.log(np.array(edges))
    xg, wg = roots_legendre(radial_order)
    outer = 0.0
    for s0, s1 in zip(edges[:-1], edges[1:]):
        s = 0.5 * (s1 - s0) * xg + 0.5 * (s1 + s0)
        ws = 0.5 * (s1 - s0) * wg
        rr = np.exp(s)
        vals = f((x + rr[:, None, None] * dirs[None]).reshape(-1, n)).reshape(len(rr), -1) @ dw
        outer += float(np.dot(ws, (area * fx - vals) * rr ** (-two_s)))

    tail = area * (fx - mean) * R ** (-two_s) / two_s
    return pv_constant(n, gamma) * (inner + outer + tail)
