"""Structured grids carrying the weight |y|^a, metric charts, weighted
quadrature on balls and spheres centred on {y = 0}, and closed-form
constants of the extension problem.

Coordinates are ordered (x_1, ..., x_n, y); the last axis is always the
weighted (normal) direction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import gamma as gamma_fn
from scipy.special import roots_jacobi

MAX_QUADRATURE_ORDER = 96


class GeometryError(ValueError):
    pass


def _check_weight_exponent(a: float) -> None:
    if not (-1.0 < a < 1.0):
        raise GeometryError(f"weight exponent a={a} must lie strictly inside (-1, 1)")


def _integer_ratio(length: float, h: float, what: str) -> int:
    k = int(round(length / h))
    if k < 1 or abs(k * h - length) > 1e-9 * max(1.0, length):
        raise GeometryError(f"{what}={length} is not an integer multiple of h={h}")
    return k


@dataclass(frozen=True)
class WeightedGrid:
    """Tensor grid on [-L, L]^n x [0, Y] (or [-Y, Y] when doubled).

    Node coordinates are recomputed from integer indices on every access so
    no floating drift is stored.  With the default ``offset`` layout the
    interior y-levels sit at (j - 1/2) h and the trace lives on a dedicated
    y = 0 row; ``aligned`` puts levels at j h (only allowed for a >= 0).
    """

    n: int
    h: float
    L: float
    Y: float
    a: float
    doubled: bool = False
    layout: str = "offset"
    periodic: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise GeometryError("n must be >= 1")
        _check_weight_exponent(self.a)
        if self.h <= 0:
            raise GeometryError("h must be positive")
        if self.L < 1 or self.Y < 1:
            raise GeometryError("box half-width L and height Y must be >= 1")
        if self.h > min(self.L, self.Y) / 4 + 1e-15:
            raise GeometryError(f"h={self.h} too coarse for box (need h <= min(L, Y)/4)")
        if self.layout not in ("offset", "aligned"):
            raise GeometryError(f"unknown layout {self.layout!r}")
        if self.layout == "aligned" and self.a < 0:
            raise GeometryError("aligned layout puts nodes on the singular weight line; use offset for a < 0")
        _integer_ratio(2 * self.L, self.h, "2L")
        _integer_ratio(self.Y, self.h, "Y")

    @property
    def m(self) -> int:
        return self.n + 1

    @property
    def nx(self) -> int:
        k = int(round(2 * self.L / self.h))
        return k if self.periodic else k + 1

    @property
    def ny_half(self) -> int:
        """Number of interior y-levels above the trace row."""
        return int(round(self.Y / self.h))

    def x_nodes(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.nx)

    def y_levels_half(self) -> np.ndarray:
        """Trace row followed by the interior levels in y > 0."""
        j = np.arange(1, self.ny_half + 1)
        if self.layout == "offset":
            interior = (j - 0.5) * self.h
        else:
            interior = j * self.h
        return np.concatenate([[0.0], interior])

    def y_levels(self) -> np.ndarray:
        half = self.y_levels_half()
        if not self.doubled:
            return half
        return np.concatenate([-half[:0:-1], half])

    def reflection_pairs(self) -> np.ndarray:
        """Index of the mirror level for every entry of ``y_levels()``."""
        ny = len(self.y_levels())
        return np.arange(ny)[::-1].copy()

    @property
    def shape(self) -> tuple:
        return (len(self.y_levels()),) + (self.nx,) * self.n

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    def ball_fits(self, center, r: float) -> bool:
        c = np.asarray(center, dtype=float)[: self.n]
        if r > self.Y + 1e-12:
            return False
        if self.periodic:
            return True
        return bool(np.all(np.abs(c) + r <= self.L + 1e-12))

    def require_ball(self, center, r: float) -> None:
        if not self.ball_fits(center, r):
            raise GeometryError(f"ball of radius {r} around {tuple(np.ravel(center))} leaves the grid box")

    def cell_y_weight(self) -> np.ndarray:
        """Exact integral of |y|^a over the y-extent of each interior half-grid cell."""
        a = self.a
        edges = self.h * np.arange(self.ny_half + 1)
        if self.layout == "aligned":
            # aligned cells are centred on the level: [(j-1/2)h, (j+1/2)h], top cell cut at Y
            edges = np.concatenate([[0.0], (np.arange(1, self.ny_half) + 0.5) * self.h, [self.Y]])
        p = edges ** (1 + a) / (1 + a)
        return np.diff(p)


@dataclass(frozen=True)
class MetricChart:
    """Single coordinate chart with a metric and a defining function.

    ``metric`` maps points of shape (..., m) to matrices (..., m, m).
    ``rho`` defaults to |y| when omitted.
    """

    m: int
    metric: Callable[[np.ndarray], np.ndarray]
    scalar_curvature: Optional[Callable[[np.ndarray], np.ndarray]] = None
    rho: Optional[Callable[[np.ndarray], np.ndarray]] = None
    is_flat: bool = False
    ellipticity: tuple = (0.25, 4.0)
    diagonal: bool = True
    name: str = "chart"

    def defining_function(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if self.rho is None:
            return np.abs(pts[..., -1])
        return np.asarray(self.rho(pts), dtype=float)

    def check(self, pts: np.ndarray, tol: float = 1e-6) -> None:
        """Sample the chart invariants at ``pts`` (shape (k, m))."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        g = self.metric(pts)
        if not np.allclose(g, np.swapaxes(g, -1, -2), atol=1e-12):
            raise GeometryError("metric is not symmetric")
        ev = np.linalg.eigvalsh(g)
        lam, Lam = self.ellipticity
        if ev.min() < lam or ev.max() > Lam:
            raise GeometryError(f"metric eigenvalues [{ev.min():.3g}, {ev.max():.3g}] outside [{lam}, {Lam}]")
        rho = self.defining_function(pts)
        on = np.abs(pts[:, -1]) < 1e-14
        if np.any(rho[~on] <= 0) or np.any(np.abs(rho[on]) > tol):
            raise GeometryError("defining function must vanish exactly on {y=0} and be positive elsewhere")
        if np.any(on):
            base = pts[on]
            step = 1e-6
            grads = []
            for k in range(self.m):
                e = np.zeros(self.m)
                e[k] = step
                # one-sided in y: rho is not differentiable across y = 0
                if k == self.m - 1:
                    grads.append((self.defining_function(base + e) - self.defining_function(base)) / step)
                else:
                    grads.append((self.defining_function(base + e) - self.defining_function(base - e)) / (2 * step))
            gn = np.sqrt(np.sum(np.square(grads), axis=0))
            if np.any(np.abs(gn - 1) > 1e-3):
                raise GeometryError("|grad rho| must equal 1 on {y=0}")


def flat_chart(m: int) -> MetricChart:
    def metric(pts):
        pts = np.asarray(pts, dtype=float)
        return np.broadcast_to(np.eye(m), pts.shape[:-1] + (m, m)).copy()

    return MetricChart(m=m, metric=metric, scalar_curvature=lambda p: np.zeros(np.shape(p)[:-1]),
                       is_flat=True, ellipticity=(1.0, 1.0), name="flat")


def conformal_chart(m: int, phi, grad_phi=None, lap_phi=None, ellipticity=(0.25, 4.0), name="conformal"):
    """Chart g = exp(2 phi) delta.  With ``grad_phi`` and ``lap_phi`` the scalar
    curvature is the analytic conformal-change formula, otherwise it is
    computed by finite differences."""

    def metric(pts):
        pts = np.asarray(pts, dtype=float)
        f = np.exp(2 * np.asarray(phi(pts)))
        return f[..., None, None] * np.eye(m)

    curv = None
    if grad_phi is not None and lap_phi is not None:
        def curv(pts):
            pts = np.asarray(pts, dtype=float)
            g2 = np.sum(np.square(grad_phi(pts)), axis=-1)
            return np.exp(-2 * phi(pts)) * (-2 * (m - 1) * lap_phi(pts) - (m - 2) * (m - 1) * g2)

    return MetricChart(m=m, metric=metric, scalar_curvature=curv, ellipticity=ellipticity, name=name)


def quadratic_conformal_chart(m: int, eps: float) -> MetricChart:
    """exp(2 phi) delta with phi = eps * (|x|^2 + y^2) / 2; ||phi||_{C^2} ~ eps on the unit box."""

    def phi(p):
        return 0.5 * eps * np.sum(np.square(p), axis=-1)

    def grad(p):
        return eps * np.asarray(p)

    def lap(p):
        return np.full(np.shape(p)[:-1], eps * m)

    return conformal_chart(m, phi, grad, lap, name=f"conformal(eps={eps:g})")


def round_sphere_chart(m: int) -> MetricChart:
    """Stereographic chart of the unit round sphere S^m: g = (1 + |p|^2/4)^-2 delta."""

    def metric(pts):
        pts = np.asarray(pts, dtype=float)
        f = (1 + np.sum(np.square(pts), axis=-1) / 4) ** -2
        return f[..., None, None] * np.eye(m)

    return MetricChart(m=m, metric=metric, ellipticity=(1e-3, 1.0), name="round-sphere")


# ---------------------------------------------------------------------------
# closed-form constants


def c_n_gamma(n: int, gamma: float) -> float:
    """Coefficient C_{n,gamma} of the zeroth-order term J = C_{n,gamma} R."""
    if n < 2:
        raise ValueError("C_{n,gamma} needs n >= 2")
    if not (0 < gamma < 1):
        raise ValueError("gamma must lie in (0, 1)")
    return (n * n - 3 - 4 * n * gamma + gamma * gamma) / (4 * n * (n - 1))


def d_gamma(gamma: float) -> float:
    """d_gamma = 2^{2 gamma} Gamma(gamma) / Gamma(-gamma)."""
    if not (0 < gamma < 1):
        raise ValueError("gamma must lie in (0, 1)")
    return float(2.0 ** (2 * gamma) * gamma_fn(gamma) / gamma_fn(-gamma))


def pv_constant(n: int, gamma: float) -> float:
    """Normalisation making the principal-value operator have symbol |xi|^{2 gamma}."""
    return float(4.0 ** gamma * gamma_fn(n / 2 + gamma) / (np.pi ** (n / 2) * abs(gamma_fn(-gamma))))


def sphere_area(m: int) -> float:
    """Area of the unit sphere S^{m-1} in R^m."""
    return float(2 * np.pi ** (m / 2) / gamma_fn(m / 2))


def weighted_sphere_measure(m: int, a: float) -> float:
    """Integral of |y|^a over the unit sphere S^{m-1} in R^m."""
    if m == 1:
        return 2.0
    return float(sphere_area(m - 1) * beta_fn((a + 1) / 2, (m - 1) / 2))


def weighted_ball_measure(m: int, a: float) -> float:
    return weighted_sphere_measure(m, a) / (m + a)


# ---------------------------------------------------------------------------
# quadrature


def _jacobi_01(npts: int, alpha: float, beta: float):
    """Gauss-Jacobi on [0, 1] for the weight u^beta (1 - u)^alpha."""
    x, w = roots_jacobi(npts, alpha, beta)
    return (1 + x) / 2, w * 2.0 ** (-(alpha + beta + 1))


@lru_cache(maxsize=None)
def _unit_sphere_plain(k: int, order: int):
    """Rule on S^k (in R^{k+1}) for the plain surface measure, exact to ``order``."""
    if k == 0:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    inner_pts, inner_w = _unit_sphere_plain(k - 1, order)
    nz = order // 2 + 1
    z, wz = roots_jacobi(nz, (k - 2) / 2, (k - 2) / 2)
    s = np.sqrt(np.clip(1 - z * z, 0, None))
    pts = np.concatenate([s[:, None, None] * inner_pts[None], np.broadcast_to(z[:, None, None], (nz, len(inner_w), 1))], axis=2)
    w = wz[:, None] * inner_w[None]
    return pts.reshape(-1, k + 1), w.reshape(-1)


@lru_cache(maxsize=None)
def unit_sphere_rule(m: int, a: float, order: int):
    """Nodes/weights on S^{m-1} with  sum w Q(node) = int |y|^a Q dsigma
    for every polynomial Q of degree <= order.  The polar factor |y|^a is
    absorbed exactly by Gauss-Jacobi in u = y^2; mirror nodes share weights."""
    if m < 2:
        raise GeometryError("sphere rules need m >= 2")
    if order < 0 or order > MAX_QUADRATURE_ORDER:
        raise GeometryError(f"quadrature order {order} outside the supported table [0, {MAX_QUADRATURE_ORDER}]")
    nu = order // 4 + 1
    u, wu = _jacobi_01(nu, (m - 3) / 2, (a - 1) / 2)
    t = np.sqrt(u)
    inner_pts, inner_w = _unit_sphere_plain(m - 2, order)
    s = np.sqrt(np.clip(1 - u, 0, None))
    tt = np.concatenate([t, -t])
    ss = np.concatenate([s, s])
    ww = np.concatenate([wu, wu]) / 2
    pts = np.concatenate([ss[:, None, None] * inner_pts[None], np.broadcast_to(tt[:, None, None], (2 * nu, len(inner_w), 1))], axis=2)
    w = ww[:, None] * inner_w[None]
    pts = pts.reshape(-1, m)
    w = w.reshape(-1)
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


@lru_cache(maxsize=None)
def unit_ball_rule(m: int, a: float, order: int):
    """Rule on the unit ball of R^m for the measure |y|^a dx, exact to ``order``."""
    sp, sw = unit_sphere_rule(m, a, order)
    nr = order // 2 + 1
    rho, wr = _jacobi_01(nr, 0.0, m - 1 + a)
    pts = (rho[:, None, None] * sp[None]).reshape(-1, m)
    w = (wr[:, None] * sw[None]).reshape(-1)
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


@dataclass(frozen=True)
class SphereQuadrature:
    center: np.ndarray
    r: float
    nodes: np.ndarray
    weights: np.ndarray
    degree: int
    a: float
    unit_nodes: np.ndarray = field(repr=False, default=None)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class BallQuadrature(SphereQuadrature):
    pass


def _center_point(center, m):
    c = np.zeros(m)
    cc = np.ravel(np.asarray(center, dtype=float))
    c[: len(cc)] = cc
    if len(cc) == m and cc[-1] != 0:
        raise GeometryError("quadrature centres must lie on {y = 0}")
    return c


def sphere_quadrature(grid: Optional[WeightedGrid], center, r: float, order: int, *, m=None, a=None) -> SphereQuadrature:
    """Weighted rule on the sphere of radius r about (center, 0).

    Pass ``grid`` to check that the ball fits; without a grid give ``m`` and ``a``."""
    if order < 2:
        raise GeometryError("quadrature order must be >= 2")
    if grid is not None:
        m, a = grid.m, grid.a
        grid.require_ball(center, r)
    _check_weight_exponent(a)
    c = _center_point(center, m)
    up, uw = unit_sphere_rule(m, float(a), int(order))
    return SphereQuadrature(center=c, r=r, nodes=c + r * up, weights=r ** (m - 1 + a) * uw,
                            degree=order, a=float(a), unit_nodes=up)


def ball_quadrature(grid: Optional[WeightedGrid], center, r: float, order: int, *, m=None, a=None) -> BallQuadrature:
    if order < 2:
        raise GeometryError("quadrature order must be >= 2")
    if grid is not None:
        m, a = grid.m, grid.a
        grid.require_ball(center, r)
    _check_weight_exponent(a)
    c = _center_point(center, m)
    up, uw = unit_ball_rule(m, float(a), int(order))
    return BallQuadrature(center=c, r=r, nodes=c + r * up, weights=r ** (m + a) * uw,
                          degree=order, a=float(a), unit_nodes=up)


# ---------------------------------------------------------------------------
# curvature


def curvature_step(h: Optional[float]) -> float:
    if h is None:
        return 1e-2
    return float(np.clip(np.sqrt(h), 1e-3, 1e-1))


_D1 = ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12))


def _christoffel(chart: MetricChart, pts: np.ndarray, step: float) -> np.ndarray:
    """Gamma^k_{ij} at pts (..., m) -> (..., k, i, j) via 4th-order differences."""
    m = chart.m
    g = chart.metric(pts)
    dg = np.zeros(pts.shape[:-1] + (m, m, m))  # dg[..., l, i, j] = d_l g_ij
    for l in range(m):
        e = np.zeros(m)
        e[l] = step
        for s, c in _D1:
            dg[..., l, :, :] += c * chart.metric(pts + s * e)
        dg[..., l, :, :] /= step
    ginv = np.linalg.inv(g)
    # lower[..., l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    lower = np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg
    return 0.5 * np.einsum("...kl,...lij->...kij", ginv, lower)


def metric_scalar_curvature(chart: MetricChart, point, h: Optional[float] = None) -> np.ndarray:
    """Scalar curvature of the chart metric at ``point`` (shape (m,) or (k, m)).

    Uses the chart's analytic curvature when supplied; otherwise nested
    fourth-order central differences with step sqrt(h) clipped to [1e-3, 1e-1]."""
    pts = np.asarray(point, dtype=float)
    if chart.scalar_curvature is not None:
        return np.asarray(chart.scalar_curvature(pts), dtype=float)
    if chart.is_flat:
        return np.zeros(pts.shape[:-1])
    m = chart.m
    step = curvature_step(h)
    g = chart.metric(pts)
    if np.any(np.linalg.eigvalsh(g) <= 0):
        raise GeometryError("metric is not positive definite at the stencil points")
    gam = _christoffel(chart, pts, step)
    dgam = np.zeros(pts.shape[:-1] + (m, m, m, m))  # dgam[..., q, k, i, j] = d_q Gamma^k_ij
    for q in range(m):
        e = np.zeros(m)
        e[q] = step
        for s, c in _D1:
            dgam[..., q, :, :, :] += c * _christoffel(chart, pts + s * e, step)
        dgam[..., q, :, :, :] /= step
    ginv = np.linalg.inv(g)
    ric = (np.einsum("...kkij->...ij", dgam)
           - np.einsum("...jkik->...ij", dgam)
           + np.einsum("...kkl,...lij->...ij", gam, gam)
           - np.einsum("...kjl,...lik->...ij", gam, gam))
    return np.einsum("...ij,...ij->...", ginv, ric)
