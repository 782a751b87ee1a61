"""Weighted frequency functionals, scale ladders, tangent maps and
quantitative symmetry defects for solutions of div(|y|^a grad U) = 0.

Fields are objects with ``m``, ``a``, ``value(pts)`` and ``gradient(pts)``
acting on points of shape (..., m) with y last.  Balls are always centred on
{y = 0}.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from .geometry import (GeometryError, MetricChart, c_n_gamma, metric_scalar_curvature, sphere_area,
                       unit_ball_rule, unit_sphere_rule, weighted_sphere_measure)
from .polynomials import HomogeneousSolution, Polynomial, solution_space

DEFAULT_ORDER = 24


class FitSpaceEmpty(ValueError):
    pass


# ---------------------------------------------------------------------------
# fields


class PolynomialField:
    """Exact field built from a polynomial (optionally plus a constant)."""

    def __init__(self, poly, a: float, offset: float = 0.0, scale: float = 1.0):
        if isinstance(poly, HomogeneousSolution):
            scale = scale * poly.scale
            poly = poly.poly
        self.poly = poly
        self.m = poly.nvars
        self.a = float(a)
        self.offset = float(offset)
        self.scale = float(scale)
        self.h = None
        self._grad = [poly.derivative(i) for i in range(self.m)]

    def value(self, pts):
        return self.offset + self.scale * self.poly(pts)

    def gradient(self, pts):
        return self.scale * np.stack([g(pts) for g in self._grad], axis=-1)

    def ball_fits(self, center, r):
        return True


class SumField:
    """Linear combination of fields sharing m and a."""

    def __init__(self, fields, coeffs):
        self.fields = list(fields)
        self.coeffs = [float(c) for c in coeffs]
        self.m = self.fields[0].m
        self.a = self.fields[0].a
        hs = [f.h for f in self.fields if getattr(f, "h", None) is not None]
        self.h = max(hs) if hs else None

    def value(self, pts):
        return sum(c * f.value(pts) for c, f in zip(self.coeffs, self.fields))

    def gradient(self, pts):
        return sum(c * f.gradient(pts) for c, f in zip(self.coeffs, self.fields))

    def ball_fits(self, center, r):
        return all(f.ball_fits(center, r) for f in self.fields)


class CallableField:
    def __init__(self, value: Callable, gradient: Callable, m: int, a: float, h=None):
        self._value, self._gradient = value, gradient
        self.m, self.a, self.h = m, float(a), h

    def value(self, pts):
        return self._value(np.asarray(pts, dtype=float))

    def gradient(self, pts):
        return self._gradient(np.asarray(pts, dtype=float))

    def ball_fits(self, center, r):
        return True


def _central_difference(arr: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order central differences with second-order one-sided edges."""
    out = np.gradient(arr, h, axis=axis, edge_order=2)
    n = arr.shape[axis]
    if n >= 5:
        sl = lambda a_, b_: tuple(slice(a_, b_) if k == axis else slice(None) for k in range(arr.ndim))
        inner = (arr[sl(0, n - 4)] - 8 * arr[sl(1, n - 3)] + 8 * arr[sl(3, n - 1)] - arr[sl(4, n)]) / (12 * h)
        out[sl(2, n - 2)] = inner
    return out


class GridField:
    """Even extension of a solved half-grid field, sampled by cubic splines.

    Gradients are centred differences on the grid, spline-interpolated."""

    def __init__(self, solution, margin: int = 3):
        g = solution.grid
        self.grid = g
        self.m, self.a, self.h = g.m, g.a, g.h
        if g.layout == "offset":
            arr = solution.mirrored_interior()
            self.y0 = -(g.Y - g.h / 2)
        else:
            arr = solution.doubled_values()
            self.y0 = -g.Y
        self.x0 = -g.L
        self.margin = margin
        self.mode = "grid-wrap" if g.periodic else "nearest"
        self._coef = ndimage.spline_filter(arr, order=3, mode=self.mode)
        grads = []
        for k in range(g.m):
            axis = 0 if k == g.n else k + 1
            if g.periodic and axis != 0:
                d = (np.roll(arr, -1, axis) - np.roll(arr, 1, axis)) * (2 / 3) / g.h \
                    - (np.roll(arr, -2, axis) - np.roll(arr, 2, axis)) / (12 * g.h)
            else:
                d = _central_difference(arr, axis, g.h)
            grads.append(ndimage.spline_filter(d, order=3, mode=self.mode))
        self._gcoef = grads

    def _index(self, pts):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, self.m)
        coords = np.empty((self.m, len(flat)))
        coords[0] = (flat[:, -1] - self.y0) / self.h
        coords[1:] = ((flat[:, :-1] - self.x0) / self.h).T
        return coords, pts.shape[:-1]

    def value(self, pts):
        c, shp = self._index(pts)
        return ndimage.map_coordinates(self._coef, c, order=3, mode=self.mode, prefilter=False).reshape(shp)

    def gradient(self, pts):
        c, shp = self._index(pts)
        out = [ndimage.map_coordinates(gc, c, order=3, mode=self.mode, prefilter=False) for gc in self._gcoef]
        return np.stack(out, axis=-1).reshape(shp + (self.m,))

    def ball_fits(self, center, r):
        g = self.grid
        c = np.ravel(np.asarray(center, dtype=float))[: g.n]
        pad = self.margin * g.h
        if r > g.Y - pad:
            return False
        return bool(g.periodic or np.all(np.abs(c) + r <= g.L - pad))


class RescaledField:
    """xi -> U(x + t xi), the radial blow-up without normalisation."""

    def __init__(self, base, center, t: float):
        self.base = base
        self.m, self.a = base.m, base.a
        self.center = _center(center, base.m)
        self.t = float(t)
        h = getattr(base, "h", None)
        self.h = None if h is None else h / t

    def value(self, pts):
        return self.base.value(self.center + self.t * np.asarray(pts, dtype=float))

    def gradient(self, pts):
        return self.t * self.base.gradient(self.center + self.t * np.asarray(pts, dtype=float))

    def ball_fits(self, center, r):
        c = self.center + self.t * _center(center, self.m)
        return self.base.ball_fits(c, self.t * r)


def rescale_field(U, x, t: float) -> RescaledField:
    return RescaledField(U, x, t)


def _center(x, m):
    c = np.zeros(m)
    xx = np.ravel(np.asarray(x, dtype=float))
    c[: min(len(xx), m - 1)] = xx[: m - 1]
    return c


def _require(U, x, r):
    if not U.ball_fits(x, r):
        raise GeometryError(f"ball of radius {r} around {tuple(np.ravel(x))} leaves the field's domain")


# ---------------------------------------------------------------------------
# functionals


def _metric_terms(chart: Optional[MetricChart], pts, grad):
    """|grad U|_g^2 and sqrt(det g) at pts."""
    if chart is None or chart.is_flat:
        return np.sum(grad ** 2, axis=-1), np.ones(pts.shape[:-1])
    g = chart.metric(pts)
    ginv = np.linalg.inv(g)
    return np.einsum("...i,...ij,...j->...", grad, ginv, grad), np.sqrt(np.linalg.det(g))


def functional_H(U, x, r, *, model: bool = True, subtract: Optional[float] = None, order: int = DEFAULT_ORDER,
                 chart: Optional[MetricChart] = None) -> float:
    """Weighted sphere integral of (U - subtract)^2; divided by r^{n+a} when ``model``."""
    _require(U, x, r)
    m, a = U.m, U.a
    c = _center(x, m)
    up, uw = unit_sphere_rule(m, a, order)
    pts = c + r * up
    v = U.value(pts)
    if subtract is not None:
        v = v - subtract
    w = uw * r ** (m - 1 + a)
    if chart is not None and not chart.is_flat:
        w = w * _surface_factor(chart, pts, up)
    val = float(np.dot(w, v ** 2))
    return val / r ** (m - 1 + a) if model else val


def _surface_factor(chart, pts, normals):
    g = chart.metric(pts)
    det = np.linalg.det(g)
    ginv = np.linalg.inv(g)
    return np.sqrt(det * np.einsum("...i,...ij,...j->...", normals, ginv, normals))


def _ball_terms(U, x, r, order, chart, zeroth):
    m, a = U.m, U.a
    c = _center(x, m)
    bp, bw = unit_ball_rule(m, a, order)
    pts = c + r * bp
    w = bw * r ** (m + a)
    grad = U.gradient(pts)
    g2, vol = _metric_terms(chart, pts, grad)
    D = float(np.dot(w * vol, g2))
    Z = 0.0
    if zeroth and chart is not None and not chart.is_flat:
        n = m - 1
        J = c_n_gamma(n, (1 - a) / 2) * metric_scalar_curvature(chart, pts)
        Z = float(np.dot(w * vol, J * U.value(pts) ** 2))
    return D, Z


def functional_D(U, x, r, *, model: bool = True, order: int = DEFAULT_ORDER,
                 chart: Optional[MetricChart] = None) -> float:
    """Weighted Dirichlet energy on the ball; divided by r^{n+a} when ``model``
    so that N = r D / H in both conventions."""
    _require(U, x, r)
    D, _ = _ball_terms(U, x, r, order, chart, False)
    return D / r ** (U.m - 1 + U.a) if model else D


def functional_I(U, x, r, *, model: bool = True, order: int = DEFAULT_ORDER,
                 chart: Optional[MetricChart] = None) -> float:
    """D plus the zeroth-order term int rho^a J U^2."""
    _require(U, x, r)
    D, Z = _ball_terms(U, x, r, order, chart, True)
    val = D + Z
    return val / r ** (U.m - 1 + U.a) if model else val


def weighted_ball_l2(U, x, r, order: int = DEFAULT_ORDER) -> float:
    m, a = U.m, U.a
    bp, bw = unit_ball_rule(m, a, order)
    return float(np.dot(bw * r ** (m + a), U.value(_center(x, m) + r * bp) ** 2))


def frequency(U, x, r, *, normalized: bool = False, order: int = DEFAULT_ORDER,
              chart: Optional[MetricChart] = None, zeroth: bool = False) -> float:
    sub = float(U.value(_center(x, U.m))) if normalized else None
    H = functional_H(U, x, r, subtract=sub, order=order, chart=chart)
    D, Z = _ball_terms(U, x, r, order, chart, zeroth)
    return r * (D + Z) / r ** (U.m - 1 + U.a) / H


# ---------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class FrequencyProfile:
    center: np.ndarray
    radii: np.ndarray
    H: np.ndarray
    D: np.ndarray
    I: np.ndarray
    normalized: bool
    model: bool
    subtracted: float
    capped: bool
    quad_error: np.ndarray
    m: int = 2
    a: float = 0.0

    @property
    def N(self) -> np.ndarray:
        return self.radii * self.I / self.H

    @property
    def ratio(self) -> float:
        return float(self.radii[1] / self.radii[0]) if len(self.radii) > 1 else 1.0


def scale_ladder(r_max: float, gamma0: float, J: int) -> np.ndarray:
    if not (0 < gamma0 < 1):
        raise ValueError("ladder ratio must lie in (0, 1)")
    return r_max * gamma0 ** np.arange(J + 1)


def frequency_profile(U, x, r_max: float, gamma0: float = 0.5, J: Optional[int] = None, *,
                      normalized: bool = False, model: bool = True, order: int = DEFAULT_ORDER,
                      chart: Optional[MetricChart] = None, zeroth: bool = False,
                      min_cells: float = 10.0) -> FrequencyProfile:
    """H, D, I and N over the ladder r_j = r_max gamma0^j.

    For gridded fields the ladder stops at 10 h; ``capped`` records whether
    requested scales were dropped."""
    h = getattr(U, "h", None)
    if J is None:
        if h is None:
            raise ValueError("exact fields need an explicit ladder length J")
        J = int(np.floor(np.log(min_cells * h / r_max) / np.log(gamma0)))
    radii = scale_ladder(r_max, gamma0, J)
    capped = False
    if h is not None:
        keep = radii >= min_cells * h * (1 - 1e-12)
        capped = not bool(np.all(keep))
        radii = radii[keep]
    if len(radii) == 0:
        raise GeometryError("no ladder scale is resolved by the grid")
    c = _center(x, U.m)
    sub = float(U.value(c)) if normalized else None
    Hs, Ds, Is, err = [], [], [], []
    for r in radii:
        H = functional_H(U, c, r, model=model, subtract=sub, order=order, chart=chart)
        H2 = functional_H(U, c, r, model=model, subtract=sub, order=max(2, order - 8), chart=chart)
        D, Z = _ball_terms(U, c, r, order, chart, zeroth)
        norm = r ** (U.m - 1 + U.a) if model else 1.0
        Hs.append(H)
        Ds.append(D / norm)
        Is.append((D + Z) / norm)
        err.append(abs(H - H2) / max(abs(H), 1e-300))
    return FrequencyProfile(center=c, radii=np.array(radii), H=np.array(Hs), D=np.array(Ds), I=np.array(Is),
                            normalized=normalized, model=model, subtracted=0.0 if sub is None else sub,
                            capped=capped, quad_error=np.array(err), m=U.m, a=U.a)


@dataclass(frozen=True)
class MonotonicityReport:
    violations: list
    max_violation: float
    tol: float

    @property
    def ok(self) -> bool:
        return not self.violations


def monotonicity_report(profile: FrequencyProfile, tol: float = 1e-3, r_min: float = 0.0) -> MonotonicityReport:
    """Pairs of adjacent scales where N grows as r shrinks by more than ``tol``."""
    N = profile.N
    r = profile.radii
    viol = []
    worst = 0.0
    for j in range(len(N) - 1):
        if r[j + 1] < r_min:
            continue
        excess = N[j + 1] - N[j]
        worst = max(worst, excess)
        if excess > tol:
            viol.append((j, j + 1, float(excess)))
    return MonotonicityReport(violations=viol, max_violation=float(worst), tol=tol)


@dataclass(frozen=True)
class AlmostMonotonicityFit:
    C: float
    contributions: np.ndarray


def almost_monotonicity_fit(profile: FrequencyProfile) -> AlmostMonotonicityFit:
    """Smallest C >= 0 with exp(C t) N(t) nondecreasing on the ladder."""
    N = profile.N
    t = profile.radii
    if np.any(N <= 0):
        raise ValueError("frequency must be positive for the logarithmic fit")
    logN = np.log(N)
    contrib = np.maximum(0.0, -(logN[:-1] - logN[1:]) / (t[:-1] - t[1:]))
    return AlmostMonotonicityFit(C=float(contrib.max()) if len(contrib) else 0.0, contributions=contrib)


@dataclass(frozen=True)
class DoublingReport:
    pairs: list
    ratios: np.ndarray
    identity_residuals: np.ndarray


def doubling_report(profile: FrequencyProfile, U=None, order: int = DEFAULT_ORDER, nodes: int = 6) -> DoublingReport:
    """H(2r)/H(r) over ladder pairs and the residual of the log-derivative identity

        d/ds log H = (m - 1 + a)/s [unnormalised only] + 2 N(s)/s

    integrated between adjacent scales.  With ``U`` the integral of N is
    evaluated at interior Gauss points; otherwise by the trapezoid rule in
    log s."""
    r, H, N = profile.radii, profile.H, profile.N
    pairs, ratios = [], []
    for i in range(len(r)):
        for k in range(i + 1, len(r)):
            if abs(r[i] - 2 * r[k]) <= 1e-12 * r[i]:
                pairs.append((i, k))
                ratios.append(H[i] / H[k])
    res = []
    m, a = profile.m, profile.a
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    for j in range(len(r) - 1):
        lhs = np.log(H[j]) - np.log(H[j + 1])
        s0, s1 = np.log(r[j + 1]), np.log(r[j])
        if U is not None:
            s = 0.5 * (s1 - s0) * xg + 0.5 * (s1 + s0)
            Ns = np.array([frequency(U, profile.center, np.exp(v), normalized=profile.normalized, order=order)
                           for v in s])
            integral = float(np.dot(0.5 * (s1 - s0) * wg, 2 * Ns))
        else:
            integral = (s1 - s0) * (N[j] + N[j + 1])
        if not profile.model:
            integral += (m - 1 + a) * (s1 - s0)
        res.append(abs(lhs - integral))
    return DoublingReport(pairs=pairs, ratios=np.array(ratios), identity_residuals=np.array(res))


def sphere_mean_identity_residual(U, x, r, order: int = DEFAULT_ORDER) -> float:
    """|int (U - U(x))^2 - (int U^2 - |S_a| U(x)^2)| relative, weighted sphere of radius r."""
    c = _center(x, U.m)
    u0 = float(U.value(c))
    lhs = functional_H(U, c, r, model=False, subtract=u0, order=order)
    total = functional_H(U, c, r, model=False, order=order)
    meas = weighted_sphere_measure(U.m, U.a) * r ** (U.m - 1 + U.a)
    rhs = total - meas * u0 ** 2
    return abs(lhs - rhs) / max(total, 1e-300)


# ---------------------------------------------------------------------------
# tangent maps


class TangentField:
    """(U(x + s xi) - U(x)) / norm on the unit ball."""

    def __init__(self, base, center, s, u0, norm):
        self.base, self.center, self.s, self.u0, self.norm = base, center, s, u0, norm
        self.m, self.a, self.h = base.m, base.a, None

    def value(self, pts):
        return (self.base.value(self.center + self.s * np.asarray(pts, dtype=float)) - self.u0) / self.norm

    def gradient(self, pts):
        return self.s * self.base.gradient(self.center + self.s * np.asarray(pts, dtype=float)) / self.norm

    def ball_fits(self, center, r):
        return r <= 1 + 1e-12


@dataclass(frozen=True)
class TangentMap:
    status: str               # "ok" or "constant"
    field: Optional[TangentField]
    denominator: float


def tangent_map(U, x, s: float, order: int = DEFAULT_ORDER, rtol: float = 1e-13) -> TangentMap:
    """Recentred, rescaled blow-up with unit weighted sphere average.

    A vanishing denominator is reported as status ``constant``."""
    _require(U, x, s)
    m, a = U.m, U.a
    c = _center(x, m)
    u0 = float(U.value(c))
    up, uw = unit_sphere_rule(m, a, order)
    v = U.value(c + s * up) - u0
    den2 = float(np.dot(uw, v ** 2)) / sphere_area(m)
    scale = max(1.0, abs(u0), float(np.max(np.abs(v))) if len(v) else 0.0)
    if den2 <= (rtol * scale) ** 2:
        return TangentMap("constant", None, 0.0)
    den = np.sqrt(den2)
    return TangentMap("ok", TangentField(U, c, s, u0, den), den)


# ---------------------------------------------------------------------------
# symmetry defects


@dataclass(frozen=True)
class SymmetryReport:
    center: np.ndarray
    scale: float
    k: int
    defect: float
    degree: int
    poly: Optional[Polynomial]
    subspace: np.ndarray
    rounds: int = 0
    conditioning: float = 1.0
    status: str = "ok"


@dataclass
class _DegreeBlock:
    degree: int
    polys: list            # float polynomials orthonormal for the sphere average
    ball_vals: np.ndarray  # (nodes, dim)
    coeff_mons: list
    grad_vals: np.ndarray  # (nodes, dim, m)


_BASIS_CACHE: dict = {}


def _fit_blocks(m: int, a: float, d_max: int, order: int):
    key = (m, float(a), d_max, order)
    if key in _BASIS_CACHE:
        return _BASIS_CACHE[key]
    n = m - 1
    sp_, sw = unit_sphere_rule(m, a, max(order, 2 * d_max))
    bp, bw = unit_ball_rule(m, a, order)
    area = sphere_area(m)
    blocks = []
    for d in range(1, d_max + 1):
        basis = solution_space(n, d, float(a))
        S = np.stack([p(sp_) for p in basis], axis=1)
        G = (S * sw[:, None]).T @ S / area
        Lc = np.linalg.cholesky(G)
        T = np.linalg.inv(Lc).T
        polys = []
        for j in range(T.shape[1]):
            terms = {}
            for i, p in enumerate(basis):
                if T[i, j] != 0:
                    for e, cval in p.terms.items():
                        terms[e] = terms.get(e, 0.0) + float(cval) * T[i, j]
            polys.append(Polynomial(m, {e: v for e, v in terms.items() if v != 0}))
        ball_vals = np.stack([p(bp) for p in polys], axis=1)
        grad_vals = np.stack([p.gradient(bp) for p in polys], axis=1)
        blocks.append(_DegreeBlock(d, polys, ball_vals, [], grad_vals))
    out = (blocks, bp, bw)
    _BASIS_CACHE[key] = out
    return out


def _invariant_coeffs(block: _DegreeBlock, V: np.ndarray, bw: np.ndarray) -> np.ndarray:
    """Orthonormal coordinates (in the block basis) of polynomials invariant along V."""
    dim = len(block.polys)
    if V.shape[0] == 0:
        return np.eye(dim)
    # directional derivatives sampled on the ball nodes determine the polynomial
    D = np.einsum("nim,km->nki", block.grad_vals, V).reshape(-1, dim)
    s = np.sqrt(np.repeat(np.abs(bw), V.shape[0]))
    M = D * s[:, None]
    _, sv, vt = np.linalg.svd(M, full_matrices=False)
    scale = sv[0] if len(sv) and sv[0] > 0 else 1.0
    rank = int(np.sum(sv > 1e-9 * scale))
    return vt[rank:].T


def _degree_defect(tnorm2, b, Z, m, a, d):
    beta = Z.T @ b
    nb = float(np.linalg.norm(beta))
    return tnorm2 - 2 * nb + m / (m + a + 2 * d), beta


def _best_given_V(blocks, bvals_T, bw, tnorm2, V, m, a, volume):
    best = (np.inf, None, None, None)
    for blk in blocks:
        Z = _invariant_coeffs(blk, V, bw)
        if Z.shape[1] == 0:
            continue
        b = (blk.ball_vals * bw[:, None]).T @ bvals_T / volume
        eta, beta = _degree_defect(tnorm2, b, Z, m, a, blk.degree)
        if eta < best[0]:
            nb = np.linalg.norm(beta)
            coeff = Z @ (beta / nb) if nb > 0 else Z[:, 0]
            best = (eta, blk, coeff, Z)
    return best


def _combine(blk: _DegreeBlock, coeff: np.ndarray) -> Polynomial:
    terms = {}
    for c, p in zip(coeff, blk.polys):
        if c != 0:
            for e, v in p.terms.items():
                terms[e] = terms.get(e, 0.0) + c * v
    return Polynomial(blk.polys[0].nvars, {e: v for e, v in terms.items() if abs(v) > 1e-15})


def _second_moment(grad_vals, bw):
    return np.einsum("n,ni,nj->ij", bw, grad_vals, grad_vals)


def _ranked_directions(M: np.ndarray) -> np.ndarray:
    """Eigenvectors of M by increasing eigenvalue; ties prefer lower axes."""
    w, v = np.linalg.eigh(M)
    scale = max(abs(w).max(), 1e-300)
    order = sorted(range(len(w)), key=lambda i: (round(w[i] / scale, 9), int(np.argmax(np.abs(v[:, i])))))
    V = v[:, order].T.copy()
    for row in V:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1
    return V


def _smallest_directions(M: np.ndarray, k: int) -> np.ndarray:
    """k eigenvectors of the smallest eigenvalues; ties prefer lower axes."""
    if k == 0:
        return np.zeros((0, M.shape[0]))
    return _ranked_directions(M)[:k]


def _starting_subspaces(M: np.ndarray, k: int) -> list:
    """All k-subsets of the eigenvectors of M, lowest total energy first."""
    if k == 0:
        return [np.zeros((0, M.shape[0]))]
    E = _ranked_directions(M)
    return [E[list(idx)] for idx in itertools.combinations(range(len(E)), k)]


def default_degree_cap(U, x, s, order=DEFAULT_ORDER, cap: int = 8) -> int:
    try:
        N0 = frequency(U, x, s, normalized=True, order=order)
    except (ZeroDivisionError, FloatingPointError):
        return 1
    if not np.isfinite(N0):
        return cap
    return int(min(cap, max(1, np.ceil(N0 + 0.5))))


def symmetry_defects(U, x, s: float, k_max: Optional[int] = None, d_max: Optional[int] = None,
                     order: int = 20, rounds: int = 20, stagnation: float = 1e-10) -> list:
    """Defects for k = 0..k_max at (x, s).

    For each k the subspace V is optimised by alternating the best invariant
    polynomial for V with the k least-energetic gradient directions of that
    polynomial.  A (k+1)-symmetric optimum is also k-symmetric, so each
    defect is finally lowered to the next one when that is smaller, which makes
    the list nondecreasing in k."""
    m, a = U.m, U.a
    k_max = m - 1 if k_max is None else k_max
    tm = tangent_map(U, x, s)
    c = _center(x, m)
    if tm.status == "constant":
        return [SymmetryReport(c, s, k, np.nan, 0, None, np.zeros((0, m)), status="constant")
                for k in range(k_max + 1)]
    T = tm.field
    if d_max is None:
        d_max = default_degree_cap(U, x, s)
    blocks, bp, bw = _fit_blocks(m, a, d_max, order)
    volume = sphere_area(m) / m
    tv = T.value(bp)
    tnorm2 = float(np.dot(bw, tv ** 2)) / volume
    tgrad = T.gradient(bp)
    reports = []
    M = _second_moment(tgrad, bw)
    for k in range(k_max + 1):
        # the alternation is local: start from the eigen-subspace with the best fit
        starts = [(_best_given_V(blocks, tv, bw, tnorm2, V0, m, a, volume)[0], i, V0)
                  for i, V0 in enumerate(_starting_subspaces(M, k))]
        V = min(starts, key=lambda t: (t[0], t[1]))[2]
        best = None
        prev = np.inf
        used = 0
        for it in range(max(1, rounds)):
            used = it + 1
            eta, blk, coeff, Z = _best_given_V(blocks, tv, bw, tnorm2, V, m, a, volume)
            if blk is None:
                break
            if best is None or eta < best[0] - 1e-15:
                best = (eta, blk, coeff, V.copy())
            if k == 0 or abs(prev - eta) <= stagnation * max(1.0, abs(eta)):
                break
            prev = eta
            P = _combine(blk, coeff)
            V = _smallest_directions(_second_moment(P.gradient(bp), bw), k)
        if best is None:
            reports.append(SymmetryReport(c, s, k, np.inf, 0, None, np.zeros((0, m)), rounds=used,
                                          status="empty"))
            continue
        eta, blk, coeff, Vb = best
        reports.append(SymmetryReport(c, s, k, max(float(eta), 0.0), blk.degree, _combine(blk, coeff), Vb,
                                      rounds=used, conditioning=1.0))
    for k in range(k_max - 1, -1, -1):
        hi = reports[k + 1]
        if hi.status == "ok" and hi.defect < reports[k].defect:
            r = hi
            reports[k] = SymmetryReport(c, s, k, r.defect, r.degree, r.poly, r.subspace[:k], rounds=r.rounds,
                                        conditioning=r.conditioning)
    return reports


def symmetry_defect(U, x, s: float, k: int, d_max: Optional[int] = None, order: int = 20) -> SymmetryReport:
    if not (0 <= k <= U.m):
        raise ValueError("k must lie in [0, m]")
    if k == U.m:
        raise FitSpaceEmpty("no non-constant polynomial is invariant along all of R^m")
    rep = symmetry_defects(U, x, s, k_max=U.m - 1, d_max=d_max, order=order)[k]
    if rep.status == "empty":
        raise FitSpaceEmpty(f"no {k}-symmetric member of degree <= {d_max}")
    return rep


# ---------------------------------------------------------------------------
# scales


@dataclass(frozen=True)
class ScaleClassification:
    center: np.ndarray
    radii: np.ndarray
    defects: np.ndarray      # (scales, k) defects
    bad: np.ndarray
    N: np.ndarray
    drops: np.ndarray
    eps: float

    @property
    def bad_count(self) -> int:
        return int(self.bad.sum())

    @property
    def total_drop(self) -> float:
        return float(self.N[0] - self.N[-1])

    def drop_disagreements(self, delta: float) -> list:
        """Scales where the frequency-drop criterion and the defect disagree."""
        out = []
        for j in range(len(self.drops)):
            good_by_drop = self.drops[j] < delta
            if good_by_drop and self.bad[j]:
                out.append(j)
        return out


def classify_scales(U, x, eps: float, gamma0: float = 0.5, J: Optional[int] = None, r_max: float = 0.5,
                    d_max: Optional[int] = None, order: int = 20, k_max: int = 0,
                    min_cells: float = 10.0) -> ScaleClassification:
    """Bad scale r_j iff the 0-symmetry defect at r_j is >= eps.

    The frequency drop N(r_j) - N(r_{j+1}) (normalised frequency) is recorded
    for each scale with a successor on the ladder."""
    prof = frequency_profile(U, x, r_max, gamma0, J, normalized=True, min_cells=min_cells)
    radii = prof.radii
    N = prof.N
    if d_max is None:
        d_max = int(min(8, max(1, np.ceil(N.max() + 0.5))))
    defects = []
    for r in radii:
        reps = symmetry_defects(U, x, r, k_max=k_max, d_max=d_max, order=order)
        defects.append([rep.defect for rep in reps])
    defects = np.array(defects)
    drops = N[:-1] - N[1:]
    bad = defects[:-1, 0] >= eps
    return ScaleClassification(center=prof.center, radii=radii[:-1], defects=defects[:-1], bad=bad, N=N,
                               drops=drops, eps=eps)


def fit_drop_threshold(classifications) -> float:
    """Largest delta such that every bad scale on the corpus drops by >= delta."""
    drops = [cl.drops[j] for cl in classifications for j in np.flatnonzero(cl.bad)]
    return float(min(drops)) if drops else np.inf


def poincare_trace_ratio(U, x, r: float, order: int = DEFAULT_ORDER) -> float:
    """int_B rho^a U^2 / (r^2 D + r H) with unnormalised D, H."""
    _require(U, x, r)
    num = weighted_ball_l2(U, x, r, order)
    H = functional_H(U, x, r, model=False, order=order)
    D = functional_D(U, x, r, model=False, order=order)
    den = r * r * D + r * H
    if den <= 0:
        raise ValueError("field vanishes identically on the ball")
    return num / den


@dataclass(frozen=True)
class ScreenResult:
    status: str     # "confirmed", "above-threshold", "violation"
    frequency: float
    margin: float


def small_frequency_screen(U, x, r: float, eps0: float = 0.05, order: int = DEFAULT_ORDER,
                           samples: int = 12) -> ScreenResult:
    """If r D/H <= eps0 (unnormalised), confirm that U has no zero on the half ball."""
    N = frequency(U, x, r, order=order)
    if N > eps0:
        return ScreenResult("above-threshold", float(N), np.nan)
    m = U.m
    c = _center(x, m)
    bp, _ = unit_ball_rule(m, U.a, order)
    lin = np.linspace(-0.5, 0.5, samples)
    cube = np.stack(np.meshgrid(*([lin] * m), indexing="ij"), axis=-1).reshape(-1, m)
    cube = cube[np.linalg.norm(cube, axis=1) <= 0.5]
    pts = c + r * np.concatenate([0.5 * bp, cube])
    v = U.value(pts)
    if np.all(v > 0) or np.all(v < 0):
        return ScreenResult("confirmed", float(N), float(np.min(np.abs(v))))
    return ScreenResult("violation", float(N), float(np.min(np.abs(v))))
