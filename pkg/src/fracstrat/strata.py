"""Nodal, critical and singular sets on tensor grids, quantitative strata,
the recursive effective cover, tube volumes and Hausdorff-content estimates.

Sets are extracted from fields sampled on the nodes of a cube [-R, R]^d with
spacing h; "cells" are the grid cubes.  Grid values equal to zero count as
positive for sign-change tests.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Optional

import numpy as np
from scipy import ndimage, stats
from scipy.spatial import cKDTree
from scipy.special import gamma as gamma_fn

from .frequency import FitSpaceEmpty, symmetry_defects

TAU_HARM = 1e-3


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class BoxSamples:
    """Field values and gradients on the nodes of [lo, lo + h (shape - 1)]^d."""

    lo: np.ndarray
    h: float
    values: np.ndarray
    grads: np.ndarray   # shape + (d,)

    @property
    def dim(self) -> int:
        return self.values.ndim

    def node(self, idx) -> np.ndarray:
        return self.lo + self.h * np.asarray(idx, dtype=float)


def sample_box(value: Callable, gradient: Optional[Callable], dim: int, radius: float, h: float,
               center=None) -> BoxSamples:
    """Sample ``value`` (and ``gradient``) on a cube of half-width ``radius``.

    Without an analytic gradient, fourth-order centred differences are used."""
    k = int(np.ceil(radius / h - 1e-9))
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    ax = h * np.arange(-k, k + 1)
    pts = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1) + c
    vals = np.asarray(value(pts), dtype=float)
    if gradient is not None:
        grads = np.asarray(gradient(pts), dtype=float)
    else:
        from .frequency import _central_difference
        grads = np.stack([_central_difference(vals, i, h) for i in range(dim)], axis=-1)
    return BoxSamples(lo=c - k * h, h=h, values=vals, grads=grads)


def boundary_trace(U):
    """(value, gradient) callables of the trace x -> U(x, 0) on R^n."""
    n = U.m - 1

    def lift(x):
        x = np.asarray(x, dtype=float)
        return np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)

    return (lambda x: U.value(lift(x))), (lambda x: U.gradient(lift(x))[..., :n])


def _corner_offsets(d):
    return np.array(list(itertools.product((0, 1), repeat=d)), dtype=int)


def _cell_corner_values(arr: np.ndarray) -> np.ndarray:
    """(cells..., 2^d) array of corner values for every grid cube."""
    d = arr.ndim
    out = []
    for off in _corner_offsets(d):
        sl = tuple(slice(o, arr.shape[i] - 1 + o) for i, o in enumerate(off))
        out.append(arr[sl])
    return np.stack(out, axis=-1)


# ---------------------------------------------------------------------------
# geometry of extracted sets


def _point_segment_distance(q, A, B):
    AB = B - A
    t = np.einsum("...i,...i->...", q - A, AB) / np.maximum(np.einsum("...i,...i->...", AB, AB), 1e-300)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(q - (A + t[..., None] * AB), axis=-1)


def _point_triangle_distance(q, A, B, C):
    AB, AC = B - A, C - A
    nrm = np.cross(AB, AC)
    nn = np.einsum("...i,...i->...", nrm, nrm)
    good = nn > 1e-300
    nn = np.where(good, nn, 1.0)
    w = q - A
    # barycentric coordinates of the projection
    u = np.einsum("...i,...i->...", np.cross(w, AC), nrm) / nn
    v = np.einsum("...i,...i->...", np.cross(AB, w), nrm) / nn
    inside = good & (u >= 0) & (v >= 0) & (u + v <= 1)
    plane = np.abs(np.einsum("...i,...i->...", w, nrm)) / np.sqrt(nn)
    edges = np.minimum(np.minimum(_point_segment_distance(q, A, B), _point_segment_distance(q, B, C)),
                       _point_segment_distance(q, C, A))
    return np.where(inside, plane, edges)


@dataclass
class SetGeometry:
    """Union of points, segments and triangles in R^dim."""

    dim: int
    points: np.ndarray = None
    segments: np.ndarray = None
    triangles: np.ndarray = None

    def __post_init__(self):
        d = self.dim
        if self.points is None:
            self.points = np.zeros((0, d))
        if self.segments is None:
            self.segments = np.zeros((0, 2, d))
        if self.triangles is None:
            self.triangles = np.zeros((0, 3, d))

    @property
    def is_empty(self) -> bool:
        return len(self.points) == 0 and len(self.segments) == 0 and len(self.triangles) == 0

    def _primitives(self):
        out = []
        if len(self.points):
            out.append(("p", self.points, self.points, np.zeros(len(self.points))))
        for kind, arr in (("s", self.segments), ("t", self.triangles)):
            if len(arr):
                cen = arr.mean(axis=1)
                rad = np.linalg.norm(arr - cen[:, None], axis=-1).max(axis=1)
                out.append((kind, arr, cen, rad))
        return out

    def distance(self, q: np.ndarray, upper: float = np.inf) -> np.ndarray:
        """Exact Euclidean distance from each query point to the set (inf beyond ``upper``)."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        best = np.full(len(q), np.inf)
        for kind, arr, cen, rad in self._primitives():
            tree = cKDTree(cen)
            dc, _ = tree.query(q)
            if kind == "p":
                best = np.minimum(best, dc)
                continue
            L = float(rad.max())
            active = np.flatnonzero(dc - L <= upper)
            if len(active) == 0:
                continue
            lists = tree.query_ball_point(q[active], dc[active] + L)
            lens = np.array([len(v) for v in lists])
            qi = np.repeat(active, lens)
            pi = np.concatenate([np.asarray(v, dtype=int) for v in lists]) if lens.sum() else np.zeros(0, int)
            if kind == "s":
                dist = _point_segment_distance(q[qi], arr[pi, 0], arr[pi, 1])
            else:
                dist = _point_triangle_distance(q[qi], arr[pi, 0], arr[pi, 1], arr[pi, 2])
            part = np.full(len(q), np.inf)
            np.minimum.at(part, qi, dist)
            best = np.minimum(best, part)
        return best

    def sample(self, spacing: float) -> np.ndarray:
        """Points on the set no farther than ``spacing`` from any set point."""
        out = [self.points]
        for seg in self.segments:
            k = max(1, int(np.ceil(np.linalg.norm(seg[1] - seg[0]) / spacing)))
            t = np.linspace(0, 1, k + 1)[:, None]
            out.append(seg[0] + t * (seg[1] - seg[0]))
        for tri in self.triangles:
            e = max(np.linalg.norm(tri[1] - tri[0]), np.linalg.norm(tri[2] - tri[0]), np.linalg.norm(tri[2] - tri[1]))
            k = max(1, int(np.ceil(e / spacing)))
            ij = [(i, j) for i in range(k + 1) for j in range(k + 1 - i)]
            b = np.array(ij, dtype=float) / k
            out.append(tri[0] + b[:, :1] * (tri[1] - tri[0]) + b[:, 1:] * (tri[2] - tri[0]))
        pts = np.concatenate(out) if out else np.zeros((0, self.dim))
        return np.unique(np.round(pts, 12), axis=0)

    def subset_points(self, mask) -> "SetGeometry":
        return SetGeometry(self.dim, points=self.points[mask])


@dataclass
class SetExtract:
    kind: str                 # "nodal", "critical", "singular"
    dim: int
    h: float
    cells: np.ndarray         # (N, dim) lower-corner indices
    certificates: list
    geometry: SetGeometry
    measure: float = 0.0
    clusters: int = 0
    labels: np.ndarray = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# nodal sets by marching simplices


def _kuhn_simplices(d):
    """Vertex offset lists of the d! simplices of the unit cube."""
    out = []
    for perm in itertools.permutations(range(d)):
        v = [np.zeros(d, dtype=int)]
        for p in perm:
            w = v[-1].copy()
            w[p] = 1
            v.append(w)
        out.append(np.array(v))
    return out


def _edge_points(P, F, i, j):
    t = F[:, i] / (F[:, i] - F[:, j])
    return P[:, i] + t[:, None] * (P[:, j] - P[:, i])


def _clip_segments_to_ball(S, center, radius):
    """Length of each segment inside the ball."""
    A, B = S[:, 0] - center, S[:, 1] - center
    D = B - A
    aa = np.einsum("ij,ij->i", D, D)
    bb = 2 * np.einsum("ij,ij->i", A, D)
    cc = np.einsum("ij,ij->i", A, A) - radius ** 2
    disc = bb * bb - 4 * aa * cc
    out = np.zeros(len(S))
    ok = (disc > 0) & (aa > 0)
    sq = np.sqrt(np.where(ok, disc, 0))
    t0 = np.clip((-bb - sq) / np.where(ok, 2 * aa, 1), 0, 1)
    t1 = np.clip((-bb + sq) / np.where(ok, 2 * aa, 1), 0, 1)
    out[ok] = (np.maximum(t1 - t0, 0) * np.sqrt(aa))[ok]
    return out


def _triangle_area_in_ball(T, center, radius, levels=3):
    A, B, C = T[:, 0], T[:, 1], T[:, 2]
    area = 0.5 * np.linalg.norm(np.cross(B - A, C - A), axis=-1)
    inside_all = np.all(np.linalg.norm(T - center, axis=-1) <= radius, axis=1)
    frac = inside_all.astype(float)
    k = 2 ** levels
    # centroids of the k^2 sub-triangles in barycentric coordinates
    cents = []
    for i in range(k):
        for j in range(k - i):
            cents.append(((i + 1 / 3) / k, (j + 1 / 3) / k))
            if i + j < k - 1:
                cents.append(((i + 2 / 3) / k, (j + 2 / 3) / k))
    cents = np.array(cents)
    todo = np.flatnonzero(~inside_all)
    if len(todo):
        P = (A[todo, None] + cents[None, :, :1] * (B - A)[todo, None] + cents[None, :, 1:] * (C - A)[todo, None])
        frac[todo] = np.mean(np.linalg.norm(P - center, axis=-1) <= radius, axis=1)
    return area * frac


def extract_nodal(samples: BoxSamples, window_center=None, window_radius: Optional[float] = None) -> SetExtract:
    """Zero set of the piecewise-linear (Kuhn) interpolant.

    Reports cells with a genuine corner sign change; the measure is the
    length (d = 2), area (d = 3) or point count (d = 1) inside the window."""
    v = samples.values
    d = v.ndim
    h = samples.h
    wc = np.zeros(d) if window_center is None else np.asarray(window_center, dtype=float)
    neg = v < 0
    corners = _cell_corner_values(neg.astype(np.int8))
    cnt = corners.sum(axis=-1)
    mask = (cnt > 0) & (cnt < 2 ** d)
    cells = np.argwhere(mask)
    segs, tris, pts = [], [], []
    if len(cells):
        for simplex in _kuhn_simplices(d):
            idx = cells[:, None, :] + simplex[None]
            F = v[tuple(idx[..., i] for i in range(d))]
            P = samples.lo + h * idx.astype(float)
            S = F < 0
            nneg = S.sum(axis=1)
            if d == 1:
                sel = nneg == 1
                if np.any(sel):
                    pts.append(_edge_points(P[sel], F[sel], 0, 1))
                continue
            if d == 2:
                for lone in range(3):
                    others = [i for i in range(3) if i != lone]
                    sel = ((S[:, lone]) & (nneg == 1)) | ((~S[:, lone]) & (nneg == 2))
                    if np.any(sel):
                        segs.append(np.stack([_edge_points(P[sel], F[sel], lone, others[0]),
                                              _edge_points(P[sel], F[sel], lone, others[1])], axis=1))
                continue
            if d == 3:
                for lone in range(4):
                    others = [i for i in range(4) if i != lone]
                    sel = ((S[:, lone]) & (nneg == 1)) | ((~S[:, lone]) & (nneg == 3))
                    if np.any(sel):
                        tris.append(np.stack([_edge_points(P[sel], F[sel], lone, o) for o in others], axis=1))
                for a_, b_ in ((0, 1), (0, 2), (0, 3)):
                    c_, d_ = [i for i in range(4) if i not in (a_, b_)]
                    sel = (nneg == 2) & (S[:, a_] == S[:, b_])
                    if np.any(sel):
                        Pp, Ff = P[sel], F[sel]
                        q1 = _edge_points(Pp, Ff, a_, c_)
                        q2 = _edge_points(Pp, Ff, a_, d_)
                        q3 = _edge_points(Pp, Ff, b_, d_)
                        q4 = _edge_points(Pp, Ff, b_, c_)
                        tris.append(np.stack([q1, q2, q3], axis=1))
                        tris.append(np.stack([q1, q3, q4], axis=1))
                continue
            raise ValueError("nodal extraction supports d <= 3")
    geom = SetGeometry(d, points=np.concatenate(pts) if pts else None,
                       segments=np.concatenate(segs) if segs else None,
                       triangles=np.concatenate(tris) if tris else None)
    measure = 0.0
    if window_radius is not None:
        if d == 1:
            measure = float(np.sum(np.linalg.norm(geom.points - wc, axis=-1) <= window_radius))
        elif d == 2:
            measure = float(_clip_segments_to_ball(geom.segments, wc, window_radius).sum()) if len(geom.segments) else 0.0
        else:
            measure = float(_triangle_area_in_ball(geom.triangles, wc, window_radius).sum()) if len(geom.triangles) else 0.0
    lab, ncl = ndimage.label(mask, structure=np.ones((3,) * d))
    return SetExtract("nodal", d, h, cells, ["sign-change"] * len(cells), geom, measure, ncl, lab)


# ---------------------------------------------------------------------------
# critical and singular sets


def _poincare_miranda(G: np.ndarray) -> np.ndarray:
    """Corner-based Poincare-Miranda test on every cell.

    G has shape (cells, 2^d, d); corners ordered as itertools.product.  The
    multilinear interpolant of each component attains its face extrema at
    corners, so opposite non-strict signs on opposite faces (for some
    assignment of components to axes) certify a zero."""
    ncell, nc, d = G.shape
    offs = _corner_offsets(d)
    ok = np.zeros(ncell, dtype=bool)
    for perm in itertools.permutations(range(d)):
        good = np.ones(ncell, dtype=bool)
        for axis, comp in enumerate(perm):
            lo = G[:, offs[:, axis] == 0, comp]
            hi = G[:, offs[:, axis] == 1, comp]
            up = (lo.max(axis=1) <= 0) & (hi.min(axis=1) >= 0)
            down = (lo.min(axis=1) >= 0) & (hi.max(axis=1) <= 0)
            good &= up | down
        ok |= good
    return ok


def _winding_2d(G: np.ndarray) -> np.ndarray:
    """Winding number of the corner-interpolated gradient around each 2-D cell."""
    # product order for d=2: (0,0), (0,1), (1,0), (1,1); boundary loop 00 -> 10 -> 11 -> 01
    loop = G[:, [0, 2, 3, 1, 0], :]
    ang = np.arctan2(loop[..., 1], loop[..., 0])
    dang = np.diff(ang, axis=1)
    dang = (dang + np.pi) % (2 * np.pi) - np.pi
    zero = np.any(np.linalg.norm(G, axis=-1) == 0, axis=1)
    w = np.rint(dang.sum(axis=1) / (2 * np.pi)).astype(int)
    return np.where(zero, 1, w)


def resolution_floor(samples: BoxSamples) -> float:
    """Largest change of |grad| across a cell, the smallest usable prefilter."""
    gn = np.linalg.norm(samples.grads, axis=-1)
    cv = _cell_corner_values(gn)
    return float((cv.max(axis=-1) - cv.min(axis=-1)).max())


def _locate_points(samples: BoxSamples, cells: np.ndarray) -> np.ndarray:
    """Zero of the least-squares linear fit of the gradient over each cell, clipped to the cell."""
    d = samples.dim
    h = samples.h
    offs = _corner_offsets(d)
    if len(cells) == 0:
        return np.zeros((0, d))
    idx = cells[:, None, :] + offs[None]
    G = samples.grads[tuple(idx[..., i] for i in range(d))]
    X = np.concatenate([offs.astype(float), np.ones((len(offs), 1))], axis=1)
    pinv = np.linalg.pinv(X)
    coef = np.einsum("kc,ncj->nkj", pinv, G)     # (cells, d+1, comps)
    Jm = np.transpose(coef[:, :d, :], (0, 2, 1))  # d(comp)/d(offset)
    b = -coef[:, d, :]
    t = np.full((len(cells), d), 0.5)
    for i in range(len(cells)):
        sol, *_ = np.linalg.lstsq(Jm[i], b[i], rcond=None)
        t[i] = np.clip(sol, 0, 1)
    return samples.lo + h * (cells + t)


def extract_critical(samples: BoxSamples, tau: Optional[float] = None, certificate: str = "sign",
                     window_center=None, window_radius: Optional[float] = None) -> SetExtract:
    """Cells certified to contain a zero of the gradient.

    ``sign``: every component changes sign (non-strict) over the corners;
    ``miranda``: corner Poincare-Miranda test.  Cells must also have a corner
    with |grad| < tau; tau defaults to just above the resolution floor."""
    d = samples.dim
    floor = resolution_floor(samples)
    if tau is None:
        tau = 1.01 * floor
    elif tau < floor:
        raise ValueError(f"tau_crit={tau:.3g} is below the discretisation floor {floor:.3g}")
    G = np.stack([_cell_corner_values(samples.grads[..., i]) for i in range(d)], axis=-1)
    gn = np.linalg.norm(G, axis=-1).min(axis=-1)
    pre = gn < tau
    sign_ok = np.all((G.min(axis=-2) <= 0) & (G.max(axis=-2) >= 0), axis=-1)
    mask = pre & sign_ok
    if certificate == "miranda":
        cand = np.argwhere(mask)
        flat = G[tuple(cand.T)]
        ok = _poincare_miranda(flat)
        mask = np.zeros_like(mask)
        mask[tuple(cand[ok].T)] = True
    elif certificate != "sign":
        raise ValueError(f"unknown certificate {certificate!r}")
    if window_radius is not None:
        wc = np.zeros(d) if window_center is None else np.asarray(window_center, dtype=float)
        cc = samples.lo + samples.h * (np.indices(mask.shape).reshape(d, -1).T + 0.5)
        mask &= (np.linalg.norm(cc - wc, axis=-1) <= window_radius + samples.h).reshape(mask.shape)
    cells = np.argwhere(mask)
    lab, ncl = ndimage.label(mask, structure=np.ones((3,) * d))
    geom = SetGeometry(d, points=_locate_points(samples, cells))
    return SetExtract("critical", d, samples.h, cells, [certificate] * len(cells), geom, float(len(cells)), ncl, lab)


def extract_singular(samples: BoxSamples, tau: Optional[float] = None, certificate: str = "sign",
                     window_center=None, window_radius: Optional[float] = None) -> SetExtract:
    """Critical cells where the field can vanish.

    A cell qualifies when its corner values change sign, or when the smallest
    |value| is within the Taylor bound (1/2) H_cell (sqrt(d) h)^2 allowed for a
    zero of a critical point inside the cell (zeros of even order never
    change sign)."""
    crit = extract_critical(samples, tau, certificate, window_center, window_radius)
    d, h = samples.dim, samples.h
    if len(crit.cells) == 0:
        return SetExtract("singular", d, h, crit.cells, [], SetGeometry(d), 0.0, 0, None)
    V = _cell_corner_values(samples.values)[tuple(crit.cells.T)]
    G = np.stack([_cell_corner_values(samples.grads[..., i]) for i in range(d)], axis=-1)[tuple(crit.cells.T)]
    hess = (G.max(axis=1) - G.min(axis=1)).max(axis=-1) / h
    sign = (V.min(axis=1) <= 0) & (V.max(axis=1) >= 0)
    touch = np.abs(V).min(axis=1) <= 0.5 * hess * d * h * h
    keep = sign | touch
    certs = ["sign-change" if s else "touch-bound" for s in sign[keep]]
    cells = crit.cells[keep]
    mask = np.zeros(np.array(samples.values.shape) - 1, dtype=bool)
    mask[tuple(cells.T)] = True
    lab, ncl = ndimage.label(mask, structure=np.ones((3,) * d))
    geom = SetGeometry(d, points=crit.geometry.points[keep])
    return SetExtract("singular", d, h, cells, certs, geom, float(len(cells)), ncl, lab)


# ---------------------------------------------------------------------------
# critical points near a model, slice by slice


def generic_rotation(m: int, seed: int = 20240607) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.normal(size=(m, m)))
    return q * np.sign(np.diag(r))


@dataclass(frozen=True)
class CriticalCount:
    per_plane: dict
    tau: dict

    @property
    def total(self) -> int:
        return max(self.per_plane.values()) if self.per_plane else 0

    def __int__(self):
        return self.total


def count_plane_components(g: np.ndarray, h: float, r: float, tau: Optional[float] = None):
    """Components of {|g| < tau} inside the disk of radius r that contain a
    certified zero (winding number or Poincare-Miranda) of the 2-D field g."""
    k = (g.shape[0] - 1) // 2
    ax = h * np.arange(-k, k + 1)
    S, T = np.meshgrid(ax, ax, indexing="ij")
    inside = S ** 2 + T ** 2 <= r * r
    gn = np.linalg.norm(g, axis=-1)
    G = np.stack([_cell_corner_values(g[..., i]) for i in range(2)], axis=-1)
    cell_in = _cell_corner_values(inside.astype(np.int8)).min(axis=-1) > 0
    var = (_cell_corner_values(gn).max(axis=-1) - _cell_corner_values(gn).min(axis=-1))
    if tau is None:
        tau = max(0.05 * float(gn[inside].max()), 2.0 * float(var[cell_in].max()))
    sub = (gn < tau) & inside
    local = var[cell_in & (_cell_corner_values(sub.astype(np.int8)).max(axis=-1) > 0)]
    if len(local) and tau < float(local.max()):
        raise ValueError(f"tau_crit={tau:.3g} does not resolve the sublevel set at spacing h={h}")
    lab, ncomp = ndimage.label(sub, structure=np.ones((3, 3)))
    flat = G.reshape(-1, 4, 2)
    cert = (_winding_2d(flat) != 0) | _poincare_miranda(flat)
    cert = cert.reshape(cell_in.shape) & cell_in
    comps = set()
    for c in np.argwhere(cert):
        i, j = c
        labels = lab[i:i + 2, j:j + 2].ravel()
        labels = labels[labels > 0]
        if len(labels):
            comps.add(int(labels.min()))
    return len(comps), tau


def critical_count_near_model(u, P, r: float, h: float, tau: Optional[float] = None,
                              rotation: Optional[np.ndarray] = None) -> CriticalCount:
    """Certified critical components of u restricted to each coordinate plane
    of a fixed generic frame, inside the disk of radius r about the origin."""
    m = u.m
    if P is not None and getattr(P, "degree", 2) < 1:
        raise ValueError("model must be non-constant")
    Rm = generic_rotation(m) if rotation is None else rotation
    k = int(np.ceil(r / h - 1e-9))
    ax = h * np.arange(-k, k + 1)
    S, T = np.meshgrid(ax, ax, indexing="ij")
    per, taus = {}, {}
    for i, j in itertools.combinations(range(m), 2):
        e1, e2 = Rm[:, i], Rm[:, j]
        pts = S[..., None] * e1 + T[..., None] * e2
        grad = u.gradient(pts)
        g = np.stack([grad @ e1, grad @ e2], axis=-1)
        cnt, t = count_plane_components(g, h, r, tau)
        per[(i, j)] = cnt
        taus[(i, j)] = t
    return CriticalCount(per, taus)


# ---------------------------------------------------------------------------
# tube volumes and Hausdorff content


@dataclass(frozen=True)
class TubeVolumeCurve:
    radii: np.ndarray
    volumes: np.ndarray
    exponent: float
    stderr: float
    window_center: np.ndarray
    window_radius: float
    voxel: float

    def band(self, z: float = 2.0):
        return self.exponent - z * self.stderr, self.exponent + z * self.stderr


def tube_volume(geometry: SetGeometry, radii, window_center=None, window_radius: float = 0.5,
                voxel: float = 1 / 128, resolution: float = 0.0) -> TubeVolumeCurve:
    """Vol(T_r(S) ∩ window) by counting voxel centres within distance r of S.

    The slope of log Vol against log r is the Minkowski co-dimension."""
    radii = np.sort(np.asarray(radii, dtype=float))
    floor = max(2 * voxel, 2 * resolution)
    if radii[0] < floor * (1 - 1e-12):
        raise ValueError(f"radii must be >= {floor:.3g} (twice the resolution)")
    if geometry.is_empty:
        raise ValueError("empty set")
    d = geometry.dim
    wc = np.zeros(d) if window_center is None else np.asarray(window_center, dtype=float)
    k = int(np.ceil(window_radius / voxel))
    ax = voxel * (np.arange(-k, k) + 0.5)
    Q = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d) + wc
    Q = Q[np.linalg.norm(Q - wc, axis=1) <= window_radius]
    dist = geometry.distance(Q, upper=radii[-1])
    vols = np.array([np.count_nonzero(dist <= r) * voxel ** d for r in radii])
    if np.any(vols <= 0):
        raise ValueError("set does not meet the window at the smallest radius")
    fit = stats.linregress(np.log(radii), np.log(vols))
    return TubeVolumeCurve(radii, vols, float(fit.slope), float(fit.stderr), wc, window_radius, voxel)


def unit_ball_volume(d: int) -> float:
    return float(np.pi ** (d / 2) / gamma_fn(d / 2 + 1))


@dataclass(frozen=True)
class HausdorffEstimate:
    scales: np.ndarray
    counts: np.ndarray
    contents: np.ndarray
    plateau: float
    is_plateau: bool


def greedy_vitali_count(points: np.ndarray, s: float) -> int:
    """Centres picked in lexicographic order, pairwise >= 2s apart; every
    point lies within 2s of a centre."""
    if len(points) == 0:
        return 0
    order = np.lexsort(points.T[::-1])
    P = points[order]
    tree = cKDTree(P)
    covered = np.zeros(len(P), dtype=bool)
    count = 0
    for i in range(len(P)):
        if covered[i]:
            continue
        count += 1
        covered[tree.query_ball_point(P[i], 2 * s)] = True
    return count


def hausdorff_estimate(geometry: SetGeometry, d: int, scales, rel_tol: float = 0.1) -> HausdorffEstimate:
    """count(s) * omega_d s^d over decreasing scales; the plateau is the value
    at the two finest scales when they agree within ``rel_tol``."""
    scales = np.sort(np.asarray(scales, dtype=float))[::-1]
    pts = geometry.sample(scales[-1] / 10)
    counts = np.array([greedy_vitali_count(pts, s) for s in scales])
    contents = counts * unit_ball_volume(d) * scales ** d
    last = contents[-2:]
    plateau = float(last.mean())
    is_plateau = bool(abs(last[0] - last[1]) <= rel_tol * max(abs(plateau), 1e-300))
    return HausdorffEstimate(scales, counts, contents, plateau, is_plateau)


# ---------------------------------------------------------------------------
# quantitative strata


@dataclass
class StratumDefects:
    """Symmetry defects of U at boundary samples over a scale ladder.

    ``defects[i, j, k]`` is the k-symmetry defect at sample i and scale
    radii[j]; k runs over 0..m (k = m has no non-constant fit, recorded as inf)."""

    samples: np.ndarray
    radii: np.ndarray
    defects: np.ndarray

    def stratum_mask(self, k: int, eps: float, r: float) -> np.ndarray:
        use = self.radii >= r * (1 - 1e-12)
        if not np.any(use):
            raise ValueError("no ladder scale at or above r")
        return np.all(self.defects[:, use, k + 1] >= eps, axis=1)


def compute_stratum_defects(U, samples: np.ndarray, radii, d_max: Optional[int] = None,
                            order: int = 16) -> StratumDefects:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    m = U.m
    out = np.zeros((len(samples), len(radii), m + 1))
    for i, x in enumerate(samples):
        for j, s in enumerate(radii):
            reps = symmetry_defects(U, x, s, k_max=m - 1, d_max=d_max, order=order)
            vals = [0.0 if rep.status == "constant" else rep.defect for rep in reps]
            out[i, j, :m] = vals
            out[i, j, m] = np.inf
    return StratumDefects(samples, radii, out)


def quantitative_stratum(U, k: int, eps: float, r: float, samples=None, radii=None,
                         defects: Optional[StratumDefects] = None, d_max: Optional[int] = None) -> np.ndarray:
    """Samples where no ladder scale s >= r is (k+1, eps)-symmetric."""
    if defects is None:
        defects = compute_stratum_defects(U, samples, radii, d_max=d_max)
    mask = defects.stratum_mask(k, eps, r)
    # inclusion in (k, eps) holds by construction; assert it on the sample set
    if k + 1 < U.m:
        assert np.all(defects.stratum_mask(k + 1, eps, r)[mask])
    return defects.samples[mask]


# ---------------------------------------------------------------------------
# effective cover


@dataclass
class CoverBall:
    level: int
    center: np.ndarray
    radius: float
    branch: str = ""            # "bad", "good", "leaf"
    children: list = field(default_factory=list)
    labels: tuple = ()
    claim_violations: int = 0


@dataclass
class StratumCover:
    k: int
    eps: float
    mu: float
    j: int
    root: CoverBall
    levels: list                 # list of lists of CoverBall per level
    leaves: list
    bad_children: int            # max children of a bad ball
    good_children: int           # max children of a good ball
    D: int                       # max bad labels along a root-to-leaf path
    C0: float
    C1: float
    claim_violations: int
    samples: np.ndarray

    @property
    def leaf_count(self) -> int:
        return len(self.leaves)

    def leaf_bound(self, C0=None, C1=None, D=None) -> float:
        n = self.samples.shape[1]
        C0 = self.C0 if C0 is None else C0
        C1 = self.C1 if C1 is None else C1
        D = self.D if D is None else D
        return (C1 * self.mu ** (-(n + 1))) ** D * (C0 * self.mu ** (-self.k)) ** (self.j - D)

    def coverage(self) -> float:
        if len(self.samples) == 0:
            return 1.0
        C = np.array([b.center for b in self.leaves])
        R = np.array([b.radius for b in self.leaves])
        tree = cKDTree(C)
        d, i = tree.query(self.samples, k=min(8, len(C)))
        d = np.atleast_2d(d.T).T if d.ndim == 1 else d
        i = np.atleast_2d(i.T).T if i.ndim == 1 else i
        inside = np.any(d <= R[i] * (1 + 1e-12), axis=1)
        return float(inside.mean())

    def tuples(self) -> list:
        return [b.labels for b in self.leaves]


def _lattice_cover(center, radius, child_radius, dim):
    """Cubic lattice of child centres whose balls cover B(center, radius)."""
    step = 2 * child_radius / np.sqrt(dim)
    k = int(np.ceil(radius / step))
    ax = step * np.arange(-k, k + 1)
    pts = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    keep = np.linalg.norm(pts, axis=1) <= radius + child_radius
    return center + pts[keep]


def _subspace_cover(center, radius, child_radius, V, tube):
    """Child centres on c + V covering the tube-neighbourhood of c + V inside B(center, radius)."""
    dim = len(center)
    kdim = len(V)
    if kdim == 0:
        return center[None].copy()
    reach = np.sqrt(max(child_radius ** 2 - tube ** 2, 0.25 * child_radius ** 2))
    step = 2 * reach / np.sqrt(kdim)
    k = int(np.ceil(radius / step))
    ax = step * np.arange(-k, k + 1)
    coords = np.stack(np.meshgrid(*([ax] * kdim), indexing="ij"), axis=-1).reshape(-1, kdim)
    coords = coords[np.linalg.norm(coords, axis=1) <= radius + child_radius]
    return center + coords @ V


def _boundary_subspace(V: np.ndarray, n: int) -> np.ndarray:
    """Orthonormal basis of the x-projection of V (dropping near-vertical directions)."""
    if len(V) == 0:
        return np.zeros((0, n))
    X = V[:, :n]
    u, s, vt = np.linalg.svd(X, full_matrices=False)
    keep = s > 0.5
    return vt[keep]


def effective_cover(U, k: int, eps: float, mu: float, j: int, samples: np.ndarray, root_center=None,
                    root_radius: float = 1.0, d_max: Optional[int] = None, order: int = 16) -> StratumCover:
    """Recursive cover of the stratum samples down to balls of radius mu^j.

    A ball is bad when its centre is not (0, eps)-symmetric at the ball's
    scale; bad balls are refined by a full lattice, good balls only along the
    fitted k-plane.  Children without samples are pruned.  Samples a good
    refinement misses fall back to lattice children and are counted as
    claim violations."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[1]
    c0 = np.zeros(n) if root_center is None else np.asarray(root_center, dtype=float)
    root = CoverBall(0, c0, root_radius)
    levels = [[root]]
    owner = {id(root): np.flatnonzero(np.linalg.norm(samples - c0, axis=1) <= root_radius)}
    bad_max = good_max = 0
    violations = 0
    for level in range(j):
        nxt = []
        child_r = root_radius * mu ** (level + 1)
        for ball in levels[level]:
            idx = owner.pop(id(ball))
            reps = symmetry_defects(U, np.append(ball.center, 0.0), ball.radius, k_max=max(k, 0),
                                    d_max=d_max, order=order)
            eta0 = 0.0 if reps[0].status == "constant" else reps[0].defect
            pts = samples[idx]
            if eta0 >= eps:
                ball.branch = "bad"
                centers = _lattice_cover(ball.center, ball.radius, child_r, n)
            else:
                ball.branch = "good"
                Vx = _boundary_subspace(reps[k].subspace if reps[k].status == "ok" else np.zeros((0, n + 1)), n)
                centers = _subspace_cover(ball.center, ball.radius, child_r, Vx, ball.radius / 10)
            tree = cKDTree(centers)
            dd, near = tree.query(pts)
            covered = dd <= child_r * (1 + 1e-12)
            if ball.branch == "good" and not np.all(covered):
                extra = _lattice_cover(ball.center, ball.radius, child_r, n)
                violations += int(np.count_nonzero(~covered))
                ball.claim_violations = int(np.count_nonzero(~covered))
                centers = np.concatenate([centers, extra])
                tree = cKDTree(centers)
                dd, near = tree.query(pts)
            groups = {}
            for p_i, c_i in zip(idx, near):
                groups.setdefault(int(c_i), []).append(p_i)
            label = ball.labels + ((1,) if ball.branch == "bad" else (0,))
            for c_i in sorted(groups):
                child = CoverBall(level + 1, centers[c_i], child_r, labels=label)
                ball.children.append(child)
                owner[id(child)] = np.array(groups[c_i], dtype=int)
                nxt.append(child)
            if ball.branch == "bad":
                bad_max = max(bad_max, len(ball.children))
            else:
                good_max = max(good_max, len(ball.children))
        levels.append(nxt)
    leaves = levels[-1]
    for b in leaves:
        b.branch = "leaf"
    D = max((sum(b.labels) for b in leaves), default=0)
    C1 = max(bad_max, 1) * mu ** (n + 1)
    C0 = max(good_max, 1) * mu ** k
    return StratumCover(k=k, eps=eps, mu=mu, j=j, root=root, levels=levels, leaves=leaves, bad_children=bad_max,
                        good_children=good_max, D=int(D), C0=C0, C1=C1, claim_violations=violations,
                        samples=samples)


# ---------------------------------------------------------------------------
# horizontal split of boundary singular points


def _monomials(n, d):
    from .polynomials import multi_indices
    return list(multi_indices(n, d))


@dataclass(frozen=True)
class SplitResult:
    horizontal: np.ndarray     # tangent harmonic
    vertical: np.ndarray       # tangent not harmonic
    unclassified: np.ndarray
    ratios: np.ndarray
    degrees: np.ndarray


def fit_tangent_polynomial(f: Callable, x, n: int, d_max: int = 6, radius: float = 1e-2, npts: int = 400,
                           ambiguity: float = 3.0, seed: int = 7):
    """Least-squares homogeneous fit of f(x + z) - f(x) on a small ball.

    Returns (degree or None when two degrees fit comparably, coefficient map,
    relative residuals per degree)."""
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(npts, n))
    Z *= (radius * rng.uniform(0.2, 1.0, size=npts) / np.linalg.norm(Z, axis=1))[:, None]
    vals = f(np.asarray(x, dtype=float) + Z) - f(np.asarray(x, dtype=float)[None])
    scale = np.linalg.norm(vals)
    if scale == 0:
        return None, {}, {}
    res, coefs = {}, {}
    for d in range(1, d_max + 1):
        mons = _monomials(n, d)
        A = np.stack([np.prod((Z / radius) ** np.array(e), axis=1) for e in mons], axis=1)
        c, *_ = np.linalg.lstsq(A, vals, rcond=None)
        res[d] = float(np.linalg.norm(A @ c - vals) / scale)
        coefs[d] = {e: ci / radius ** d for e, ci in zip(mons, c)}
    order = sorted(res, key=lambda d: res[d])
    best, second = order[0], order[1]
    if res[second] <= ambiguity * res[best] or res[best] > 0.5:
        return None, coefs, res
    return best, coefs[best], res


def _sphere_l2(coefs: dict, n: int) -> float:
    from .geometry import unit_sphere_rule
    from .polynomials import Polynomial
    if not coefs:
        return 0.0
    P = Polynomial(n, {e: c for e, c in coefs.items() if c != 0})
    if n == 1:
        pts = np.array([[1.0], [-1.0]])
        return float(np.sqrt(np.mean(P(pts) ** 2)))
    pts, w = unit_sphere_rule(n, 0.0, 2 * max(P.degree, 1))
    return float(np.sqrt(np.dot(w, P(pts) ** 2) / w.sum()))


def boundary_split(f: Callable, samples: np.ndarray, U=None, tau_harm: float = TAU_HARM, d_max: int = 6,
                   radius: float = 1e-2) -> SplitResult:
    """Split boundary singular points by whether the tangent polynomial of f is harmonic."""
    from .polynomials import Polynomial
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[1]
    hor, ver, unc, ratios, degs = [], [], [], [], []
    for x in samples:
        d, coefs, _ = fit_tangent_polynomial(f, x, n, d_max=d_max, radius=radius)
        if d is None:
            unc.append(x)
            ratios.append(np.nan)
            degs.append(-1)
            continue
        P = Polynomial(n, {e: c for e, c in coefs.items() if c != 0})
        lap = P.laplacian()
        ratio = _sphere_l2(lap.terms, n) / max(_sphere_l2(P.terms, n), 1e-300)
        ratios.append(ratio)
        degs.append(d)
        (hor if ratio < tau_harm else ver).append(x)
    as_arr = lambda L: np.array(L).reshape(-1, n)
    return SplitResult(as_arr(hor), as_arr(ver), as_arr(unc), np.array(ratios), np.array(degs))
