"""Exact homogeneous solutions of div(|y|^a grad P) = 0.

Polynomials are sparse maps from exponent tuples to coefficients.  When the
weight exponent is rational (floats are read through their decimal repr)
every coefficient is a ``Fraction`` and the weighted-harmonic identity
y*Lap(P) + a*P_y = 0 cancels exactly.  Normalisation constants are irrational
and kept apart as a float ``scale``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Optional, Sequence

import numpy as np

from .geometry import sphere_area, unit_sphere_rule

IDENTITY_TOL = 1e-12


def exact(value):
    """Rational version of ``value``; floats go through their decimal repr."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        return Fraction(repr(float(value)))
    return Fraction(value)


def _is_exact(c) -> bool:
    return isinstance(c, (Fraction, int))


@dataclass(frozen=True)
class Polynomial:
    nvars: int
    terms: dict = field(default_factory=dict)

    @classmethod
    def from_terms(cls, nvars, items):
        acc = {}
        for e, c in items:
            e = tuple(int(v) for v in e)
            if len(e) != nvars:
                raise ValueError("exponent length does not match nvars")
            acc[e] = acc.get(e, 0) + c
        return cls(nvars, {e: c for e, c in acc.items() if c != 0})

    @classmethod
    def monomial(cls, exps, coeff=Fraction(1)):
        return cls(len(exps), {tuple(exps): coeff})

    # algebra -------------------------------------------------------------
    def __add__(self, other):
        return Polynomial.from_terms(self.nvars, itertools.chain(self.terms.items(), other.terms.items()))

    def __sub__(self, other):
        return self + other.scaled(-1)

    def scaled(self, c):
        return Polynomial(self.nvars, {e: v * c for e, v in self.terms.items() if v * c != 0})

    def derivative(self, i: int):
        out = []
        for e, c in self.terms.items():
            if e[i] > 0:
                f = list(e)
                f[i] -= 1
                out.append((f, c * e[i]))
        return Polynomial.from_terms(self.nvars, out)

    def times_variable(self, i: int, power: int = 1):
        out = {}
        for e, c in self.terms.items():
            f = list(e)
            f[i] += power
            out[tuple(f)] = c
        return Polynomial(self.nvars, out)

    def laplacian(self, variables: Optional[Sequence[int]] = None):
        variables = range(self.nvars) if variables is None else variables
        acc = Polynomial(self.nvars, {})
        for i in variables:
            acc = acc + self.derivative(i).derivative(i)
        return acc

    def directional(self, v):
        acc = Polynomial(self.nvars, {})
        for i, vi in enumerate(v):
            if vi != 0:
                acc = acc + self.derivative(i).scaled(vi)
        return acc

    def embed(self, nvars: int, index_map: Sequence[int]):
        """Rename variable i to ``index_map[i]`` inside a larger space."""
        out = {}
        for e, c in self.terms.items():
            f = [0] * nvars
            for i, k in enumerate(index_map):
                f[k] = e[i]
            out[tuple(f)] = c
        return Polynomial(nvars, out)

    # queries -------------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.terms

    def max_abs_coeff(self) -> float:
        return max((abs(float(c)) for c in self.terms.values()), default=0.0)

    def degrees(self) -> set:
        return {sum(e) for e in self.terms}

    @property
    def degree(self) -> int:
        return max(self.degrees(), default=0)

    def is_homogeneous(self) -> bool:
        return len(self.degrees()) <= 1

    def is_even_in(self, i: int) -> bool:
        return all(e[i] % 2 == 0 for e in self.terms)

    def is_exact(self) -> bool:
        return all(_is_exact(c) for c in self.terms.values())

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda t: tuple(-v for v in t[0]))

    # numerics ------------------------------------------------------------
    def _arrays(self):
        items = self.sorted_terms()
        if not items:
            return np.zeros((0, self.nvars), dtype=int), np.zeros(0)
        exps = np.array([e for e, _ in items], dtype=int)
        coef = np.array([float(c) for _, c in items])
        return exps, coef

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        exps, coef = self._arrays()
        if len(coef) == 0:
            return np.zeros(pts.shape[:-1])
        dmax = int(exps.max()) if exps.size else 0
        powers = pts[..., None] ** np.arange(dmax + 1)  # (..., nvars, dmax+1)
        mon = np.ones(pts.shape[:-1] + (len(coef),))
        for i in range(self.nvars):
            mon = mon * powers[..., i, :][..., exps[:, i]]
        return mon @ coef

    def gradient(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.stack([self.derivative(i)(pts) for i in range(self.nvars)], axis=-1)


def weighted_residual(P: Polynomial, a) -> Polynomial:
    """y * Lap(P) + a * dP/dy, with y the last variable."""
    y = P.nvars - 1
    return P.laplacian().times_variable(y) + P.derivative(y).scaled(a)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HomogeneousSolution:
    """Homogeneous polynomial with exact coefficients and a float normalisation.

    ``scale * poly`` has unit weighted sphere average
    (1/|S|) int_{S^{m-1}} |y|^a P^2 dsigma = 1.
    """

    poly: Polynomial
    degree: int
    a: object
    scale: float = 1.0
    symmetry_rank: int = 0
    invariant_subspace: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)), repr=False)
    family: str = ""

    @property
    def nvars(self) -> int:
        return self.poly.nvars

    @property
    def m(self) -> int:
        return self.poly.nvars

    @property
    def n(self) -> int:
        return self.poly.nvars - 1

    def __call__(self, pts):
        return self.scale * self.poly(pts)

    def gradient(self, pts):
        return self.scale * self.poly.gradient(pts)

    def normalized_poly(self) -> Polynomial:
        return self.poly.scaled(self.scale)


def weighted_sphere_mean(P, m: int, a: float, degree: int) -> float:
    pts, w = unit_sphere_rule(m, float(a), max(2, 2 * degree))
    return float(np.dot(w, P(pts) ** 2) / sphere_area(m))


def _normalized(P: Polynomial, a, degree: int, **kw) -> HomogeneousSolution:
    m = P.nvars
    mean = weighted_sphere_mean(P, m, float(a), degree)
    if mean <= 0:
        raise ValueError("cannot normalise the zero polynomial")
    sub, rank = symmetry_subspace(P)
    kw.setdefault("symmetry_rank", rank)
    kw.setdefault("invariant_subspace", sub)
    return HomogeneousSolution(poly=P, degree=degree, a=a, scale=1.0 / np.sqrt(mean), **kw)


def _pochhammer(x: Fraction, j: int) -> Fraction:
    out = Fraction(1)
    for i in range(j):
        out *= x + i
    return out


def terminating_2f1(alpha, beta, gam, nterms: int) -> list:
    """Coefficients of z^j in 2F1(alpha, beta; gam; z) for j < nterms (alpha a non-positive integer)."""
    return [_pochhammer(alpha, j) * _pochhammer(beta, j) / (_pochhammer(gam, j) * _pochhammer(Fraction(1), j))
            for j in range(nterms)]


def even_model_poly(k: int, a) -> HomogeneousSolution:
    """Degree-k (k even) member Phi(-k/2, (1-k-a)/2, 1/2, -x^2/y^2) y^k."""
    if k < 0 or k % 2:
        raise ValueError("even family needs a non-negative even degree")
    af = exact(a)
    c = terminating_2f1(Fraction(-k, 2), (1 - k - af) / 2, Fraction(1, 2), k // 2 + 1)
    P = Polynomial.from_terms(2, [((2 * j, k - 2 * j), c[j] * (-1) ** j) for j in range(k // 2 + 1)])
    return _normalized(P, af, k, family="even")


def odd_model_poly(k: int, a) -> HomogeneousSolution:
    """Degree-k (k odd) member Phi((1-k)/2, (2-k-a)/2, 3/2, -x^2/y^2) x y^{k-1}."""
    if k < 1 or k % 2 == 0:
        raise ValueError("odd family needs a positive odd degree")
    af = exact(a)
    c = terminating_2f1(Fraction(1 - k, 2), (2 - k - af) / 2, Fraction(3, 2), (k - 1) // 2 + 1)
    P = Polynomial.from_terms(2, [((2 * j + 1, k - 1 - 2 * j), c[j] * (-1) ** j) for j in range((k - 1) // 2 + 1)])
    return _normalized(P, af, k, family="odd")


def model_poly(k: int, a) -> HomogeneousSolution:
    return even_model_poly(k, a) if k % 2 == 0 else odd_model_poly(k, a)


def lift_to_symmetric(P2d: HomogeneousSolution, m: int) -> HomogeneousSolution:
    """Embed P(x, y) as P(x_1, y) on R^m, constant in x_2, ..., x_{m-1}."""
    if P2d.nvars != 2:
        raise ValueError("lift expects a two-variable family member")
    if m < 2:
        raise ValueError("m must be >= 2")
    Q = P2d.poly.embed(m, [0, m - 1])
    sub = np.eye(m)[1: m - 1]
    if P2d.degree == 1:
        # x_1 is also invariant along y
        sub = np.vstack([sub, np.eye(m)[m - 1:]])
    out = _normalized(Q, P2d.a, P2d.degree, family=f"lift({P2d.family})")
    return replace(out, symmetry_rank=len(sub), invariant_subspace=sub)


def extension_of_monomial(beta: Sequence[int], a) -> Polynomial:
    """Unique even weighted-harmonic polynomial with trace x^beta.

    P = sum_j (-1)^j y^{2j} Lap_x^j x^beta / prod_{i<=j} 2i(2i - 1 + a)."""
    af = exact(a)
    n = len(beta)
    m = n + 1
    q = Polynomial.monomial(tuple(beta) + (0,))
    out = q
    j = 0
    denom = Fraction(1)
    while True:
        j += 1
        q = q.laplacian(range(n))
        if q.is_zero:
            break
        denom *= 2 * j * (2 * j - 1 + af)
        out = out + q.times_variable(m - 1, 2 * j).scaled(Fraction((-1) ** j) / denom)
    return out


def multi_indices(nvars: int, d: int):
    if nvars == 0:
        if d == 0:
            yield ()
        return
    for first in range(d, -1, -1):
        for rest in multi_indices(nvars - 1, d - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def solution_space(n: int, d: int, a) -> tuple:
    """Exact basis of all even homogeneous degree-d solutions on R^{n+1}."""
    return tuple(extension_of_monomial(beta, a) for beta in multi_indices(n, d))


def solution_space_dim(n: int, d: int) -> int:
    return comb(n + d - 1, d)


def harmonic_basis_dimension(n: int, d: int) -> int:
    if d < 0:
        return 0
    lower = comb(n + d - 3, d - 2) if d >= 2 else 0
    return comb(n + d - 1, d) - lower


# ---------------------------------------------------------------------------
# exact linear algebra


def _rref(rows: list, ncols: int):
    """Row-reduce a list of Fraction rows; returns (rows, pivot columns)."""
    A = [list(r) for r in rows]
    pivots = []
    r = 0
    for col in range(ncols):
        piv = next((i for i in range(r, len(A)) if A[i][col] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        inv = 1 / A[r][col]
        A[r] = [v * inv for v in A[r]]
        for i in range(len(A)):
            if i != r and A[i][col] != 0:
                f = A[i][col]
                A[i] = [vi - f * vr for vi, vr in zip(A[i], A[r])]
        pivots.append(col)
        r += 1
        if r == len(A):
            break
    return A[:r], pivots


def exact_nullspace(rows: list, ncols: int) -> list:
    R, piv = _rref(rows, ncols)
    free = [c for c in range(ncols) if c not in piv]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for i, p in enumerate(piv):
            v[p] = -R[i][f]
        basis.append(v)
    return basis


def exact_rank(rows: list, ncols: int) -> int:
    return len(_rref(rows, ncols)[1])


def _gradient_matrix(P: Polynomial):
    """Columns: coefficient vectors of dP/dx_i over a common monomial list."""
    grads = [P.derivative(i) for i in range(P.nvars)]
    mons = sorted({e for g in grads for e in g.terms})
    return [[g.terms.get(e, 0) for g in grads] for e in mons], grads


def symmetry_subspace(P: Polynomial):
    """Orthonormal basis of directions v with <grad P, v> == 0, and its dimension."""
    rows, _ = _gradient_matrix(P)
    if not rows:
        return np.eye(P.nvars), P.nvars
    if P.is_exact():
        null = exact_nullspace([[exact(c) for c in r] for r in rows], P.nvars)
        if not null:
            return np.zeros((0, P.nvars)), 0
        B = np.array([[float(v) for v in vec] for vec in null])
    else:
        A = np.array(rows, dtype=float)
        _, s, vt = np.linalg.svd(A)
        tol = max(A.shape) * np.finfo(float).eps * (s[0] if len(s) else 1.0) * 1e3
        rank = int(np.sum(s > tol))
        B = vt[rank:]
        if len(B) == 0:
            return np.zeros((0, P.nvars)), 0
    q, _ = np.linalg.qr(B.T)
    return q.T.copy(), len(B)


# ---------------------------------------------------------------------------
# operations


def harmonic_boundary_basis(n: int, d: int) -> list:
    """Orthonormal basis (average measure on S^{n-1}) of harmonic homogeneous
    degree-d polynomials on R^n."""
    if n < 1 or d < 0:
        raise ValueError("need n >= 1 and d >= 0")
    mons = list(multi_indices(n, d))
    if d >= 2:
        lap = [Polynomial.monomial(e).laplacian() for e in mons]
        targets = list(multi_indices(n, d - 2))
        rows = [[lp.terms.get(t, Fraction(0)) for lp in lap] for t in targets]
        null = exact_nullspace(rows, len(mons))
    else:
        null = [[Fraction(int(i == j)) for i in range(len(mons))] for j in range(len(mons))]
    polys = [Polynomial.from_terms(n, [(e, c) for e, c in zip(mons, vec) if c != 0]) for vec in null]
    if not polys:
        return []
    if n == 1:
        pts, w = np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
        area = 2.0
    else:
        pts, w = unit_sphere_rule(n, 0.0, max(2, 2 * d))
        area = sphere_area(n)
    V = np.stack([p(pts) for p in polys], axis=1)
    G = (V * w[:, None]).T @ V / area
    Lc = np.linalg.cholesky(G)
    T = np.linalg.inv(Lc).T  # columns: orthonormal combinations
    out = []
    for j in range(len(polys)):
        terms = {}
        for i, p in enumerate(polys):
            if T[i, j] != 0:
                for e, c in p.terms.items():
                    terms[e] = terms.get(e, 0.0) + float(c) * T[i, j]
        P = Polynomial(n, {e: c for e, c in terms.items() if c != 0})
        sub, rank = symmetry_subspace(P)
        out.append(HomogeneousSolution(poly=P, degree=d, a=None, scale=1.0, symmetry_rank=rank,
                                       invariant_subspace=sub, family="boundary-harmonic"))
    return out


def verify_weighted_harmonic(P) -> Polynomial:
    """Residual polynomial y Lap(P) + a P_y; zero certifies membership."""
    if isinstance(P, HomogeneousSolution):
        poly, a = P.poly, P.a
    else:
        raise TypeError("expected a HomogeneousSolution")
    if a is None:
        raise ValueError("polynomial carries no weight exponent")
    if not poly.is_homogeneous():
        raise ValueError("polynomial is not homogeneous")
    if not poly.is_even_in(poly.nvars - 1):
        raise ValueError("polynomial is not even in y")
    a_val = exact(a) if poly.is_exact() else float(a)
    return weighted_residual(poly, a_val)


def residual_vanishes(res: Polynomial, reference: Polynomial) -> bool:
    if res.is_exact():
        return res.is_zero
    return res.max_abs_coeff() <= IDENTITY_TOL * max(1.0, reference.max_abs_coeff())


@dataclass(frozen=True)
class ConeSplitResult:
    holds: bool
    degenerate: bool
    subspace: np.ndarray
    rank: int
    witness: Optional[tuple] = None


def cone_splitting_check(P, V, z) -> ConeSplitResult:
    """Check whether the homogeneous P (invariant along V) is also homogeneous at z.

    On success the invariant subspace grows to span(V, z); on failure a
    monomial of <grad P, z> is returned as witness."""
    poly = P.poly if isinstance(P, HomogeneousSolution) else P
    m = poly.nvars
    V = [list(v) for v in (V if V is not None else [])]
    z = list(z)
    for v in V:
        if not poly.directional([exact(c) for c in v]).is_zero:
            raise ValueError("P is not invariant along the supplied subspace")
    Vq = [[exact(c) for c in v] for v in V]
    zq = [exact(c) for c in z]
    base_rank = exact_rank(Vq, m) if Vq else 0
    if all(c == 0 for c in zq) or exact_rank(Vq + [zq], m) == base_rank:
        sub = _orthonormal([[float(c) for c in v] for v in V], m)
        return ConeSplitResult(holds=False, degenerate=True, subspace=sub, rank=base_rank)
    D = poly.directional(zq)
    if D.is_zero:
        sub = _orthonormal([[float(c) for c in v] for v in V] + [[float(c) for c in z]], m)
        return ConeSplitResult(holds=True, degenerate=False, subspace=sub, rank=base_rank + 1)
    e, c = D.sorted_terms()[0]
    sub = _orthonormal([[float(c) for c in v] for v in V], m)
    return ConeSplitResult(holds=False, degenerate=False, subspace=sub, rank=base_rank, witness=(e, c))


def _orthonormal(vectors, m):
    if not vectors:
        return np.zeros((0, m))
    q, r = np.linalg.qr(np.array(vectors, dtype=float).T)
    keep = np.abs(np.diag(r)) > 1e-12
    return q[:, keep].T.copy()


# ---------------------------------------------------------------------------
# univariate exact polynomials (ascending Fraction lists) for root isolation


def _trim(p):
    p = list(p)
    while p and p[-1] == 0:
        p.pop()
    return p


def _upoly_mul(p, q):
    if not p or not q:
        return []
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def _upoly_pow(p, k):
    out = [Fraction(1)]
    for _ in range(k):
        out = _upoly_mul(out, p)
    return out


def _upoly_rem(p, q):
    p = _trim(p)
    q = _trim(q)
    while len(p) >= len(q):
        f = p[-1] / q[-1]
        shift = len(p) - len(q)
        for i, c in enumerate(q):
            p[i + shift] -= f * c
        p = _trim(p)
        if not p:
            break
    return p


def _upoly_gcd(p, q):
    p, q = _trim(p), _trim(q)
    while q:
        p, q = q, _upoly_rem(p, q)
    return [c / p[-1] for c in p] if p else []


def _upoly_deriv(p):
    return _trim([i * c for i, c in enumerate(p)][1:])


def _sign_at_infinity(p, positive: bool) -> int:
    p = _trim(p)
    if not p:
        return 0
    lead = 1 if p[-1] > 0 else -1
    deg = len(p) - 1
    return lead if (positive or deg % 2 == 0) else -lead


def count_real_roots(p) -> int:
    """Number of distinct real roots via a Sturm sequence."""
    p = _trim(p)
    if len(p) <= 1:
        return 0
    seq = [p, _upoly_deriv(p)]
    while True:
        r = _upoly_rem(seq[-2], seq[-1])
        if not r:
            break
        seq.append([-c for c in r])

    def changes(positive):
        signs = [s for s in (_sign_at_infinity(q, positive) for q in seq) if s != 0]
        return sum(1 for s, t in zip(signs, signs[1:]) if s != t)

    return changes(False) - changes(True)


def _circle_restriction(P: Polynomial):
    """P(1 - t^2, 2t) for homogeneous P(x, y); covers the circle except (-1, 0)."""
    out = []
    xm = [Fraction(1), Fraction(0), Fraction(-1)]
    ym = [Fraction(0), Fraction(2)]
    for (i, j), c in P.terms.items():
        term = _upoly_mul(_upoly_pow(xm, i), _upoly_pow(ym, j))
        term = [exact(c) * v for v in term]
        if len(term) > len(out):
            out += [Fraction(0)] * (len(term) - len(out))
        for k, v in enumerate(term):
            out[k] += v
    return _trim(out)


def isolated_critical_origin(P2d: HomogeneousSolution) -> bool:
    """True iff grad P has no zero on the unit circle (origin isolated in grad P = 0).

    Both gradient components are restricted to the circle by the half-angle
    substitution; a common real root is detected exactly through the gcd
    and a Sturm count."""
    if P2d.nvars != 2:
        raise ValueError("expected a two-variable polynomial")
    if P2d.degree < 2:
        raise ValueError("degree must be >= 2")
    poly = P2d.poly
    px, py = poly.derivative(0), poly.derivative(1)
    if px.is_zero and py.is_zero:
        raise ValueError("constant polynomial")
    # the point (-1, 0) is missed by the substitution: evaluate it exactly
    ex = [sum(exact(c) * (-1) ** e[0] for e, c in p.terms.items() if e[1] == 0) for p in (px, py)]
    if all(v == 0 for v in ex):
        return False
    rx, ry = _circle_restriction(px), _circle_restriction(py)
    g = _upoly_gcd(rx, ry) if (rx and ry) else (rx or ry)
    return count_real_roots(g) == 0
