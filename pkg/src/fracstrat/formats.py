"""Text and binary exchange formats.

CSV floats use 17 significant digits so that files round-trip bit-exactly;
human-readable tables use 6.
"""
from __future__ import annotations

import csv
import io
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import WeightedGrid
from .polynomials import HomogeneousSolution, Polynomial, exact, symmetry_subspace


class FormatError(ValueError):
    pass


def fmt17(x) -> str:
    return "%.17g" % float(x)


def fmt6(x) -> str:
    return "%.6g" % float(x)


def _header(fields: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in fields.items())


def _parse_header(line: str) -> dict:
    out = {}
    for tok in line.split():
        if "=" not in tok:
            raise FormatError(f"malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


# ---------------------------------------------------------------------------
# grids and solutions


def grid_header(grid: WeightedGrid) -> dict:
    return {"m": grid.m, "n": grid.n, "h": fmt17(grid.h), "L": fmt17(grid.L), "Y": fmt17(grid.Y),
            "a": fmt17(grid.a), "doubled": int(bool(grid.doubled))}


def dump_grid(grid: WeightedGrid) -> str:
    return _header(grid_header(grid)) + "\n" + str(grid.node_count) + "\n"


def load_grid(text: str, **kw) -> WeightedGrid:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != 2:
        raise FormatError("grid dump has a header line and a node count only")
    hd = _parse_header(lines[0])
    grid = WeightedGrid(n=int(hd["n"]), h=float(hd["h"]), L=float(hd["L"]), Y=float(hd["Y"]), a=float(hd["a"]),
                        doubled=bool(int(hd["doubled"])), **kw)
    if int(hd["m"]) != grid.m or int(lines[1]) != grid.node_count:
        raise FormatError("grid dump is inconsistent with its reconstruction")
    return grid


def write_solution(path, grid: WeightedGrid, gamma: float, values: np.ndarray) -> None:
    """Header line (grid fields plus gamma), node count, then float64 values.

    ``values`` has shape (ny,) + (nx,)*n with the y index first and is
    written row-major, so the y index varies slowest."""
    hd = grid_header(grid)
    hd["gamma"] = fmt17(gamma)
    arr = np.asarray(values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write((_header(hd) + "\n" + str(arr.size) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_solution(path, **kw):
    """(grid, gamma, values) with values in (y, x...) index order."""
    raw = Path(path).read_bytes()
    first = raw.index(b"\n")
    second = raw.index(b"\n", first + 1)
    hd = _parse_header(raw[:first].decode("ascii"))
    count = int(raw[first + 1:second])
    grid = WeightedGrid(n=int(hd["n"]), h=float(hd["h"]), L=float(hd["L"]), Y=float(hd["Y"]), a=float(hd["a"]),
                        doubled=bool(int(hd["doubled"])), **kw)
    data = np.frombuffer(raw[second + 1:], dtype="<f8")
    if data.size != count:
        raise FormatError(f"expected {count} values, found {data.size}")
    n = grid.n
    ny = count // grid.nx ** n
    if ny * grid.nx ** n != count:
        raise FormatError("value count is not a whole number of y-rows")
    return grid, float(hd["gamma"]), data.reshape((ny,) + (grid.nx,) * n).copy()


# ---------------------------------------------------------------------------
# polynomials


def _coeff_text(c) -> str:
    c = exact(c)
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def dump_polynomial(P, *, a=None, k_sym: Optional[int] = None) -> str:
    """Header ``n= d= a= k_sym=`` (plus ``scale=`` for normalised members),
    then one ``<coeff> <e1> ... <em>`` line per monomial, exact rationals."""
    if isinstance(P, HomogeneousSolution):
        poly, d, a = P.poly, P.degree, P.a if a is None else a
        k_sym = P.symmetry_rank if k_sym is None else k_sym
        scale = P.scale
    else:
        poly, d, scale = P, P.degree, None
        if k_sym is None:
            k_sym = symmetry_subspace(poly)[1]
    hd = {"n": poly.nvars - 1, "d": d, "a": fmt17(float(a) if a is not None else float("nan")), "k_sym": k_sym}
    if scale is not None:
        hd["scale"] = fmt17(scale)
    lines = [_header(hd)]
    for e, c in poly.sorted_terms():
        lines.append(_coeff_text(c) + " " + " ".join(str(v) for v in e))
    return "\n".join(lines) + "\n"


def load_polynomial(text: str) -> HomogeneousSolution:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise FormatError("empty polynomial file")
    try:
        hd = _parse_header(lines[0])
        n, d, k_sym = int(hd["n"]), int(hd["d"]), int(hd["k_sym"])
        a = float(hd["a"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"line 1: bad polynomial header ({exc})") from None
    m = n + 1
    items = []
    for no, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != m + 1:
            raise FormatError(f"line {no}: expected a coefficient and {m} exponents")
        try:
            items.append((tuple(int(v) for v in parts[1:]), Fraction(parts[0])))
        except ValueError:
            raise FormatError(f"line {no}: unreadable monomial {ln!r}") from None
    poly = Polynomial.from_terms(m, items)
    scale = float(hd.get("scale", 1.0))
    sub, rank = symmetry_subspace(poly) if not poly.is_zero else (np.zeros((0, m)), m)
    a_exact = exact(a) if np.isfinite(a) else None
    return HomogeneousSolution(poly, d, a_exact, scale, k_sym, sub, family="file")


# ---------------------------------------------------------------------------
# CSV tables


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer, bool, np.bool_))
                                                       else fmt17(v)) for v in row])


def read_csv(path) -> tuple:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def trace_rows(points: np.ndarray, f: np.ndarray, trace: np.ndarray, p2g: np.ndarray):
    n = points.shape[-1]
    header = [f"x{i + 1}" for i in range(n)] + ["f", "trace", "P2gamma_f"]
    rows = [list(p) + [fv, tv, pv] for p, fv, tv, pv in zip(points.reshape(-1, n), f.ravel(), trace.ravel(),
                                                            p2g.ravel())]
    return header, rows


def profile_rows(profile, defects: Optional[np.ndarray] = None, bad: Optional[np.ndarray] = None):
    m = profile.m
    header = ["j", "r", "H", "D", "I", "N"] + [f"defect{k}" for k in range(m)] + ["bad_flag"]
    J = len(profile.radii)
    defects = np.full((J, m), np.nan) if defects is None else defects
    bad = np.zeros(J, dtype=int) if bad is None else bad
    rows = []
    for j in range(J):
        rows.append([j, profile.radii[j], profile.H[j], profile.D[j], profile.I[j], profile.N[j]]
                    + list(defects[j]) + [int(bad[j])])
    return header, rows


def cover_lines(cover) -> list:
    out = []
    for lvl in cover.levels:
        for b in lvl:
            out.append(" ".join([str(b.level)] + [fmt17(c) for c in b.center]
                                + [fmt17(b.radius), b.branch or "leaf", str(len(b.children))]))
    return out


def tube_rows(curve):
    return ["r", "volume"], [[r, v] for r, v in zip(curve.radii, curve.volumes)]


def point_rows(points: np.ndarray):
    points = np.atleast_2d(points)
    d = points.shape[1] if points.size else 0
    return [f"x{i + 1}" for i in range(d)], [list(p) for p in points]


def table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Plain aligned text table, floats at 6 significant digits."""
    cells = [[str(h) for h in header]]
    for r in rows:
        cells.append([fmt6(v) if isinstance(v, (float, np.floating)) else str(v) for v in r])
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    buf = io.StringIO()
    for r in cells:
        buf.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")
    return buf.getvalue()
