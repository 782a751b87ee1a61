"""Command-line front end: ``fracstrat solve|poly|frequency|stratify|report``.

Exit codes: 0 success, 1 a numeric check failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as E
from . import formats as F
from . import strata
from .config import ConfigError, ExperimentConfig, load_config
from .frequency import (GridField, PolynomialField, almost_monotonicity_fit, doubling_report, frequency_profile,
                        monotonicity_report, symmetry_defects)
from .geometry import GeometryError, WeightedGrid, d_gamma, quadratic_conformal_chart, round_sphere_chart
from .polynomials import (exact, isolated_critical_origin, lift_to_symmetric, model_poly, residual_vanishes,
                          verify_weighted_harmonic)
from .solver import (ExtensionProblem, SolverError, frac_laplacian_pv, neumann_trace, solve_perturbed,
                     solve_problem)

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class Run:
    """Output directory plus the checks.jsonl log."""

    def __init__(self, out: Path):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.ok = True

    def path(self, name: str) -> Path:
        return self.out / name

    def record(self, name: str, passed: bool, measured: dict, expected: str, criterion=None) -> None:
        self.ok &= bool(passed)
        res = E.CheckResult(criterion or 0, name, bool(passed), measured, expected)
        with open(self.path("checks.jsonl"), "a") as fh:
            fh.write(res.to_json() + "\n")
        print(("PASS " if passed else "FAIL ") + name + ": " + res.summary())


# ---------------------------------------------------------------------------
# solve


def _chart(cfg: ExperimentConfig, m: int):
    kind = cfg.chart.split()
    if kind[0] == "flat":
        return None
    if kind[0] == "conformal":
        return quadratic_conformal_chart(m, float(kind[1]))
    return round_sphere_chart(m)


def _load_samples(path: Path, grid: WeightedGrid):
    from scipy.interpolate import griddata
    header, rows = F.read_csv(path)
    arr = np.array([[float(v) for v in r] for r in rows])
    n = grid.n
    if arr.shape[1] != n + 1:
        raise ConfigError(f"sample file needs columns x1..x{n},f", None, str(path))
    xs = np.stack(np.meshgrid(*([grid.x_nodes()] * n), indexing="ij"), axis=-1)
    if n == 1:
        order = np.argsort(arr[:, 0])
        return np.interp(xs[..., 0], arr[order, 0], arr[order, 1])
    return griddata(arr[:, :n], arr[:, n], xs, method="cubic", fill_value=0.0)


def cmd_solve(cfg: ExperimentConfig, run: Run) -> int:
    builtin = cfg.builtin
    n, gamma, a = cfg.n, cfg.gamma, cfg.a
    periodic = cfg.periodic or builtin in ("sine", "bump")
    grid = WeightedGrid(n, cfg.h, cfg.L, cfg.Y, a, periodic=periodic)
    chart = _chart(cfg, n + 1)
    kw = dict(bottom=cfg.bottom, top=cfg.top)
    if builtin == "example-x1sq":
        exact_u = lambda p: p[..., 0] ** 2 - p[..., -1] ** 2 / (1 + a)
        pb = ExtensionProblem(grid, gamma, boundary_data=lambda x: x[..., 0] ** 2, chart=chart, bottom="dirichlet",
                              top="dirichlet", boundary_values=exact_u)
    elif builtin == "sine":
        pb = ExtensionProblem(grid, gamma, boundary_data=lambda x: np.sin(np.pi * x[..., 0] / cfg.L), chart=chart,
                              **kw)
    elif builtin == "bump":
        f = E._periodic_bump(cfg.L, 0.3)
        pb = ExtensionProblem(grid, gamma, boundary_data=f, chart=chart, **kw)
    elif cfg.data.startswith("poly:"):
        P = F.load_polynomial(cfg.data_path.read_text())
        if P.nvars != n + 1:
            raise ConfigError(f"polynomial has {P.nvars} variables, problem needs {n + 1}", None, cfg.source)
        pb = ExtensionProblem(grid, gamma, boundary_data=lambda x: P.poly(np.concatenate(
            [x, np.zeros(x.shape[:-1] + (1,))], axis=-1)), chart=chart, boundary_values=P.poly, **kw)
    else:
        pb = ExtensionProblem(grid, gamma, boundary_data=_load_samples(cfg.data_path, grid), chart=chart, **kw)
    sol = solve_perturbed(pb) if chart is not None else solve_problem(pb)
    tr = neumann_trace(sol)
    p2g = d_gamma(gamma) / (2 * gamma) * tr.values
    xs = np.stack(np.meshgrid(*([grid.x_nodes()] * n), indexing="ij"), axis=-1)
    F.write_solution(run.path("solution.bin"), grid, gamma, sol.values)
    run.path("grid.txt").write_text(F.dump_grid(grid))
    F.write_csv(run.path("trace.csv"), *F.trace_rows(xs, sol.values[0], tr.values, p2g))
    print(f"solved: {sol.iterations} CG iterations, relative residual {sol.residual:.3g}, trace branch {tr.branch}")
    if builtin == "example-x1sq":
        inner = np.all(np.abs(xs) <= cfg.L / 2 + 1e-12, axis=-1)
        worst = float(np.abs(p2g[inner]).max())
        tol = 3 * cfg.h ** 2 * abs(d_gamma(gamma) / (2 * gamma))
        run.record("x1^2 trace vanishes on inner half box", worst <= tol, {"max|P2gamma f|": worst, "tol": tol},
                   "|P2gamma f| <= 3 h^2 |d_gamma/(2 gamma)|")
    elif builtin == "sine":
        want = (np.pi / cfg.L) ** (2 * gamma) * np.sin(np.pi * xs[..., 0] / cfg.L)
        err = float(np.linalg.norm(p2g - want) / np.linalg.norm(want))
        step = max(1, grid.nx // 8)
        rows = [(float(xs[i, 0]), float(want[i]), float(p2g[i]), float(p2g[i] - want[i]))
                for i in range(0, grid.nx, step)]
        print(F.table(["x1", "expected", "computed", "difference"], rows), end="")
        run.record("sine symbol check", err <= 0.02, {"rel_L2": err}, "<= 2% relative L2")
    elif builtin == "bump":
        c = grid.nx // 2
        ext = float(p2g[(c,) * n])
        mean = (np.sqrt(2 * np.pi) * 0.3) ** n / (2 * cfg.L) ** n
        pv = frac_laplacian_pv(E._periodic_bump(cfg.L, 0.3), gamma, np.zeros(n), far_field_mean=mean,
                               truncation_radius=40.0 if n == 1 else 20.0)
        gap = abs(ext - pv) / abs(pv)
        run.record("bump extension vs principal value", gap <= 0.03, {"extension": ext, "pv": pv, "gap": gap},
                   "within 3%")
    return EXIT_OK if run.ok else EXIT_CHECK


# ---------------------------------------------------------------------------
# poly


def cmd_poly(args, run: Run) -> int:
    if args.action == "gen":
        P = model_poly(args.k, exact(args.a))
        if args.m > 2:
            P = lift_to_symmetric(P, args.m)
        text = F.dump_polynomial(P)
        target = run.path(args.file or f"poly_k{args.k}_m{args.m}.txt")
        target.write_text(text)
        print(text, end="")
        return EXIT_OK
    if args.action == "verify":
        try:
            P = F.load_polynomial(Path(args.file).read_text())
        except (OSError, F.FormatError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        if P.a is None:
            print("error: polynomial file does not record a", file=sys.stderr)
            return EXIT_USAGE
        try:
            res = verify_weighted_harmonic(P)
            ok = residual_vanishes(res, P.poly)
        except ValueError as exc:
            print(f"FAIL: {exc}")
            return EXIT_CHECK
        print("PASS" if ok else f"FAIL: residual has {len(res.terms)} nonzero terms")
        return EXIT_OK if ok else EXIT_CHECK
    P = model_poly(args.k, exact(args.a))
    iso = isolated_critical_origin(P)
    print("ISOLATED" if iso else "NOT ISOLATED")
    return EXIT_OK if iso else EXIT_CHECK


# ---------------------------------------------------------------------------
# frequency


def _profile_table(U, profile, eps, d_max, k_max):
    defects = np.full((len(profile.radii), profile.m), np.nan)
    for i, r in enumerate(profile.radii):
        reps = symmetry_defects(U, profile.center, r, k_max=k_max, d_max=d_max, order=16)
        defects[i, :k_max + 1] = [rep.defect if rep.status == "ok" else np.nan for rep in reps]
    bad = (defects[:, 0] >= eps).astype(int)
    return F.profile_rows(profile, defects, bad)


def cmd_frequency(cfg: ExperimentConfig, run: Run) -> int:
    m, a = cfg.n + 1, cfg.a
    # 1. homogeneous members
    worst = 0.0
    ratio_err = 0.0
    for d in range(1, 5):
        U = PolynomialField(E._member(d, a, m), a)
        pr = frequency_profile(U, 0, cfg.r_max, cfg.gamma0, cfg.J or 5)
        worst = max(worst, float(np.abs(pr.N - d).max()))
        ratio_err = max(ratio_err, float(np.abs(doubling_report(pr).ratios / 4 ** d - 1).max(initial=0.0)))
        F.write_csv(run.path(f"profile_member_d{d}.csv"), *_profile_table(U, pr, cfg.eps, d + 1, m - 1))
    run.record("members: constant frequency", worst <= 1e-6, {"max|N-d|": worst}, "N = d +- 1e-6", criterion=4)
    run.record("members: doubling ratios", ratio_err <= 1e-3, {"max_rel_err": ratio_err}, "4^d within 1e-3")
    # 2. solved corpus
    rng = np.random.default_rng(cfg.seed)
    datas = [E.random_polynomial(m, cfg.degree, rng) for _ in range(cfg.corpus)]
    sols = E.parallel_map(lambda P: E.solve_corpus_field(P, a, cfg.h, n=cfg.n), datas, cfg.threads)
    viol = 0
    for i, sol in enumerate(sols):
        U = GridField(sol)
        pr = frequency_profile(U, 0, cfg.r_max, 0.85, None)
        viol += len(monotonicity_report(pr, cfg.tol).violations)
        F.write_csv(run.path(f"profile_corpus_{i:03d}.csv"), *F.profile_rows(pr))
    run.record("corpus: monotonicity", viol == 0, {"fields": cfg.corpus, "violations": viol},
               f"0 violations at tol {cfg.tol:g}")
    # 3. conformal charts
    P = E._member(2, a, m)
    cs = []
    for eps in (1e-1, 1e-2, 1e-3):
        ch = quadratic_conformal_chart(m, eps)
        U = GridField(E.solve_corpus_field(P, a, cfg.h, n=cfg.n, chart=ch))
        pr = frequency_profile(U, 0, cfg.r_max, 0.85, None, chart=ch, zeroth=m > 2)
        cs.append(almost_monotonicity_fit(pr).C)
        F.write_csv(run.path(f"profile_conformal_{eps:g}.csv"), *F.profile_rows(pr))
    dec = cs[0] > cs[1] > cs[2]
    run.record("conformal: C* decreasing", dec, {"C*(0.1)": cs[0], "C*(0.01)": cs[1], "C*(0.001)": cs[2]},
               "C* decreasing as the perturbation shrinks")
    return EXIT_OK if run.ok else EXIT_CHECK


# ---------------------------------------------------------------------------
# stratify


def _stratify_field(cfg: ExperimentConfig):
    m, a = cfg.m, cfg.a
    if cfg.strat_field.startswith("member:"):
        d = int(cfg.strat_field.split(":", 1)[1])
        return PolynomialField(E._member(d, a, m), a), d
    P = F.load_polynomial(cfg.field_path.read_text())
    if P.nvars != m:
        raise ConfigError(f"field polynomial has {P.nvars} variables, stratify.m is {m}", None, cfg.source)
    return PolynomialField(P, a), P.degree


def cmd_stratify(cfg: ExperimentConfig, run: Run) -> int:
    U, d = _stratify_field(cfg)
    m, n, h, w = cfg.m, cfg.m - 1, cfg.strat_h, cfg.window
    bs = strata.sample_box(U.value, U.gradient, m, w + 2 * h, h)
    nodal = strata.extract_nodal(bs, window_radius=w)
    sing = strata.extract_singular(bs, window_radius=w)
    crit = strata.extract_critical(bs, window_radius=w)
    F.write_csv(run.path("nodal_points.csv"), *F.point_rows(nodal.geometry.sample(h)))
    F.write_csv(run.path("critical_points.csv"), *F.point_rows(crit.geometry.points))
    F.write_csv(run.path("singular_points.csv"), *F.point_rows(sing.geometry.points))
    print(f"nodal measure in window: {nodal.measure:.6g}; critical clusters {crit.clusters}; "
          f"singular clusters {sing.clusters}")
    if not sing.geometry.is_empty:
        radii = h * np.array([3.0, 4.0, 6.0, 8.0])
        tv = strata.tube_volume(sing.geometry, radii, window_radius=w, voxel=h, resolution=h)
        F.write_csv(run.path("tube_singular.csv"), *F.tube_rows(tv))
        run.record("singular set co-dimension", tv.exponent >= 2 - 0.2, {"exponent": tv.exponent},
                   "co-dimension >= 1.8")
    # quantitative strata and the cover
    rng = np.random.default_rng(cfg.seed)
    r = cfg.mu ** cfg.j
    samples = E._stratum_samples(n, r, rng)
    radii = r * (1 / cfg.mu) ** np.arange(cfg.j + 1)
    sd = strata.compute_stratum_defects(U, samples, radii, d_max=d + 1, order=12)
    for k in cfg.k:
        if not 0 <= k < m:
            raise ConfigError(f"stratum index k={k} outside [0, {m - 1}]", None, cfg.source)
        F.write_csv(run.path(f"stratum_k{k}.csv"), *F.point_rows(strata.quantitative_stratum(
            U, k, cfg.strat_eps, r, defects=sd)))
    k = min(max(cfg.k), m - 2) if m >= 2 else 0
    stratum = strata.quantitative_stratum(U, k, cfg.strat_eps, r, defects=sd)
    cover = strata.effective_cover(U, k, cfg.strat_eps, cfg.mu, cfg.j, stratum, d_max=d + 1, order=12)
    run.path("cover.txt").write_text("\n".join(F.cover_lines(cover)) + "\n")
    print(F.table(["k", "j", "leaves", "bound", "D", "C0", "C1", "coverage"],
                  [(k, cfg.j, cover.leaf_count, cover.leaf_bound(), cover.D, cover.C0, cover.C1, cover.coverage())]),
          end="")
    run.record("cover bound", cover.leaf_count <= cover.leaf_bound() and cover.coverage() == 1.0,
               {"leaves": cover.leaf_count, "bound": cover.leaf_bound(), "coverage": cover.coverage()},
               "leaves <= bound, all stratum samples covered")
    # boundary split on the trace x1^2 of the closed-form field
    if n >= 2:
        f = lambda x: x[..., 0] ** 2
        gf = lambda x: np.concatenate([2 * x[..., :1], 0 * x[..., 1:]], axis=-1)
        bb = strata.sample_box(f, gf, n, w + 2 * h, h)
        bsing = strata.extract_singular(bb, window_radius=w)
        split = strata.boundary_split(f, bsing.geometry.points, tau_harm=cfg.tau_harm)
        F.write_csv(run.path("split_vertical.csv"), *F.point_rows(split.vertical))
        F.write_csv(run.path("split_horizontal.csv"), *F.point_rows(split.horizontal))
        F.write_csv(run.path("split_unclassified.csv"), *F.point_rows(split.unclassified))
        if len(split.vertical):
            tv = strata.tube_volume(strata.SetGeometry(n, points=split.vertical), h * np.array([3.0, 4.0, 6.0, 8.0]),
                                    window_radius=w, voxel=h / 2, resolution=h)
            F.write_csv(run.path("tube_vertical.csv"), *F.tube_rows(tv))
            run.record("boundary split of x1^2", tv.exponent >= 0.8 and len(split.horizontal) == 0,
                       {"vertical": len(split.vertical), "horizontal": len(split.horizontal),
                        "exponent": tv.exponent}, "all vertical, co-dimension >= 0.8")
    return EXIT_OK if run.ok else EXIT_CHECK


# ---------------------------------------------------------------------------
# report


def cmd_report(run_dir: Path, execute, only) -> int:
    run = Run(run_dir)
    if execute:
        corpus = None
        for c in only or sorted(E.ALL_CHECKS):
            fn = E.ALL_CHECKS[c]
            if c in (5, 12):
                corpus = E.build_corpus() if corpus is None else corpus
                res = fn(corpus)
            else:
                res = fn()
            with open(run.path("checks.jsonl"), "a") as fh:
                fh.write(res.to_json() + "\n")
            print(res.line())
    latest = {}
    log = run.path("checks.jsonl")
    if log.exists():
        for ln in log.read_text().splitlines():
            if ln.strip():
                rec = json.loads(ln)
                if rec.get("criterion"):
                    latest[int(rec["criterion"])] = rec
    rows, ok = [], True
    for c in sorted(E.ALL_CHECKS):
        rec = latest.get(c)
        if rec is None:
            rows.append((c, E.ALL_CHECKS[c].__name__.replace("check_", ""), "NOT RUN", "", ""))
            ok = False
            continue
        measured = E.CheckResult(**{k: rec[k] for k in ("criterion", "name", "passed", "measured", "expected")})
        rows.append((c, rec["name"], "PASS" if rec["passed"] else "FAIL",
                     measured.summary().split(" | ")[0], rec["expected"]))
        ok &= bool(rec["passed"])
    print(F.table(["criterion", "name", "status", "measured", "expected"], rows), end="")
    return EXIT_OK if ok else EXIT_CHECK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracstrat", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory (overrides [output] directory)")
    common.add_argument("--threads", type=int, default=None, help="worker threads (overrides [run] threads)")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "frequency", "stratify"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--config", required=True)
    pp = sub.add_parser("poly", parents=[common])
    pp.add_argument("action", choices=("gen", "verify", "critical"))
    pp.add_argument("file", nargs="?", help="polynomial file (verify) or output name (gen)")
    pp.add_argument("--k", type=int, default=2)
    pp.add_argument("--a", type=float, default=0.0)
    pp.add_argument("--m", type=int, default=2)
    rp = sub.add_parser("report", parents=[common])
    rp.add_argument("run_dir")
    rp.add_argument("--run", action="store_true", help="run the acceptance checks first")
    rp.add_argument("--only", default=None, help="comma-separated criterion numbers")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "report":
            only = [int(v) for v in args.only.split(",")] if args.only else None
            if only and any(c not in E.ALL_CHECKS for c in only):
                raise ConfigError(f"criteria must lie in 1..{len(E.ALL_CHECKS)}")
            return cmd_report(Path(args.run_dir), args.run, only)
        if args.command == "poly":
            if args.k < 0 or not (-1 < args.a < 1) or args.m < 2:
                raise ConfigError("need k >= 0, -1 < a < 1 and m >= 2")
            if args.action == "verify" and not args.file:
                raise ConfigError("verify needs a polynomial file")
            return cmd_poly(args, Run(Path(args.out or ".")))
        cfg = load_config(args.config)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg.threads = args.threads
        run = Run(Path(args.out or cfg.directory))
        return {"solve": cmd_solve, "frequency": cmd_frequency, "stratify": cmd_stratify}[args.command](cfg, run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GeometryError, F.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
