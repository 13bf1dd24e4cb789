"""Command-line front end: metric/surface scans, identity suites, reports.

Reports are JSON with floats serialized by repr (shortest round-trip), so a
fixed seed and configuration produce byte-identical output; wall-clock
timing goes to stderr only.  Exit codes: 0 success, 1 identity violation,
2 parse error, 3 metric construction failure.
"""

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .curvature import (
    condition_check, curvature_batch, curvature_from_arrays, lemma21_check,
    riemann_at, weitzenboeck_residual, kaehler_form, TwoFormField,
)
from .errors import Curv4Error, MetricConstructionError, SpecParseError
from .metrics import (
    QuadSpec, flat_space, fubini_study, ht_metric, parse_metric_spec,
    product_spheres, round_sphere4, twisted_eps_max, twisted_metric, volume,
)
from .stability import SectionBasis, assemble_index_form, near_holomorphic_section, refine_until_stable
from .surfaces import (
    a_wedge_a_sq, a_wedge_a_sq_expansion, area, chern_number, cp1_line,
    dbar_perp_sq_field, equator_sphere, parse_surface_spec, perturbed_slice,
    product_slice, ric_perp_identity_residual, second_variation, section_data,
    sphere_functions, surface_geometry, variational_identity_lemma310,
    weitzenboeck_variation, FrameSection, ProjectedSection,
    _kperp_extrinsic_field,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_PARSE = 2
EXIT_CONSTRUCTION = 3


def _base_report(args, command):
    # output paths stay out of the echo so identical runs writing to
    # different files still produce byte-identical reports
    cfg = {k: v for k, v in sorted(vars(args).items())
           if k not in ("func", "out", "csv")}
    return {"tool": "curv4", "version": __version__, "command": command,
            "config": cfg}


def _write_report(report, out_path):
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_values(spec):
    """'a:b:n' inclusive range or comma-separated list of floats."""
    if ":" in spec:
        lo, hi, n = spec.split(":")
        return list(np.linspace(float(lo), float(hi), int(n)))
    return [float(t) for t in spec.split(",") if t.strip()]


def _executor(args):
    if args.threads > 1:
        return ThreadPoolExecutor(max_workers=args.threads)
    return None


# ---------------------------------------------------------------- analyze

def cmd_analyze(args):
    m = parse_metric_spec(args.metric)
    ex = _executor(args)
    rep, records = condition_check(
        m, grid_n=args.grid, rng=np.random.default_rng(args.seed),
        include_sectional=not args.no_sectional, executor=ex,
        return_points=True)
    if ex:
        ex.shutdown()
    report = _base_report(args, "analyze")
    report["metric"] = {"name": m.name, "params": m.params}
    report["conditions"] = rep.as_dict()
    if m.regions:
        report["volume"] = volume(m, QuadSpec(args.quad))
    if m.is_kaehler:
        from .metrics import kaehler_residuals
        report["kaehler_residuals"] = kaehler_residuals(m)
    if args.csv:
        keys = sorted(records[0][2].keys())
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["chart", "x0", "x1", "x2", "x3"] + keys)
            for chart, pts, out in records:
                for i in range(len(pts)):
                    w.writerow([chart] + [repr(v) for v in pts[i]]
                               + [repr(float(out[k][i])) for k in keys])
        report["csv"] = {"path": args.csv,
                         "rows": sum(len(p) for _, p, _ in records)}
    _write_report(report, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- scan

def cmd_scan_family(args):
    from .curvature import positivity_eps_max
    report = _base_report(args, "scan-family")
    tvals = _parse_values(args.t_values)
    cells = []
    rows = []
    for t in tvals:
        pd_max = twisted_eps_max(t, grid_n=args.pd_grid)
        # the empirical eps_max of the family: first eps violating the
        # s/6 - W+ positivity, as opposed to the larger PD bound
        pos_max = positivity_eps_max(t, grid_n=max(3, (args.grid // 2) | 1))
        if args.eps_values == "auto":
            evals = [0.0, pos_max / 2.0]
        else:
            evals = _parse_values(args.eps_values)
        for eps in evals:
            cell = {"t": t, "eps": eps, "eps_max_pd": pd_max,
                    "eps_max_positivity": pos_max}
            try:
                m = twisted_metric(t, eps, grid_n=args.pd_grid)
            except MetricConstructionError as exc:
                cell["error"] = str(exc)
                cells.append(cell)
                continue
            rep = condition_check(
                m, grid_n=args.grid | 1, rng=np.random.default_rng(args.seed),
                include_sectional=False)
            cell["margins"] = rep.as_dict()["margins"]
            cell["volume"] = volume(m, QuadSpec(args.quad))
            cells.append(cell)
            rows.append([t, eps, pd_max, pos_max, cell["volume"],
                         cell["margins"]["s6_minus_wplus"]])
    report["cells"] = cells
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "eps", "eps_max_pd", "eps_max_positivity",
                        "volume", "s6_minus_wplus"])
            for row in rows:
                w.writerow([repr(float(v)) for v in row])
    _write_report(report, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- identities

def _poly_form(rng):
    coeffs = rng.normal(size=30)

    def comps(chart, x):
        out = [[0.0] * 4 for _ in range(4)]
        k = 0
        for i in range(4):
            for j in range(i + 1, 4):
                a = coeffs[k:k + 5]
                val = (a[0] + a[1] * x[0] + a[2] * x[1] * x[3]
                       + a[3] * x[2] * x[2] + a[4] * x[0] * x[1])
                out[i][j] = val
                out[j][i] = -1.0 * val
                k += 5
        return out

    return TwoFormField("poly", comps)


def _random_frame_section(rng):
    b = rng.uniform(-0.6, 0.6, size=8)

    def a3(chart, u):
        n1, n2, n3 = sphere_functions(chart, u)
        return b[0] + b[1] * n1 + b[2] * n2 + b[3] * n3

    def a4(chart, u):
        n1, n2, n3 = sphere_functions(chart, u)
        return b[4] + b[5] * n1 + b[6] * n2 + b[7] * n3

    return FrameSection(a3, a4)


def _random_projected_section(S, rng):
    b = rng.uniform(-0.6, 0.6, size=(len(S.normal_generators), 4))

    def make(c):
        def f(chart, u):
            n1, n2, n3 = sphere_functions(chart, u)
            return c[0] + c[1] * n1 + c[2] * n2 + c[3] * n3
        return f

    return ProjectedSection(S.normal_generators, [make(c) for c in b])


def _random_section(S, rng):
    if S.normal_generators is not None:
        return _random_projected_section(S, rng)
    return _random_frame_section(rng)


def run_identity_suite(seed=42, quad_n=32, n_sections=5, tol_scale=1.0):
    """The full cross-module identity table; returns a list of records."""
    rng = np.random.default_rng(seed)
    quad = QuadSpec(quad_n)
    rows = []

    def add(name, context, residual, tol):
        rows.append({"identity": name, "context": context,
                     "residual": float(residual),
                     "tolerance": float(tol * tol_scale),
                     "pass": bool(residual <= tol * tol_scale)})

    metrics = [flat_space(), round_sphere4(1.0), product_spheres(1.0, 1.0),
               ht_metric(0.6), fubini_study()]
    for m in metrics:
        pts_by_chart = m.sample_points(np.random.default_rng(seed), 6)
        bian, block, trace, lem21 = 0.0, 0.0, 0.0, 0.0
        for chart, pts in pts_by_chart:
            for p in pts:
                c = riemann_at(m, chart, p)
                bian = max(bian, c.riemann.bianchi_residual())
                from .curvature import block_identity_residual
                block = max(block, block_identity_residual(c))
                trace = max(trace, abs(np.trace(c.wplus)) + abs(np.trace(c.wminus)))
                rec = lemma21_check(c)
                for side in rec.values():
                    if side["violated"]:
                        lem21 = max(lem21, -side["consequent_margin"])
        add("first-bianchi", m.name, bian, 1e-6)
        add("block-decomposition", m.name, block, 1e-6)
        add("weyl-traces", m.name, trace, 1e-8)
        add("eigenvalue-implication", m.name, lem21, 1e-9)
        if m.is_kaehler:
            spec_res, cor_res = 0.0, 0.0
            for chart, pts in pts_by_chart:
                data = curvature_batch(m, chart, pts)
                lam = np.sort(np.linalg.eigvalsh(data["wplus"]), axis=-1)
                s = data["s"]
                expect = np.stack([-s / 12, -s / 12, s / 6], axis=-1)
                spec_res = max(spec_res, np.abs(lam - expect).max())
                lam2 = np.sort(np.linalg.eigvalsh(
                    s[:, None, None] / 6 * np.eye(3) - data["wplus"]), axis=-1)
                expect2 = np.stack([0 * s, s / 4, s / 4], axis=-1)
                cor_res = max(cor_res, np.abs(lam2 - expect2).max())
            add("kaehler-weyl-spectrum", m.name, spec_res, 1e-6)
            add("kaehler-s6-spectrum", m.name, cor_res, 1e-6)

    # Weitzenboeck on 2-forms (Einstein test spaces)
    for m, chart in ((flat_space(), "e"), (round_sphere4(1.0), "n"),
                     (product_spheres(1.0, 1.0), "aa")):
        worst = 0.0
        forms = [_poly_form(rng) for _ in range(3)]
        if m.is_kaehler:
            forms.append(kaehler_form(m))
        for alpha in forms:
            for _ in range(5):
                p = rng.uniform(-0.8, 0.8, 4)
                worst = max(worst, weitzenboeck_residual(m, alpha, chart, p))
        add("weitzenboeck-2form", m.name, worst, 1e-6)

    # surface identities
    surfaces = [
        (product_slice(), product_spheres(1.0, 1.0), True),
        (equator_sphere(), round_sphere4(1.0), True),
        (cp1_line(), fubini_study(), True),
        (perturbed_slice(0.15), product_spheres(1.0, 1.0), False),
    ]
    for S, m, minimal in surfaces:
        geom = surface_geometry(S, m, quad)
        ctx = "%s@%s" % (S.name, m.name)
        kx = max(np.abs(cg.kperp - _kperp_extrinsic_field(cg)).max()
                 for cg in geom.charts)
        add("kperp-cross-path", ctx, kx, 1e-5)
        add("ric-perp-eta-pairing", ctx,
            max(ric_perp_identity_residual(cg) for cg in geom.charts), 1e-5)
        l310, dbar_rot, t318 = 0.0, 0.0, 0.0
        for k in range(n_sections):
            sig = _random_section(S, rng)
            l310 = max(l310, variational_identity_lemma310(S, m, sig, quad)["residual"])
            for cg in geom.charts:
                v0 = dbar_perp_sq_field(cg, sig, tau=0.0)
                v1 = dbar_perp_sq_field(cg, sig, tau=0.785)
                dbar_rot = max(dbar_rot, np.abs(v0 - v1).max())
                d = section_data(cg, sig)
                dj = section_data(cg, sig.rotated())
                dbar_rot = max(dbar_rot,
                               np.abs(dj["grad2"] - d["grad2"]).max(),
                               np.abs(dj["norm2"] - d["norm2"]).max())
            if minimal:
                t318 = max(t318, weitzenboeck_variation(S, m, sig, quad)["residual"])
        add("lemma-3-10", ctx, l310, 1e-5)
        add("dbar-frame-independence", ctx, dbar_rot, 1e-8)
        if minimal:
            add("averaged-second-variation", ctx, t318, 1e-4)
        cn = chern_number(S, m, quad)
        add("chern-integrality", ctx, abs(cn - round(cn)), 1e-3)

    # synthetic shear algebra
    worst = 0.0
    for _ in range(200):
        A = np.zeros((2, 2, 2))
        for s_ in range(2):
            a, b = rng.normal(size=2)
            A[..., s_] = [[a, b], [b, -a]]
        worst = max(worst, abs(a_wedge_a_sq(A) - a_wedge_a_sq_expansion(A)))
    add("shear-wedge-expansion", "synthetic", worst, 1e-12)
    return rows


def cmd_verify_identities(args):
    report = _base_report(args, "verify-identities")
    rows = run_identity_suite(seed=args.seed, quad_n=args.quad,
                              n_sections=args.sections,
                              tol_scale=args.tol)
    report["identities"] = rows
    failures = [r["identity"] for r in rows if not r["pass"]]
    report["failures"] = failures
    _write_report(report, args.out)
    if failures:
        print("identity violations: %s" % ", ".join(sorted(set(failures))),
              file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


# ---------------------------------------------------------------- surface

def cmd_surface(args):
    m = parse_metric_spec(args.metric)
    S = parse_surface_spec(args.surface)
    quad = QuadSpec(args.quad)
    geom = surface_geometry(S, m, quad)
    report = _base_report(args, "surface")
    report["metric"] = {"name": m.name, "params": m.params}
    report["surface"] = {"name": S.name}
    report["area"] = area(S, m, quad)
    report["minimality_residual"] = geom.min_residual
    report["c1"] = chern_number(S, m, quad)
    if geom.min_residual > 1e-8:
        report["warning"] = ("surface is not minimal: stability analysis "
                             "skipped")
        _write_report(report, args.out)
        return EXIT_OK
    out = refine_until_stable(
        lambda L: assemble_index_form(S, m, SectionBasis(S, L), quad),
        L0=args.L0, L_max=args.L_max)
    report["morse_index"] = out["morse_index"]
    report["nullity"] = out["nullity"]
    report["L_used"] = out["L_used"]
    report["spectrum_head"] = [float(v) for v in out["form"].spectrum[:8]]
    holo = near_holomorphic_section(S, m, SectionBasis(S, out["L_used"]), quad)
    report["holomorphic_energy"] = holo["energy"]
    wv = weitzenboeck_variation(S, m, holo["section"], quad)
    report["averaged_second_variation"] = {
        "lhs": wv["lhs"], "rhs": wv["rhs"], "residual": wv["residual"],
        "terms": wv["terms"]}
    _write_report(report, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- driver

def build_parser():
    ap = argparse.ArgumentParser(
        prog="curv4",
        description="curvature laboratory for explicit 4-manifolds")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--grid", type=int, default=5,
                       help="grid resolution per chart axis (>= 3; odd sizes "
                            "include chart centres)")
        p.add_argument("--quad", type=int, default=32,
                       help="quadrature resolution")
        p.add_argument("--threads", type=int,
                       default=int(os.environ.get("CURV4_THREADS", "1")))
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="report path (JSON)")
        p.add_argument("--tol", type=float, default=1.0,
                       help="tolerance scale factor for identity checks")

    p = sub.add_parser("analyze", help="pointwise curvature condition scan")
    common(p)
    p.add_argument("--metric", required=True)
    p.add_argument("--csv", default=None, help="per-point margin dump")
    p.add_argument("--no-sectional", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("scan-family", help="twisted-family parameter sweep")
    common(p)
    p.add_argument("--t-values", default="0:1:11")
    p.add_argument("--eps-values", default="auto",
                   help="'auto' (0 and eps_max/2) or list/range")
    p.add_argument("--pd-grid", type=int, default=16)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_scan_family)

    p = sub.add_parser("verify-identities", help="cross-module identity suite")
    common(p)
    p.add_argument("--sections", type=int, default=5,
                   help="random sections per surface")
    p.set_defaults(func=cmd_verify_identities)

    p = sub.add_parser("surface", help="minimal-surface stability report")
    common(p)
    p.add_argument("--metric", required=True)
    p.add_argument("--surface", required=True)
    p.add_argument("--L0", type=int, default=2)
    p.add_argument("--L-max", type=int, default=12)
    p.set_defaults(func=cmd_surface)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, matching the parse-error code
        return int(exc.code or 0)
    t0 = time.time()
    try:
        code = args.func(args)
    except SpecParseError as exc:
        print("parse error: %s" % exc, file=sys.stderr)
        return EXIT_PARSE
    except MetricConstructionError as exc:
        print("construction error: %s" % exc, file=sys.stderr)
        return EXIT_CONSTRUCTION
    except Curv4Error as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_VIOLATION
    print("wall-clock: %.2f s" % (time.time() - t0), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
