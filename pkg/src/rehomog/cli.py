"""Command line entry point: ``rehomog <subcommand>``.

Exit codes: 0 pass, 1 acceptance failure, 2 configuration error,
3 solver error.
"""
import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .analysis import fit_rates, grad_l2_norm, h1_norm, l2_norm
from .cellsolve import CellSolveError, compute_cell_correctors
from .coefficients import CATALOG, make_coefficient, verify_hypotheses
from .config import ConfigError, RunConfig, load_config, validate_config
from .corrector import first_approx_smoothed
from .domain import (DomainMesh, IncompatibleDataError, QuadratureError, UnderResolvedWarning,
                     rhs_mode, solve_fine, solve_homogenized)
from .pipeline import StageError, emit_report, fmt, read_records_csv, run_pipeline

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("rehomog")


def _params(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _coef(args):
    params = _params(args.param)
    if args.dim is not None:
        params["dim"] = args.dim
    try:
        return make_coefficient(args.coef, **params)
    except (KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="")


# --------------------------------------------------------------------------
# subcommands


def cmd_cell(args):
    field = _coef(args)
    cells = compute_cell_correctors(field, args.n, args.n_y, method=args.method)
    d = field.dim
    fh = _open_out(args.out)
    try:
        w = csv.writer(fh)
        ycols = [f"y{i + 1}" for i in range(d)]
        acols = [f"a_hat_{i + 1}{j + 1}" for i in range(d) for j in range(d)]
        w.writerow(["kind"] + ycols + acols)
        ys = cells.y_samples.reshape(-1, d)
        ah = cells.a_hat.reshape(-1, d, d)
        for y, a in zip(ys, ah):
            w.writerow(["a_hat"] + [fmt(v) for v in y] + [fmt(v) for v in a.ravel()])
        w.writerow(["a0"] + [""] * d + [fmt(v) for v in cells.a0.ravel()])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def _solve_common(args):
    field = _coef(args)
    delta = args.epsilon ** args.gamma
    mesh = DomainMesh(field.dim, args.mesh)
    f, _, _ = rhs_mode(args.f, mesh)
    return field, delta, mesh, f


def _write_nodal(path, mesh, cols):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(mesh.dim)] + list(cols))
        vals = list(cols.values())
        for r in range(mesh.n_nodes):
            w.writerow([fmt(v) for v in mesh.nodes[r]] + [fmt(c[r]) for c in vals])


def cmd_solve(args):
    field, delta, mesh, f = _solve_common(args)
    u = solve_fine(field, args.epsilon, delta, f, mesh)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_nodal(out / "u_eps.csv", mesh, {"u_eps": u.values})
    norms = {"epsilon": args.epsilon, "delta": delta, "m": mesh.m, "l2": l2_norm(u),
             "grad_l2": grad_l2_norm(u), "h1": h1_norm(u), "f_l2": l2_norm(f),
             "mean": u.mean(), **u.info}
    (out / "norms.json").write_text(json.dumps(norms, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_approx(args):
    field, delta, mesh, f = _solve_common(args)
    cells = compute_cell_correctors(field, args.n, args.n_y, method=args.method)
    u0 = solve_homogenized(cells.a0, f, mesh)
    ap = first_approx_smoothed(u0, cells, args.epsilon, delta, mesh, quad_order=args.quad_order)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_nodal(out / "approx.csv", mesh, {"u0": u0.values, "K1": ap.K1.values,
                                            "K2": ap.K2.values, "v_hat": ap.v_hat.values})
    info = {"epsilon": args.epsilon, "delta": delta, "a0": cells.a0.tolist(),
            "k_l2": l2_norm(ap.v_hat - u0), **ap.info}
    (out / "approx.json").write_text(json.dumps(info, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_report(args):
    records = read_records_csv(args.records)
    thresholds = {}
    if args.l2_range:
        thresholds["l2_error"] = tuple(args.l2_range)
    if args.h1_range:
        thresholds["h1_error"] = tuple(args.h1_range)
    try:
        report = fit_rates(records, abscissa=args.abscissa, thresholds=thresholds)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    passed = all(report.verdicts.values())
    emit_report(report, args.out, {"passed": passed})
    for col, fit in report.fits.items():
        print(f"{col}: slope {fit.slope:.4f} +/- {fit.half_width:.4f}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_sweep(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    report, run_dir, passed = run_pipeline(cfg, args.out)
    for col, fit in report.fits.items():
        print(f"{col}: slope {fit.slope:.4f} +/- {fit.half_width:.4f}")
    for col, ok in report.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {col}")
    print(run_dir)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_check(args):
    ok = True
    if args.config:
        cfg = load_config(args.config)
        viol = validate_config(cfg)
        for v in viol:
            print(v)
        if any(v.level == "error" for v in viol):
            return EXIT_CONFIG
    for name in sorted(CATALOG):
        variants = [{"dim": 1}, {"dim": 2}] if name in ("trig_product", "laminate", "constant") else [{}]
        for kw in variants:
            rep = verify_hypotheses(make_coefficient(name, **kw), n_samples=args.samples, seed=args.seed)
            ok &= rep.passed
            tag = name + (f"[d={kw['dim']}]" if kw else "")
            print(f"{'PASS' if rep.passed else 'FAIL'} {tag}: mu_obs={rep.mu_observed:.4g} "
                  f"cL_obs={rep.cL_observed:.4g}")
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="rehomog", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def coef_args(sp):
        sp.add_argument("--coef", default="trig_product", help="catalog name")
        sp.add_argument("--dim", type=int, default=None)
        sp.add_argument("--param", action="append", metavar="KEY=VALUE")

    sp = sub.add_parser("cell", help="a_hat(y) table and a0 as CSV")
    coef_args(sp)
    sp.add_argument("--n", type=int, default=64)
    sp.add_argument("--n-y", type=int, default=32)
    sp.add_argument("--method", choices=("krylov", "direct"), default="krylov")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_cell)

    def domain_args(sp):
        coef_args(sp)
        sp.add_argument("--epsilon", type=float, required=True)
        sp.add_argument("--gamma", type=float, default=2.0)
        sp.add_argument("--mesh", type=int, default=256)
        sp.add_argument("--f", default="cos", help="right-hand side mode")
        sp.add_argument("--out", required=True)

    sp = sub.add_parser("solve", help="fine-scale Neumann solve")
    domain_args(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("approx", help="smoothed first approximation")
    domain_args(sp)
    sp.add_argument("--n", type=int, default=128)
    sp.add_argument("--n-y", type=int, default=32)
    sp.add_argument("--method", choices=("krylov", "direct"), default="krylov")
    sp.add_argument("--quad-order", type=int, default=4)
    sp.set_defaults(func=cmd_approx)

    sp = sub.add_parser("report", help="fit rates from records.csv")
    sp.add_argument("--records", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--abscissa", choices=("tau", "epsilon"), default="tau")
    sp.add_argument("--l2-range", type=float, nargs=2, metavar=("LO", "HI"))
    sp.add_argument("--h1-range", type=float, nargs=2, metavar=("LO", "HI"))
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("sweep", help="run the whole epsilon sweep from a config")
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("check", help="validate a config and the coefficient catalog")
    sp.add_argument("--config", default=None)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", UnderResolvedWarning)
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, ConfigError):
            return EXIT_CONFIG
        return EXIT_SOLVER
    except (CellSolveError, QuadratureError, IncompatibleDataError, np.linalg.LinAlgError,
            RuntimeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
