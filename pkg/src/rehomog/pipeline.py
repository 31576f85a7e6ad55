"""End-to-end sweep: cell data -> domain solves -> approximations -> report.

Layout under ``<output_dir>/<config digest>/``::

    cell/<key>.npz        cached CellCorrectorSet
    fields/eps_<i>/       per-epsilon job (record.json, optional fields.csv)
    records.csv  report.json  rates_l2.svg  rates_h1.svg
"""
import csv
import hashlib
import json
import logging
import math
import os
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .analysis import (ErrorRecord, boundary_grad_sq, fit_rates, h1_norm, l2_norm,
                       residual_dual_norm)
from .cellsolve import CellCorrectorSet, compute_cell_correctors
from .coefficients import make_coefficient
from .config import ConfigError, validate_config
from .corrector import first_approx_smoothed, residual_field
from .domain import (DomainField, DomainMesh, rhs_mode, solve_fine, solve_fine_1d_exact,
                     solve_homogenized)
from .svg import loglog_svg

log = logging.getLogger(__name__)

CSV_HEADER = {
    "epsilon": "epsilon",
    "delta": "delta",
    "tau": "tau = max(eps, delta/eps)",
    "l2_error": "l2_error = ||u_eps - u0||_L2",
    "h1_error": "h1_error = ||u_eps - v_hat||_H1",
    "boundary_grad": "boundary_grad = int_{Gamma_eps} |grad u_eps|^2",
    "residual_dual_norm": "residual_dual_norm = sup int R_hat.grad phi / ||grad phi||",
    "f_norm": "f_norm = ||f||_L2",
    "k_norm": "k_norm = ||eps K1 + delta K2||_L2",
}
FIELDS = list(CSV_HEADER)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def fmt(v):
    return "%.17g" % v


# --------------------------------------------------------------------------
# cell cache

_ARRAYS = ("M", "a_hat", "p", "N", "a0", "g", "G")


def cell_key(name, params, n, n_y, method):
    blob = json.dumps([name, params, n, n_y, method], sort_keys=True).encode()
    return f"{name}-{n}-{n_y}-{hashlib.sha256(blob).hexdigest()[:8]}"


def save_cells(cells, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"name": cells.name, "params": cells.params, "dim": cells.dim, "n": cells.n,
            "n_y": cells.n_y, "method": cells.method,
            "diagnostics": json.loads(json.dumps(cells.diagnostics, default=float))}
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npz")
    os.close(fd)
    with open(tmp, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **{k: getattr(cells, k) for k in _ARRAYS})
    os.replace(tmp, path)


def load_cells(path):
    with np.load(path) as z:
        meta = json.loads(str(z["meta"]))
        arrays = {k: z[k] for k in _ARRAYS}
    return CellCorrectorSet(meta["name"], meta["params"], meta["dim"], meta["n"], meta["n_y"],
                            diagnostics=meta["diagnostics"], method=meta["method"], **arrays)


def cached_cells(field, cfg, cell_dir):
    key = cell_key(cfg.coefficient, cfg.coefficient_params, cfg.cell_n, cfg.cell_n_y, cfg.cell_method)
    path = Path(cell_dir) / f"{key}.npz"
    if path.exists():
        return load_cells(path)
    cells = compute_cell_correctors(field, cfg.cell_n, cfg.cell_n_y, method=cfg.cell_method)
    save_cells(cells, path)
    return cells


# --------------------------------------------------------------------------
# one epsilon


@dataclass
class JobResult:
    record: ErrorRecord
    info: dict


def run_epsilon(field, cells, eps, delta, m, rhs="cos", fine="oracle", quad_order=4):
    """Compute one ErrorRecord. Returns (JobResult, fields dict)."""
    mesh = DomainMesh(field.dim, m)
    f, fn, F = rhs_mode(rhs, mesh)
    if fine == "oracle":
        orc = solve_fine_1d_exact(field, eps, delta, fn, F=F)
        u_eps = DomainField(mesh, orc(mesh.nodes[:, 0]), "u_eps",
                            {"oracle_tolerance": float(orc.achieved)})
    else:
        u_eps = solve_fine(field, eps, delta, f, mesh)
    u0 = solve_homogenized(cells.a0, f, mesh)
    approx = first_approx_smoothed(u0, cells, eps, delta, mesh, quad_order=quad_order,
                                   self_check=False)
    R = residual_field(field, eps, delta, approx, cells.a0)
    K = DomainField(mesh, approx.K, "K")
    rec = ErrorRecord(
        epsilon=eps, delta=delta, tau=max(eps, delta / eps),
        l2_error=l2_norm(u_eps - u0), h1_error=h1_norm(u_eps - approx.v_hat),
        boundary_grad=boundary_grad_sq(u_eps, max(eps, mesh.h)),
        residual_dual_norm=residual_dual_norm(R), f_norm=l2_norm(f), k_norm=l2_norm(K))
    info = {"m": m, "h2_ratio": u0.info["h2_ratio"],
            "under_resolved": bool(mesh.h > delta / 8)}
    info.update({k: v for k, v in u_eps.info.items() if isinstance(v, (int, float, bool))})
    fields = {"x": mesh.nodes, "u_eps": u_eps.values, "u0": u0.values,
              "v_hat": approx.v_hat.values, "K1": approx.K1.values, "K2": approx.K2.values}
    return JobResult(rec, info), fields


def write_fields_csv(path, fields):
    x = fields["x"]
    cols = [k for k in fields if k != "x"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(x.shape[1])] + cols)
        for r in range(x.shape[0]):
            w.writerow([fmt(v) for v in x[r]] + [fmt(fields[c][r]) for c in cols])


def _job(field, cells, cfg, i, job_root):
    final = job_root / f"eps_{i}"
    rec_path = final / "record.json"
    if rec_path.exists():
        data = json.loads(rec_path.read_text())
        return JobResult(ErrorRecord(**data["record"]), data["info"])
    eps, delta = cfg.epsilons[i], cfg.delta(i)
    try:
        res, fields = run_epsilon(field, cells, eps, delta, cfg.mesh_size(i), cfg.rhs,
                                  cfg.fine_solver, cfg.quad_order)
    except Exception as exc:
        raise StageError(f"eps={eps:g}", exc) from exc
    tmp = Path(tempfile.mkdtemp(dir=job_root, prefix=f".eps_{i}-"))
    try:
        (tmp / "record.json").write_text(json.dumps(
            {"record": asdict(res.record), "info": res.info}, sort_keys=True, indent=1))
        if cfg.write_fields:
            write_fields_csv(tmp / "fields.csv", fields)
        if final.exists():
            shutil.rmtree(tmp)
        else:
            os.replace(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return res


def thread_cap():
    try:
        return max(1, int(os.environ.get("HOMOG_THREADS", "1")))
    except ValueError:
        return 1


# --------------------------------------------------------------------------
# outputs


def write_records_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([CSV_HEADER[k] for k in FIELDS])
        for r in records:
            d = asdict(r)
            w.writerow([fmt(d[k]) for k in FIELDS])


def read_records_csv(path):
    inverse = {v: k for k, v in CSV_HEADER.items()}
    out = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = [inverse.get(h, h.split(" = ")[0].strip()) for h in next(rows)]
        for row in rows:
            if row:
                out.append(ErrorRecord(**{k: float(v) for k, v in zip(header, row)}))
    return out


def _json_safe(o):
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _json_safe(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_json_safe(v) for v in o]
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    return o


def emit_report(report, out_dir, extra=None):
    """Write report.json, rates_l2.svg and rates_h1.svg into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = report.to_dict()
    if extra:
        data.update(extra)
    (out_dir / "report.json").write_text(json.dumps(_json_safe(data), indent=1, sort_keys=True) + "\n")
    xs = [getattr(r, report.abscissa) for r in report.records]
    for col, fname, label in (("l2_error", "rates_l2.svg", "||u_eps - u0||_L2"),
                              ("h1_error", "rates_h1.svg", "||u_eps - v_hat||_H1")):
        fit = report.fits.get(col)
        series = [{"x": xs, "y": [getattr(r, col) for r in report.records], "label": label,
                   "fit": (fit.slope, fit.intercept) if fit else None}]
        (out_dir / fname).write_text(loglog_svg(series, title=label, xlabel=report.abscissa))


def run_pipeline(cfg, out_root=None):
    """Run the sweep described by ``cfg``. Returns (report, run_dir, passed)."""
    errors = [v for v in validate_config(cfg) if v.level == "error"]
    if errors:
        raise ConfigError("; ".join(v.message for v in errors))
    run_dir = Path(out_root or cfg.output_dir) / cfg.digest()
    (run_dir / "cell").mkdir(parents=True, exist_ok=True)
    job_root = run_dir / "fields"
    job_root.mkdir(exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")

    field = make_coefficient(cfg.coefficient, **cfg.coefficient_params)
    try:
        cells = cached_cells(field, cfg, run_dir / "cell")
    except Exception as exc:
        raise StageError("cell", exc) from exc

    idx = range(len(cfg.epsilons))
    workers = min(thread_cap(), len(cfg.epsilons))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda i: _job(field, cells, cfg, i, job_root), idx))
    else:
        results = [_job(field, cells, cfg, i, job_root) for i in idx]
    records = [r.record for r in results]
    write_records_csv(run_dir / "records.csv", records)

    thresholds = {k: tuple(v) for k, v in cfg.thresholds.items()}
    try:
        report = fit_rates(records, abscissa=cfg.abscissa, thresholds=thresholds)
    except ValueError as exc:
        raise StageError("report", exc) from exc
    passed = all(report.verdicts.values())
    emit_report(report, run_dir, {"a0": cells.a0.tolist(), "passed": passed,
                                  "jobs": [r.info for r in results]})
    return report, run_dir, passed
