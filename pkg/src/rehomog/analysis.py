"""Norms, inequality checks, the duality identity and rate fitting."""
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy import stats

from .domain import DomainField, QuadField, _neumann_solve, solve_adjoint
from .corrector import residual_field


def _vals(phi):
    return phi.values if isinstance(phi, DomainField) else np.asarray(phi)


def l2_norm(phi, mesh=None):
    mesh = mesh or phi.mesh
    if isinstance(phi, QuadField):
        return math.sqrt(mesh.integrate(np.sum(phi.values ** 2, axis=-1)))
    v = mesh.at_quad(_vals(phi))
    return math.sqrt(mesh.integrate(v ** 2))


def grad_l2_norm(phi, mesh=None, mask=None):
    mesh = mesh or phi.mesh
    g = mesh.grad(_vals(phi))
    return math.sqrt(mesh.integrate(np.sum(g ** 2, axis=-1), mask))


def h1_norm(phi, mesh=None):
    mesh = mesh or phi.mesh
    return math.sqrt(l2_norm(phi, mesh) ** 2 + grad_l2_norm(phi, mesh) ** 2)


def _check_width(mesh, width):
    if width < mesh.h * (1 - 1e-12):
        raise ValueError(f"layer width {width:.3g} is below the mesh size {mesh.h:.3g}")


def boundary_layer_l2(phi, width, mesh=None):
    """L2 norm of phi over the layer of elements within ``width`` of the boundary."""
    mesh = mesh or phi.mesh
    _check_width(mesh, width)
    v = mesh.at_quad(_vals(phi))
    return math.sqrt(mesh.integrate(v ** 2, mesh.element_layer(width)))


def boundary_grad_sq(phi, width, mesh=None):
    """int over the layer of |grad phi|^2."""
    mesh = mesh or phi.mesh
    _check_width(mesh, width)
    g = mesh.grad(_vals(phi))
    return mesh.integrate(np.sum(g ** 2, axis=-1), mesh.element_layer(width))


@dataclass
class TraceResult:
    ratio: float
    degenerate: bool


def trace_check(phi, eps, mesh=None):
    """||phi||^2 on the eps-layer divided by eps ||phi|| ||grad phi||."""
    mesh = mesh or phi.mesh
    num = boundary_layer_l2(phi, eps, mesh) ** 2
    den = eps * l2_norm(phi, mesh) * grad_l2_norm(phi, mesh)
    if den == 0.0:
        return TraceResult(math.inf if num > 0 else 0.0, True)
    return TraceResult(num / den, False)


def residual_dual_norm(R, mesh=None):
    """sup over discrete mean-zero phi of int R.grad phi / ||grad phi||.

    Solves the Neumann problem -lap w = -div R and returns ||grad w||.
    """
    mesh = mesh or R.mesh
    Rv = R.values
    if not np.any(Rv):
        return 0.0
    _, _, dphi, wq = mesh._ref
    # b_a = int R . grad phi_a over each element
    be = np.einsum("eqk,qak,q->ea", Rv, dphi, wq) * mesh.h ** (mesh.dim - 1)
    b = np.bincount(mesh.conn.ravel(), be.ravel(), minlength=mesh.n_nodes)
    K = mesh.stiffness(np.broadcast_to(np.eye(mesh.dim), (mesh.n_elements, mesh.dim, mesh.dim)))
    w = _neumann_solve(K, b, mesh)
    return math.sqrt(max(w @ (K @ w), 0.0))


def boundary_gradient_check(u_eps, eps, delta, f_norm):
    """int_{Gamma_eps} |grad u_eps|^2 / (tau ||f||^2); 0 when f = 0."""
    if f_norm == 0.0:
        return 0.0
    tau = max(eps, delta / eps)
    return boundary_grad_sq(u_eps, eps) / (tau * f_norm ** 2)


@dataclass
class DualityResult:
    discrepancy: float
    lhs: float
    rhs: float
    phi: DomainField


def duality_identity_check(field, eps, delta, approx, u_eps, a0, mesh=None):
    """Relative gap between int Phi w and int R_hat . grad phi_eps.

    w = v_hat - u_eps, Phi = w - mean(w), phi_eps the transposed-problem
    solution with data Phi.
    """
    mesh = mesh or u_eps.mesh
    w = approx.v_hat.values - u_eps.values
    Phi = DomainField(mesh, w - (mesh.mass_vector @ w) / mesh.L ** mesh.dim, "Phi")
    phi = solve_adjoint(field, eps, delta, Phi, mesh)
    lhs = float(Phi.values @ (mesh.mass @ w))
    R = residual_field(field, eps, delta, approx, a0)
    rhs = mesh.integrate(np.sum(R.values * mesh.grad(phi.values), axis=-1))
    scale = l2_norm(Phi, mesh) * grad_l2_norm(phi, mesh)
    disc = abs(lhs - rhs) / scale if scale > 0 else abs(lhs - rhs)
    return DualityResult(disc, lhs, rhs, phi)


def poincare_constant(mesh):
    """Smallest C with ||u||^2 <= C ||grad u||^2 on mean-zero discrete fields."""
    K = mesh.stiffness(np.broadcast_to(np.eye(mesh.dim), (mesh.n_elements, mesh.dim, mesh.dim)))
    M = mesh.mass
    c = mesh.mass_vector
    # deflate constants: add a rank-one term so the constant mode moves to a large eigenvalue
    if mesh.n_nodes <= 1200:
        Kd = K.toarray() + np.outer(c, c) * 1e3
        lam = sla.eigh(Kd, M.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0]
    else:
        lam = spla.eigsh(K, k=2, M=M, sigma=-1e-3, which="LM", return_eigenvectors=False)
        lam = np.sort(lam)[1]
    return 1.0 / lam


# --------------------------------------------------------------------------
# records and rate fits


@dataclass
class ErrorRecord:
    epsilon: float
    delta: float
    tau: float
    l2_error: float
    h1_error: float
    boundary_grad: float
    residual_dual_norm: float
    f_norm: float
    k_norm: float = math.nan

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (v >= 0 or math.isnan(v)):
                raise ValueError(f"{k} must be nonnegative, got {v}")


ERROR_COLUMNS = ("l2_error", "h1_error", "boundary_grad", "residual_dual_norm", "k_norm")


@dataclass
class RateFit:
    slope: float
    intercept: float
    half_width: float
    n: int
    noise_floor: bool = False


@dataclass
class ConvergenceReport:
    records: list
    abscissa: str
    fits: dict
    verdicts: dict = field(default_factory=dict)

    def to_dict(self):
        return {"abscissa": self.abscissa,
                "records": [asdict(r) for r in self.records],
                "fits": {k: asdict(v) for k, v in self.fits.items()},
                "verdicts": self.verdicts}


def fit_line(x, y, confidence=0.95):
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    n = x.size
    A = np.vstack([x, np.ones(n)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    if n > 2:
        resid = y - A @ np.array([slope, icpt])
        s2 = resid @ resid / (n - 2)
        se = math.sqrt(s2 / np.sum((x - x.mean()) ** 2))
        hw = float(stats.t.ppf(0.5 + confidence / 2, n - 2) * se)
    else:
        hw = math.inf
    return RateFit(float(slope), float(icpt), hw, n)


def fit_rates(records, abscissa="tau", columns=ERROR_COLUMNS, thresholds=None,
              noise_floor=1e-13):
    """Least-squares log-log slopes of each error column against tau (or eps).

    ``thresholds`` maps column -> (lo, hi); verdicts are stored per column.
    Columns whose errors sit at the noise floor are flagged, not fitted.
    """
    records = list(records)
    if len(records) < 3:
        raise ValueError("need at least 3 records to fit a rate")
    xs = np.array([getattr(r, abscissa) for r in records], dtype=float)
    if np.unique(xs).size != xs.size:
        raise ValueError(f"identical {abscissa} values cannot be fitted")
    fits = {}
    for col in columns:
        ys = np.array([getattr(r, col) for r in records], dtype=float)
        if np.any(np.isnan(ys)):
            continue
        scale = max(1.0, max(r.f_norm for r in records))
        if np.all(ys <= noise_floor * scale):
            fits[col] = RateFit(math.nan, math.nan, math.nan, len(ys), True)
            continue
        fits[col] = fit_line(xs, np.maximum(ys, 1e-300))
    verdicts = {}
    for col, (lo, hi) in (thresholds or {}).items():
        fit = fits.get(col)
        verdicts[col] = bool(fit is not None and lo <= fit.slope <= hi)
    return ConvergenceReport(records, abscissa, fits, verdicts)
