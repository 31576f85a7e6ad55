"""Periodic cell problems, homogenized tensors and skew potentials.

Discretisation
--------------
Uniform periodic grid of ``n`` nodes per axis on ``[-1/2, 1/2)^d``. The
gradient is the forward difference ``D+``; the divergence of a flux is the
backward difference ``D-`` (its negative adjoint), so the cell problem

    D- . [A (e_j + D+ M)] = 0

is the conservative five-point-type scheme. Diagonal coefficient entries
are sampled on the flux face (node + h/2 e_i), off-diagonal entries at the
cell centre, which keeps the matrix symmetric whenever ``a`` is.

Because ``D+`` and ``D-`` commute on a periodic grid, the discrete
identities used for the potentials hold exactly: a mean-zero field with
``D- . v = 0`` equals ``D- . G`` for ``G_ik = D+_i phi_k - D+_k phi_i`` and
``D- . D+ phi_k = v_k``. Residuals of ``div G = g`` are therefore at the
level of the linear-solver tolerance, not the truncation error.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .kernels import interp_periodic, interp_periodic_grad

log = logging.getLogger(__name__)

SOLVER_RTOL = 1e-10
POTENTIAL_RTOL = 1e-13


class CellSolveError(RuntimeError):
    """Linear solver did not converge on a cell problem."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class NonzeroMeanError(ValueError):
    def __init__(self, mean):
        super().__init__(f"input has nonzero cell mean {mean:.3e}; periodic Poisson problem is not solvable")
        self.mean = mean


@dataclass
class PeriodicGridField:
    """Samples on the periodic cell grid. ``values`` has shape
    ``components + (n,) * dim``."""

    dim: int
    n: int
    values: np.ndarray
    mean_zero: bool = False

    def mean(self):
        axes = tuple(range(self.values.ndim - self.dim, self.values.ndim))
        return self.values.mean(axis=axes)


# --------------------------------------------------------------------------
# grid operators


def grid_nodes(n, dim):
    """Node coordinates, shape ``(n,)*dim + (dim,)``."""
    t = -0.5 + np.arange(n) / n
    return np.stack(np.meshgrid(*([t] * dim), indexing="ij"), axis=-1)


def sample_points(n_y, dim):
    """Cell-centred y-samples, shape ``(n_y,)*dim + (dim,)``."""
    t = -0.5 + (np.arange(n_y) + 0.5) / n_y
    return np.stack(np.meshgrid(*([t] * dim), indexing="ij"), axis=-1)


def fwd(u, axis, h):
    return (np.roll(u, -1, axis=axis) - u) / h


def bwd(u, axis, h):
    return (u - np.roll(u, 1, axis=axis)) / h


@lru_cache(maxsize=16)
def _diff_matrices(n, dim):
    h = 1.0 / n
    e = np.ones(n)
    d1 = sp.diags([-e, e[:-1]], [0, 1], shape=(n, n), format="lil")
    d1[n - 1, 0] = 1.0
    d1 = d1.tocsr() / h
    eye = sp.identity(n, format="csr")
    mats = []
    for i in range(dim):
        factors = [eye] * dim
        factors[i] = d1
        m = factors[0]
        for f in factors[1:]:
            m = sp.kron(m, f, format="csr")
        mats.append(m.tocsr())
    return tuple(mats)


@lru_cache(maxsize=16)
def _laplacian(n, dim):
    D = _diff_matrices(n, dim)
    return sum(Di.T @ Di for Di in D).tocsr()


def flux_locations(n, dim):
    """Sampling point of coefficient entry (i, k) at every node:
    shape ``(dim, dim) + (n,)*dim + (dim,)``."""
    nodes = grid_nodes(n, dim)
    h = 1.0 / n
    out = np.empty((dim, dim) + nodes.shape)
    for i in range(dim):
        for k in range(dim):
            if i == k:
                shift = np.zeros(dim)
                shift[i] = 0.5 * h
            else:
                shift = np.full(dim, 0.5 * h)
            out[i, k] = nodes + shift
    return out


def sample_flux_coefficient(matrix_at, n, dim):
    """``A[i, k]`` sampled at the flux locations, shape ``(dim, dim) + (n,)*dim``.

    ``matrix_at(points)`` maps ``(..., dim)`` points to ``(..., dim, dim)``.
    """
    locs = flux_locations(n, dim)
    A = np.empty((dim, dim) + (n,) * dim)
    if dim == 1:
        A[0, 0] = matrix_at(locs[0, 0])[..., 0, 0]
        return A
    centre = matrix_at(locs[0, 1])
    for i in range(dim):
        face = matrix_at(locs[i, i])
        for k in range(dim):
            A[i, k] = face[..., i, k] if i == k else centre[..., i, k]
    return A


def _operator(A, n, dim):
    D = _diff_matrices(n, dim)
    K = None
    for i in range(dim):
        for k in range(dim):
            term = D[i].T @ sp.diags(A[i, k].ravel()) @ D[k]
            K = term if K is None else K + term
    return K.tocsr()


# --------------------------------------------------------------------------
# linear solves


def _project(x):
    return x - x.mean()


def solve_periodic(K, rhs, method="krylov", symmetric=True, rtol=SOLVER_RTOL, maxiter=None):
    """Solve ``K x = rhs`` on the mean-zero subspace.

    ``rhs`` may hold several right-hand sides as columns. Krylov iterates are
    projected onto mean zero after the solve; the direct path pins node 0.
    """
    rhs = np.asarray(rhs, dtype=float)
    multi = rhs.ndim == 2
    B = rhs if multi else rhs[:, None]
    B = B - B.mean(axis=0)
    N = K.shape[0]
    X = np.zeros_like(B)
    info = {"iterations": [], "residual": []}
    if method == "direct":
        lu = spla.splu(K[1:, 1:].tocsc())
        for c in range(B.shape[1]):
            X[1:, c] = lu.solve(B[1:, c])
            X[:, c] = _project(X[:, c])
    elif method == "krylov":
        maxiter = maxiter or 10 * N
        for c in range(B.shape[1]):
            b = B[:, c]
            bnorm = np.linalg.norm(b)
            if bnorm == 0.0:
                info["iterations"].append(0)
                continue
            history = []

            def track(xk, b=b, history=history):
                history.append(np.linalg.norm(b - K @ xk) / bnorm)

            solver = spla.cg if symmetric else spla.bicgstab
            x, flag = solver(K, b, rtol=rtol, atol=0.0, maxiter=maxiter, callback=track)
            if flag != 0:
                raise CellSolveError(
                    f"{solver.__name__} did not reach rtol={rtol:g} in {maxiter} iterations "
                    f"(last residual {history[-1] if history else float('nan'):.3e})", history)
            X[:, c] = _project(x)
            info["iterations"].append(len(history))
    else:
        raise ValueError(f"unknown solver method {method!r}")
    res = np.linalg.norm(B - K @ X, axis=0) / np.maximum(np.linalg.norm(B, axis=0), 1e-300)
    info["residual"] = res.tolist()
    return (X if multi else X[:, 0]), info


# --------------------------------------------------------------------------
# cell problems


def _corrector_fluxes(A, M, n, dim):
    """Flux vectors A (e_j + D+ M_j) for all j; M has shape (dim,)+(n,)*dim."""
    h = 1.0 / n
    F = np.empty((dim, dim) + (n,) * dim)  # [j, i]
    for j in range(dim):
        grad = [fwd(M[j], k, h) for k in range(dim)]
        for i in range(dim):
            F[j, i] = A[i, j] + sum(A[i, k] * grad[k] for k in range(dim))
    return F


def _solve_cell(A, n, dim, symmetric, method, rtol):
    D = _diff_matrices(n, dim)
    K = _operator(A, n, dim)
    rhs = np.stack([-sum(D[i].T @ A[i, j].ravel() for i in range(dim)) for j in range(dim)], axis=1)
    X, info = solve_periodic(K, rhs, method=method, symmetric=symmetric, rtol=rtol)
    M = X.T.reshape((dim,) + (n,) * dim)
    F = _corrector_fluxes(A, M, n, dim)
    axes = tuple(range(2, 2 + dim))
    mat = F.mean(axis=axes).T  # column j = <A(e_j + D+ M_j)>
    return M, F, mat, info


def _z_coefficient(field, y, n):
    y = np.asarray(y, dtype=float).reshape(field.dim)
    return sample_flux_coefficient(lambda z: field.evaluate(np.broadcast_to(y, z.shape), z),
                                   n, field.dim)


def solve_z_cell(field, y, j, n, method="krylov", rtol=SOLVER_RTOL):
    """Corrector M_j(y, .) on the z-cell (``j`` is 0-based)."""
    if not 0 <= j < field.dim:
        raise ValueError(f"axis index {j} out of range for dim {field.dim}")
    if n < 4:
        raise ValueError("cell resolution n must be >= 4")
    A = _z_coefficient(field, y, n)
    M, _, _, _ = _solve_cell(A, n, field.dim, field.symmetric, method, rtol)
    return PeriodicGridField(field.dim, n, M[j], mean_zero=True)


def intermediate_matrix(field, y, n, method="krylov", rtol=SOLVER_RTOL):
    """a_hat(y) = <a(y, .)(I + grad_z M(y, .))>_Z."""
    A = _z_coefficient(field, y, n)
    return _solve_cell(A, n, field.dim, field.symmetric, method, rtol)[2]


class AHatInterpolant:
    """Periodic multilinear interpolant of a_hat over the cell-centred y-samples."""

    def __init__(self, a_hat):
        self.a_hat = np.asarray(a_hat, dtype=float)
        self.dim = self.a_hat.shape[-1]
        self.n_y = self.a_hat.shape[0]
        self.symmetric = bool(np.allclose(self.a_hat, np.swapaxes(self.a_hat, -1, -2), atol=1e-12))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        shape = y.shape[:-1]
        idx = ((y.reshape(-1, self.dim) + 0.5) * self.n_y - 0.5)
        out = np.empty((idx.shape[0], self.dim, self.dim))
        for i in range(self.dim):
            for k in range(self.dim):
                out[:, i, k] = interp_periodic(self.a_hat[..., i, k], idx)
        return out.reshape(shape + (self.dim, self.dim))


def solve_y_cell(a_hat_interpolant, j, n, method="krylov", rtol=SOLVER_RTOL):
    """Corrector N_j on the y-cell."""
    dim = a_hat_interpolant.dim
    A = sample_flux_coefficient(a_hat_interpolant, n, dim)
    N, _, _, _ = _solve_cell(A, n, dim, a_hat_interpolant.symmetric, method, rtol)
    return PeriodicGridField(dim, n, N[j], mean_zero=True)


def homogenized_matrix(a_hat_interpolant, n, method="krylov", rtol=SOLVER_RTOL):
    """a0 = <a_hat (I + grad_y N)>_Y."""
    dim = a_hat_interpolant.dim
    A = sample_flux_coefficient(a_hat_interpolant, n, dim)
    return _solve_cell(A, n, dim, a_hat_interpolant.symmetric, method, rtol)[2]


def flux_vectors(field, y, n, method="krylov", rtol=SOLVER_RTOL):
    """p^j(y, .) = a(y, .)(e_j + grad_z M_j) - a_hat(y) e_j, shape (d, d) + Z indexed [j, i]."""
    A = _z_coefficient(field, y, n)
    _, F, mat, _ = _solve_cell(A, n, field.dim, field.symmetric, method, rtol)
    return F - np.swapaxes(mat, 0, 1).reshape(mat.shape + (1,) * field.dim)


def flux_vectors_slow(a_hat_interpolant, n, method="krylov", rtol=SOLVER_RTOL):
    """g^j = a_hat(e_j + grad_y N_j) - a0 e_j, shape (d, d) + Y indexed [j, i]."""
    dim = a_hat_interpolant.dim
    A = sample_flux_coefficient(a_hat_interpolant, n, dim)
    _, F, a0, _ = _solve_cell(A, n, dim, a_hat_interpolant.symmetric, method, rtol)
    return F - np.swapaxes(a0, 0, 1).reshape(a0.shape + (1,) * dim)


# --------------------------------------------------------------------------
# potentials


def solve_potential(v, method="krylov", rtol=POTENTIAL_RTOL, mean_tol=1e-10, scale=None):
    """Skew matrix ``G`` with ``D- . G = v`` for a mean-zero solenoidal ``v``.

    ``v`` has shape ``(dim,) + (n,)*dim``. Returns ``(G, info)`` with ``G`` of
    shape ``(dim, dim) + (n,)*dim`` and ``info`` holding the divergence
    residual and the ratio ||G||_H1 / ||v||_L2. ``scale`` is the magnitude the
    mean is compared against (default: max |v|).
    """
    v = np.asarray(v, dtype=float)
    dim = v.shape[0]
    n = v.shape[1]
    h = 1.0 / n
    axes = tuple(range(1, 1 + dim))
    mean = v.mean(axis=axes)
    if scale is None:
        scale = np.abs(v).max()
    scale = max(scale, 1e-300)
    if np.abs(mean).max() > mean_tol * scale:
        raise NonzeroMeanError(float(np.abs(mean).max()))
    G = np.zeros((dim, dim) + (n,) * dim)
    info = {"residual": 0.0, "h1_ratio": 0.0}
    if dim == 1 or not np.any(v):
        # 1D: D- v = 0 forces v constant, so a mean-zero v vanishes up to round-off
        info["residual"] = float(np.abs(v).max() / scale)
        return G, info
    L = _laplacian(n, dim)
    X, _ = solve_periodic(L, -v.reshape(dim, -1).T, method=method, rtol=rtol)
    phi = X.T.reshape(v.shape)
    for i in range(dim):
        for k in range(i + 1, dim):
            G[i, k] = fwd(phi[k], i, h) - fwd(phi[i], k, h)
            G[k, i] = -G[i, k]
    info["residual"] = potential_residual(G, v, scale)
    l2 = lambda u: np.sqrt(np.mean(u ** 2))
    gh1 = np.sqrt(sum(l2(G[i, k]) ** 2 + sum(l2(fwd(G[i, k], a, h)) ** 2 for a in range(dim))
                      for i in range(dim) for k in range(dim)))
    vl2 = np.sqrt(sum(l2(v[k]) ** 2 for k in range(dim)))
    info["h1_ratio"] = float(gh1 / vl2)
    return G, info


def divergence(G):
    """Row-wise backward divergence (D- . G)_k = sum_i D-_i G_ik."""
    dim = G.shape[0]
    n = G.shape[2]
    h = 1.0 / n
    return np.stack([sum(bwd(G[i, k], i, h) for i in range(dim)) for k in range(dim)])


def potential_residual(G, v, scale=0.0):
    """Discrete L2 residual of div G = v relative to max(||v||, scale)."""
    r = divergence(G) - v
    return float(np.sqrt(np.mean(r ** 2)) / max(np.sqrt(np.mean(v ** 2)), scale, 1e-300))


# --------------------------------------------------------------------------
# corrector set


@dataclass
class CellCorrectorSet:
    """All cell data for one coefficient at resolutions (n, n_y).

    Array layouts (``d`` = dim, ``S = (n_y,)*d``, ``Z = (n,)*d``):
    ``M``: (d,)+S+Z, ``a_hat``: S+(d,d), ``p``: (d,d)+S+Z indexed [j, i],
    ``N``: (d,)+Z, ``g``: (d,d)+Z indexed [j, i], ``G``: (d,d,d)+Z indexed
    [j, i, k], ``a0``: (d,d).
    """

    name: str
    params: dict
    dim: int
    n: int
    n_y: int
    M: np.ndarray
    a_hat: np.ndarray
    p: np.ndarray
    N: np.ndarray
    a0: np.ndarray
    g: np.ndarray
    G: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    method: str = "krylov"
    _P: dict = field(default_factory=dict, repr=False)

    @property
    def y_samples(self):
        return sample_points(self.n_y, self.dim)

    def P(self, s, j):
        """Skew potential P^j(y_s, .) for sample multi-index ``s``; cached."""
        s = tuple(np.atleast_1d(s).tolist())
        key = (s, j)
        if key not in self._P:
            v = self.p[(j, slice(None)) + s]
            self._P[key], info = solve_potential(v, method=self.method,
                                                scale=np.abs(self.a_hat).max())
            self.diagnostics.setdefault("P_residual", {})[f"{s}:{j}"] = info["residual"]
        return self._P[key]

    def P_cache_bytes(self):
        return sum(a.nbytes for a in self._P.values())

    # interpolation helpers used by the corrector module -----------------

    def N_at(self, y):
        """N(y) and grad_y N(y): shapes (P, d) and (P, d_j, d_k)."""
        y = np.asarray(y, dtype=float).reshape(-1, self.dim)
        idx = (y + 0.5) * self.n
        vals = np.empty((y.shape[0], self.dim))
        grads = np.empty((y.shape[0], self.dim, self.dim))
        for j in range(self.dim):
            vals[:, j] = interp_periodic(self.N[j], idx)
            grads[:, j, :] = interp_periodic_grad(self.N[j], idx) * self.n
        return vals, grads

    def M_at(self, y, z):
        """M(y, z), shape (P, d); y multilinear across samples, z on the grid."""
        y = np.asarray(y, dtype=float).reshape(-1, self.dim)
        z = np.asarray(z, dtype=float).reshape(-1, self.dim)
        idx = np.concatenate([(y + 0.5) * self.n_y - 0.5, (z + 0.5) * self.n], axis=1)
        return np.stack([interp_periodic(self.M[j], idx) for j in range(self.dim)], axis=1)

    def dzM_at(self, y, z):
        """grad_z M_j(y, z), shape (P, d_j, d_k): forward-difference tables
        interpolated multilinearly (each sits half a z-step off the nodes)."""
        y = np.asarray(y, dtype=float).reshape(-1, self.dim)
        z = np.asarray(z, dtype=float).reshape(-1, self.dim)
        h = 1.0 / self.n
        ys = (y + 0.5) * self.n_y - 0.5
        out = np.empty((y.shape[0], self.dim, self.dim))
        for k in range(self.dim):
            shift = np.zeros(self.dim)
            shift[k] = 0.5
            idx = np.concatenate([ys, (z + 0.5) * self.n - shift], axis=1)
            for j in range(self.dim):
                table = fwd(self.M[j], self.M[j].ndim - self.dim + k, h)
                out[:, j, k] = interp_periodic(table, idx)
        return out


def compute_cell_correctors(field, n, n_y, method="krylov", rtol=SOLVER_RTOL):
    """Solve every z-cell problem on the y-sample grid, then the y-problem."""
    dim = field.dim
    if n < 4:
        raise ValueError("cell resolution n must be >= 4")
    ys = sample_points(n_y, dim)
    S = (n_y,) * dim
    M = np.empty((dim,) + S + (n,) * dim)
    p = np.empty((dim, dim) + S + (n,) * dim)
    a_hat = np.empty(S + (dim, dim))
    iters = []
    zres = []
    for s in np.ndindex(*S):
        A = _z_coefficient(field, ys[s], n)
        Ms, F, mat, info = _solve_cell(A, n, dim, field.symmetric, method, rtol)
        M[(slice(None),) + s] = Ms
        a_hat[s] = mat
        for j in range(dim):
            for i in range(dim):
                p[(j, i) + s] = F[j, i] - mat[i, j]
        iters.extend(info["iterations"])
        zres.append(max(info["residual"]))
    interp = AHatInterpolant(a_hat)
    A = sample_flux_coefficient(interp, n, dim)
    N, F, a0, info = _solve_cell(A, n, dim, interp.symmetric, method, rtol)
    g = np.empty((dim, dim) + (n,) * dim)
    for j in range(dim):
        for i in range(dim):
            g[j, i] = F[j, i] - a0[i, j]
    G = np.empty((dim, dim, dim) + (n,) * dim)
    gres = []
    h1 = []
    for j in range(dim):
        G[j], pinfo = solve_potential(g[j], method=method, scale=np.abs(a0).max())
        gres.append(pinfo["residual"])
        h1.append(pinfo["h1_ratio"])
    diag = {"z_iterations_max": max(iters) if iters else 0, "z_residual_max": max(zres),
            "y_residual_max": max(info["residual"]), "G_residual": gres, "G_h1_ratio": h1}
    log.info("cell correctors %s n=%d n_y=%d: a0=%s", field.name, n, n_y, a0.tolist())
    return CellCorrectorSet(field.name, dict(field.params), dim, n, n_y, M, a_hat, p, N, a0, g, G,
                            diag, method)


def lipschitz_check_M(field, j, y, h, n=32, method="krylov"):
    """||M_j(y+h, .) - M_j(y, .)||_{H1(Z)} / |h|; scalar ``h`` shifts along y_1."""
    y = np.asarray(y, dtype=float).reshape(field.dim)
    hv = np.zeros(field.dim)
    if np.ndim(h) == 0:
        hv[0] = h
    else:
        hv = np.asarray(h, dtype=float).reshape(field.dim)
    size = np.linalg.norm(hv)
    if size <= 0:
        raise ValueError("|h| must be positive")
    rtol = 1e-12
    m0 = solve_z_cell(field, y, j, n, method, rtol).values
    m1 = solve_z_cell(field, y + hv, j, n, method, rtol).values
    return h1_norm_periodic(m1 - m0) / size


def h1_norm_periodic(u):
    """Discrete H1 norm on the periodic cell of a scalar grid field."""
    dim = u.ndim
    h = 1.0 / u.shape[0]
    sq = np.mean(u ** 2) + sum(np.mean(fwd(u, k, h) ** 2) for k in range(dim))
    return float(np.sqrt(sq))


def energy_gradient_norm(field, y, j, n, method="krylov"):
    """||e_j + grad_z M_j(y, .)||_{L2(Z)} (bounded by mu^-2)."""
    A = _z_coefficient(field, y, n)
    M = _solve_cell(A, n, field.dim, field.symmetric, method, SOLVER_RTOL)[0]
    return corrector_gradient_norm(M[j], j)


def corrector_gradient_norm(Mj, j):
    dim = Mj.ndim
    h = 1.0 / Mj.shape[0]
    sq = 0.0
    for k in range(dim):
        gk = fwd(Mj, k, h) + (1.0 if k == j else 0.0)
        sq += np.mean(gk ** 2)
    return float(np.sqrt(sq))
