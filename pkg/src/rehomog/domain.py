"""Neumann problems on the rectangle [0, L]^d.

Conforming Q1 elements (P1 in 1D) on a uniform tensor mesh. The
coefficient is frozen at the element midpoint and the element integrals of
gradient products are exact, so all bilinear forms here (fine, homogenized,
adjoint, residual functional) are evaluated consistently on one mesh.
Vector-valued fields live at the 2-point Gauss nodes of each element.
"""
import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial.legendre import leggauss

from .kernels import interp_clamped

log = logging.getLogger(__name__)

_GAUSS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


class IncompatibleDataError(ValueError):
    """Right-hand side violates the Neumann compatibility condition."""


class QuadratureError(RuntimeError):
    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved


class UnderResolvedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DomainMesh:
    dim: int
    m: int
    L: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.m < 4:
            raise ValueError("mesh resolution m must be >= 4")

    @property
    def h(self):
        return self.L / self.m

    @property
    def shape(self):
        return (self.m + 1,) * self.dim

    @property
    def n_nodes(self):
        return (self.m + 1) ** self.dim

    @property
    def n_elements(self):
        return self.m ** self.dim

    @cached_property
    def axis(self):
        return np.linspace(0.0, self.L, self.m + 1)

    @cached_property
    def nodes(self):
        """Node coordinates, shape (n_nodes, dim), C order over the grid."""
        g = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack([c.ravel() for c in g], axis=1)

    @cached_property
    def _offsets(self):
        return np.array(list(np.ndindex(*(2,) * self.dim)))  # (2^d, d)

    @cached_property
    def conn(self):
        """Element -> node indices, shape (n_elements, 2^d)."""
        e = np.array(list(np.ndindex(*(self.m,) * self.dim)))
        strides = np.array([(self.m + 1) ** (self.dim - 1 - k) for k in range(self.dim)])
        corner = e @ strides
        return corner[:, None] + (self._offsets @ strides)[None, :]

    @cached_property
    def element_origin(self):
        e = np.array(list(np.ndindex(*(self.m,) * self.dim)), dtype=float)
        return e * self.h

    @cached_property
    def centers(self):
        return self.element_origin + 0.5 * self.h

    @cached_property
    def _ref(self):
        """Reference shape values/gradients at the tensor Gauss nodes."""
        q = np.array(list(np.ndindex(*(2,) * self.dim)))
        xi = _GAUSS[q]  # (nq, d)
        off = self._offsets
        nq, na = xi.shape[0], off.shape[0]
        phi = np.ones((nq, na))
        dphi = np.ones((nq, na, self.dim))
        for k in range(self.dim):
            lin = np.where(off[None, :, k] == 1, xi[:, None, k], 1.0 - xi[:, None, k])
            dlin = np.where(off[None, :, k] == 1, 1.0, -1.0)
            phi *= lin
            for l in range(self.dim):
                dphi[:, :, l] *= dlin if l == k else lin
        weights = np.full(nq, 0.5 ** self.dim)
        return xi, phi, dphi, weights

    @cached_property
    def quad_points(self):
        """Physical Gauss points, shape (n_elements, nq, dim)."""
        xi = self._ref[0]
        return self.element_origin[:, None, :] + self.h * xi[None, :, :]

    @property
    def quad_weights(self):
        return self._ref[3] * self.h ** self.dim

    def boundary_distance(self, x):
        x = np.asarray(x)
        return np.minimum(x, self.L - x).min(axis=-1)

    def node_layer(self, width):
        """Nodes within ``width`` of the boundary (Gamma_width)."""
        return self.boundary_distance(self.nodes) <= width + 1e-12 * self.L

    def element_layer(self, width):
        """Elements whose midpoint lies within ``width`` of the boundary."""
        return self.boundary_distance(self.centers) < width

    # finite element machinery ------------------------------------------

    @cached_property
    def _stiffness_blocks(self):
        _, _, dphi, w = self._ref
        scale = self.h ** (self.dim - 2)
        return np.einsum("q,qak,qbl->klab", w, dphi, dphi) * scale

    def stiffness(self, A):
        """Global matrix of int grad(phi_a) . A grad(phi_b); ``A`` per element (ne, d, d)."""
        A = np.asarray(A, dtype=float).reshape(self.n_elements, self.dim, self.dim)
        vals = np.einsum("ekl,klab->eab", A, self._stiffness_blocks)
        return self._scatter(vals)

    @cached_property
    def mass(self):
        _, phi, _, w = self._ref
        Me = np.einsum("q,qa,qb->ab", w, phi, phi) * self.h ** self.dim
        return self._scatter(np.broadcast_to(Me, (self.n_elements,) + Me.shape))

    @cached_property
    def mass_vector(self):
        """int phi_a over the domain."""
        return np.asarray(self.mass.sum(axis=0)).ravel()

    def _scatter(self, vals):
        na = self.conn.shape[1]
        rows = np.repeat(self.conn, na, axis=1).ravel()
        cols = np.tile(self.conn, (1, na)).ravel()
        return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(self.n_nodes,) * 2)

    def grad(self, values):
        """Gradient of a nodal field at the Gauss points, (ne, nq, d)."""
        _, _, dphi, _ = self._ref
        u = np.asarray(values)[self.conn]  # (ne, na)
        return np.einsum("ea,qak->eqk", u, dphi) / self.h

    def at_quad(self, values):
        _, phi, _, _ = self._ref
        return np.asarray(values)[self.conn] @ phi.T

    def integrate(self, quad_values, mask=None):
        """Integral of values given at the Gauss points, shape (ne, nq)."""
        v = quad_values if mask is None else quad_values[mask]
        return float(np.sum(v @ self.quad_weights))

    def grid(self, values):
        return np.asarray(values).reshape(self.shape)


@dataclass
class DomainField:
    """Nodal field on a mesh. ``role`` names the quantity (u_eps, u0, ...)."""

    mesh: DomainMesh
    values: np.ndarray
    role: str = ""
    info: dict = field(default_factory=dict)

    def mean(self):
        return float(self.mesh.mass_vector @ self.values) / self.mesh.L ** self.mesh.dim

    def __sub__(self, other):
        return DomainField(self.mesh, self.values - other.values, f"{self.role}-{other.role}")


@dataclass
class QuadField:
    """Vector field at element Gauss points, values (ne, nq, d)."""

    mesh: DomainMesh
    values: np.ndarray
    role: str = ""


# --------------------------------------------------------------------------
# right-hand sides


def rhs_mode(mode, mesh):
    """Zero-mean nodal right-hand side and, in 1D, its antiderivative.

    Modes: ``cos`` / ``cos1`` = cos(pi x_1/L); ``cos2`` = cos(2 pi x_1/L);
    ``cos11`` = cos(pi x_1/L) cos(pi x_2/L) (2D).
    """
    L = mesh.L
    k = np.pi / L
    if mode in ("cos", "cos1"):
        f = lambda x: np.cos(k * x[..., 0])
        F = lambda x: np.sin(k * x) / k
    elif mode == "cos2":
        f = lambda x: np.cos(2 * k * x[..., 0])
        F = lambda x: np.sin(2 * k * x) / (2 * k)
    elif mode == "cos11":
        if mesh.dim != 2:
            raise ValueError("mode cos11 needs dim 2")
        f = lambda x: np.cos(k * x[..., 0]) * np.cos(k * x[..., 1])
        F = None
    else:
        raise ValueError(f"unknown right-hand side mode {mode!r}")
    return DomainField(mesh, f(mesh.nodes), "f", {"mode": mode}), f, F


def _load(mesh, f, tol=1e-8):
    fv = np.asarray(f.values if isinstance(f, DomainField) else f, dtype=float)
    vol = mesh.L ** mesh.dim
    integral = mesh.mass_vector @ fv
    fnorm = np.sqrt(max(fv @ (mesh.mass @ fv), 0.0))
    if abs(integral) > tol * max(fnorm, 1e-300) * np.sqrt(vol):
        raise IncompatibleDataError(
            f"int f = {integral:.3e} is not zero (||f|| = {fnorm:.3e}); Neumann problem unsolvable")
    fv = fv - integral / vol
    return mesh.mass @ fv


def _neumann_solve(K, b, mesh):
    """Solve K u = b for mean-zero u (pin node 0, then remove the mean)."""
    lu = spla.splu(K[1:, 1:].tocsc())
    u = np.zeros(mesh.n_nodes)
    u[1:] = lu.solve(b[1:])
    u -= (mesh.mass_vector @ u) / mesh.L ** mesh.dim
    return u


def coefficient_on_elements(field, eps, delta, mesh):
    xc = mesh.centers
    return field.evaluate(xc / eps, xc / delta)


def _check_resolution(mesh, delta, field=None):
    if field is not None and field.is_constant:
        return False
    if mesh.h > delta / 8:
        warnings.warn(f"mesh h={mesh.h:.3g} does not resolve delta={delta:.3g} (need h <= delta/8)",
                      UnderResolvedWarning, stacklevel=3)
        return True
    return False


def solve_fine(field, eps, delta, f, mesh):
    """FE solution of the oscillating Neumann problem."""
    under = _check_resolution(mesh, delta, field)
    A = coefficient_on_elements(field, eps, delta, mesh)
    K = mesh.stiffness(A)
    b = _load(mesh, f)
    u = _neumann_solve(K, b, mesh)
    energy = u @ (K @ u)
    info = {"under_resolved": under, "energy": float(energy),
            "energy_identity_residual": float(abs(energy - u @ b) / max(abs(energy), 1e-300))}
    return DomainField(mesh, u, "u_eps", info)


def solve_homogenized(a0, f, mesh):
    """FE solution of the constant-coefficient problem with matrix ``a0``."""
    a0 = np.atleast_2d(np.asarray(a0, dtype=float))
    A = np.broadcast_to(a0, (mesh.n_elements, mesh.dim, mesh.dim))
    K = mesh.stiffness(A)
    b = _load(mesh, f)
    u = _neumann_solve(K, b, mesh)
    fv = f.values if isinstance(f, DomainField) else np.asarray(f)
    fnorm = np.sqrt(fv @ (mesh.mass @ fv))
    info = {"h2_ratio": second_difference_norm(u, mesh) / max(fnorm, 1e-300)}
    return DomainField(mesh, u, "u0", info)


def solve_adjoint(field, eps, delta, Phi, mesh):
    """Solve -div(a_eps^T grad phi) = Phi with Neumann conditions."""
    under = _check_resolution(mesh, delta, field)
    A = coefficient_on_elements(field, eps, delta, mesh)
    K = mesh.stiffness(np.swapaxes(A, -1, -2))
    b = _load(mesh, Phi)
    phi = _neumann_solve(K, b, mesh)
    return DomainField(mesh, phi, "phi_eps", {"under_resolved": under})


def second_difference_norm(values, mesh):
    """Discrete L2 norm of all second differences (H2 surrogate)."""
    u = mesh.grid(values)
    h = mesh.h
    sq = 0.0
    for k in range(mesh.dim):
        for l in range(mesh.dim):
            d = np.gradient(np.gradient(u, h, axis=k), h, axis=l)
            sq += np.sum(d ** 2) * h ** mesh.dim
    return float(np.sqrt(sq))


# --------------------------------------------------------------------------
# extension


@dataclass
class ExtendedField:
    """Nodal values on the padded grid [-pad*h, L + pad*h]^d."""

    dim: int
    h: float
    pad: int
    values: np.ndarray
    L: float

    @property
    def origin(self):
        return -self.pad * self.h

    def _idx(self, x):
        return (np.asarray(x, dtype=float).reshape(-1, self.dim) - self.origin) / self.h

    def at(self, x):
        return interp_clamped(self.values, self._idx(x))

    @cached_property
    def gradient_tables(self):
        if self.dim == 1:
            return [np.gradient(self.values, self.h)]
        return list(np.gradient(self.values, self.h))

    def grad_at(self, x):
        idx = self._idx(x)
        return np.stack([interp_clamped(t, idx) for t in self.gradient_tables], axis=1)

    def restrict(self):
        sl = (slice(self.pad, self.values.shape[0] - self.pad),) * self.dim
        return self.values[sl]


def _reflect_index(j, m):
    j = np.where(j < 0, -j, j)
    return np.where(j > m, 2 * m - j, j)


def extend(u, margin):
    """Even reflection of a nodal field across each face, ``margin <= L/2``."""
    mesh = u.mesh
    if margin > mesh.L / 2 + 1e-12:
        raise ValueError("margin must not exceed L/2")
    pad = int(np.ceil(margin / mesh.h - 1e-9)) + 2
    pad = min(pad, mesh.m)
    j = _reflect_index(np.arange(-pad, mesh.m + pad + 1), mesh.m)
    g = mesh.grid(u.values)
    ext = g[np.ix_(*([j] * mesh.dim))]
    return ExtendedField(mesh.dim, mesh.h, pad, ext, mesh.L)


# --------------------------------------------------------------------------
# 1D quadrature oracle


class _Cumulative:
    """Composite Gauss-Legendre antiderivative of ``g`` on [0, L]."""

    def __init__(self, g, L, panels, order):
        x, w = leggauss(order)
        self.x01 = 0.5 * (x + 1.0)
        self.w01 = 0.5 * w
        self.g = g
        self.L = L
        self.panels = panels
        self.width = L / panels
        self.edges = np.linspace(0.0, L, panels + 1)
        pts = self.edges[:-1, None] + self.width * self.x01[None, :]
        vals = g(pts)
        self.cum = np.concatenate([[0.0], np.cumsum(vals @ self.w01 * self.width)])
        # int_0^L (L - s) g(s) ds = int_0^L U(x) dx
        self.moment = float(np.sum(((L - pts) * vals) @ self.w01 * self.width))

    def __call__(self, t, chunk=1 << 18):
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        out = np.empty_like(flat)
        for s in range(0, flat.size, chunk):
            tt = flat[s:s + chunk]
            k = np.clip(np.floor(tt / self.width).astype(np.int64), 0, self.panels - 1)
            left = self.edges[k]
            span = tt - left
            pts = left[:, None] + span[:, None] * self.x01[None, :]
            out[s:s + chunk] = self.cum[k] + (self.g(pts) @ self.w01) * span
        return out.reshape(t.shape)


class FineOracle1D:
    """u_eps(x) = int_0^x -F(s)/a_eps(s) ds + c with zero mean, F = int_0^s f."""

    def __init__(self, flux_over_a, L, panels, order, achieved):
        self.L = L
        self.derivative = flux_over_a
        self._U = _Cumulative(flux_over_a, L, panels, order)
        self.const = -self._U.moment / L
        self.panels = panels
        self.achieved = achieved

    def __call__(self, x):
        return self._U(x) + self.const


def _antiderivative(f, L):
    F = _Cumulative(lambda s: f(s[..., None]), L, 4096, 10)
    return F


def _build_oracle(g, L, scale, tol, order, max_doublings):
    panels = int(np.ceil(L / scale))
    prev = _Cumulative(g, L, panels, order)
    achieved = np.inf
    for _ in range(max_doublings):
        panels *= 2
        cur = _Cumulative(g, L, panels, order)
        achieved = max(np.abs(cur.cum[::2] - prev.cum).max(), abs(cur.moment - prev.moment))
        if achieved <= tol:
            return FineOracle1D(g, L, panels, order, achieved)
        prev = cur
    raise QuadratureError(f"quadrature reached only {achieved:.2e} (target {tol:.1e})", achieved)


def solve_fine_1d_exact(field, eps, delta, f, L=1.0, F=None, tol=1e-9, order=8, max_doublings=10):
    """Quadrature oracle for the 1D oscillating Neumann problem.

    ``f`` maps arrays of points ``(..., 1)`` to values; ``F`` (optional) is its
    antiderivative from 0 as a function of plain coordinates.
    """
    if field.dim != 1:
        raise ValueError("the quadrature oracle is one-dimensional")
    if F is None:
        F = _antiderivative(f, L)
    if abs(F(np.array(L))) > 1e-10 * max(1.0, np.abs(F(np.linspace(0, L, 33))).max()):
        raise IncompatibleDataError("int f != 0")

    def g(s):
        return -F(s) / field.evaluate(s / eps, s / delta)[..., 0, 0]

    return _build_oracle(g, L, min(eps, delta) / 4, tol, order, max_doublings)


def solve_homogenized_1d_exact(a0, f, L=1.0, F=None, tol=1e-9, order=8):
    a0 = float(np.asarray(a0).ravel()[0])
    if F is None:
        F = _antiderivative(f, L)
    return _build_oracle(lambda s: -F(s) / a0, L, L / 64, tol, order, 10)
