"""First approximations built from the cell correctors.

Plain approximation ``u + eps N(y).grad u + delta M(y, z).(I + grad_y N) grad u``
and its Steklov-smoothed version where the slow factors are averaged over
the shifted cell ``x - delta*sigma``. Everything is evaluated at the nodes of
the domain mesh; gradients of the homogenized solution come from centred
differences of its even extension.
"""
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .domain import DomainField, ExtendedField, QuadField, coefficient_on_elements, extend


def cell_rule(order, dim):
    """Tensor Gauss-Legendre rule on [-1/2, 1/2]^dim; weights sum to one."""
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    x, w = leggauss(order)
    x, w = 0.5 * x, 0.5 * w
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wgrid = np.prod(np.meshgrid(*([w] * dim), indexing="ij"), axis=0)
    return np.stack([g.ravel() for g in grids], axis=1), wgrid.ravel()


def steklov_smooth(phi, delta, quad_order=4, mesh=None, points=None):
    """(phi)_delta(x) = int_Z phi(x - delta*sigma) dsigma by tensor Gauss rule.

    ``phi`` is a DomainField (extended by reflection as needed), an
    ExtendedField, or a callable on arrays of points (P, d). Values are
    returned at ``points`` if given, otherwise as a DomainField on ``mesh``.
    """
    if isinstance(phi, DomainField):
        mesh = mesh or phi.mesh
        phi = extend(phi, min(delta, mesh.L / 2))
    f = phi.at if isinstance(phi, ExtendedField) else phi
    if points is None:
        if mesh is None:
            raise ValueError("need a mesh or explicit points")
        x = mesh.nodes
    else:
        x = np.asarray(points, dtype=float)
    sig, w = cell_rule(quad_order, x.shape[-1])
    out = np.zeros(x.shape[0])
    for s, ws in zip(sig, w):
        out += ws * np.asarray(f(x - delta * s)).reshape(-1)
    if points is not None:
        return out
    return DomainField(mesh, out, "smoothed")


@dataclass
class Approximation:
    u0: DomainField
    K1: DomainField
    K2: DomainField
    v_hat: DomainField
    epsilon: float
    delta: float
    info: dict = field(default_factory=dict)

    @property
    def K(self):
        """Total corrector eps*K1 + delta*K2 as nodal values."""
        return self.epsilon * self.K1.values + self.delta * self.K2.values


def _flux_factor(cells, gu, y):
    """N(y) and xi = (I + grad_y N(y)) grad u for each point."""
    Nv, dN = cells.N_at(y)
    xi = gu + np.einsum("pjk,pj->pk", dN, gu)
    return Nv, xi


def first_approx_plain(u0, cells, eps, delta, mesh=None):
    """Unsmoothed first approximation at the mesh nodes."""
    mesh = mesh or u0.mesh
    x = mesh.nodes
    ext = extend(u0, 2 * mesh.h)
    gu = ext.grad_at(x)
    Nv, xi = _flux_factor(cells, gu, x / eps)
    M = cells.M_at(x / eps, x / delta)
    v = u0.values + eps * np.sum(Nv * gu, axis=1) + delta * np.sum(M * xi, axis=1)
    return DomainField(mesh, v, "v_eps")


def _smoothed_terms(ext, cells, eps, delta, x, order):
    sig, w = cell_rule(order, x.shape[1])
    K1 = np.zeros(x.shape[0])
    K2 = np.zeros(x.shape[0])
    z = x / delta
    for s, ws in zip(sig, w):
        gu = ext.grad_at(x - delta * s)
        yp = x / eps - (delta / eps) * s
        Nv, xi = _flux_factor(cells, gu, yp)
        K1 += ws * np.sum(Nv * gu, axis=1)
        K2 += ws * np.sum(cells.M_at(yp, z) * xi, axis=1)
    return K1, K2


def first_approx_smoothed(u0, cells, eps, delta, mesh=None, quad_order=4, self_check=True,
                          extended=None):
    """Steklov-smoothed first approximation v_hat = u0 + eps K1 + delta K2.

    ``u0`` is the nodal homogenized solution; its even extension to the
    delta-neighbourhood is built here unless ``extended`` is supplied. With
    ``self_check`` the sigma-rule is doubled and the relative L2 change of
    the total corrector is stored in ``info["quad_change"]``.
    """
    if quad_order < 2:
        raise ValueError("quad_order must be >= 2")
    mesh = mesh or u0.mesh
    ext = extended or extend(u0, min(delta + 2 * mesh.h, mesh.L / 2))
    x = mesh.nodes
    K1, K2 = _smoothed_terms(ext, cells, eps, delta, x, quad_order)
    v = u0.values + eps * K1 + delta * K2
    info = {"quad_order": quad_order}
    if self_check:
        K1b, K2b = _smoothed_terms(ext, cells, eps, delta, x, 2 * quad_order)
        Ka = eps * K1 + delta * K2
        Kb = eps * K1b + delta * K2b
        nb = np.sqrt(Kb @ (mesh.mass @ Kb))
        diff = np.sqrt((Ka - Kb) @ (mesh.mass @ (Ka - Kb)))
        info["quad_change"] = float(diff / nb) if nb > 0 else 0.0
    return Approximation(u0, DomainField(mesh, K1, "K1"), DomainField(mesh, K2, "K2"),
                         DomainField(mesh, v, "v_hat"), eps, delta, info)


def residual_field(field, eps, delta, approx, a0):
    """R_hat = a_eps grad v_hat - a0 grad u at the element Gauss points."""
    mesh = approx.v_hat.mesh
    A = coefficient_on_elements(field, eps, delta, mesh)
    gv = mesh.grad(approx.v_hat.values)
    gu = mesh.grad(approx.u0.values)
    a0 = np.atleast_2d(np.asarray(a0, dtype=float))
    R = np.einsum("ekl,eql->eqk", A, gv) - gu @ a0.T
    return QuadField(mesh, R, "R_hat")


def ext_l2_norm(ext, margin):
    """L2 norm of an extended field over the margin-neighbourhood of the domain
    (tensor trapezoid rule on the padded grid)."""
    ax = ext.origin + ext.h * np.arange(ext.values.shape[0])
    inside = (ax >= -margin - 1e-12) & (ax <= ext.L + margin + 1e-12)
    w = np.where(inside, ext.h, 0.0)
    edges = np.flatnonzero(inside)
    w[edges[0]] *= 0.5
    w[edges[-1]] *= 0.5
    W = w
    for _ in range(ext.dim - 1):
        W = np.multiply.outer(W, w)
    return float(np.sqrt(np.sum(W * ext.values ** 2)))


def smoothing_bound_check(cells, j, k, u_ext, eps, delta, mesh, quad_order=4):
    """Measure both sides of the smoothing lemma for b = d M_j / d z_k.

    w(x) = int_Z b(x/eps - (delta/eps) sigma, x/delta) u(x - delta sigma) dsigma.
    Returns (||w||_{L2(Q)}, sup_y ||b(y,.)||_{L2(Z)} * ||u||_{L2(Q_eps)}).
    """
    x = mesh.quad_points.reshape(-1, mesh.dim)
    sig, wq = cell_rule(quad_order, mesh.dim)
    w = np.zeros(x.shape[0])
    for s, ws in zip(sig, wq):
        b = cells.dzM_at(x / eps - (delta / eps) * s, x / delta)[:, j, k]
        w += ws * b * u_ext.at(x - delta * s)
    lhs = np.sqrt(mesh.integrate((w ** 2).reshape(mesh.n_elements, -1)))
    table = np.diff(np.concatenate([cells.M[j], np.take(cells.M[j], [0], axis=cells.dim + k)],
                                   axis=cells.dim + k), axis=cells.dim + k) * cells.n
    zaxes = tuple(range(cells.dim, 2 * cells.dim))
    sup_b = np.sqrt(np.mean(table ** 2, axis=zaxes)).max()
    rhs = sup_b * ext_l2_norm(u_ext, eps)
    return float(lhs), float(rhs)
