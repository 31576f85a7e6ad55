import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rehomog.analysis import (ErrorRecord, boundary_grad_sq, boundary_layer_l2,
                              duality_identity_check, fit_rates, grad_l2_norm, h1_norm, l2_norm,
                              boundary_gradient_check, poincare_constant, residual_dual_norm, trace_check)
from rehomog.cellsolve import compute_cell_correctors
from rehomog.coefficients import constant, make_coefficient
from rehomog.corrector import first_approx_smoothed
from rehomog.domain import (DomainField, DomainMesh, QuadField, rhs_mode, solve_fine,
                            solve_homogenized)


def field_of(mesh, fn):
    return DomainField(mesh, fn(mesh.nodes))


def test_norms_basic():
    mesh = DomainMesh(2, 128)
    one = field_of(mesh, lambda x: np.ones(len(x)))
    assert l2_norm(one) == pytest.approx(1.0)
    assert h1_norm(one) == pytest.approx(1.0)
    s = field_of(mesh, lambda x: np.sin(2 * np.pi * x[:, 0]))
    assert l2_norm(s) ** 2 == pytest.approx(0.5, rel=1e-3)
    assert grad_l2_norm(s) ** 2 == pytest.approx(2 * np.pi ** 2, rel=1e-3)


@pytest.mark.parametrize("eps", [1 / 8, 1 / 16, 1 / 4])
def test_frame_area(eps):
    mesh = DomainMesh(2, 64)
    one = field_of(mesh, lambda x: np.ones(len(x)))
    assert boundary_layer_l2(one, eps) ** 2 == pytest.approx(1 - (1 - 2 * eps) ** 2, rel=1e-12)


def test_layer_width_below_h_rejected():
    mesh = DomainMesh(1, 16)
    with pytest.raises(ValueError):
        boundary_layer_l2(field_of(mesh, lambda x: x[:, 0]), 0.01)


def test_layer_monotone():
    mesh = DomainMesh(2, 64)
    phi = field_of(mesh, lambda x: np.cos(3 * x[:, 0]) + x[:, 1] ** 2)
    vals = [boundary_layer_l2(phi, w) for w in np.arange(1, 33) / 64]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_trace_linear_exact():
    mesh = DomainMesh(2, 64)
    phi = field_of(mesh, lambda x: x[:, 0])
    eps = 1 / 8
    inner = ((1 - eps) ** 3 - eps ** 3) / 3 * (1 - 2 * eps)
    exact = (1 / 3 - inner) / (eps / math.sqrt(3))
    r = trace_check(phi, eps)
    assert not r.degenerate
    assert r.ratio == pytest.approx(exact, rel=1e-12)
    assert trace_check(DomainField(mesh, 2 * phi.values), eps).ratio == pytest.approx(r.ratio)


def test_trace_sine_bounded():
    mesh = DomainMesh(2, 128)
    phi = field_of(mesh, lambda x: np.sin(2 * np.pi * x[:, 0]))
    r = [trace_check(phi, e).ratio for e in (1 / 8, 1 / 16, 1 / 32)]
    assert max(r) / min(r) < 2


def test_trace_degenerate():
    mesh = DomainMesh(1, 16)
    r = trace_check(field_of(mesh, lambda x: np.full(len(x), 2.0)), 0.125)
    assert r.degenerate


def test_dual_norm_zero_and_gradient():
    mesh = DomainMesh(2, 32)
    assert residual_dual_norm(QuadField(mesh, np.zeros((mesh.n_elements, 4, 2)))) == 0.0
    chi = field_of(mesh, lambda x: np.sin(3 * x[:, 0]) * x[:, 1] ** 2)
    R = QuadField(mesh, mesh.grad(chi.values))
    assert residual_dual_norm(R) == pytest.approx(grad_l2_norm(chi), rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 20))
def test_dual_dominated_by_primal(seed):
    mesh = DomainMesh(2, 12)
    R = QuadField(mesh, np.random.default_rng(seed).standard_normal((mesh.n_elements, 4, 2)))
    assert residual_dual_norm(R) <= l2_norm(R) * (1 + 1e-12)


def test_boundary_gradient_zero_rhs():
    mesh = DomainMesh(1, 16)
    assert boundary_gradient_check(DomainField(mesh, np.zeros(17)), 0.125, 1 / 64, 0.0) == 0.0


def test_boundary_gradient_constant_coefficient():
    r = []
    for k in (3, 4, 5, 6):
        eps = 2.0 ** -k
        mesh = DomainMesh(2, 128)
        f, _, _ = rhs_mode("cos11", mesh)
        u = solve_homogenized(np.eye(2), f, mesh)
        r.append(boundary_gradient_check(u, eps, eps ** 2, l2_norm(f)))
    assert max(r) <= 2 * r[0]


def test_duality_constant_coefficient():
    a = constant(1, 2.0)
    cells = compute_cell_correctors(a, 16, 4)
    mesh = DomainMesh(1, 256)
    f, _, _ = rhs_mode("cos", mesh)
    ue = solve_fine(a, 0.125, 1 / 64, f, mesh)
    ap = first_approx_smoothed(solve_homogenized(cells.a0, f, mesh), cells, 0.125, 1 / 64)
    assert duality_identity_check(a, 0.125, 1 / 64, ap, ue, cells.a0).discrepancy < 1e-10


def test_duality_nonsymmetric():
    a = make_coefficient("nonsymmetric")
    cells = compute_cell_correctors(a, 32, 4)
    mesh = DomainMesh(2, 128)
    f, _, _ = rhs_mode("cos11", mesh)
    eps, delta = 1 / 4, 1 / 16
    ue = solve_fine(a, eps, delta, f, mesh)
    ap = first_approx_smoothed(solve_homogenized(cells.a0, f, mesh), cells, eps, delta)
    res = duality_identity_check(a, eps, delta, ap, ue, cells.a0)
    assert res.discrepancy < 1e-3
    assert abs(res.lhs) > 0


def rec(t, e, eps=None):
    return ErrorRecord(eps or t, (eps or t) ** 2, t, e, e, e, e, 1.0, e)


def test_fit_exact_slopes():
    taus = [2.0 ** -k for k in range(3, 8)]
    r1 = fit_rates([rec(t, t) for t in taus])
    r2 = fit_rates([rec(t, math.sqrt(t)) for t in taus])
    assert r1.fits["l2_error"].slope == pytest.approx(1.0, abs=1e-12)
    assert r2.fits["h1_error"].slope == pytest.approx(0.5, abs=1e-12)
    assert r1.fits["l2_error"].half_width < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1e6), st.permutations(range(5)))
def test_fit_scale_and_order_invariant(c, perm):
    taus = [2.0 ** -k for k in range(3, 8)]
    base = [rec(t, t ** 0.8 * (1 + 0.1 * (i % 2))) for i, t in enumerate(taus)]
    scaled = [rec(r.tau, c * r.l2_error) for r in base]
    s0 = fit_rates(base).fits["l2_error"].slope
    s1 = fit_rates([scaled[i] for i in perm]).fits["l2_error"].slope
    assert s1 == pytest.approx(s0, abs=1e-9)


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_rates([rec(0.1, 0.1), rec(0.05, 0.05)])
    with pytest.raises(ValueError):
        fit_rates([rec(0.1, 0.1), rec(0.1, 0.05), rec(0.05, 0.01)])


def test_fit_verdicts_and_noise_floor():
    taus = [0.1, 0.05, 0.025]
    r = fit_rates([rec(t, t) for t in taus], thresholds={"l2_error": (0.9, 1.1), "h1_error": (0.4, 0.6)})
    assert r.verdicts == {"l2_error": True, "h1_error": False}
    flat = fit_rates([rec(t, 0.0) for t in taus])
    assert flat.fits["l2_error"].noise_floor
    by_eps = fit_rates([rec(t, t, eps=e) for t, e in zip(taus, [0.3, 0.2, 0.1])], abscissa="epsilon")
    assert by_eps.abscissa == "epsilon"


def test_record_rejects_negative():
    with pytest.raises(ValueError):
        ErrorRecord(0.1, 0.01, 0.1, -1.0, 0, 0, 0, 1)


@pytest.mark.parametrize("dim,m", [(1, 32), (2, 16)])
def test_poincare_stabilizes(dim, m):
    c = [poincare_constant(DomainMesh(dim, k)) for k in (m, 2 * m, 4 * m)]
    assert abs(c[1] - c[0]) / c[1] < 0.02 and abs(c[2] - c[1]) / c[2] < 0.02
    assert c[2] == pytest.approx(1 / np.pi ** 2, rel=1e-3)
