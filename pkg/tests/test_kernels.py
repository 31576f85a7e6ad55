import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rehomog import _accel, kernels

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)

PAIRS = [
    (kernels._periodic1_nb, kernels.interp_periodic_np, (7,)),
    (kernels._periodic2_nb, kernels.interp_periodic_np, (5, 6)),
    (kernels._periodic4_nb, kernels.interp_periodic_np, (3, 4, 5, 2)),
    (kernels._periodic1_grad_nb, kernels.interp_periodic_grad_np, (7,)),
    (kernels._periodic2_grad_nb, kernels.interp_periodic_grad_np, (5, 6)),
    (kernels._clamped1_nb, kernels.interp_clamped_np, (7,)),
    (kernels._clamped2_nb, kernels.interp_clamped_np, (5, 6)),
]


@pytest.mark.parametrize("nb,npf,shape", PAIRS)
def test_numba_matches_numpy(nb, npf, shape):
    rng = np.random.default_rng(0)
    table = rng.standard_normal(shape)
    idx = rng.uniform(-20, 20, (500, len(shape)))
    np.testing.assert_allclose(nb(table, idx), npf(table, idx), rtol=1e-13, atol=1e-13)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (6, 5), elements=finite),
       arrays(np.float64, (4, 2), elements=st.floats(-30, 30)))
def test_periodic2_property(table, idx):
    a = kernels._periodic2_nb(table, idx)
    b = kernels.interp_periodic_np(table, idx)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-9)
    # shifting by a full period changes nothing
    c = kernels.interp_periodic_np(table, idx + np.array([6.0, -5.0]))
    np.testing.assert_allclose(c, b, rtol=1e-9, atol=1e-6)


def test_nodes_reproduce_table():
    t = np.arange(12.0).reshape(3, 4)
    idx = np.array([[i, j] for i in range(3) for j in range(4)], dtype=float)
    np.testing.assert_array_equal(kernels.interp_periodic(t, idx), t.ravel())


def test_linear_functions_exact_clamped():
    x = np.linspace(0, 1, 11)
    t = 3 * x - 1
    idx = np.array([[-2.5], [0.3], [9.7], [12.0]])
    np.testing.assert_allclose(kernels.interp_clamped(t, idx), 3 * idx[:, 0] / 10 - 1)


def test_gradient_is_forward_difference():
    t = np.array([0.0, 1.0, 4.0, 9.0])
    g = kernels.interp_periodic_grad(t, np.array([[0.2], [2.9], [3.5]]))
    np.testing.assert_array_equal(g[:, 0], [1.0, 5.0, -9.0])


def test_rank_mismatch():
    with pytest.raises(ValueError):
        kernels.interp_periodic(np.zeros((3, 3)), np.zeros((2, 1)))


def test_dispatch_respects_flag(monkeypatch):
    t = np.arange(5.0)
    idx = np.array([[1.5]])
    monkeypatch.setattr(_accel, "NUMBA_ENABLED", False)
    a = kernels.interp_periodic(t, idx)
    monkeypatch.setattr(_accel, "NUMBA_ENABLED", True)
    assert kernels.interp_periodic(t, idx) == a == 1.5


def test_env_flag_subprocess():
    import os
    import subprocess
    import sys
    code = "from rehomog import _accel; print(_accel.NUMBA_ENABLED)"
    out = subprocess.run([sys.executable, "-c", code], env=dict(os.environ, HOMOG_NUMBA="0"),
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
