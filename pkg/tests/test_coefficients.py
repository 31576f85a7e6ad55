import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rehomog.coefficients import (CATALOG, ScaleCoupling, constant, evaluate, make_coefficient,
                                  verify_hypotheses, wrap)

VARIANTS = [(name, {"dim": d}) for name in ("trig_product", "laminate", "constant") for d in (1, 2)]
VARIANTS += [(name, {}) for name in CATALOG if name not in ("trig_product", "laminate", "constant")]


def test_constant_field():
    a = constant(2, 2.0)
    out = evaluate(a, np.array([0.3, -0.1]), np.array([0.2, 0.4]))
    np.testing.assert_array_equal(out, 2 * np.eye(2))


def test_trig_product_at_origin():
    a = make_coefficient("trig_product", dim=1)
    assert evaluate(a, 0.0, 0.0)[0, 0] == pytest.approx(9.0)
    assert evaluate(a, 0.5, 0.5)[0, 0] == pytest.approx(1.0)


@pytest.mark.parametrize("name,kw", VARIANTS)
def test_periodicity(name, kw, rng):
    a = make_coefficient(name, **kw)
    y = rng.uniform(-2, 2, (100, a.dim))
    z = rng.uniform(-2, 2, (100, a.dim))
    np.testing.assert_allclose(a.evaluate(y + 1, z - 2), a.evaluate(y, z), atol=1e-12)


@pytest.mark.parametrize("name,kw", VARIANTS)
def test_catalog_passes_declared_constants(name, kw):
    rep = verify_hypotheses(make_coefficient(name, **kw), n_samples=2000, seed=3)
    assert rep.passed, rep.witness


def test_pure_bitwise():
    a = make_coefficient("checkerboard")
    y = np.array([[0.1, 0.2]])
    assert np.array_equal(a.evaluate(y, y), a.evaluate(y, y))


def test_declared_mu_too_large_is_reported():
    a = constant(2, 2.0)
    bad = type(a)(a.name, a.dim, 3.0, a.lipschitz_y, True, a.fn, a.params)
    rep = verify_hypotheses(bad, n_samples=10)
    assert not rep.passed
    assert rep.witness["violation"] == "ellipticity"
    assert rep.mu_observed == pytest.approx(2.0)


def test_trig_product_observed_extrema():
    rep = verify_hypotheses(make_coefficient("trig_product", dim=1), n_samples=5000)
    assert 1.0 <= rep.mu_observed < 1.1
    assert 8.5 < rep.bound_observed <= 9.0


def test_verify_rejects_zero_samples():
    with pytest.raises(ValueError):
        verify_hypotheses(constant(1, 2.0), n_samples=0)


def test_transpose_nonsymmetric():
    a = make_coefficient("nonsymmetric")
    y = np.array([[0.1, 0.3]])
    z = np.array([[0.2, -0.4]])
    np.testing.assert_array_equal(a.transpose().evaluate(y, z), np.swapaxes(a.evaluate(y, z), -1, -2))
    assert not np.allclose(a.evaluate(y, z), a.transpose().evaluate(y, z))


def test_unknown_name():
    with pytest.raises(KeyError):
        make_coefficient("nope")


@given(st.floats(-50, 50, allow_nan=False))
def test_wrap_range(x):
    w = wrap(x)
    assert -0.5 <= w < 0.5
    assert abs((x - w) - round(x - w)) < 1e-9


def test_coupling_power_law():
    c = ScaleCoupling((0.125, 0.0625, 0.03125), gamma=2.0)
    assert c.delta(0.125) == 0.125 ** 2
    assert c.tau(0.125) == 0.125
    assert c.ratio_decreasing()
    c2 = ScaleCoupling((0.125, 0.0625), gamma=1.5)
    assert c2.tau(0.0625) == pytest.approx(0.0625 ** 0.5)


def test_coupling_rejects_gamma_below_one():
    with pytest.raises(ValueError):
        ScaleCoupling((0.1,), gamma=0.5)


def test_coupling_table():
    c = ScaleCoupling((0.2, 0.1), law="table", deltas=(0.02, 0.004))
    assert c.table[1] == (0.1, 0.004, 0.04, 0.1)
    assert c.ratio_decreasing()
