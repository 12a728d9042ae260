import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from properpo import catalog
from properpo.core_math import (InversionError, ScalarFn, check_prob_vector, finite_diff,
                                invert_monotone, logit, quad, safe_mul, sigmoid, simplex_grid,
                                softplus)


def test_simplex_grid_small_cases():
    np.testing.assert_array_equal(simplex_grid(2, 2), [[0, 1], [0.5, 0.5], [1, 0]])
    assert {tuple(r) for r in simplex_grid(3, 1)} == {(1, 0, 0), (0, 1, 0), (0, 0, 1)}


@pytest.mark.parametrize("n,r", [(2, 5), (3, 4), (4, 6), (5, 3)])
def test_simplex_grid_count_and_validity(n, r):
    g = simplex_grid(n, r)
    assert g.shape == (math.comb(r + n - 1, n - 1), n)
    np.testing.assert_allclose(g.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(g >= 0)
    assert len({tuple(row) for row in g}) == len(g)


def test_simplex_grid_rejects_bad_arguments():
    with pytest.raises(ValueError):
        simplex_grid(0, 3)
    with pytest.raises(ValueError):
        simplex_grid(3, 0)


def test_check_prob_vector():
    np.testing.assert_array_equal(check_prob_vector([0.25, 0.75]), [0.25, 0.75])
    with pytest.raises(ValueError):
        check_prob_vector([0.5, 0.6])
    with pytest.raises(ValueError):
        check_prob_vector([-0.1, 1.1])
    with pytest.raises(ValueError):
        check_prob_vector([np.nan, 1.0])


def test_quad_examples():
    assert quad(lambda t: np.ones_like(t), 0.0, 1.0) == pytest.approx(1.0, abs=1e-10)
    assert quad(lambda t: 1.0 / t**2, 0.5, 1.0) == pytest.approx(1.0, abs=1e-10)
    # antiderivative of -log(t)/t^2 is (log t + 1)/t
    anti = lambda t: (math.log(t) + 1.0) / t
    val = quad(lambda t: -np.log(t) / t**2, 0.2, 1.0, tol=1e-8)
    assert val == pytest.approx(anti(1.0) - anti(0.2), abs=1e-8)


def test_quad_reversed_bounds_and_additivity():
    f = lambda t: np.sin(3 * t) + t**2
    whole = quad(f, 0.0, 2.0)
    assert quad(f, 2.0, 0.0) == pytest.approx(-whole, abs=1e-12)
    assert quad(f, 0.0, 0.7) + quad(f, 0.7, 2.0) == pytest.approx(whole, abs=2e-10)


def test_quad_integrable_endpoint_singularity():
    # 1/sqrt(t) on [0, 1] integrates to 2; the blow-up at 0 is handled by refinement
    assert quad(lambda t: 1.0 / np.sqrt(t), 0.0, 1.0, tol=1e-10) == pytest.approx(2.0, abs=1e-6)


def test_invert_monotone_examples():
    assert invert_monotone(lambda x: x, 0.3, (0.0, 1.0)) == pytest.approx(0.3, abs=1e-12)
    assert invert_monotone(logit, 0.0, (1e-9, 1 - 1e-9)) == pytest.approx(0.5, abs=1e-12)
    assert invert_monotone(logit, 2.0, (1e-9, 1 - 1e-9)) == pytest.approx(
        1 / (1 + math.exp(-2)), abs=1e-10)


def test_invert_monotone_decreasing_and_errors():
    assert invert_monotone(lambda x: -x**3, -0.125, (0.0, 1.0)) == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(InversionError):
        invert_monotone(lambda x: x, 2.0, (0.0, 1.0))
    with pytest.raises(InversionError):
        invert_monotone(lambda x: np.sin(6 * x), 0.1, (0.0, 2.0))


@pytest.mark.parametrize("loss_id", ["log", "binary_entropy", "square", "matsushita"])
def test_invert_monotone_roundtrips_catalog_links(loss_id):
    F = catalog.get(loss_id).link
    z = np.random.default_rng(1).uniform(-0.9, 0.9, 100)
    p = F(z)
    back = invert_monotone(F, p, (-1.0, 1.0), tol=1e-14)
    np.testing.assert_allclose(F(back), p, atol=1e-12)


def test_finite_diff_examples():
    assert finite_diff(lambda x: float(np.sum(x**2)), np.array([1.0]), h=1e-5)[0] == \
        pytest.approx(2.0, abs=1e-9)
    c = np.array([1.5, -2.0, 0.25])
    np.testing.assert_allclose(finite_diff(lambda x: float(c @ x), np.zeros(3)), c, atol=1e-9)


def test_scalar_fn_derivative_fallback_and_domain():
    f = ScalarFn(np.exp, domain=(0.0, 1.0))
    assert f.derivative(0.5) == pytest.approx(math.exp(0.5), rel=1e-8)
    np.testing.assert_array_equal(f.in_domain([-0.1, 0.5, 1.1]), [False, True, False])
    g = ScalarFn(np.sin, deriv=np.cos)
    assert g.derivative(0.3) == pytest.approx(math.cos(0.3))


def test_safe_mul_zero_times_inf():
    np.testing.assert_array_equal(safe_mul([0.0, 2.0], [np.inf, 3.0]), [0.0, 6.0])


def test_sigmoid_softplus_logit_stable():
    assert sigmoid(-800.0) == 0.0 and sigmoid(800.0) == 1.0
    assert softplus(800.0) == pytest.approx(800.0)
    assert logit(0.5) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(-15, 15))
def test_logit_inverts_sigmoid(z):
    # 1 - sigmoid(z) loses digits as z grows, so the range is kept moderate
    assert logit(sigmoid(z)) == pytest.approx(z, abs=1e-7)
