import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from robust_sysid.errors import DimensionError, InvalidParameterError
from robust_sysid.loss import (Method, RegressionData, huber_deriv, huber_value, inner_v, lasso_form_objective,
                               objective, regression_data)

values = st.floats(min_value=-100, max_value=100, allow_nan=False)
thresholds = st.floats(min_value=1e-3, max_value=10)


def test_huber_examples():
    assert huber_value(0.05, 0.1) == pytest.approx(0.00125)
    assert huber_value(1.0, 0.1) == pytest.approx(0.095)
    assert huber_value(-1.0, 0.1) == pytest.approx(0.095)
    assert huber_value(0.0, 0.1) == 0.0


def test_huber_deriv_examples():
    assert huber_deriv(0.05, 0.1) == pytest.approx(0.05)
    assert huber_deriv(3.0, 0.1) == pytest.approx(0.1)
    assert huber_deriv(-3.0, 0.1) == pytest.approx(-0.1)


def test_inner_v_examples():
    assert inner_v(0.3, 0.1) == pytest.approx(0.2)
    assert inner_v(-0.3, 0.1) == pytest.approx(-0.2)
    assert inner_v(0.05, 0.1) == 0.0


def test_array_input_keeps_shape():
    z = np.linspace(-1, 1, 12).reshape(3, 4)
    assert huber_value(z, 0.5).shape == (3, 4)
    assert huber_deriv(z, 0.5).shape == (3, 4)
    assert inner_v(z, 0.5).shape == (3, 4)


@pytest.mark.parametrize('fn', [huber_value, huber_deriv, inner_v])
@pytest.mark.parametrize('mu', [0.0, -1.0])
def test_non_positive_mu_rejected(fn, mu):
    with pytest.raises(InvalidParameterError):
        fn(1.0, mu)


@given(values, thresholds)
def test_huber_is_even(z, mu):
    assert huber_value(z, mu) == huber_value(-z, mu)


@given(values, values, thresholds)
def test_huber_is_convex(a, b, mu):
    mid = huber_value(0.5 * (a + b), mu)
    assert mid <= 0.5 * (huber_value(a, mu) + huber_value(b, mu)) + 1e-9 * (1 + abs(a) + abs(b)) * mu


@given(values, thresholds)
def test_huber_between_square_and_absolute(z, mu):
    h = huber_value(z, mu)
    assert 0.0 <= h <= 0.5 * z * z + 1e-12
    assert h <= mu * abs(z) + 1e-12


@given(values, thresholds)
def test_inner_v_is_odd(r, mu):
    assert inner_v(-r, mu) == -inner_v(r, mu)


@given(thresholds)
def test_huber_continuous_at_threshold(mu):
    quad = 0.5 * mu * mu
    assert huber_value(mu, mu) == pytest.approx(quad)
    assert huber_value(np.nextafter(mu, np.inf), mu) == pytest.approx(quad)


def test_deriv_matches_finite_differences():
    rng = np.random.default_rng(0)
    mu = 0.3
    z = rng.uniform(-2, 2, 1000)
    z = z[np.abs(np.abs(z) - mu) > 1e-4]
    h = 1e-6
    fd = (huber_value(z + h, mu) - huber_value(z - h, mu)) / (2 * h)
    np.testing.assert_allclose(huber_deriv(z, mu), fd, rtol=0, atol=1e-6)


def _random_instance(rng):
    n = int(rng.integers(1, 4))
    m = int(rng.integers(1, 12))
    T = int(rng.integers(1, 51))
    phi = rng.normal(size=(T, m))
    a = rng.normal(size=(n, m))
    y = phi @ a.T + rng.standard_t(2, size=(T, n))
    a_hat = a + 0.1 * rng.normal(size=a.shape)
    return RegressionData(phi, y), a_hat


def test_lasso_form_equivalence():
    rng = np.random.default_rng(2024)
    for k in range(100):
        data, a_hat = _random_instance(rng)
        mu = (0.01, 0.1, 1.0)[k % 3]
        r = data.y - data.phi @ a_hat.T
        v_star = inner_v(r, mu)
        huber = objective(Method.huber(mu), a_hat, data)
        lasso = lasso_form_objective(a_hat, v_star, data, mu)
        assert lasso == pytest.approx(huber, rel=1e-12, abs=1e-300)
        for _ in range(5):
            v = v_star + rng.normal(scale=0.1, size=v_star.shape)
            assert lasso_form_objective(a_hat, v, data, mu) >= lasso - 1e-12 * max(1.0, abs(lasso))


def test_objectives_on_known_residuals():
    data = RegressionData(np.ones((3, 1)), np.array([[1.0], [-2.0], [0.5]]))
    a = np.zeros((1, 1))
    assert objective(Method.ls(), a, data) == pytest.approx(5.25)
    assert objective(Method.l1(), a, data) == pytest.approx(3.5)
    assert objective(Method.huber(1.0), a, data) == pytest.approx(0.5 + 1.5 + 0.125)


def test_objective_shape_check():
    data = RegressionData(np.ones((3, 2)), np.ones((3, 1)))
    with pytest.raises(DimensionError):
        objective(Method.ls(), np.zeros((2, 2)), data)


def test_method_labels_and_parsing():
    assert Method.huber(0.1).label == 'huber(0.1)'
    assert Method.parse('huber 0.1') == Method.huber(0.1)
    assert Method.parse('huber(0.1)') == Method.huber(0.1)
    assert Method.parse('L1') == Method.l1()
    with pytest.raises(InvalidParameterError):
        Method.parse('lasso')
    with pytest.raises(InvalidParameterError):
        Method('huber', -0.1)


def test_regression_data_from_trajectory(noiseless_traj, paper_model):
    data = regression_data(noiseless_traj, paper_model.basis, 50)
    assert (data.T, data.m, data.n) == (50, 11, 3)
    np.testing.assert_array_equal(data.y, noiseless_traj.states[1:51])
    with pytest.raises(DimensionError):
        regression_data(noiseless_traj, paper_model.basis, 201)


@settings(max_examples=25)
@given(st.permutations(list(range(8))))
def test_objective_invariant_to_sample_order(order):
    rng = np.random.default_rng(1)
    data = RegressionData(rng.normal(size=(8, 3)), rng.normal(size=(8, 2)))
    a = rng.normal(size=(2, 3))
    base = objective(Method.huber(0.5), a, data)
    assume(base > 0)
    assert objective(Method.huber(0.5), a, data.permuted(order)) == pytest.approx(base, rel=1e-12)


def test_lasso_form_reduces_to_least_squares_and_l1():
    rng = np.random.default_rng(3)
    data, a_hat = _random_instance(rng)
    r = data.y - data.phi @ a_hat.T
    assert lasso_form_objective(a_hat, np.zeros_like(r), data, 0.1) == pytest.approx(
        0.5 * objective(Method.ls(), a_hat, data), rel=1e-12)
    assert lasso_form_objective(a_hat, r, data, 0.1) == pytest.approx(
        0.1 * objective(Method.l1(), a_hat, data), rel=1e-12)


@pytest.mark.parametrize('mu', [0.01, 0.1, 1.0])
def test_huber_between_scaled_l1_bounds(mu):
    rng = np.random.default_rng(17)
    for _ in range(50):
        data, a_hat = _random_instance(rng)
        huber = objective(Method.huber(mu), a_hat, data)
        scaled_l1 = mu * objective(Method.l1(), a_hat, data)
        gap = scaled_l1 - huber
        assert gap >= -1e-12 * max(1.0, scaled_l1)
        assert gap <= data.T * data.n * mu * mu / 2 + 1e-12 * max(1.0, scaled_l1)
