"""Tests for coefficient sets, projection and moments."""

import numpy as np
import pytest

from models.schemas import UncertaintyBox
from sdi.basis import build_basis, gauss_rule, map_to_box
from sdi.pce import (
    CoefficientSet, evaluate, evaluate_xi, galerkin_rhs, moments, project_initial,
    project_samples, stochastic_moments,
)
from sdi.systems import CR3BPSystem, DriftSystem


class TestProjection:
    """Non-intrusive projection onto the basis."""

    def test_linear_in_parameter(self, basis4, rule9, pendulum_box):
        """z = p projects onto c_0 = centre and c_1 = half width."""
        states = map_to_box(rule9.nodes, pendulum_box)
        cs = project_samples(states, basis4, rule9, pendulum_box)
        np.testing.assert_allclose(cs.coeffs[:, 0], [2.5, 0.25, 0.0, 0.0, 0.0], atol=1e-13)

    def test_quadratic_in_parameter(self, basis4, rule9, pendulum_box):
        """p^2 = 6.25 + 1.25 xi + 0.0625 xi^2 and xi^2 = Psi_2 + 1/4."""
        cs = project_initial(lambda p: np.array([p[0], p[0] ** 2]), basis4, rule9, pendulum_box)
        np.testing.assert_allclose(cs.coeffs[:3, 1], [6.265625, 1.25, 0.0625], atol=1e-12)
        np.testing.assert_allclose(cs.coeffs[3:, 1], 0.0, atol=1e-12)

    def test_deterministic_initial_state(self, basis4, rule9, pendulum_box):
        cs = project_initial([0.889447, -0.19598], basis4, rule9, pendulum_box)
        np.testing.assert_array_equal(cs.mean, [0.889447, -0.19598])
        np.testing.assert_array_equal(cs.coeffs[1:], 0.0)

    def test_non_finite_states_give_invalid_set(self, basis4, rule9, pendulum_box):
        states = np.ones((9, 2))
        states[4, 1] = np.nan
        cs = project_samples(states, basis4, rule9, pendulum_box)
        assert not cs.valid
        assert np.all(np.isnan(moments(cs).variance))

    def test_wrong_node_count(self, basis4, rule9, pendulum_box):
        with pytest.raises(ValueError):
            project_samples(np.ones((8, 2)), basis4, rule9, pendulum_box)


class TestCoefficientSet:
    """Shape checks and immutability."""

    def test_row_count_checked(self, basis4, pendulum_box):
        with pytest.raises(ValueError):
            CoefficientSet(np.zeros((4, 2)), basis4, pendulum_box)

    def test_valid_set_must_be_finite(self, basis4, pendulum_box):
        coeffs = np.zeros((5, 2))
        coeffs[0, 0] = np.inf
        with pytest.raises(ValueError):
            CoefficientSet(coeffs, basis4, pendulum_box)

    def test_coefficients_read_only(self, basis4, pendulum_box):
        cs = CoefficientSet(np.zeros((5, 2)), basis4, pendulum_box)
        with pytest.raises(ValueError):
            cs.coeffs[0, 0] = 1.0

    def test_with_coeffs_keeps_basis(self, basis4, pendulum_box):
        cs = CoefficientSet(np.zeros((5, 2)), basis4, pendulum_box, t=1.0)
        other = cs.with_coeffs(np.ones((5, 2)), t=2.0)
        assert other.basis is basis4
        assert other.t == 2.0


class TestEvaluation:
    """Evaluating the expansion."""

    def test_reproduces_linear_function(self, basis4, rule9, pendulum_box):
        cs = project_samples(map_to_box(rule9.nodes, pendulum_box), basis4, rule9, pendulum_box)
        assert evaluate(cs, [2.6])[0] == pytest.approx(2.6)

    def test_batch_evaluation(self, basis4, rule9, pendulum_box):
        cs = project_samples(map_to_box(rule9.nodes, pendulum_box), basis4, rule9, pendulum_box)
        values = evaluate_xi(cs, np.array([[-1.0], [0.0], [1.0]]))
        np.testing.assert_allclose(values[:, 0], [2.25, 2.5, 2.75])

    def test_outside_box(self, basis4, rule9, pendulum_box):
        cs = project_initial([1.0], basis4, rule9, pendulum_box)
        with pytest.raises(ValueError):
            evaluate(cs, [3.0])


class TestMoments:
    """Mean, covariance and skewness from coefficients."""

    def test_linear_variance(self, basis4, rule9, pendulum_box):
        """Var = s_1 c_1^2 = 0.25 * 0.0625."""
        cs = project_samples(map_to_box(rule9.nodes, pendulum_box), basis4, rule9, pendulum_box)
        summary = moments(cs)
        assert summary.mean[0] == pytest.approx(2.5)
        assert summary.variance[0] == pytest.approx(0.015625)
        assert summary.skewness[0] == pytest.approx(0.0, abs=1e-10)

    def test_covariance_of_correlated_states(self, basis4, rule9, pendulum_box):
        xi = rule9.nodes[:, 0]
        cs = project_samples(np.stack([xi, -2.0 * xi], axis=1), basis4, rule9, pendulum_box)
        np.testing.assert_allclose(moments(cs).covariance, [[0.25, -0.5], [-0.5, 1.0]], atol=1e-13)

    def test_constant_has_zero_skewness(self, basis4, rule9, pendulum_box):
        cs = project_initial([3.0], basis4, rule9, pendulum_box)
        summary = moments(cs)
        assert summary.variance[0] == 0.0
        assert summary.skewness[0] == 0.0

    def test_stochastic_moments_of_square(self, basis4, rule9, pendulum_box):
        """xi^2 has mean 1/4, variance 1/16 and skewness 1 under the semicircle measure."""
        mean, var, skew = stochastic_moments(rule9.nodes[:, 0] ** 2, basis4, rule9, pendulum_box)
        assert mean == pytest.approx(0.25)
        assert var == pytest.approx(0.0625)
        assert skew == pytest.approx(1.0)


class TestGalerkinRhs:
    """Intrusive coefficient derivative."""

    def test_drift_derivative_is_parameter_expansion(self, basis4, rule9):
        box = UncertaintyBox.from_bounds((1.0, 3.0))
        cs = project_initial([0.5], basis4, rule9, box)
        deriv = galerkin_rhs(0.0, cs, DriftSystem(), rule9)
        np.testing.assert_allclose(deriv.coeffs[:, 0], [2.0, 1.0, 0.0, 0.0, 0.0], atol=1e-13)

    def test_guard_invalidates(self, basis4, rule9):
        box = UncertaintyBox.from_bounds((0.1 - 1e-7, 0.1 + 1e-7))
        cs = project_initial([-0.1, 0.0, 0.0, 0.0], basis4, rule9, box)
        assert not galerkin_rhs(0.0, cs, CR3BPSystem(), rule9).valid
