"""Tests for FTLE, SFTLE1, SFTLE2, the pseudo-diffusion exponent and E_eps."""

import math

import numpy as np
import pytest

from core.errors import ConfigError
from models.schemas import GuardStatus, IndicatorConfig, UncertaintyBox
from sdi.basis import build_basis, gauss_rule
from sdi.indicators import (
    compute_indicators, divergence_order, expectation_within, ftle, ic_box, ic_uncertainty_alpha,
    pseudo_diffusion, pseudo_diffusion_history, sftle1, sftle2, sftle2_intrusive,
    stretching_exponent, sym_eig, tracer_gradient, tracer_offsets,
)
from sdi.pce import CoefficientSet, project_initial
from sdi.systems import CR3BPSystem, DriftSystem, LinearSystem, SystemModel, ZeroSystem

SADDLE = np.diag([1.0, -1.0])
ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])
UNIT_BOX = UncertaintyBox.from_bounds((-1.0, 1.0))
L4_BOX = UncertaintyBox.from_bounds((0.038, 0.040))
NEAR_PRIMARY = [-0.039 + 0.01, 0.0, 0.0, 0.0]


class TracerTrap(SystemModel):
    """z' = 1; trajectories with p = 0 collide once z passes 0.5."""
    name = "trap"
    n = 1
    n_params = 1
    state_names = ("z",)

    def rhs(self, t, p, z):
        return np.ones_like(np.asarray(z, dtype=float))

    def jacobian(self, t, p, z):
        z = np.asarray(z, dtype=float)
        return np.zeros(z.shape[:-1] + (1, 1))

    def guard(self, p, z):
        p = np.asarray(p, dtype=float)
        z = np.asarray(z, dtype=float)
        hit = (np.abs(p[..., 0]) < 1e-3) & (z[..., 0] > 0.5)
        return np.where(hit, int(GuardStatus.COLLISION), int(GuardStatus.OK))


class TestLinearAlgebra:
    """Symmetric eigenvalues and finite-difference gradients."""

    def test_sym_eig_descending(self):
        np.testing.assert_allclose(sym_eig([[2.0, 1.0], [1.0, 2.0]]), [3.0, 1.0])

    def test_sym_eig_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            sym_eig([[1.0, 2.0], [0.0, 1.0]])

    def test_sym_eig_rejects_non_square(self):
        with pytest.raises(ValueError):
            sym_eig(np.ones((2, 3)))

    def test_tracer_offsets_layout(self):
        np.testing.assert_array_equal(tracer_offsets(2, 0.5), [[0.5, 0.0], [-0.5, 0.0], [0.0, 0.5], [0.0, -0.5]])

    def test_gradient_of_linear_map(self):
        A = np.array([[2.0, 1.0], [0.5, -3.0]])
        final = tracer_offsets(2, 1e-3) @ A.T
        np.testing.assert_allclose(tracer_gradient(final, 1e-3), A)

    def test_identity_gradient_has_zero_exponent(self):
        assert stretching_exponent(np.eye(3), 5.0) == pytest.approx(0.0)

    def test_floor_caps_log_of_zero(self):
        assert stretching_exponent(np.zeros((2, 2)), 10.0, floor=1e-300) == pytest.approx(0.5 * math.log(1e-300) / 10.0)


class TestFtle:
    """Deterministic finite-time Lyapunov exponent."""

    def test_saddle(self):
        value = ftle(LinearSystem(SADDLE), [0.3, 0.2], [0.0], IndicatorConfig(t_f=10.0))
        assert value == pytest.approx(1.0, abs=1e-6)

    def test_rotation(self):
        value = ftle(LinearSystem(ROTATION), [0.3, 0.2], [0.0], IndicatorConfig(t_f=10.0))
        assert value == pytest.approx(0.0, abs=1e-6)

    def test_guard_hit_gives_nan(self):
        mu = 0.1
        value = ftle(CR3BPSystem(), [-mu + 0.01, 0.0, 0.0, 0.0], [mu], IndicatorConfig(t_f=1.0))
        assert math.isnan(value)

    def test_parameter_count_checked(self):
        with pytest.raises(ValueError):
            ftle(LinearSystem(SADDLE), [0.3, 0.2], [0.0, 1.0], IndicatorConfig(t_f=10.0))

    def test_ensemble_indicators_need_a_box(self):
        with pytest.raises(ValueError):
            compute_indicators(LinearSystem(SADDLE), [0.3, 0.2], None, IndicatorConfig(t_f=10.0), ("alpha",), p_nominal=[0.0])


class TestStochasticFtle:
    """SFTLE1 moments and SFTLE2 coefficient exponents."""

    def test_sftle1_of_parameter_free_saddle(self):
        mean, var, _ = sftle1(LinearSystem(SADDLE), [0.3, 0.2], UNIT_BOX, IndicatorConfig(t_f=5.0))
        assert mean == pytest.approx(1.0, abs=1e-6)
        assert var < 1e-10

    def test_sftle2_of_parameter_free_saddle(self):
        """Only the mean coefficient stretches; the others carry no sensitivity."""
        values = sftle2(LinearSystem(SADDLE), [0.3, 0.2], UNIT_BOX, IndicatorConfig(t_f=5.0))
        assert len(values) == 5
        assert values[0] == pytest.approx(1.0, abs=1e-6)
        assert all(v < 0 for v in values[1:])
        assert divergence_order(values) == 0

    def test_intrusive_sftle2_agrees_on_mean_term(self):
        values = sftle2_intrusive(LinearSystem(SADDLE), [0.3, 0.2], UNIT_BOX, IndicatorConfig(t_f=5.0))
        assert values[0] == pytest.approx(1.0, abs=1e-6)
        assert all(v < 0 for v in values[1:])

    def test_divergence_order(self):
        assert divergence_order([1.0, -1.0, 0.5, -2.0]) == 2
        assert divergence_order([-1.0, -0.5]) == -1


class TestPseudoDiffusion:
    """Pseudo-diffusion exponent from the ensemble covariance."""

    def test_analytic_drift(self):
        """z = p t with p on the semicircle: sqrt(var) = t / 2, so alpha = log(6) / log(10)."""
        result = compute_indicators(DriftSystem(), [0.0], UNIT_BOX, IndicatorConfig(t_f=10.0), ("alpha",))
        assert result.alpha_tilde == pytest.approx(math.log(6.0) / math.log(10.0), abs=1e-8)
        assert result.alpha_tilde_components[0] == pytest.approx(result.alpha_tilde, abs=1e-12)
        assert result.status == GuardStatus.OK

    def test_eigenvalue_sum_variant(self):
        config = IndicatorConfig(t_f=10.0, alpha_variant="eig_sum")
        result = compute_indicators(DriftSystem(), [0.0], UNIT_BOX, config, ("alpha",))
        assert result.alpha_tilde == pytest.approx(math.log(26.0) / math.log(10.0), abs=1e-8)

    def test_zero_dynamics(self):
        result = compute_indicators(ZeroSystem(), [0.4, -0.2], UNIT_BOX, IndicatorConfig(t_f=10.0), ("alpha", "expectation"))
        assert result.alpha_tilde == 0.0
        assert result.expectation == 1.0

    def test_horizon_too_short(self):
        with pytest.raises(ValueError):
            compute_indicators(DriftSystem(), [0.0], UNIT_BOX, IndicatorConfig(t_f=1.0), ("alpha",))

    def test_collision_saturates(self):
        result = compute_indicators(CR3BPSystem(), NEAR_PRIMARY, L4_BOX, IndicatorConfig(t_f=2.0, degree=3), ("alpha",))
        assert result.status == GuardStatus.COLLISION
        assert result.alpha_tilde == 1.0
        assert result.alpha_tilde_components == [1.0] * 4

    def test_tracer_collision_leaves_alpha_alone(self):
        """Only the nominal tracers (p = 0, not a rule node) collide; the ensemble and its status stay ok."""
        config = IndicatorConfig(t_f=2.0, n_per_dim=6)
        result = compute_indicators(TracerTrap(), [0.0], UNIT_BOX, config, ("ftle", "alpha"))
        assert math.isnan(result.ftle)
        assert result.status == GuardStatus.OK
        assert result.alpha_tilde == pytest.approx(0.0, abs=1e-12)
        assert (result.status == GuardStatus.COLLISION) == (result.alpha_tilde == 1.0)

    def test_invalid_set_gives_nan(self, basis4):
        cs = CoefficientSet(np.full((5, 2), np.nan), basis4, UNIT_BOX, valid=False)
        alpha, components = pseudo_diffusion(cs, 10.0, GuardStatus.ESCAPE)
        assert math.isnan(alpha)
        assert np.all(np.isnan(components))

    def test_history(self):
        times = [2.0, 5.0, 10.0]
        alphas = pseudo_diffusion_history(DriftSystem(), [0.0], UNIT_BOX, times, IndicatorConfig(t_f=10.0))
        expected = [math.log(t / 2.0 + 1.0) / math.log(t) for t in times]
        np.testing.assert_allclose(alphas, expected, atol=1e-8)

    def test_history_needs_ascending_times(self):
        with pytest.raises(ValueError):
            pseudo_diffusion_history(DriftSystem(), [0.0], UNIT_BOX, [5.0, 2.0], IndicatorConfig(t_f=10.0))

    def test_history_keeps_collided_rows_frozen(self):
        alphas = pseudo_diffusion_history(CR3BPSystem(), NEAR_PRIMARY, L4_BOX, [2.0, 3.0], IndicatorConfig(t_f=3.0, degree=3))
        np.testing.assert_array_equal(alphas, [1.0, 1.0])


class TestInitialConditionUncertainty:
    """Uncertainty placed on the initial state instead of the parameters."""

    def test_box_centered_on_state(self):
        box = ic_box([1.0, -2.0], 0.5)
        np.testing.assert_allclose(box.lower, [0.75, -2.25])
        np.testing.assert_allclose(box.upper, [1.25, -1.75])

    def test_covariance_proportional_to_cauchy_green(self):
        """First-order expansion: covariance eigenvalues = s_1 (edge/2)^2 times the CG eigenvalues."""
        edge, t_f = 1e-5, 2.0
        config = IndicatorConfig(t_f=t_f, degree=1, n_per_dim=3)
        _, eigenvalues = ic_uncertainty_alpha(LinearSystem(SADDLE), [0.3, 0.2], [0.0], edge, config)
        factor = 0.25 * (edge / 2.0) ** 2
        np.testing.assert_allclose(eigenvalues, factor * np.exp([2.0 * t_f, -2.0 * t_f]), rtol=1e-6)

    def test_sftle_rejected(self):
        config = IndicatorConfig(t_f=5.0, ic_edge=1e-3)
        with pytest.raises(ConfigError):
            compute_indicators(LinearSystem(SADDLE), [0.3, 0.2], UNIT_BOX, config, ("sftle1",))


class TestExpectationWithin:
    """Fraction of parameter draws staying within epsilon of the mean."""

    def test_tight_ensemble(self, basis4, rule9):
        cs = project_initial([1.0, 2.0], basis4, rule9, UNIT_BOX)
        assert expectation_within(cs, 0.1, 100, seed=3) == 1.0

    def test_wide_ensemble(self, basis4):
        coeffs = np.zeros((5, 1))
        coeffs[1, 0] = 10.0
        cs = CoefficientSet(coeffs, basis4, UNIT_BOX)
        value = expectation_within(cs, 0.1, 100, seed=3)
        assert 0.0 <= value <= 0.1

    def test_seeded(self, basis4):
        coeffs = np.zeros((5, 1))
        coeffs[1, 0] = 1.0
        cs = CoefficientSet(coeffs, basis4, UNIT_BOX)
        assert expectation_within(cs, 0.5, 200, seed=11) == expectation_within(cs, 0.5, 200, seed=11)

    def test_invalid_set(self, basis4):
        cs = CoefficientSet(np.full((5, 1), np.nan), basis4, UNIT_BOX, valid=False)
        assert math.isnan(expectation_within(cs, 0.1, 100, seed=0))

    def test_monotone_in_epsilon(self, basis4):
        coeffs = np.zeros((5, 2))
        coeffs[1] = [1.0, 0.5]
        coeffs[2] = [0.2, -0.3]
        cs = CoefficientSet(coeffs, basis4, UNIT_BOX)
        values = [expectation_within(cs, eps, 500, seed=2) for eps in (0.01, 0.05, 0.1, 0.2, 0.5, 1.0, 5.0)]
        assert all(a <= b for a, b in zip(values, values[1:]))
        assert values[-1] == 1.0

    def test_drift_matches_uniform_probability(self):
        """z = 10 p at t = 10 stays within 1 of the mean exactly when |p| < 0.1, probability 0.1."""
        n_mc = 20_000
        config = IndicatorConfig(t_f=10.0, epsilon=1.0, n_mc=n_mc, seed=7)
        result = compute_indicators(DriftSystem(), [0.0], UNIT_BOX, config, ("expectation",))
        stderr = math.sqrt(0.1 * 0.9 / n_mc)
        assert abs(result.expectation - 0.1) <= 3.0 * stderr
