"""Tests for the dynamical system models."""

import math

import numpy as np
import pytest

from models.schemas import GuardStatus, IntegratorConfig
from sdi.odeint import propagate_batch
from sdi.systems import (
    CR3BPSystem, DoubleGyreSystem, ER3BPSystem, LinearSystem, PendulumSystem, SYSTEMS,
    cr3bp_vy_from_energy, effective_potential, finite_difference_jacobian, get_system,
    l1_energy, l1_point, l1_series, potential_gradient, three_body_guard,
)

JACOBIAN_CASES = [
    (PendulumSystem(), 0.3, [2.5], [0.7, -0.4]),
    (DoubleGyreSystem(), 1.7, [0.1], [0.6, 0.35]),
    (CR3BPSystem(), 0.0, [0.1], [0.5, 0.3, 0.1, -0.2]),
    (ER3BPSystem(), 0.7, [0.04, 0.1], [-0.4, 0.2, 0.3, 0.5]),
]


class TestRegistry:
    """System lookup."""

    def test_known_systems(self):
        assert {"pendulum", "double_gyre", "cr3bp", "er3bp"} <= set(SYSTEMS)
        assert get_system("pendulum").n == 2

    def test_unknown_system(self):
        with pytest.raises(ValueError, match="Unsupported system"):
            get_system("lorenz")

    def test_default_boxes(self):
        assert get_system("pendulum").box().dims[0].lo == 2.25
        assert get_system("er3bp").box().n_params == 2


class TestVectorFields:
    """Right-hand sides and Jacobians."""

    def test_pendulum_rhs(self):
        d = PendulumSystem().rhs(0.0, [2.5], [math.pi / 2, 1.0])
        np.testing.assert_allclose(d, [1.0, 1.5])

    def test_rows_are_independent(self):
        system = PendulumSystem()
        z = np.array([[0.1, 0.2], [0.3, -0.4]])
        p = np.array([[2.3], [2.7]])
        stacked = system.rhs(0.4, p, z)
        for k in range(2):
            np.testing.assert_allclose(stacked[k], system.rhs(0.4, p[k], z[k]))

    @pytest.mark.parametrize("system,t,p,z", JACOBIAN_CASES, ids=["pendulum", "double_gyre", "cr3bp", "er3bp"])
    def test_jacobian_matches_finite_differences(self, system, t, p, z):
        np.testing.assert_allclose(
            system.jacobian(t, p, np.array(z)), finite_difference_jacobian(system, t, p, z), rtol=1e-6, atol=1e-7
        )

    @pytest.mark.parametrize("t", [0.0, 0.37, 2.1])
    @pytest.mark.parametrize("a", [2.25, 2.5, 2.75])
    def test_pendulum_is_odd(self, t, a):
        system = PendulumSystem()
        z = np.array([[0.3, -1.2], [2.0, 0.4], [-0.8, 1.9]])
        np.testing.assert_allclose(system.rhs(t, [a], -z), -system.rhs(t, [a], z), atol=1e-15)

    def test_double_gyre_walls_are_invariant(self):
        gyre = DoubleGyreSystem()
        assert gyre.rhs(2.0, [0.1], [0.7, 0.0])[1] == pytest.approx(0.0, abs=1e-15)
        assert gyre.rhs(2.0, [0.1], [0.0, 0.4])[0] == pytest.approx(0.0, abs=1e-15)

    def test_er3bp_reduces_to_cr3bp_for_zero_eccentricity(self):
        z = [0.3, -0.2, 0.1, 0.4]
        np.testing.assert_allclose(ER3BPSystem().rhs(1.3, [0.0, 0.1], z), CR3BPSystem().rhs(1.3, [0.1], z))

    def test_linear_system_requires_square_matrix(self):
        with pytest.raises(ValueError):
            LinearSystem(np.ones((2, 3)))


class TestThreeBody:
    """Libration point, energy embedding and guards."""

    def test_l1_is_an_equilibrium(self):
        x = l1_point(0.1)
        assert potential_gradient(0.1, x, 0.0)[0] == pytest.approx(0.0, abs=1e-10)
        assert 0.5 < x < 0.9

    def test_reference_values(self):
        assert l1_series(0.1) == pytest.approx(0.611325, abs=2e-6)
        assert l1_energy(0.1) == pytest.approx(-1.843514, abs=2e-6)

    def test_refined_l1_stays_put(self):
        z0 = np.array([[l1_point(0.1), 0.0, 0.0, 0.0]])
        batch = propagate_batch(CR3BPSystem(), z0, [[0.1]], 0.0, 2.0, IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12))
        assert batch.status[0] == GuardStatus.OK
        assert np.abs(batch.states[0] - z0[0]).max() < 1e-8

    def test_series_close_to_root(self):
        assert l1_series(0.1) == pytest.approx(l1_point(0.1), abs=1e-2)

    def test_l1_energy_is_minus_potential(self):
        assert l1_energy(0.1) == pytest.approx(-effective_potential(0.1, l1_series(0.1), 0.0))

    def test_embedding_reaches_energy_level(self):
        system = CR3BPSystem()
        level = l1_energy(0.1) + 0.03715
        vy, status = system.vy_from_energy(-0.4, 0.3, level, [0.1])
        assert status == GuardStatus.OK
        assert vy < 0
        assert system.energy([0.1], np.array([-0.4, 0.0, 0.3, vy])) == pytest.approx(level, abs=1e-12)

    def test_er3bp_embedding_reaches_energy_level(self):
        system = ER3BPSystem()
        p = [0.04, 0.1]
        level = system.reference_energy(p, 0.03715)
        vy, status = system.vy_from_energy(-0.5, 0.1, level, p)
        assert status == GuardStatus.OK
        assert float(system.energy(p, np.array([-0.5, 0.0, 0.1, vy]), t=0.0)) == pytest.approx(level, abs=1e-12)

    def test_forbidden_initial_condition(self):
        vy, status = cr3bp_vy_from_energy(-0.5, 2.0, l1_energy(0.1) + 0.03715, 0.1)
        assert status == GuardStatus.FORBIDDEN_REGION
        assert math.isnan(vy)

    def test_guard_codes(self):
        z = np.array([
            [0.5, 0.5, 0.0, 0.0],
            [-0.1 + 5e-4, 0.0, 0.0, 0.0],
            [11.0, 0.0, 0.0, 0.0],
            [np.nan, 0.0, 0.0, 0.0],
        ])
        codes = three_body_guard(0.1, z)
        assert list(codes) == [GuardStatus.OK, GuardStatus.COLLISION, GuardStatus.ESCAPE, GuardStatus.FAILED]

    def test_energy_conserved_along_flow(self):
        system = CR3BPSystem()
        z0 = np.array([[0.4, 0.8, 0.0, 0.0]])
        batch = propagate_batch(system, z0, [[0.1]], 0.0, 1.0, IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12))
        assert batch.status[0] == GuardStatus.OK
        assert system.energy([0.1], batch.states[0]) == pytest.approx(system.energy([0.1], z0[0]), abs=1e-9)
