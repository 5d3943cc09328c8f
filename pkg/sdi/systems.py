# sdi/systems.py

import logging
import math
from functools import lru_cache
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from core.config import COLLISION_RADIUS, ESCAPE_RADIUS
from models.schemas import GuardStatus, UncertaintyBox

logger = logging.getLogger(__name__)

# Default tolerances (abs, rel)
SMOOTH_TOLERANCES = (1e-10, 1e-9)
THREE_BODY_TOLERANCES = (1e-10, 1e-8)

GYRE_AMPLITUDE = 0.1
GYRE_FREQUENCY = 2.0 * math.pi / 10.0


class SystemModel:
    """
    Dynamical system z' = g(t, p, z) with uncertain parameters p.
    All methods work on stacked rows: z has shape (..., n), p has shape (..., n_params).
    """
    name: str = "system"
    n: int = 1
    n_params: int = 1
    state_names: Tuple[str, ...] = ("x",)
    param_names: Tuple[str, ...] = ("p",)
    default_box: Tuple[Tuple[float, float], ...] = ((-1.0, 1.0),)
    default_tolerances: Tuple[float, float] = SMOOTH_TOLERANCES
    time_unit: float = 1.0 # integration-variable span of one configured time unit

    def rhs(self, t: float, p, z) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, t: float, p, z) -> np.ndarray:
        raise NotImplementedError

    def guard(self, p, z) -> np.ndarray:
        """Per-row GuardStatus codes; unbounded systems never trigger."""
        z = np.asarray(z)
        return np.zeros(z.shape[:-1], dtype=int)

    def energy(self, p, z, t: float = 0.0) -> Optional[np.ndarray]:
        return None

    def box(self) -> UncertaintyBox:
        return UncertaintyBox.from_bounds(*self.default_box)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, n_params={self.n_params})"


def _param(p, k: int) -> np.ndarray:
    return np.asarray(p, dtype=float)[..., k]


class PendulumSystem(SystemModel):
    """Parametrically forced pendulum: x'' = (a cos 5t - 1) sin x."""
    name = "pendulum"
    n = 2
    n_params = 1
    state_names = ("x", "vx")
    param_names = ("a",)
    default_box = ((2.25, 2.75),)

    def rhs(self, t, p, z):
        z = np.asarray(z, dtype=float)
        a = _param(p, 0)
        x, vx = z[..., 0], z[..., 1]
        acc = (a * math.cos(5.0 * t) - 1.0) * np.sin(x)
        return np.stack(np.broadcast_arrays(vx, acc), axis=-1)

    def jacobian(self, t, p, z):
        z = np.asarray(z, dtype=float)
        a = _param(p, 0)
        x = z[..., 0]
        jac = np.zeros(np.broadcast_shapes(z.shape[:-1], np.shape(a)) + (2, 2))
        jac[..., 0, 1] = 1.0
        jac[..., 1, 0] = (a * math.cos(5.0 * t) - 1.0) * np.cos(x)
        return jac


class DoubleGyreSystem(SystemModel):
    """Time-periodic double gyre on [0, 2] x [0, 1] with uncertain perturbation amplitude eta."""
    name = "double_gyre"
    n = 2
    n_params = 1
    state_names = ("x", "y")
    param_names = ("eta",)
    default_box = ((0.09, 0.11),)

    @staticmethod
    def _forcing(t, eta):
        s = eta * math.sin(GYRE_FREQUENCY * t)
        return s, 1.0 - 2.0 * s # a(t), b(t)

    def rhs(self, t, p, z):
        z = np.asarray(z, dtype=float)
        a, b = self._forcing(t, _param(p, 0))
        x, y = z[..., 0], z[..., 1]
        f = a * x**2 + b * x
        df = 2.0 * a * x + b
        A = GYRE_AMPLITUDE
        vx = -math.pi * A * np.sin(math.pi * f) * np.cos(math.pi * y)
        vy = math.pi * A * np.cos(math.pi * f) * np.sin(math.pi * y) * df
        return np.stack(np.broadcast_arrays(vx, vy), axis=-1)

    def jacobian(self, t, p, z):
        z = np.asarray(z, dtype=float)
        a, b = self._forcing(t, _param(p, 0))
        x, y = z[..., 0], z[..., 1]
        f = a * x**2 + b * x
        df = 2.0 * a * x + b
        A = GYRE_AMPLITUDE
        pi = math.pi
        sf, cf = np.sin(pi * f), np.cos(pi * f)
        sy, cy = np.sin(pi * y), np.cos(pi * y)
        jac = np.empty(np.broadcast_shapes(x.shape, np.shape(a)) + (2, 2))
        jac[..., 0, 0] = -pi**2 * A * cf * df * cy
        jac[..., 0, 1] = pi**2 * A * sf * sy
        jac[..., 1, 0] = pi * A * sy * (-pi * sf * df**2 + 2.0 * a * cf)
        jac[..., 1, 1] = pi**2 * A * cf * cy * df
        return jac


# --- restricted three-body problem ---------------------------------------------

def _distances(mu, x, y):
    r1 = np.sqrt((x + mu) ** 2 + y**2)
    r2 = np.sqrt((x - 1.0 + mu) ** 2 + y**2)
    return r1, r2


def effective_potential(mu, x, y):
    """J = (x^2 + y^2)/2 + (1 - mu)/r1 + mu/r2 + mu(1 - mu)/2."""
    r1, r2 = _distances(mu, x, y)
    return 0.5 * (x**2 + y**2) + (1.0 - mu) / r1 + mu / r2 + 0.5 * mu * (1.0 - mu)


def potential_gradient(mu, x, y):
    r1, r2 = _distances(mu, x, y)
    r1_3, r2_3 = r1**3, r2**3
    jx = x - (1.0 - mu) * (x + mu) / r1_3 - mu * (x - 1.0 + mu) / r2_3
    jy = y - (1.0 - mu) * y / r1_3 - mu * y / r2_3
    return jx, jy


def potential_hessian(mu, x, y):
    r1, r2 = _distances(mu, x, y)
    r1_3, r2_3 = r1**3, r2**3
    r1_5, r2_5 = r1**5, r2**5
    dx1, dx2 = x + mu, x - 1.0 + mu
    base = 1.0 - (1.0 - mu) / r1_3 - mu / r2_3
    jxx = base + 3.0 * (1.0 - mu) * dx1**2 / r1_5 + 3.0 * mu * dx2**2 / r2_5
    jyy = base + 3.0 * (1.0 - mu) * y**2 / r1_5 + 3.0 * mu * y**2 / r2_5
    jxy = 3.0 * (1.0 - mu) * dx1 * y / r1_5 + 3.0 * mu * dx2 * y / r2_5
    return jxx, jyy, jxy


def l1_series(mu: float) -> float:
    """Series approximation of the L1 abscissa, used to fix the reference energy level."""
    a = mu / (1.0 - mu)
    b = (a / 3.0) ** (1.0 / 3.0)
    gamma = b - b**2 / 3.0 - b**3 / 9.0 - 23.0 * b**4 / 81.0
    return 1.0 - mu - gamma


@lru_cache(maxsize=64)
def l1_point(mu: float, xtol: float = 1e-14) -> float:
    """L1 abscissa refined by root finding on dJ/dx along y = 0 between the primaries."""
    gap = 1e-6
    return brentq(lambda x: potential_gradient(mu, x, 0.0)[0], -mu + gap, 1.0 - mu - gap, xtol=xtol)


def l1_energy(mu: float) -> float:
    """E(L1) at rest, with L1 from the series."""
    return -float(effective_potential(mu, l1_series(mu), 0.0))


def three_body_guard(mu, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    x, y = z[..., 0], z[..., 1]
    r1, r2 = _distances(mu, x, y)
    codes = np.zeros(np.broadcast_shapes(x.shape, np.shape(mu)), dtype=int)
    codes[np.hypot(x, y) > ESCAPE_RADIUS] = GuardStatus.ESCAPE
    codes[(r1 < COLLISION_RADIUS) | (r2 < COLLISION_RADIUS)] = GuardStatus.COLLISION
    codes[~np.all(np.isfinite(z), axis=-1)] = GuardStatus.FAILED
    return codes


class CR3BPSystem(SystemModel):
    """Planar circular restricted three-body problem in the rotating frame, p = (mu,)."""
    name = "cr3bp"
    n = 4
    n_params = 1
    state_names = ("x", "y", "vx", "vy")
    param_names = ("mu",)
    default_box = ((0.1 - 1e-7, 0.1 + 1e-7),)
    default_tolerances = THREE_BODY_TOLERANCES

    def _mu(self, p):
        return _param(p, 0)

    def _scale(self, t, p):
        return 1.0

    def rhs(self, t, p, z):
        z = np.asarray(z, dtype=float)
        mu = self._mu(p)
        x, y, vx, vy = (z[..., k] for k in range(4))
        jx, jy = potential_gradient(mu, x, y)
        scale = self._scale(t, p)
        ax = 2.0 * vy + jx / scale
        ay = -2.0 * vx + jy / scale
        return np.stack(np.broadcast_arrays(vx, vy, ax, ay), axis=-1)

    def jacobian(self, t, p, z):
        z = np.asarray(z, dtype=float)
        mu = self._mu(p)
        x, y = z[..., 0], z[..., 1]
        jxx, jyy, jxy = potential_hessian(mu, x, y)
        scale = self._scale(t, p)
        jac = np.zeros(np.broadcast_shapes(x.shape, np.shape(mu)) + (4, 4))
        jac[..., 0, 2] = 1.0
        jac[..., 1, 3] = 1.0
        jac[..., 2, 0] = jxx / scale
        jac[..., 2, 1] = jxy / scale
        jac[..., 3, 0] = jxy / scale
        jac[..., 3, 1] = jyy / scale
        jac[..., 2, 3] = 2.0
        jac[..., 3, 2] = -2.0
        return jac

    def guard(self, p, z):
        return three_body_guard(self._mu(p), z)

    def energy(self, p, z, t=0.0):
        z = np.asarray(z, dtype=float)
        mu = self._mu(p)
        kinetic = 0.5 * (z[..., 2] ** 2 + z[..., 3] ** 2)
        return kinetic - effective_potential(mu, z[..., 0], z[..., 1]) / self._scale(t, p)

    def vy_from_energy(self, x: float, vx: float, energy_level: float, p) -> Tuple[float, GuardStatus]:
        """Negative-branch v_y on y = 0 reaching the given energy level at t = 0."""
        mu = float(self._mu(p))
        potential = float(effective_potential(mu, x, 0.0)) / float(self._scale(0.0, p))
        radicand = 2.0 * (energy_level + potential) - vx**2
        if not np.isfinite(radicand) or radicand < 0.0:
            return math.nan, GuardStatus.FORBIDDEN_REGION
        return -math.sqrt(radicand), GuardStatus.OK

    def reference_energy(self, p, offset: float) -> float:
        return l1_energy(float(self._mu(p))) + offset


def cr3bp_vy_from_energy(x: float, vx: float, energy_level: float, mu: float) -> Tuple[float, GuardStatus]:
    return CR3BPSystem().vy_from_energy(x, vx, energy_level, (mu,))


class ER3BPSystem(CR3BPSystem):
    """
    Planar elliptic restricted three-body problem in pulsating coordinates, p = (e, mu).
    The independent variable is the true anomaly; one configured time unit is one revolution.
    """
    name = "er3bp"
    n_params = 2
    param_names = ("e", "mu")
    default_box = ((0.039, 0.041), (0.099, 0.101))
    time_unit = 2.0 * math.pi

    def _mu(self, p):
        return _param(p, 1)

    def _scale(self, t, p):
        return 1.0 + _param(p, 0) * math.cos(t)


class ZeroSystem(SystemModel):
    """z' = 0."""
    name = "zero"
    n = 2
    n_params = 1
    state_names = ("x", "y")

    def rhs(self, t, p, z):
        z = np.asarray(z, dtype=float)
        return np.zeros(np.broadcast_shapes(z.shape[:-1], np.shape(_param(p, 0))) + (self.n,))

    def jacobian(self, t, p, z):
        z = np.asarray(z, dtype=float)
        return np.zeros(np.broadcast_shapes(z.shape[:-1], np.shape(_param(p, 0))) + (self.n, self.n))


class DriftSystem(SystemModel):
    """z' = p, one state per uncertain parameter."""
    name = "drift"

    def __init__(self, n_params: int = 1):
        self.n = n_params
        self.n_params = n_params
        self.state_names = tuple(f"z{k}" for k in range(n_params))
        self.param_names = tuple(f"p{k}" for k in range(n_params))
        self.default_box = ((-1.0, 1.0),) * n_params

    def rhs(self, t, p, z):
        z = np.asarray(z, dtype=float)
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(p, np.broadcast_shapes(z.shape, p.shape)).copy()

    def jacobian(self, t, p, z):
        z = np.asarray(z, dtype=float)
        return np.zeros(z.shape[:-1] + (self.n, self.n))


class LinearSystem(SystemModel):
    """z' = A z with a parameter the dynamics ignore."""
    name = "linear"

    def __init__(self, matrix, default_box=((-1.0, 1.0),)):
        self.matrix = np.asarray(matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError(f"LinearSystem needs a square matrix, got shape {self.matrix.shape}")
        self.n = self.matrix.shape[0]
        self.state_names = tuple(f"z{k}" for k in range(self.n))
        self.default_box = tuple(default_box)
        self.n_params = len(self.default_box)
        self.param_names = tuple(f"p{k}" for k in range(self.n_params))

    def rhs(self, t, p, z):
        z = np.asarray(z, dtype=float)
        return z @ self.matrix.T

    def jacobian(self, t, p, z):
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(self.matrix, z.shape[:-1] + (self.n, self.n)).copy()


SYSTEMS: Dict[str, SystemModel] = {
    "pendulum": PendulumSystem(),
    "double_gyre": DoubleGyreSystem(),
    "cr3bp": CR3BPSystem(),
    "er3bp": ER3BPSystem(),
    "zero": ZeroSystem(),
    "drift": DriftSystem(),
}


def get_system(name: str) -> SystemModel:
    try:
        return SYSTEMS[name]
    except KeyError:
        raise ValueError(f"Unsupported system: {name} (available: {', '.join(sorted(SYSTEMS))})")


def finite_difference_jacobian(system: SystemModel, t: float, p, z, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a single state, for consistency checks."""
    z = np.asarray(z, dtype=float)
    jac = np.empty((system.n, system.n))
    for k in range(system.n):
        dz = np.zeros(system.n)
        dz[k] = step
        jac[:, k] = (system.rhs(t, p, z + dz) - system.rhs(t, p, z - dz)) / (2.0 * step)
    return jac
