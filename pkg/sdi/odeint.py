# sdi/odeint.py

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from core.config import STEP_FACTOR_MAX, STEP_FACTOR_MIN, STEP_SAFETY
from models.schemas import GuardStatus, IntegratorConfig, UncertaintyBox, worst_status
from sdi.basis import PolynomialBasis, QuadratureRule, map_to_box, vandermonde
from sdi.pce import CoefficientSet, evaluate_xi, invalid_set

logger = logging.getLogger(__name__)

# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
# fifth-order minus embedded fourth-order weights
E1 = B1 - 5179.0 / 57600.0
E3 = B3 - 7571.0 / 16695.0
E4 = B4 - 393.0 / 640.0
E5 = B5 + 92097.0 / 339200.0
E6 = B6 - 187.0 / 2100.0
E7 = -1.0 / 40.0

STEP_UNDERFLOW = 1e-14 # relative to the time scale

Derivative = Callable[[float, np.ndarray], np.ndarray]
GuardFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class PropagationResult:
    final_state: np.ndarray
    status: GuardStatus
    steps_taken: int
    t_end: float


@dataclass
class BatchResult:
    """Rows integrated in lockstep. Terminal rows keep the state at detection."""
    states: np.ndarray # (rows, d)
    status: np.ndarray # (rows,) GuardStatus codes
    t_end: np.ndarray # (rows,)
    steps_taken: int
    steps_rejected: int
    times: Optional[np.ndarray] = None # (K,) accepted times, t0 included
    history: Optional[np.ndarray] = None # (K, rows, d)

    @property
    def worst(self) -> GuardStatus:
        return worst_status(self.status)


def dopri_step(fun: Derivative, t: float, z: np.ndarray, h: float, k1: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One Dormand-Prince step. Returns the fifth-order state, the error estimate and f at the new state."""
    k2 = fun(t + C2 * h, z + h * (A21 * k1))
    k3 = fun(t + C3 * h, z + h * (A31 * k1 + A32 * k2))
    k4 = fun(t + C4 * h, z + h * (A41 * k1 + A42 * k2 + A43 * k3))
    k5 = fun(t + C5 * h, z + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
    k6 = fun(t + h, z + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
    z_new = z + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
    k7 = fun(t + h, z_new)
    error = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
    return z_new, error, k7


def dopri_batch(
    fun: Derivative,
    z0,
    t0: float,
    t_f: float,
    config: IntegratorConfig = IntegratorConfig(),
    guard: Optional[GuardFn] = None,
    record: bool = False,
) -> BatchResult:
    """
    Adaptive Dormand-Prince integration of independent rows sharing one step sequence.
    fun(t, Z) and guard(Z) act on the full (rows, d) array.
    """
    if not t_f > t0:
        raise ValueError(f"Integration requires t_f > t0, got t0={t0}, t_f={t_f}")

    z = np.array(z0, dtype=float, ndmin=2)
    rows = z.shape[0]
    status = np.zeros(rows, dtype=int)
    t_end = np.full(rows, float(t0))
    status[~np.all(np.isfinite(z), axis=1)] = GuardStatus.FAILED
    if guard is not None:
        codes = np.asarray(guard(z), dtype=int)
        status = np.maximum(status, codes)
    active = status == GuardStatus.OK

    min_step = STEP_UNDERFLOW * max(1.0, abs(t0), abs(t_f))
    t = float(t0)
    h = min(config.initial_step, t_f - t0)
    accepted = rejected = 0
    times = [t] if record else None
    history = [z.copy()] if record else None

    def masked(tt, zz):
        d = np.array(fun(tt, zz), dtype=float).reshape(zz.shape)
        d[~active] = 0.0
        return d

    with np.errstate(all="ignore"):
        k1 = masked(t, z)
        while t < t_f and active.any():
            if accepted + rejected >= config.max_steps:
                logger.debug("Step limit %d reached at t=%s", config.max_steps, t)
                status[active] = GuardStatus.FAILED
                t_end[active] = t
                active[:] = False
                break

            last = t_f - (t + h) <= min_step
            if last:
                h = t_f - t
            z_new, error, k7 = dopri_step(masked, t, z, h, k1)

            scale = config.abs_tol + config.rel_tol * np.maximum(np.abs(z), np.abs(z_new))
            err_rows = np.max(np.abs(error) / scale, axis=1)
            err_rows[~active] = 0.0
            bad = ~np.isfinite(err_rows)
            err = np.inf if bad.any() else float(err_rows.max())

            if err <= 1.0:
                t = t_f if last else t + h
                z = np.where(active[:, None], z_new, z)
                t_end[active] = t
                accepted += 1
                k1 = k7
                if guard is not None:
                    codes = np.asarray(guard(z), dtype=int)
                    hit = active & (codes > GuardStatus.OK)
                    if hit.any():
                        status[hit] = codes[hit]
                        active &= ~hit
                        k1 = masked(t, z)
                if record:
                    times.append(t)
                    history.append(z.copy())
                factor = STEP_FACTOR_MAX if err == 0.0 else STEP_SAFETY * err ** -0.2
                h *= float(np.clip(factor, STEP_FACTOR_MIN, STEP_FACTOR_MAX))
            else:
                rejected += 1
                factor = STEP_FACTOR_MIN if not np.isfinite(err) else STEP_SAFETY * err ** -0.2
                h *= float(np.clip(factor, STEP_FACTOR_MIN, 1.0))
                if h < min_step:
                    failing = active & (bad | (err_rows > 1.0))
                    logger.debug("Step underflow at t=%s, %d rows failed", t, int(failing.sum()))
                    status[failing] = GuardStatus.FAILED
                    t_end[failing] = t
                    active &= ~failing
                    k1 = masked(t, z)
                    h = min(config.initial_step, t_f - t)

    return BatchResult(
        states=z,
        status=status,
        t_end=t_end,
        steps_taken=accepted,
        steps_rejected=rejected,
        times=np.array(times) if record else None,
        history=np.stack(history) if record else None,
    )


def integrate(
    rhs: Derivative,
    z0,
    t0: float,
    t_f: float,
    config: IntegratorConfig = IntegratorConfig(),
    guards: Optional[Callable[[np.ndarray], int]] = None,
) -> PropagationResult:
    """Single-trajectory propagation of z' = rhs(t, z)."""
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    fun = lambda t, Z: np.atleast_1d(rhs(t, Z[0]))[None, :]
    guard = (lambda Z: np.array([int(guards(Z[0]))])) if guards is not None else None
    batch = dopri_batch(fun, z0[None, :], t0, t_f, config, guard)
    return PropagationResult(
        final_state=batch.states[0],
        status=GuardStatus(int(batch.status[0])),
        steps_taken=batch.steps_taken,
        t_end=float(batch.t_end[0]),
    )


def propagate_batch(
    system,
    states,
    params,
    t0: float,
    t_f: float,
    config: IntegratorConfig = IntegratorConfig(),
    record: bool = False,
) -> BatchResult:
    """Rows of (state, parameter) pairs of one system, integrated together."""
    states = np.array(states, dtype=float, ndmin=2)
    params = np.array(params, dtype=float, ndmin=2)
    if params.shape[0] == 1 and states.shape[0] > 1:
        params = np.repeat(params, states.shape[0], axis=0)
    if params.shape[0] != states.shape[0]:
        raise ValueError(f"Got {states.shape[0]} states but {params.shape[0]} parameter rows")
    return dopri_batch(
        lambda t, Z: system.rhs(t, params, Z),
        states,
        t0,
        t_f,
        config,
        guard=lambda Z: system.guard(params, Z),
        record=record,
    )


def node_initial_states(z0: Union[np.ndarray, CoefficientSet], rule: QuadratureRule) -> np.ndarray:
    """Initial state at every rule node: a deterministic state is repeated, a PCE of the IC is evaluated."""
    if isinstance(z0, CoefficientSet):
        return np.atleast_2d(evaluate_xi(z0, rule.nodes))
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    return np.repeat(z0[None, :], rule.n_nodes, axis=0)


def propagate_ensemble(
    system,
    z0: Union[np.ndarray, CoefficientSet],
    box: UncertaintyBox,
    rule: QuadratureRule,
    t0: float,
    t_f: float,
    config: IntegratorConfig = IntegratorConfig(),
) -> BatchResult:
    """One trajectory per rule node p_j; rows are in node order."""
    params = map_to_box(rule.nodes, box)
    result = propagate_batch(system, node_initial_states(z0, rule), params, t0, t_f, config)
    if result.worst != GuardStatus.OK:
        logger.debug("Ensemble partial: %s", {GuardStatus(c).label: int(n) for c, n in zip(*np.unique(result.status, return_counts=True))})
    return result


class _NodeProjector:
    """Vandermonde data shared by the intrusive right-hand sides."""

    def __init__(self, basis: PolynomialBasis, rule: QuadratureRule, box: UncertaintyBox):
        self.V = vandermonde(basis, rule.nodes) # (N, M)
        self.P = self.V * rule.weights[:, None] / basis.norms[None, :] # projection weights
        self.params = map_to_box(rule.nodes, box)


def _galerkin_guard(system, projector: _NodeProjector, n_terms: int, n: int) -> GuardFn:
    def guard(Y):
        states = projector.V @ Y[0, : n_terms * n].reshape(n_terms, n)
        return np.array([int(worst_status(system.guard(projector.params, states)))])
    return guard


def propagate_galerkin(
    system,
    cs0: CoefficientSet,
    rule: QuadratureRule,
    t0: float,
    t_f: float,
    config: IntegratorConfig = IntegratorConfig(),
) -> CoefficientSet:
    """Integrates the coupled coefficient system c_k' = <g(t, p, z), Psi_k> / s_k."""
    if not cs0.valid:
        raise ValueError("Galerkin propagation needs a valid initial coefficient set")
    basis, n = cs0.basis, cs0.n_states
    proj = _NodeProjector(basis, rule, cs0.box)

    def fun(t, Y):
        c = Y[0].reshape(basis.n_terms, n)
        derivs = system.rhs(t, proj.params, proj.V @ c)
        return (proj.P.T @ derivs).reshape(1, -1)

    batch = dopri_batch(fun, cs0.coeffs.reshape(1, -1), t0, t_f, config, _galerkin_guard(system, proj, basis.n_terms, n))
    if batch.status[0] != GuardStatus.OK:
        logger.debug("Galerkin propagation stopped: %s at t=%s", GuardStatus(int(batch.status[0])).label, batch.t_end[0])
        return invalid_set(basis, cs0.box, n, t_f)
    return cs0.with_coeffs(batch.states[0].reshape(basis.n_terms, n), t=t_f)


@dataclass
class VariationalResult:
    coefficients: CoefficientSet
    sensitivities: np.ndarray # (M, n, n): d c_k / d z0
    status: GuardStatus


def propagate_variational_coeffs(
    system,
    z0: Union[np.ndarray, CoefficientSet],
    box: UncertaintyBox,
    rule: QuadratureRule,
    basis: PolynomialBasis,
    t0: float,
    t_f: float,
    config: IntegratorConfig = IntegratorConfig(),
) -> VariationalResult:
    """
    Coefficient flow coupled with the variational equations of the coefficients:
    (d c_k/d z0)' = < J(t, p, z) sum_i (d c_i/d z0) Psi_i, Psi_k > / s_k, with d c_0/d z0 = I at t0.
    """
    if isinstance(z0, CoefficientSet):
        c0 = np.array(z0.coeffs)
    else:
        z0 = np.atleast_1d(np.asarray(z0, dtype=float))
        c0 = np.zeros((basis.n_terms, z0.size))
        c0[0] = z0
    M, n = c0.shape
    d0 = np.zeros((M, n, n))
    d0[0] = np.eye(n)
    proj = _NodeProjector(basis, rule, box)
    split = M * n

    def fun(t, Y):
        c = Y[0, :split].reshape(M, n)
        dc = Y[0, split:].reshape(M, n, n)
        states = proj.V @ c
        derivs = system.rhs(t, proj.params, states)
        jac = system.jacobian(t, proj.params, states) # (N, n, n)
        stretch = np.einsum("ji,iab->jab", proj.V, dc) # node sensitivities
        ddc = np.einsum("jk,jab,jbc->kac", proj.P, jac, stretch)
        return np.concatenate([(proj.P.T @ derivs).ravel(), ddc.ravel()])[None, :]

    Y0 = np.concatenate([c0.ravel(), d0.ravel()])[None, :]
    batch = dopri_batch(fun, Y0, t0, t_f, config, _galerkin_guard(system, proj, M, n))
    status = GuardStatus(int(batch.status[0]))
    if status != GuardStatus.OK:
        return VariationalResult(invalid_set(basis, box, n, t_f), np.full((M, n, n), np.nan), status)
    Y = batch.states[0]
    return VariationalResult(
        CoefficientSet(Y[:split].reshape(M, n), basis, box, t=t_f),
        Y[split:].reshape(M, n, n),
        status,
    )
