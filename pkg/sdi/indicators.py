# sdi/indicators.py

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.config import ALPHA_MIN_HORIZON
from core.errors import ConfigError
from models.schemas import GuardStatus, IndicatorConfig, IndicatorResult, UncertaintyBox, worst_status
from sdi.basis import PolynomialBasis, QuadratureRule, build_basis, gauss_rule, map_from_box, map_to_box
from sdi.odeint import propagate_batch, propagate_variational_coeffs
from sdi.pce import CoefficientSet, evaluate_xi, moments, project_samples, stochastic_moments

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10


def sym_eig(S) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, descending."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {S.shape}")
    scale = max(1.0, float(np.abs(S).max(initial=0.0)))
    if np.abs(S - S.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError("Matrix is not symmetric")
    return np.linalg.eigvalsh(0.5 * (S + S.T))[::-1]


def integration_span(system, t0: float, t_f: float) -> Tuple[float, float]:
    """Configured times mapped to the system's integration variable."""
    return t0 * system.time_unit, t_f * system.time_unit


def tracer_offsets(n: int, dz: float) -> np.ndarray:
    """Rows +dz e_0, -dz e_0, +dz e_1, -dz e_1, ..."""
    offsets = np.zeros((2 * n, n))
    for j in range(n):
        offsets[2 * j, j] = dz
        offsets[2 * j + 1, j] = -dz
    return offsets


def tracer_gradient(final, dz: float) -> np.ndarray:
    """Central-difference flow gradient from tracer end states of shape (..., 2n, n)."""
    final = np.asarray(final, dtype=float)
    plus, minus = final[..., 0::2, :], final[..., 1::2, :]
    # column j of the gradient is (z(+e_j) - z(-e_j)) / 2dz
    return np.swapaxes(plus - minus, -1, -2) / (2.0 * dz)


def stretching_exponent(gradient, elapsed: float, floor: float = 0.0) -> np.ndarray:
    """ln sqrt(lambda_max(G^T G)) / elapsed for one gradient or a stack of them."""
    gradient = np.asarray(gradient, dtype=float)
    cauchy_green = np.swapaxes(gradient, -1, -2) @ gradient
    lam = np.linalg.eigvalsh(cauchy_green)[..., -1]
    if floor > 0:
        lam = np.maximum(lam, floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 0.5 * np.log(lam) / elapsed


def divergence_order(sftle2_values: Sequence[float]) -> int:
    """Largest term index with a positive exponent, or -1."""
    positive = [i for i, value in enumerate(sftle2_values) if value > 0]
    return positive[-1] if positive else -1


def pseudo_diffusion(cs: CoefficientSet, elapsed: float, status: GuardStatus = GuardStatus.OK, variant: str = "max_sqrt") -> Tuple[float, np.ndarray]:
    """
    Pseudo-diffusion exponent of the ensemble covariance at elapsed time t:
      max_sqrt: log(sqrt(lambda_max(C)) + 1) / log t   (default)
      eig_sum:  log(sum(lambda) + 1) / log t
    Components use the diagonal entries instead of eigenvalues. A collision saturates everything at 1.
    """
    if elapsed <= ALPHA_MIN_HORIZON:
        raise ValueError(f"Pseudo-diffusion needs elapsed time > {ALPHA_MIN_HORIZON}, got {elapsed}")
    if variant not in ("max_sqrt", "eig_sum"):
        raise ValueError(f"Unsupported pseudo-diffusion variant: {variant}")
    n = cs.n_states
    if status == GuardStatus.COLLISION:
        return 1.0, np.ones(n)
    if not cs.valid:
        return math.nan, np.full(n, math.nan)

    covariance = moments(cs).covariance
    lam = np.clip(sym_eig(covariance), 0.0, None)
    diag = np.clip(np.diag(covariance), 0.0, None)
    log_t = math.log(elapsed)
    if variant == "max_sqrt":
        alpha = math.log(math.sqrt(lam[0]) + 1.0) / log_t
        components = np.log(np.sqrt(diag) + 1.0) / log_t
    else:
        alpha = math.log(float(lam.sum()) + 1.0) / log_t
        components = np.log(diag + 1.0) / log_t
    return alpha, components


def expectation_within(cs: CoefficientSet, epsilon: float, n_mc: int, seed: int) -> float:
    """Fraction of uniform parameter draws whose expansion value lies within epsilon of the mean c_0."""
    if not cs.valid:
        return math.nan
    rng = np.random.default_rng(seed)
    box = cs.box
    samples = rng.uniform(box.lower, box.upper, size=(n_mc, box.n_params))
    xi = map_from_box(samples, box)
    spread = np.linalg.norm(evaluate_xi(cs, xi) - cs.mean, axis=1)
    return float(np.mean(spread < epsilon))


def ic_box(z0, edge: float) -> UncertaintyBox:
    """Square box of the given edge centred on the initial state."""
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    return UncertaintyBox.from_bounds(*[(z - 0.5 * edge, z + 0.5 * edge) for z in z0])


@dataclass
class _Ensemble:
    """Where the uncertainty lives: node states and parameters on the rule."""
    box: UncertaintyBox
    basis: PolynomialBasis
    rule: QuadratureRule
    states: np.ndarray # (N, n)
    params: np.ndarray # (N, n_p_system)
    nominal_params: np.ndarray


def _project_nodes(final: np.ndarray, status: np.ndarray, ens: _Ensemble, t: float) -> CoefficientSet:
    """Projection of node end states; a node stopped by a guard invalidates the set."""
    final = np.where(np.asarray(status)[:, None] > GuardStatus.OK, np.nan, final)
    return project_samples(final, ens.basis, ens.rule, ens.box, t=t)


def nominal_parameters(system, box: Optional[UncertaintyBox], p_nominal=None) -> np.ndarray:
    """Explicit parameters if given, else the centre of the box."""
    if p_nominal is None:
        if box is None:
            raise ValueError("Need either an uncertainty box or explicit parameters")
        p_nominal = box.center
    p_nominal = np.atleast_1d(np.asarray(p_nominal, dtype=float))
    if p_nominal.size != system.n_params:
        raise ConfigError(f"{system.name} takes {system.n_params} parameters, got {p_nominal.size}")
    return p_nominal


def _ensemble_setup(system, z0: np.ndarray, box: Optional[UncertaintyBox], config: IndicatorConfig, nominal: np.ndarray) -> _Ensemble:
    if config.ic_edge is None:
        if box is None:
            raise ValueError("Parameter uncertainty needs an uncertainty box")
        if box.n_params != system.n_params:
            raise ConfigError(f"{system.name} takes {system.n_params} uncertain parameters, box has {box.n_params}")
        basis = build_basis(config.degree, box.n_params)
        rule = gauss_rule(config.n_per_dim, box.n_params)
        states = np.repeat(z0[None, :], rule.n_nodes, axis=0)
        return _Ensemble(box, basis, rule, states, map_to_box(rule.nodes, box), nominal)

    # initial-condition uncertainty, parameters fixed at the nominal values
    state_box = ic_box(z0, config.ic_edge)
    basis = build_basis(config.degree, system.n)
    rule = gauss_rule(config.n_per_dim, system.n)
    params = np.repeat(nominal[None, :], rule.n_nodes, axis=0)
    return _Ensemble(state_box, basis, rule, map_to_box(rule.nodes, state_box), params, nominal)


def compute_indicators(
    system,
    z0,
    box: Optional[UncertaintyBox],
    config: IndicatorConfig,
    selection: Iterable[str] = ("ftle", "sftle1", "sftle2", "alpha", "expectation"),
    p_nominal=None,
) -> IndicatorResult:
    """
    All selected indicators for one initial condition from a single batched propagation.
    Rows: the ensemble at the rule nodes, 2n tracers around every node, 2n tracers at the nominal parameters.
    The result status is the ensemble's when it is propagated; tracer guard hits only blank their own indicators.
    """
    selection = set(selection)
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    if z0.size != system.n:
        raise ValueError(f"{system.name} has {system.n} state components, got {z0.size}")
    if config.ic_edge is not None and selection & {"sftle1", "sftle2"}:
        raise ConfigError("SFTLE indicators are undefined under initial-condition uncertainty")

    s0, s1 = integration_span(system, config.t0, config.t_f)
    elapsed = s1 - s0
    if "alpha" in selection and elapsed <= ALPHA_MIN_HORIZON:
        raise ValueError(f"Pseudo-diffusion needs elapsed time > {ALPHA_MIN_HORIZON}, got {elapsed}")

    nominal = nominal_parameters(system, box, p_nominal)
    n = system.n
    offsets = tracer_offsets(n, config.dz)
    ens = None
    if selection & {"sftle1", "sftle2", "alpha", "expectation"}:
        ens = _ensemble_setup(system, z0, box, config, nominal)

    blocks = {}
    if selection & {"alpha", "expectation"}:
        blocks["ensemble"] = (ens.states, ens.params)
    if selection & {"sftle1", "sftle2"}:
        N = ens.rule.n_nodes
        states = (ens.states[:, None, :] + offsets[None, :, :]).reshape(N * 2 * n, n)
        blocks["tracers"] = (states, np.repeat(ens.params, 2 * n, axis=0))
    if "ftle" in selection:
        blocks["nominal"] = (z0[None, :] + offsets, np.repeat(nominal[None, :], 2 * n, axis=0))
    if not blocks:
        raise ValueError("No indicator selected")

    all_states = np.concatenate([b[0] for b in blocks.values()])
    all_params = np.concatenate([b[1] for b in blocks.values()])
    batch = propagate_batch(system, all_states, all_params, s0, s1, config.integrator)
    logger.debug("Propagated %d rows in %d steps (%d rejected)", len(all_states), batch.steps_taken, batch.steps_rejected)

    finals, row_status, statuses, start = {}, {}, {}, 0
    for name, (states, _) in blocks.items():
        stop = start + len(states)
        finals[name] = batch.states[start:stop]
        row_status[name] = batch.status[start:stop]
        statuses[name] = worst_status(row_status[name])
        start = stop

    result = {"status": statuses["ensemble"] if "ensemble" in statuses else worst_status(batch.status)}

    if "nominal" in finals and statuses["nominal"] == GuardStatus.OK:
        result["ftle"] = float(stretching_exponent(tracer_gradient(finals["nominal"], config.dz), elapsed))

    if "tracers" in finals:
        tracer_finals = finals["tracers"].reshape(N, 2 * n, n)
        tracers_ok = statuses["tracers"] == GuardStatus.OK
        if "sftle1" in selection and tracers_ok:
            sigma = stretching_exponent(tracer_gradient(tracer_finals, config.dz), elapsed)
            result["sftle1"] = stochastic_moments(sigma, ens.basis, ens.rule, ens.box)
        if "sftle2" in selection:
            if tracers_ok:
                result["sftle2"] = _coefficient_exponents(tracer_finals, ens, config, elapsed)
            else:
                result["sftle2"] = [math.nan] * ens.basis.n_terms

    if "ensemble" in finals:
        cs = _project_nodes(finals["ensemble"], row_status["ensemble"], ens, s1)
        if "alpha" in selection:
            alpha, components = pseudo_diffusion(cs, elapsed, statuses["ensemble"], config.alpha_variant)
            result["alpha_tilde"] = alpha
            result["alpha_tilde_components"] = components.tolist()
            result["skew_x"] = float(moments(cs).skewness[0])
        if "expectation" in selection:
            result["expectation"] = expectation_within(cs, config.epsilon, config.n_mc, config.seed)

    return IndicatorResult(**result)


def _coefficient_exponents(tracer_finals: np.ndarray, ens: _Ensemble, config: IndicatorConfig, elapsed: float) -> List[float]:
    n = tracer_finals.shape[-1]
    # one projection per tracer direction: (2n, M, n)
    coeffs = np.stack([
        project_samples(tracer_finals[:, o, :], ens.basis, ens.rule, ens.box).coeffs
        for o in range(2 * n)
    ])
    sensitivities = tracer_gradient(np.swapaxes(coeffs, 0, 1), config.dz) # (M, n, n)
    return coefficient_exponents(sensitivities, elapsed, config.sentinel_floor)


def coefficient_exponents(sensitivities: np.ndarray, elapsed: float, floor: float) -> List[float]:
    """ln sqrt(lambda_max(D_i^T D_i)) / elapsed for every coefficient block D_i = d c_i / d z0."""
    return stretching_exponent(sensitivities, elapsed, floor=floor).tolist()


def ftle(system, z0, p_fixed, config: IndicatorConfig) -> float:
    """Deterministic FTLE at fixed parameters; NaN when a tracer hits a guard."""
    return compute_indicators(system, z0, None, config, ("ftle",), p_nominal=p_fixed).ftle


def sftle1(system, z0, box: UncertaintyBox, config: IndicatorConfig) -> Tuple[float, float, float]:
    return compute_indicators(system, z0, box, config, ("sftle1",)).sftle1


def sftle2(system, z0, box: UncertaintyBox, config: IndicatorConfig) -> List[float]:
    return compute_indicators(system, z0, box, config, ("sftle2",)).sftle2


def sftle2_intrusive(system, z0, box: UncertaintyBox, config: IndicatorConfig) -> List[float]:
    """Coefficient exponents from the variational equations of the coefficients."""
    basis = build_basis(config.degree, box.n_params)
    rule = gauss_rule(config.n_per_dim, box.n_params)
    s0, s1 = integration_span(system, config.t0, config.t_f)
    var = propagate_variational_coeffs(system, z0, box, rule, basis, s0, s1, config.integrator)
    if var.status != GuardStatus.OK:
        return [math.nan] * basis.n_terms
    return coefficient_exponents(var.sensitivities, s1 - s0, config.sentinel_floor)


def ic_uncertainty_alpha(system, z0, p_fixed, edge: float, config: IndicatorConfig) -> Tuple[float, np.ndarray]:
    """Pseudo-diffusion exponent with the uncertainty on the initial state; also returns the covariance eigenvalues."""
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    config = config.model_copy(update={"ic_edge": edge})
    ens = _ensemble_setup(system, z0, None, config, nominal_parameters(system, None, p_fixed))
    s0, s1 = integration_span(system, config.t0, config.t_f)
    batch = propagate_batch(system, ens.states, ens.params, s0, s1, config.integrator)
    cs = _project_nodes(batch.states, batch.status, ens, s1)
    alpha, _ = pseudo_diffusion(cs, s1 - s0, batch.worst, config.alpha_variant)
    eigenvalues = sym_eig(moments(cs).covariance) if cs.valid else np.full(system.n, math.nan)
    return alpha, eigenvalues


def pseudo_diffusion_history(system, z0, box: UncertaintyBox, times: Sequence[float], config: IndicatorConfig) -> np.ndarray:
    """Pseudo-diffusion exponent at each requested time (configured units, ascending)."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0):
        raise ValueError("Output times must be a non-empty ascending sequence")
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    ens = _ensemble_setup(system, z0, box, config, nominal_parameters(system, box))
    s_start = config.t0 * system.time_unit
    states, status = ens.states.copy(), np.zeros(ens.rule.n_nodes, dtype=int)
    s_prev = s_start
    alphas = []
    for t in times:
        s_next = t * system.time_unit
        if s_next - s_start <= ALPHA_MIN_HORIZON:
            raise ValueError(f"Output time {t} is too close to t0 for the pseudo-diffusion exponent")
        # rows stopped by a guard stay frozen
        active = status == GuardStatus.OK
        if active.any():
            batch = propagate_batch(system, states[active], ens.params[active], s_prev, s_next, config.integrator)
            states[active] = batch.states
            status[active] = batch.status
        cs = _project_nodes(states, status, ens, s_next)
        alphas.append(pseudo_diffusion(cs, s_next - s_start, worst_status(status), config.alpha_variant)[0])
        s_prev = s_next
    return np.array(alphas)
