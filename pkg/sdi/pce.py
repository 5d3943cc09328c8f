# sdi/pce.py

import logging
from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np

from models.schemas import UncertaintyBox
from sdi.basis import PolynomialBasis, QuadratureRule, map_from_box, map_to_box, triple_norms, vandermonde

logger = logging.getLogger(__name__)

DEGENERATE_VARIANCE = 1e-30 # below this the ensemble is treated as constant


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """
    PCE coefficients c_i(t): one row per basis term, one column per state component.
    An invalid set (some node hit a guard) carries NaN coefficients.
    """
    coeffs: np.ndarray
    basis: PolynomialBasis
    box: UncertaintyBox
    t: float = 0.0
    valid: bool = True

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float, copy=True)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        if coeffs.shape[0] != self.basis.n_terms:
            raise ValueError(f"Expected {self.basis.n_terms} coefficient rows, got {coeffs.shape[0]}")
        if self.valid and not np.all(np.isfinite(coeffs)):
            raise ValueError("Valid coefficient set must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_states(self) -> int:
        return self.coeffs.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.coeffs[0]

    def with_coeffs(self, coeffs: np.ndarray, t: float = None, valid: bool = None) -> "CoefficientSet":
        return CoefficientSet(
            coeffs=coeffs,
            basis=self.basis,
            box=self.box,
            t=self.t if t is None else t,
            valid=self.valid if valid is None else valid,
        )


@dataclass(frozen=True)
class MomentSummary:
    mean: np.ndarray
    variance: np.ndarray
    central3: np.ndarray
    skewness: np.ndarray
    covariance: np.ndarray


def invalid_set(basis: PolynomialBasis, box: UncertaintyBox, n_states: int, t: float = 0.0) -> CoefficientSet:
    return CoefficientSet(np.full((basis.n_terms, n_states), np.nan), basis, box, t=t, valid=False)


def project_samples(states, basis: PolynomialBasis, rule: QuadratureRule, box: UncertaintyBox, t: float = 0.0) -> CoefficientSet:
    """
    Non-intrusive projection: c_k = sum_j w_j z_j Psi_k(xi_j) / s_k.
    states has one row per rule node.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if states.shape[0] != rule.n_nodes:
        raise ValueError(f"Expected {rule.n_nodes} node states, got {states.shape[0]}")
    if not np.all(np.isfinite(states)):
        logger.debug("Projection at t=%s skipped: non-finite node states", t)
        return invalid_set(basis, box, states.shape[1], t)

    V = vandermonde(basis, rule.nodes)
    coeffs = (V * rule.weights[:, None]).T @ states / basis.norms[:, None]
    return CoefficientSet(coeffs, basis, box, t=t)


def project_initial(
    z0: Union[np.ndarray, Callable[[np.ndarray], np.ndarray]],
    basis: PolynomialBasis,
    rule: QuadratureRule,
    box: UncertaintyBox,
    t: float = 0.0,
) -> CoefficientSet:
    """Deterministic z0 fills c_0 only; a state-valued function of p is projected by quadrature."""
    if callable(z0):
        params = map_to_box(rule.nodes, box)
        states = np.array([np.atleast_1d(z0(p)) for p in params], dtype=float)
        return project_samples(states, basis, rule, box, t=t)

    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    coeffs = np.zeros((basis.n_terms, z0.size))
    coeffs[0] = z0
    return CoefficientSet(coeffs, basis, box, t=t)


def evaluate_xi(cs: CoefficientSet, xi) -> np.ndarray:
    """Expansion value at normalized coordinates; xi of shape (n_params,) or (k, n_params)."""
    xi = np.asarray(xi, dtype=float)
    values = vandermonde(cs.basis, xi) @ cs.coeffs
    return values[0] if xi.ndim <= 1 else values


def evaluate(cs: CoefficientSet, p) -> np.ndarray:
    return evaluate_xi(cs, map_from_box(p, cs.box))


def moments(cs: CoefficientSet) -> MomentSummary:
    n = cs.n_states
    if not cs.valid:
        nan_vec = np.full(n, np.nan)
        return MomentSummary(nan_vec, nan_vec.copy(), nan_vec.copy(), nan_vec.copy(), np.full((n, n), np.nan))

    s = cs.basis.norms[1:]
    c = cs.coeffs[1:]
    covariance = c.T @ (s[:, None] * c)
    covariance = 0.5 * (covariance + covariance.T)
    variance = np.diag(covariance).copy()

    if cs.basis.n_terms > 1:
        T = triple_norms(cs.basis)[1:, 1:, 1:]
        central3 = np.einsum("abc,aj,bj,cj->j", T, c, c, c)
    else:
        central3 = np.zeros(n)

    skewness = np.zeros(n)
    spread = variance >= DEGENERATE_VARIANCE
    skewness[spread] = central3[spread] / variance[spread] ** 1.5
    return MomentSummary(cs.mean.copy(), variance, central3, skewness, covariance)


def stochastic_moments(values, basis: PolynomialBasis, rule: QuadratureRule, box: UncertaintyBox) -> Tuple[float, float, float]:
    """Mean, variance and standardized skewness of a scalar quantity sampled at the rule nodes."""
    cs = project_samples(np.asarray(values, dtype=float)[:, None], basis, rule, box)
    summary = moments(cs)
    return float(summary.mean[0]), float(summary.variance[0]), float(summary.skewness[0])


def galerkin_rhs(t: float, cs: CoefficientSet, system, rule: QuadratureRule) -> CoefficientSet:
    """Intrusive coefficient derivative: c_k' = sum_j w_j g(t, p_j, z(xi_j)) Psi_k(xi_j) / s_k."""
    if not cs.valid:
        return cs
    V = vandermonde(cs.basis, rule.nodes)
    params = map_to_box(rule.nodes, cs.box)
    states = V @ cs.coeffs
    with np.errstate(all="ignore"):
        derivs = system.rhs(t, params, states)
    guarded = np.asarray(system.guard(params, states)) > 0
    if np.any(guarded) or not np.all(np.isfinite(derivs)):
        return invalid_set(cs.basis, cs.box, cs.n_states, t)
    coeffs = (V * rule.weights[:, None]).T @ derivs / cs.basis.norms[:, None]
    return CoefficientSet(coeffs, cs.basis, cs.box, t=t)
