# sdi/basis.py

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import roots_chebyu

from models.schemas import UncertaintyBox

MultiIndex = Tuple[int, ...]

SEMICIRCLE_B = 0.25 # monic Chebyshev-U recurrence, B_k for k >= 1
BOX_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class PolynomialBasis:
    """
    Monic orthogonal basis over [-1, 1]^n_params, built from a three-term recurrence.
    recurrence_b[0] holds the total mass of the measure (1 for a probability measure).
    """
    degree: int
    n_params: int
    recurrence_a: np.ndarray
    recurrence_b: np.ndarray
    norms: np.ndarray
    index_map: Tuple[MultiIndex, ...]

    @property
    def n_terms(self) -> int:
        return len(self.index_map)

    @property
    def index_array(self) -> np.ndarray:
        return np.array(self.index_map, dtype=int).reshape(self.n_terms, self.n_params)

    def position(self, idx: Sequence[int]) -> int:
        try:
            return self.index_map.index(tuple(idx))
        except ValueError:
            raise ValueError(f"Multi-index {tuple(idx)} is not part of a degree-{self.degree} basis")


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray # (n_nodes, n_params) in [-1, 1]
    weights: np.ndarray # (n_nodes,), sums to 1
    n_per_dim: int

    @property
    def n_nodes(self) -> int:
        return len(self.weights)

    @property
    def n_params(self) -> int:
        return self.nodes.shape[1]


def multi_indices(degree: int, n_params: int) -> List[MultiIndex]:
    """Graded-lexicographic multi-indices of total degree <= degree, e.g. (0,0), (1,0), (0,1), (2,0), ..."""
    def _with_total(total: int, dims: int) -> List[MultiIndex]:
        if dims == 1:
            return [(total,)]
        out = []
        for first in range(total, -1, -1):
            out.extend((first,) + rest for rest in _with_total(total - first, dims - 1))
        return out

    indices = []
    for total in range(degree + 1):
        indices.extend(_with_total(total, n_params))
    return indices


def build_basis(degree: int, n_params: int, recurrence: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> PolynomialBasis:
    """
    Builds the tensor-product basis of total degree <= degree.
    Without an explicit recurrence the normalized semicircle (Chebyshev-U) measure is used.
    """
    if degree < 0:
        raise ValueError(f"Basis degree must be non-negative, got {degree}")
    if n_params < 1:
        raise ValueError(f"Basis needs at least one uncertain dimension, got {n_params}")

    if recurrence is None:
        rec_a = np.zeros(degree + 1)
        rec_b = np.full(degree + 1, SEMICIRCLE_B)
        rec_b[0] = 1.0
    else:
        rec_a, rec_b = (np.asarray(r, dtype=float) for r in recurrence)
        if len(rec_a) < degree + 1 or len(rec_b) < degree + 1:
            raise ValueError(f"Recurrence too short for degree {degree}")

    # univariate norms s_k = B_0 B_1 ... B_k
    uni_norms = np.cumprod(rec_b[: degree + 1])
    index_map = tuple(multi_indices(degree, n_params))
    norms = np.array([np.prod([uni_norms[e] for e in idx]) for idx in index_map])
    if np.any(norms <= 0):
        raise ValueError("Recurrence produced a non-positive norm")

    return PolynomialBasis(
        degree=degree,
        n_params=n_params,
        recurrence_a=rec_a[:degree].copy(),
        recurrence_b=rec_b[:degree].copy(),
        norms=norms,
        index_map=index_map,
    )


def univariate_table(basis: PolynomialBasis, xi) -> np.ndarray:
    """Psi_0..Psi_m evaluated at every entry of xi; shape xi.shape + (m + 1,)."""
    xi = np.asarray(xi, dtype=float)
    table = np.empty(xi.shape + (basis.degree + 1,))
    table[..., 0] = 1.0
    if basis.degree >= 1:
        table[..., 1] = xi - basis.recurrence_a[0]
    for k in range(1, basis.degree):
        table[..., k + 1] = (xi - basis.recurrence_a[k]) * table[..., k] - basis.recurrence_b[k] * table[..., k - 1]
    return table


def eval_term(basis: PolynomialBasis, idx: Sequence[int], xi) -> float:
    idx = tuple(idx)
    if idx not in basis.index_map:
        raise ValueError(f"Multi-index {idx} is not part of the basis")
    table = univariate_table(basis, np.atleast_1d(xi))
    return float(np.prod([table[d, e] for d, e in enumerate(idx)]))


def vandermonde(basis: PolynomialBasis, xi_points) -> np.ndarray:
    """Matrix V[j, k] = Psi_k(xi_j) for points of shape (n_points, n_params)."""
    xi_points = np.asarray(xi_points, dtype=float).reshape(-1, basis.n_params)
    table = univariate_table(basis, xi_points) # (n_points, n_params, m + 1)
    dims = np.arange(basis.n_params)
    picked = table[:, dims[None, :], basis.index_array] # (n_points, n_terms, n_params)
    return picked.prod(axis=-1)


def gauss_rule(n_per_dim: int, n_params: int) -> QuadratureRule:
    """
    Tensor-product Gauss rule for the normalized semicircle measure.
    Univariate nodes are cos(k pi / (N + 1)), k = 1..N, in descending order.
    """
    if n_per_dim < 1:
        raise ValueError(f"Quadrature needs at least one node per dimension, got {n_per_dim}")
    x, w = roots_chebyu(n_per_dim)
    x, w = x[::-1], w[::-1] * (2.0 / math.pi)

    grids = np.meshgrid(*([x] * n_params), indexing="ij")
    wgrids = np.meshgrid(*([w] * n_params), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return QuadratureRule(nodes=nodes, weights=weights, n_per_dim=n_per_dim)


def recurrence_from_rule(rule: QuadratureRule, degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Discretized Stieltjes procedure: monic recurrence coefficients of the measure a
    one-dimensional rule integrates. Needs rule.n_per_dim > degree.
    """
    if rule.n_params != 1:
        raise ValueError("Stieltjes procedure needs a one-dimensional rule")
    if rule.n_per_dim <= degree:
        raise ValueError(f"Rule with {rule.n_per_dim} nodes cannot resolve degree {degree}")
    x, w = rule.nodes[:, 0], rule.weights
    rec_a = np.zeros(degree + 1)
    rec_b = np.zeros(degree + 1)
    prev, cur = np.zeros_like(x), np.ones_like(x)
    prev_norm = 1.0
    for k in range(degree + 1):
        norm = np.sum(w * cur**2)
        rec_a[k] = np.sum(w * x * cur**2) / norm
        rec_b[k] = norm / prev_norm
        prev, cur = cur, (x - rec_a[k]) * cur - rec_b[k] * prev
        prev_norm = norm
    return rec_a, rec_b


def map_to_box(xi, box: UncertaintyBox) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return box.half_width * xi + box.center


def map_from_box(p, box: UncertaintyBox, slack: float = BOX_SLACK) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < box.lower - slack) or np.any(p > box.upper + slack):
        raise ValueError(f"Point {p.tolist()} lies outside the uncertainty box")
    return np.clip((p - box.center) / box.half_width, -1.0, 1.0)


@lru_cache(maxsize=16)
def _triple_norm_table(degree: int, n_params: int) -> np.ndarray:
    basis = build_basis(degree, n_params)
    rule = gauss_rule(math.ceil((3 * degree + 1) / 2) + 1, n_params)
    V = vandermonde(basis, rule.nodes)
    table = np.einsum("j,ja,jb,jc->abc", rule.weights, V, V, V)
    scale = max(1.0, float(np.abs(table).max()))
    table[np.abs(table) < 1e-14 * scale] = 0.0 # odd-parity entries vanish exactly
    table.setflags(write=False)
    return table


def triple_norms(basis: PolynomialBasis) -> np.ndarray:
    """Table T[a, b, c] = <Psi_a Psi_b Psi_c> for the semicircle basis of the same shape."""
    return _triple_norm_table(basis.degree, basis.n_params)
