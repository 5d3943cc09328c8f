# sdi/cartography.py

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import pdist

from core.config import ALPHA_MIN_HORIZON, MAX_EXPORT_SAMPLES
from core.errors import ConfigError
from models.schemas import (
    ALL_INDICATORS, GridAxis, GridSpec, GuardStatus, IndicatorConfig, IndicatorResult,
    RegionPredicate, UncertaintyBox, worst_status,
)
from sdi.basis import gauss_rule, map_to_box, multi_indices
from sdi.indicators import compute_indicators, divergence_order, integration_span
from sdi.odeint import propagate_batch

logger = logging.getLogger(__name__)

CHUNKS_PER_WORKER = 8


@dataclass
class FieldResult:
    """Indicator fields on a grid; every matrix is indexed [iy, ix]."""
    grid: GridSpec
    columns: List[str]
    values: Dict[str, np.ndarray]
    status: np.ndarray
    metadata: Dict[str, object] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[name]
        except KeyError:
            raise ValueError(f"Field has no column {name!r} (available: {', '.join(self.columns)})")


@dataclass
class RegionComponent:
    id: int
    area: int
    bbox: Dict[str, int]
    sample: Dict[str, float]


@dataclass
class RegionMask:
    mask: np.ndarray
    predicate: RegionPredicate
    column: str
    labels: np.ndarray
    components: List[RegionComponent]


@dataclass
class EnsembleBundle:
    params: np.ndarray # (R, n_p)
    times: List[np.ndarray]
    trajectories: List[np.ndarray]
    status: np.ndarray
    spread_max: float
    spread_mean: float


# --- grid geometry ------------------------------------------------------------

def cell_centers(axis: GridAxis) -> np.ndarray:
    width = (axis.hi - axis.lo) / axis.count
    return axis.lo + (np.arange(axis.count) + 0.5) * width


def cell_seed(global_seed: int, cell_index: int) -> int:
    """Independent 64-bit seed per cell, fixed by the global seed and the cell's row-major index."""
    return int(np.random.SeedSequence([global_seed, cell_index]).generate_state(1, np.uint64)[0])


def embed(grid: GridSpec, system, box: UncertaintyBox, u: float, v: float) -> Tuple[Optional[np.ndarray], GuardStatus]:
    """Full initial state of grid point (u, v), or forbidden_region."""
    if grid.embedding == "direct":
        if system.n != 2:
            raise ConfigError(f"direct embedding needs a two-dimensional system, {system.name} has {system.n} states")
        return np.array([u, v]), GuardStatus.OK
    if grid.embedding == "rest":
        if system.n != 4:
            raise ConfigError(f"rest embedding needs a planar three-body state, {system.name} has {system.n} states")
        return np.array([u, v, 0.0, 0.0]), GuardStatus.OK
    if grid.embedding in ("cr3bp_energy", "er3bp_energy"):
        if not hasattr(system, "vy_from_energy"):
            raise ConfigError(f"{grid.embedding} embedding is not available for {system.name}")
        energy_level = system.reference_energy(box.center, grid.energy_offset)
        vy, status = system.vy_from_energy(u, v, energy_level, box.center)
        if status != GuardStatus.OK:
            return None, status
        return np.array([u, 0.0, v, vy]), GuardStatus.OK
    raise ConfigError(f"Unsupported embedding: {grid.embedding}")


# --- columns ------------------------------------------------------------------

def indicator_columns(selection: Sequence[str], system, n_params: int, degree: int) -> List[str]:
    n_terms = len(multi_indices(degree, n_params))
    columns = []
    for name in ALL_INDICATORS:
        if name not in selection:
            continue
        if name == "ftle":
            columns.append("ftle")
        elif name == "sftle1":
            columns += ["sftle1_mean", "sftle1_var", "sftle1_skew"]
        elif name == "sftle2":
            columns += [f"sftle2_{i}" for i in range(n_terms)] + ["sftle2_order"]
        elif name == "alpha":
            columns += ["alpha"] + [f"alpha_{s}" for s in system.state_names]
            columns += ["log10_alpha", f"skew_{system.state_names[0]}"]
        elif name == "expectation":
            columns.append("expectation")
    return columns


def result_row(result: IndicatorResult, selection: Sequence[str], system, n_terms: int) -> List[float]:
    row = []
    for name in ALL_INDICATORS:
        if name not in selection:
            continue
        if name == "ftle":
            row.append(result.ftle)
        elif name == "sftle1":
            row += list(result.sftle1)
        elif name == "sftle2":
            values = result.sftle2 or [math.nan] * n_terms
            order = divergence_order(values) if all(np.isfinite(values)) else math.nan
            row += list(values) + [float(order)]
        elif name == "alpha":
            components = result.alpha_tilde_components or [math.nan] * system.n
            alpha = result.alpha_tilde
            row += [alpha] + list(components)
            row += [math.log10(alpha) if alpha > 0 else math.nan, result.skew_x]
        elif name == "expectation":
            row.append(result.expectation)
    return row


# --- sweep --------------------------------------------------------------------

def _effective_params(box: UncertaintyBox, system, config: IndicatorConfig) -> int:
    return system.n if config.ic_edge is not None else box.n_params


def validate_sweep(system, grid: GridSpec, box: UncertaintyBox, selection: Sequence[str], config: IndicatorConfig) -> None:
    if not selection:
        raise ConfigError("No indicator selected")
    unknown = set(selection) - set(ALL_INDICATORS)
    if unknown:
        raise ConfigError(f"Unsupported indicator(s): {', '.join(sorted(unknown))}")
    if box.n_params != system.n_params:
        raise ConfigError(f"{system.name} takes {system.n_params} uncertain parameters, box has {box.n_params}")
    if config.ic_edge is not None and set(selection) & {"sftle1", "sftle2"}:
        raise ConfigError("SFTLE indicators are undefined under initial-condition uncertainty")
    s0, s1 = integration_span(system, config.t0, config.t_f)
    if "alpha" in selection and s1 - s0 <= ALPHA_MIN_HORIZON:
        raise ConfigError(f"alpha needs an elapsed time above {ALPHA_MIN_HORIZON}, got {s1 - s0}")
    embed(grid, system, box, grid.axis1.lo, grid.axis2.lo) # embedding/system compatibility


def compute_cell(system, grid: GridSpec, box: UncertaintyBox, selection: Sequence[str], config: IndicatorConfig, index: int) -> Tuple[List[float], int]:
    nx = grid.axis1.count
    ix, iy = index % nx, index // nx
    u = cell_centers(grid.axis1)[ix]
    v = cell_centers(grid.axis2)[iy]
    n_cols = len(indicator_columns(selection, system, _effective_params(box, system, config), config.degree))
    n_terms = len(multi_indices(config.degree, _effective_params(box, system, config)))

    z0, status = embed(grid, system, box, u, v)
    if status != GuardStatus.OK:
        return [math.nan] * n_cols, int(status)

    cell_config = config.model_copy(update={"seed": cell_seed(config.seed, index)})
    try:
        result = compute_indicators(system, z0, box, cell_config, selection)
    except ConfigError:
        raise
    except (ValueError, ArithmeticError) as exc:
        logger.warning("Cell (%d, %d) failed: %s", ix, iy, exc)
        return [math.nan] * n_cols, int(GuardStatus.FAILED)
    logger.debug("Cell (%d, %d): %s", ix, iy, result.status.label)
    return result_row(result, selection, system, n_terms), int(result.status)


def _compute_chunk(args) -> List[Tuple[int, List[float], int]]:
    system, grid, box, selection, config, indices = args
    return [(i, *compute_cell(system, grid, box, selection, config, i)) for i in indices]


def sweep(
    system,
    grid: GridSpec,
    box: UncertaintyBox,
    selection: Sequence[str],
    config: IndicatorConfig,
    workers: int = 1,
) -> FieldResult:
    """
    Indicators on every grid cell. Cells are independent tasks with pre-assigned seeds,
    merged by index, so the output does not depend on the worker count.
    """
    selection = [name for name in ALL_INDICATORS if name in set(selection)]
    validate_sweep(system, grid, box, selection, config)
    columns = indicator_columns(selection, system, _effective_params(box, system, config), config.degree)
    n_cells = grid.n_cells
    workers = max(1, int(workers))
    logger.info("Sweep of %s: %d cells, indicators %s, %d worker(s)", system.name, n_cells, ",".join(selection), workers)
    started = time.perf_counter()

    indices = list(range(n_cells))
    chunk = max(1, math.ceil(n_cells / (workers * CHUNKS_PER_WORKER)))
    tasks = [(system, grid, box, selection, config, indices[k:k + chunk]) for k in range(0, n_cells, chunk)]
    if workers == 1:
        outputs = [_compute_chunk(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            outputs = list(executor.map(_compute_chunk, tasks))

    ny, nx = grid.shape
    table = np.full((n_cells, len(columns)), np.nan)
    status = np.zeros(n_cells, dtype=int)
    for chunk_out in outputs:
        for index, row, code in chunk_out:
            table[index] = row
            status[index] = code

    elapsed = time.perf_counter() - started
    counts = {GuardStatus(c).label: int(k) for c, k in zip(*np.unique(status, return_counts=True))}
    logger.info("Sweep finished in %.1f s, statuses %s", elapsed, counts)
    return FieldResult(
        grid=grid,
        columns=columns,
        values={name: table[:, k].reshape(ny, nx) for k, name in enumerate(columns)},
        status=status.reshape(ny, nx),
        metadata={"elapsed_seconds": elapsed, "workers": workers, "seed": config.seed},
    )


# --- regions ------------------------------------------------------------------

def predicate_mask(values: np.ndarray, predicate: RegionPredicate) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        if predicate.kind == "below":
            return values < predicate.threshold
        if predicate.kind == "above":
            return values > predicate.threshold
        return (values >= predicate.lo) & (values <= predicate.hi)


def extract_regions(field_result: FieldResult, predicate: RegionPredicate, column: Optional[str] = None) -> RegionMask:
    """Cells satisfying the predicate (ok status, finite value only), split into 4-connected components."""
    column = column or field_result.columns[0]
    values = field_result.column(column)
    mask = predicate_mask(values, predicate) & np.isfinite(values) & (field_result.status == GuardStatus.OK)

    labels, count = ndimage.label(mask)
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    u = cell_centers(field_result.grid.axis1)
    v = cell_centers(field_result.grid.axis2)
    components = []
    for k, slices in enumerate(ndimage.find_objects(labels), start=1):
        if slices is None:
            continue
        iy, ix = np.argwhere(labels == k)[0]
        components.append(RegionComponent(
            id=k,
            area=int(areas[k]),
            bbox={"ix_min": slices[1].start, "ix_max": slices[1].stop - 1, "iy_min": slices[0].start, "iy_max": slices[0].stop - 1},
            sample={"ix": int(ix), "iy": int(iy), "u": float(u[ix]), "v": float(v[iy])},
        ))
    logger.info("Predicate %s on %s: %d cells in %d component(s)", predicate.describe(), column, int(mask.sum()), count)
    return RegionMask(mask=mask, predicate=predicate, column=column, labels=labels, components=components)


# --- ensembles ----------------------------------------------------------------

def decimate(times: np.ndarray, states: np.ndarray, limit: int = MAX_EXPORT_SAMPLES) -> Tuple[np.ndarray, np.ndarray]:
    if len(times) <= limit:
        return times, states
    keep = np.unique(np.linspace(0, len(times) - 1, limit).round().astype(int))
    return times[keep], states[keep]


def ensemble_study(
    system,
    z0,
    box: UncertaintyBox,
    n_realizations: int,
    config: IndicatorConfig,
    sampling: str = "random",
) -> EnsembleBundle:
    """Trajectory bundle over parameter realizations: random uniform draws or the rule nodes."""
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    if z0.size != system.n:
        raise ValueError(f"{system.name} has {system.n} state components, got {z0.size}")
    if sampling == "random":
        if n_realizations < 1:
            raise ValueError("Need at least one realization")
        rng = np.random.default_rng(config.seed)
        params = rng.uniform(box.lower, box.upper, size=(n_realizations, box.n_params))
    elif sampling == "quadrature":
        params = map_to_box(gauss_rule(config.n_per_dim, box.n_params).nodes, box)
    else:
        raise ValueError(f"Unsupported sampling: {sampling}")

    s0, s1 = integration_span(system, config.t0, config.t_f)
    states = np.repeat(z0[None, :], len(params), axis=0)
    batch = propagate_batch(system, states, params, s0, s1, config.integrator, record=True)

    times, trajectories = [], []
    for r in range(len(params)):
        upto = batch.times <= batch.t_end[r]
        t_r, z_r = decimate(batch.times[upto], batch.history[upto, r])
        times.append(t_r)
        trajectories.append(z_r)

    ok = batch.status == GuardStatus.OK
    distances = pdist(batch.states[ok]) if ok.sum() > 1 else np.zeros(0)
    spread_max = float(distances.max()) if distances.size else 0.0
    spread_mean = float(distances.mean()) if distances.size else 0.0
    overall = worst_status(batch.status)
    if overall != GuardStatus.OK:
        logger.warning("Ensemble of %d realizations has mixed statuses (worst: %s)", len(params), overall.label)
    logger.info("Ensemble of %d realizations, terminal spread max %.3e", len(params), spread_max)
    return EnsembleBundle(params, times, trajectories, batch.status.copy(), spread_max, spread_mean)
