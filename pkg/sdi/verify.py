# sdi/verify.py

import dataclasses
import logging
import math
import os
import tempfile
import time
from datetime import datetime, timezone
from typing import Callable, Dict, List

import numpy as np
from scipy.special import comb
from scipy.stats import spearmanr

from core.config import TOOL_VERSION
from core.presets import get_preset
from core.storage import write_field
from models.schemas import (
    FieldFileHeader, GridAxis, GridSpec, GuardStatus, IndicatorConfig, IntegratorConfig,
    RunConfig, UncertaintyBox,
)
from sdi.basis import build_basis, gauss_rule, map_to_box
from sdi.cartography import compute_cell, sweep
from sdi.indicators import compute_indicators, ftle, ic_uncertainty_alpha, stretching_exponent, tracer_gradient, tracer_offsets
from sdi.odeint import propagate_batch, propagate_ensemble, propagate_galerkin
from sdi.pce import CoefficientSet, moments, project_initial, project_samples
from sdi.systems import CR3BPSystem, DriftSystem, LinearSystem, PendulumSystem, l1_energy

logger = logging.getLogger(__name__)

PENDULUM_Z0 = (0.889447, -0.19598)
PENDULUM_BOX = UncertaintyBox.from_bounds((2.25, 2.75))
TIGHT = IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12)

_CHECKS: List[tuple] = []


def check(name: str):
    def register(fn: Callable[[dict], dict]):
        _CHECKS.append((name, fn))
        return fn
    return register


def _result(measured, tolerance, passed: bool, **extra) -> dict:
    return {"measured": measured, "tolerance": tolerance, "passed": bool(passed), **extra}


@check("quadrature_moments")
def _quadrature_moments(opts):
    rule = gauss_rule(9, 1)
    xi, w = rule.nodes[:, 0], rule.weights
    worst = 0.0
    for k in range(18):
        exact = 0.0 if k % 2 else comb(k, k // 2, exact=True) / (k // 2 + 1) / 4 ** (k // 2)
        worst = max(worst, abs(float(np.sum(w * xi**k)) - exact))
    return _result(worst, 1e-12, worst <= 1e-12)


@check("analytic_alpha")
def _analytic_alpha(opts):
    config = IndicatorConfig(t_f=10.0)
    result = compute_indicators(DriftSystem(), [0.0], UncertaintyBox.from_bounds((-1.0, 1.0)), config, ("alpha",))
    expected = math.log(6.0) / math.log(10.0)
    error = abs(result.alpha_tilde - expected)
    return _result(result.alpha_tilde, 1e-8, error <= 1e-8, expected=expected)


@check("ftle_saddle_rotation")
def _ftle_saddle(opts):
    config = IndicatorConfig(t_f=10.0)
    saddle = ftle(LinearSystem(np.diag([1.0, -1.0])), [0.3, 0.2], [0.0], config)
    rotation = ftle(LinearSystem([[0.0, -1.0], [1.0, 0.0]]), [0.3, 0.2], [0.0], config)
    error = max(abs(saddle - 1.0), abs(rotation))
    return _result({"saddle": saddle, "rotation": rotation}, 1e-6, error <= 1e-6)


@check("covariance_cauchy_green_proportionality")
def _proportionality(opts):
    system = PendulumSystem()
    edge = 1e-5
    config = IndicatorConfig(t_f=10.0, degree=1, integrator=TIGHT)
    rng = np.random.default_rng(opts["seed"])
    ratios = []
    for z0 in rng.uniform(-3.0, 3.0, size=(10, 2)):
        _, cov_eigs = ic_uncertainty_alpha(system, z0, [2.5], edge, config)
        offsets = tracer_offsets(2, config.dz)
        batch = propagate_batch(system, z0[None, :] + offsets, [[2.5]], 0.0, 10.0, TIGHT)
        phi = tracer_gradient(batch.states, config.dz)
        cg_eigs = np.linalg.eigvalsh(phi.T @ phi)[::-1]
        ratios.extend(cov_eigs / cg_eigs)
    ratios = np.array(ratios)
    expected = 0.25 * (edge / 2) ** 2
    spread = float((ratios.max() - ratios.min()) / ratios.mean())
    return _result(spread, 1e-3, spread <= 1e-3, mean_ratio=float(ratios.mean()), expected_ratio=expected)


def _pendulum_grid(size: int, names=("x", "vx")) -> GridSpec:
    return GridSpec(
        axis1=GridAxis(name=names[0], lo=-3.0, hi=3.0, count=size),
        axis2=GridAxis(name=names[1], lo=-3.0, hi=3.0, count=size),
    )


@check("ftle_alpha_rank_correlation")
def _rank_correlation(opts):
    size = opts["grid"]
    config = IndicatorConfig(t_f=10.0, degree=1, n_per_dim=3, ic_edge=1e-5)
    field = sweep(PendulumSystem(), _pendulum_grid(size), PENDULUM_BOX, ["ftle", "alpha"], config, workers=opts["workers"])
    log_alpha = field.values["log10_alpha"].ravel()
    ftle_values = field.values["ftle"].ravel()
    finite = np.isfinite(log_alpha) & np.isfinite(ftle_values)
    rho = float(spearmanr(log_alpha[finite], ftle_values[finite]).statistic)
    return _result(rho, 0.8, rho >= 0.8, cells=int(finite.sum()))


def _pendulum_pce(degree: int = 4):
    system = PendulumSystem()
    basis = build_basis(degree, 1)
    rule = gauss_rule(9, 1)
    config = IntegratorConfig()
    batch = propagate_ensemble(system, np.array(PENDULUM_Z0), PENDULUM_BOX, rule, 0.0, 10.0, config)
    return system, basis, rule, project_samples(batch.states, basis, rule, PENDULUM_BOX, t=10.0)


@check("variance_monte_carlo_oracle")
def _variance_oracle(opts):
    system, basis, rule, cs = _pendulum_pce()
    if opts["fault_injection"]:
        norms = basis.norms.copy()
        norms[1] *= 1.5
        cs = CoefficientSet(cs.coeffs, dataclasses.replace(basis, norms=norms), cs.box, t=cs.t)
    pce_var = float(moments(cs).variance[0])

    rng = np.random.default_rng(opts["seed"])
    xi = 2.0 * rng.beta(1.5, 1.5, size=opts["mc_samples"]) - 1.0 # semicircle draws
    params = map_to_box(xi[:, None], PENDULUM_BOX)
    states = np.repeat(np.array(PENDULUM_Z0)[None, :], len(xi), axis=0)
    final = propagate_batch(system, states, params, 0.0, 10.0, IntegratorConfig()).states[:, 0]
    deviations = (final - final.mean()) ** 2
    mc_var = float(deviations.mean())
    stderr = float(deviations.std(ddof=1) / math.sqrt(len(final)))
    return _result({"pce": pce_var, "monte_carlo": mc_var}, 3 * stderr, abs(pce_var - mc_var) <= 3 * stderr)


@check("galerkin_projection_agreement")
def _galerkin_agreement(opts):
    system, basis, rule, cs = _pendulum_pce()
    cs0 = project_initial(np.array(PENDULUM_Z0), basis, rule, PENDULUM_BOX)
    intrusive = propagate_galerkin(system, cs0, rule, 0.0, 10.0, IntegratorConfig())
    if not intrusive.valid:
        return _result(None, 1e-3, False, error="galerkin propagation stopped")
    significant = np.abs(cs.coeffs) > 1e-6
    rel = np.abs(intrusive.coeffs - cs.coeffs)[significant] / np.abs(cs.coeffs)[significant]
    worst = float(rel.max()) if rel.size else 0.0
    return _result(worst, 1e-3, worst <= 1e-3)


@check("pendulum_central_symmetry")
def _symmetry(opts):
    size = opts["grid"]
    config = IndicatorConfig(t_f=10.0)
    field = sweep(PendulumSystem(), _pendulum_grid(size), PENDULUM_BOX, ["ftle", "sftle1", "alpha"], config, workers=opts["workers"])
    worst = 0.0
    for column in ("ftle", "sftle1_mean", "alpha"):
        values = field.values[column]
        mirrored = values[::-1, ::-1]
        both = np.isfinite(values) & np.isfinite(mirrored)
        worst = max(worst, float(np.abs(values - mirrored)[both].max(initial=0.0)))
    return _result(worst, 1e-6, worst <= 1e-6)


@check("cr3bp_energy_conservation")
def _energy(opts):
    system = CR3BPSystem()
    mu = 0.1
    energy_level = l1_energy(mu) + 0.03715
    rng = np.random.default_rng(opts["seed"])
    states = []
    while len(states) < 20:
        x, vx = rng.uniform(-0.85, -0.125), rng.uniform(-2.0, 2.0)
        vy, status = system.vy_from_energy(x, vx, energy_level, (mu,))
        if status == GuardStatus.OK:
            states.append([x, 0.0, vx, vy])
    states = np.array(states)
    batch = propagate_batch(system, states, [[mu]], 0.0, 2.8, IntegratorConfig(abs_tol=1e-10, rel_tol=1e-8))
    ok = batch.status == GuardStatus.OK
    drift = np.abs(system.energy((mu,), batch.states[ok]) - system.energy((mu,), states[ok]))
    worst = float(drift.max(initial=0.0))
    return _result(worst, 1e-7, worst <= 1e-7, trajectories=int(ok.sum()))


@check("collision_saturation_and_forbidden_cells")
def _saturation(opts):
    l4 = get_preset("l4_stability", grid_size=2)
    mu = float(l4.box.center[0])
    result = compute_indicators(CR3BPSystem(), [-mu + 0.01, 0.0, 0.0, 0.0], l4.box, l4.indicator_config(), ("alpha",))
    saturated = result.alpha_tilde == 1.0 and result.status == GuardStatus.COLLISION

    case1 = get_preset("cr3bp_case1", grid_size=4)
    grid = GridSpec(
        axis1=GridAxis(name="x", lo=-0.55, hi=-0.45, count=2),
        axis2=GridAxis(name="vx", lo=1.9, hi=2.0, count=2),
        embedding="cr3bp_energy",
    )
    row, code = compute_cell(CR3BPSystem(), grid, case1.box, ["alpha"], case1.indicator_config(), 0)
    forbidden = code == GuardStatus.FORBIDDEN_REGION and all(math.isnan(v) for v in row)
    return _result({"alpha": result.alpha_tilde, "status": result.status.label, "forbidden_status": GuardStatus(code).label}, None, saturated and forbidden)


@check("worker_count_determinism")
def _determinism(opts):
    size = max(4, opts["grid"] // 4)
    config = RunConfig(
        system="pendulum",
        box=PENDULUM_BOX,
        grid=_pendulum_grid(size),
        indicators=["alpha", "expectation"],
        t_f=10.0,
        seed=opts["seed"],
    )
    stamp = datetime(2000, 1, 1, tzinfo=timezone.utc)
    contents = []
    for workers in (1, opts["parallel_workers"]):
        field = sweep(PendulumSystem(), config.grid, config.box, config.indicators, config.indicator_config(), workers=workers)
        header = FieldFileHeader(seed=config.seed, created_at=stamp, columns=field.columns, config=config)
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_field(field, header, tmp)
            with open(paths["csv"], "rb") as fh:
                contents.append(fh.read())
    identical = contents[0] == contents[1]
    return _result(identical, None, identical, workers=[1, opts["parallel_workers"]])


@check("throughput")
def _throughput(opts):
    size = opts["grid"]
    config = IndicatorConfig(t_f=10.0)
    grid = _pendulum_grid(size)
    started = time.perf_counter()
    sweep(PendulumSystem(), grid, PENDULUM_BOX, ["alpha"], config, workers=1)
    serial = time.perf_counter() - started
    measured = {"serial_seconds": serial}
    passed = serial < 300.0
    if (os.cpu_count() or 1) >= 4 and not opts["quick"]:
        started = time.perf_counter()
        sweep(PendulumSystem(), grid, PENDULUM_BOX, ["alpha"], config, workers=4)
        parallel = time.perf_counter() - started
        measured["speedup_4_workers"] = serial / parallel
        passed = passed and serial / parallel >= 3.0
    else:
        measured["speedup_4_workers"] = None
    return _result(measured, {"serial_seconds": 300.0, "speedup_4_workers": 3.0}, passed)


def run_checks(quick: bool = False, fault_injection: bool = False, workers: int = 1, seed: int = 0, only=None) -> dict:
    """Runs the acceptance checks; returns a JSON-ready report."""
    opts = {
        "quick": quick,
        "fault_injection": fault_injection,
        "workers": max(1, workers),
        "parallel_workers": 2 if quick else 8,
        "seed": seed,
        "grid": 12 if quick else 50,
        "mc_samples": 20_000 if quick else 100_000,
    }
    checks = []
    for name, fn in _CHECKS:
        if only and name not in only:
            continue
        logger.info("Running check %s", name)
        started = time.perf_counter()
        try:
            entry = fn(opts)
        except Exception as exc: # a crashing check is a failed check
            logger.exception("Check %s raised", name)
            entry = _result(None, None, False, error=f"{type(exc).__name__}: {exc}")
        entry = {"name": name, **entry, "seconds": round(time.perf_counter() - started, 3)}
        logger.info("%s: %s", name, "pass" if entry["passed"] else "FAIL")
        checks.append(entry)
    return {
        "tool_version": TOOL_VERSION,
        "quick": quick,
        "fault_injection": fault_injection,
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
    }


def check_names() -> List[str]:
    return [name for name, _ in _CHECKS]
