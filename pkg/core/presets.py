# core/presets.py

from typing import Dict, List

from core.config import DEFAULT_DEGREE, DEFAULT_GRID_SIZE, DEFAULT_STUDY_DEGREE, ENERGY_OFFSET, SDI_OUTPUT_DIR
from core.errors import ConfigError
from models.schemas import ALL_INDICATORS, GridAxis, GridSpec, RunConfig, UncertaintyBox
from sdi.systems import get_system


def _grid(name1, lo1, hi1, name2, lo2, hi2, embedding="direct", size=DEFAULT_GRID_SIZE) -> GridSpec:
    return GridSpec(
        axis1=GridAxis(name=name1, lo=lo1, hi=hi1, count=size),
        axis2=GridAxis(name=name2, lo=lo2, hi=hi2, count=size),
        embedding=embedding,
        energy_offset=ENERGY_OFFSET,
    )


# Preset definitions; grid size is filled in by get_preset
_PRESETS: Dict[str, dict] = {
    "pendulum": dict(
        system="pendulum",
        box=[(2.25, 2.75)],
        grid=("x", -3.0, 3.0, "vx", -3.0, 3.0, "direct"),
        t_f=10.0, degree=DEFAULT_DEGREE, indicators=list(ALL_INDICATORS),
    ),
    "double_gyre": dict(
        system="double_gyre",
        box=[(0.09, 0.11)],
        grid=("x", 0.0, 2.0, "y", 0.0, 1.0, "direct"),
        t_f=20.0, degree=DEFAULT_DEGREE, indicators=list(ALL_INDICATORS),
    ),
    "cr3bp_case1": dict(
        system="cr3bp",
        box=[(0.1 - 1e-7, 0.1 + 1e-7)],
        grid=("x", -0.85, -0.125, "vx", -2.0, 2.0, "cr3bp_energy"),
        t_f=2.0, degree=DEFAULT_DEGREE, indicators=list(ALL_INDICATORS),
    ),
    "cr3bp_case2": dict(
        system="cr3bp",
        box=[(0.099, 0.101)],
        grid=("x", -0.85, -0.125, "vx", -2.0, 2.0, "cr3bp_energy"),
        t_f=2.8, degree=DEFAULT_DEGREE, indicators=["ftle", "alpha", "expectation"],
    ),
    "er3bp": dict(
        system="er3bp",
        box=[(0.039, 0.041), (0.099, 0.101)],
        grid=("x", -0.85, -0.125, "vx", -2.0, 2.0, "er3bp_energy"),
        t_f=2.8, degree=DEFAULT_STUDY_DEGREE, indicators=["alpha", "expectation"],
    ),
    "l4_stability": dict(
        system="cr3bp",
        box=[(0.038, 0.040)],
        grid=("x", 0.2, 0.8, "y", 0.5, 1.1, "rest"),
        t_f=20.0, degree=DEFAULT_STUDY_DEGREE, indicators=["ftle", "sftle2", "alpha", "expectation"],
    ),
    "l4_closeup": dict(
        system="cr3bp",
        box=[(0.038, 0.040)],
        grid=("x", 0.3, 0.7, "y", 0.7, 1.0, "rest"),
        t_f=80.0, degree=DEFAULT_STUDY_DEGREE, indicators=["alpha"],
    ),
}


def preset_names() -> List[str]:
    return list(_PRESETS)


def get_preset(name: str, grid_size: int = DEFAULT_GRID_SIZE, output: str = SDI_OUTPUT_DIR) -> RunConfig:
    try:
        spec = _PRESETS[name]
    except KeyError:
        raise ConfigError(f"Unknown preset: {name} (available: {', '.join(_PRESETS)})")
    name1, lo1, hi1, name2, lo2, hi2, embedding = spec["grid"]
    abs_tol, rel_tol = get_system(spec["system"]).default_tolerances
    return RunConfig(
        preset=name,
        system=spec["system"],
        box=UncertaintyBox.from_bounds(*spec["box"]),
        grid=_grid(name1, lo1, hi1, name2, lo2, hi2, embedding, grid_size),
        indicators=list(spec["indicators"]),
        degree=spec["degree"],
        t_f=spec["t_f"],
        abs_tol=abs_tol,
        rel_tol=rel_tol,
        output=output,
    )
