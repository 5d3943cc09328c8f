# models/schemas.py

import math
from datetime import datetime, timezone
from enum import IntEnum
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.config import (
    DEFAULT_ABS_TOL, DEFAULT_DEGREE, DEFAULT_DZ, DEFAULT_EPSILON, DEFAULT_INITIAL_STEP,
    DEFAULT_MAX_STEPS, DEFAULT_MC_SAMPLES, DEFAULT_QUAD_POINTS, DEFAULT_REL_TOL,
    ENERGY_OFFSET, SDI_OUTPUT_DIR, SENTINEL_FLOOR, TOOL_VERSION,
)


class GuardStatus(IntEnum):
    """Trajectory / cell status. Integer order is severity order, so the
    status of an ensemble is the maximum over its members."""
    OK = 0
    FORBIDDEN_REGION = 1
    FAILED = 2
    ESCAPE = 3
    COLLISION = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "GuardStatus":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise ValueError(f"Unknown status label: {label!r}")

    @property
    def terminal(self) -> bool:
        return self in (GuardStatus.COLLISION, GuardStatus.ESCAPE, GuardStatus.FAILED)


def worst_status(codes) -> GuardStatus:
    codes = np.asarray(codes, dtype=int)
    if codes.size == 0:
        return GuardStatus.OK
    return GuardStatus(int(codes.max()))


class Interval(BaseModel):
    model_config = ConfigDict(frozen=True)

    lo: float = Field(..., description="Lower bound of the physical parameter")
    hi: float = Field(..., description="Upper bound of the physical parameter")

    @model_validator(mode="after")
    def _check_bounds(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("Interval bounds must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"Interval requires lo < hi, got [{self.lo}, {self.hi}]")
        return self

    @classmethod
    def around(cls, center: float, half_width: float) -> "Interval":
        return cls(lo=center - half_width, hi=center + half_width)


class UncertaintyBox(BaseModel):
    """The orthotope Omega of uncertain quantities."""
    model_config = ConfigDict(frozen=True)

    dims: List[Interval] = Field(..., min_length=1, description="One interval per uncertain quantity")

    @classmethod
    def from_bounds(cls, *bounds: Tuple[float, float]) -> "UncertaintyBox":
        return cls(dims=[Interval(lo=lo, hi=hi) for lo, hi in bounds])

    @property
    def n_params(self) -> int:
        return len(self.dims)

    @property
    def lower(self) -> np.ndarray:
        return np.array([d.lo for d in self.dims])

    @property
    def upper(self) -> np.ndarray:
        return np.array([d.hi for d in self.dims])

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)


class IntegratorConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    abs_tol: float = Field(DEFAULT_ABS_TOL, gt=0)
    rel_tol: float = Field(DEFAULT_REL_TOL, gt=0)
    initial_step: float = Field(DEFAULT_INITIAL_STEP, gt=0)
    max_steps: int = Field(DEFAULT_MAX_STEPS, gt=0)


AlphaVariant = Literal["max_sqrt", "eig_sum"]


class IndicatorConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    degree: int = Field(DEFAULT_DEGREE, ge=0, description="Total degree m of the expansion")
    n_per_dim: int = Field(DEFAULT_QUAD_POINTS, ge=1, description="Gauss abscissae per uncertain dimension")
    dz: float = Field(DEFAULT_DZ, gt=0, description="Tracer offset for central differences")
    t0: float = 0.0
    t_f: float = Field(..., description="Final time in system time units")
    epsilon: float = Field(DEFAULT_EPSILON, gt=0)
    n_mc: int = Field(DEFAULT_MC_SAMPLES, ge=1)
    seed: int = Field(0, ge=0)
    sentinel_floor: float = Field(SENTINEL_FLOOR, gt=0)
    alpha_variant: AlphaVariant = "max_sqrt"
    ic_edge: Optional[float] = Field(None, gt=0, description="Edge of the initial-condition box (IC-uncertainty mode)")
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)

    @model_validator(mode="after")
    def _check_horizon(self):
        if not self.t_f > self.t0:
            raise ValueError(f"t_f must exceed t0 (t0={self.t0}, t_f={self.t_f})")
        return self


class GridAxis(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    lo: float
    hi: float
    count: int = Field(..., ge=2)

    @model_validator(mode="after")
    def _check_range(self):
        if not self.lo < self.hi:
            raise ValueError(f"Axis {self.name!r} requires lo < hi")
        return self


Embedding = Literal["direct", "cr3bp_energy", "er3bp_energy", "rest"]


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    axis1: GridAxis
    axis2: GridAxis
    embedding: Embedding = Field("direct", description="Rule mapping a grid point (u, v) to a full initial state")
    energy_offset: float = Field(ENERGY_OFFSET, description="E0 - E(L1) for the energy embeddings")

    @property
    def shape(self) -> Tuple[int, int]:
        # rows follow axis2, columns follow axis1
        return (self.axis2.count, self.axis1.count)

    @property
    def n_cells(self) -> int:
        return self.axis1.count * self.axis2.count


class RegionPredicate(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["below", "above", "band"]
    threshold: Optional[float] = None
    lo: Optional[float] = None
    hi: Optional[float] = None

    @model_validator(mode="after")
    def _check_fields(self):
        if self.kind == "band":
            if self.lo is None or self.hi is None or not self.lo <= self.hi:
                raise ValueError("band predicate needs lo <= hi")
        elif self.threshold is None:
            raise ValueError(f"{self.kind} predicate needs a threshold")
        return self

    def describe(self) -> str:
        if self.kind == "band":
            return f"{self.lo} <= value <= {self.hi}"
        return f"value {'<' if self.kind == 'below' else '>'} {self.threshold}"


IndicatorName = Literal["ftle", "sftle1", "sftle2", "alpha", "expectation"]
ALL_INDICATORS: Tuple[str, ...] = ("ftle", "sftle1", "sftle2", "alpha", "expectation")


class RunConfig(BaseModel):
    """Everything needed to reproduce one cartography run."""
    model_config = ConfigDict(frozen=True)

    preset: Optional[str] = Field(None, description="Preset the configuration was derived from")
    system: str = Field(..., description="Registered system name")
    box: UncertaintyBox
    grid: GridSpec
    indicators: List[IndicatorName] = Field(default_factory=lambda: ["alpha"])
    degree: int = Field(DEFAULT_DEGREE, ge=0)
    n_per_dim: int = Field(DEFAULT_QUAD_POINTS, ge=1)
    t0: float = 0.0
    t_f: float
    abs_tol: float = Field(DEFAULT_ABS_TOL, gt=0)
    rel_tol: float = Field(DEFAULT_REL_TOL, gt=0)
    initial_step: float = Field(DEFAULT_INITIAL_STEP, gt=0)
    max_steps: int = Field(DEFAULT_MAX_STEPS, gt=0)
    dz: float = Field(DEFAULT_DZ, gt=0)
    epsilon: float = Field(DEFAULT_EPSILON, gt=0)
    n_mc: int = Field(DEFAULT_MC_SAMPLES, ge=1)
    seed: int = Field(0, ge=0)
    ic_edge: Optional[float] = Field(None, gt=0)
    alpha_variant: AlphaVariant = "max_sqrt"
    output: str = SDI_OUTPUT_DIR

    @field_validator("indicators")
    @classmethod
    def _dedupe(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one indicator must be selected")
        return [name for name in ALL_INDICATORS if name in value]

    def indicator_config(self) -> IndicatorConfig:
        return IndicatorConfig(
            degree=self.degree,
            n_per_dim=self.n_per_dim,
            dz=self.dz,
            t0=self.t0,
            t_f=self.t_f,
            epsilon=self.epsilon,
            n_mc=self.n_mc,
            seed=self.seed,
            alpha_variant=self.alpha_variant,
            ic_edge=self.ic_edge,
            integrator=IntegratorConfig(
                abs_tol=self.abs_tol,
                rel_tol=self.rel_tol,
                initial_step=self.initial_step,
                max_steps=self.max_steps,
            ),
        )


class FieldFileHeader(BaseModel):
    tool_version: str = TOOL_VERSION
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    seed: int
    workers: int = 1
    elapsed_seconds: float = 0.0
    columns: List[str] = Field(default_factory=list, description="Indicator columns, in file order")
    config: RunConfig


class IndicatorResult(BaseModel):
    """Indicator values for one initial condition. Not-a-value entries are NaN."""
    ftle: float = math.nan
    sftle1: Tuple[float, float, float] = (math.nan, math.nan, math.nan)
    sftle2: List[float] = Field(default_factory=list)
    alpha_tilde: float = math.nan
    alpha_tilde_components: List[float] = Field(default_factory=list)
    expectation: float = math.nan
    skew_x: float = math.nan
    status: GuardStatus = GuardStatus.OK

    @field_validator("expectation")
    @classmethod
    def _check_probability(cls, value: float) -> float:
        if not math.isnan(value) and not 0.0 <= value <= 1.0:
            raise ValueError(f"expectation must lie in [0, 1], got {value}")
        return value
