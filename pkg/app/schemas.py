from __future__ import annotations

from datetime import datetime
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_core import PydanticCustomError

from app.services.envs.base import ObservationMode
from app.services.network import ActivationKind


class Variant(str, Enum):
    DQL = "dql"
    EDQL = "edql"
    GCOOP = "gcoop"
    COOP = "coop"

    @property
    def dual(self) -> bool:
        return self in (Variant.GCOOP, Variant.COOP)

    @property
    def uses_edl(self) -> bool:
        return self in (Variant.EDQL, Variant.COOP)


class LambdaMode(str, Enum):
    CONSTANT = "constant"
    SIGNED = "signed"


class EnvKind(str, Enum):
    GRIDWORLD = "gridworld"
    CARTPOLE = "cartpole"


class TrainerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma: float = Field(0.99, gt=0.0, lt=1.0)
    alpha: float = Field(1e-3, gt=0.0)
    lambdas: list[float] = Field(default_factory=lambda: [1e-4], min_length=1)
    lambda_mode: LambdaMode = LambdaMode.CONSTANT
    s_scale: float = Field(0.05, ge=0.0)
    s_decay: float = Field(0.999, gt=0.0, le=1.0)
    signed_s: bool = False
    eps_init: float = Field(1.0, ge=0.0, le=1.0)
    eps_min: float = Field(0.01, ge=0.0, le=1.0)
    eps_decay: float = Field(0.995, gt=0.0, le=1.0)
    toggle_period: int = Field(50, ge=1)
    buffer_capacity: int = Field(5000, ge=1)
    batch_size: int = Field(32, ge=1)
    episodes: int = Field(100, ge=0)
    max_steps: int = Field(200, ge=1)
    step_budget: int | None = Field(None, ge=1)
    seed: int = Field(0, ge=0)
    variant: Variant = Variant.COOP
    obs_mode: ObservationMode = ObservationMode.STATE
    td_clip: float = Field(1.0, gt=0.0)
    p_scale: float = Field(1.0, gt=0.0, le=1.0)
    hidden: list[int] = Field(default_factory=lambda: [64])
    activation: ActivationKind = ActivationKind.RELU
    bias: bool = True
    toggle_reset_per_episode: bool = False
    log_every: int = Field(100, ge=1)

    @field_validator("lambdas")
    @classmethod
    def _non_negative_lambdas(cls, value: list[float]) -> list[float]:
        if any(lam < 0.0 for lam in value):
            raise ValueError("decay coefficients must be non-negative")
        return value

    @field_validator("hidden")
    @classmethod
    def _positive_widths(cls, value: list[int]) -> list[int]:
        if any(width < 1 for width in value):
            raise ValueError("hidden layer widths must be positive")
        return value

    @model_validator(mode="after")
    def _check_schedules(self) -> TrainerConfig:
        if self.eps_min > self.eps_init:
            raise ValueError("eps_min must not exceed eps_init")
        if len(self.lambdas) not in (1, len(self.hidden) + 1):
            raise ValueError(f"lambdas needs 1 or {len(self.hidden) + 1} values")
        return self


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    env: EnvKind = EnvKind.GRIDWORLD
    grid_width: int = Field(4, ge=1)
    grid_height: int = Field(4, ge=1)
    goal_cell: int | None = Field(None, ge=0)
    start_cell: int | None = Field(None, ge=0)
    step_reward: float = 0.0
    goal_reward: float = 1.0
    slip_prob: float = Field(0.0, ge=0.0, lt=1.0)
    image_h: int = Field(16, ge=8)
    image_w: int = Field(16, ge=8)
    image_m: int = Field(4, ge=1)
    out: str = "runs/latest"
    trainer: TrainerConfig = Field(default_factory=TrainerConfig)

    @model_validator(mode="after")
    def _check_grid_fits(self) -> RunConfig:
        if self.env is not EnvKind.GRIDWORLD:
            return self
        cells = self.grid_width * self.grid_height
        if cells < 2:
            raise _keyed("grid_width", f"gridworld needs at least two cells, got {self.grid_width}x{self.grid_height}")
        goal = cells - 1 if self.goal_cell is None else self.goal_cell
        if goal >= cells:
            raise _keyed("goal_cell", f"goal cell {goal} outside a {self.grid_width}x{self.grid_height} grid")
        if self.start_cell is not None and (self.start_cell >= cells or self.start_cell == goal):
            raise _keyed("start_cell", f"start cell {self.start_cell} must be a non-goal cell of the grid")
        if self.trainer.obs_mode is ObservationMode.IMAGE:
            if self.grid_width > self.image_w:
                raise _keyed("grid_width", f"a {self.image_w} pixel wide frame cannot show {self.grid_width} columns")
            if self.grid_height > self.image_h:
                raise _keyed("grid_height", f"a {self.image_h} pixel high frame cannot show {self.grid_height} rows")
        return self


def _keyed(key: str, message: str) -> PydanticCustomError:
    return PydanticCustomError("config_value", "{message}", {"key": key, "message": message})


class MetricsRecord(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    episode: int
    variant: str
    seed: int
    episode_return: float = Field(alias="return")
    mean100: float
    std100: float
    q1_mean: float
    q2_mean: float
    qdiff: float
    eps: float
    s_scale: float
    buffer_fill: int
    ms: float


class RunOut(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    id: int
    sweep_id: int | None
    env: str
    variant: str
    seed: int
    obs_mode: str
    episodes: int
    total_steps: int
    final_return: float | None
    final_mean100: float | None
    final_std100: float | None
    final_qdiff: float | None
    initial_qdiff: float | None
    sweep_value: float | None
    metrics_path: str
    checkpoint_paths: str
    status: str
    started_at: datetime
    finished_at: datetime | None


class SweepOut(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    id: int
    parameter: str
    values: str
    seeds: str
    created_at: datetime


class SweepRowOut(BaseModel):
    value: float
    seed: int
    variant: str
    mean100: float | None


class VerifyOut(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    id: int
    trials: int
    seed: int
    tolerance: float | None
    passed: bool
    failed_suites: str
    report_path: str
    created_at: datetime


class MetaOut(BaseModel):
    last_run_time: datetime | None
    number_of_runs: int


class TheoryRow(BaseModel):
    suite: str
    trial: int
    seed: int
    passed: bool
    skipped: bool = False
    depth: int | None = None
    eta: int | None = None
    s: float | None = None
    alpha: float | None = None
    rel_error: float | None = None
    h: float | None = None
    edl_cost: float | None = None
    trace_sum: float | None = None
    xi: float | None = None
    gap: float | None = None
    bound: float | None = None
    s_gap: float | None = None
    s_bound: float | None = None
    v1: float | None = None
    v2: float | None = None
    v3: float | None = None
    alpha_threshold: float | None = None
    first_difference: float | None = None
    samples: int | None = None
    detail: str = ""


class SuiteSummary(BaseModel):
    name: str
    trials: int
    passed: int
    pass_fraction: float
    required_fraction: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.trials > 0 and self.pass_fraction >= self.required_fraction
