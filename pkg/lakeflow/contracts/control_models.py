from enum import StrEnum
import math
from typing import Annotated, Self

from pydantic import (
    AfterValidator,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    field_validator,
    model_validator,
)

from lakeflow.contracts.models import (
    EXOGENOUS_RIVERS,
    LAKE_ORDER,
    ControlPlan,
    FlowCoefficients,
    FrozenModel,
    IndicatorSeries,
    LakeId,
    LakeState,
    MonthStamp,
    NetworkTopology,
    RiverId,
)


class Demand(StrEnum):
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"


class LakeDemand(FrozenModel):
    level: Demand = Demand.MEDIUM
    fluctuation: Demand = Demand.MEDIUM


class FloodParameters(FrozenModel):
    warning_level: float
    """H#, usually the historical mean plus one standard deviation."""
    highest_level: float
    """H_highest, usually the historical mean plus two standard deviations."""
    sigma: PositiveFloat | None = None
    """F_sigma; must equal highest_level - warning_level when given."""

    @model_validator(mode="after")
    def _check(self) -> Self:
        if not self.warning_level < self.highest_level:
            raise ValueError(
                f"Warning level {self.warning_level} must be below the highest level {self.highest_level}"
            )
        gap = self.highest_level - self.warning_level
        if self.sigma is not None and not math.isclose(self.sigma, gap, rel_tol=1e-9):
            raise ValueError(
                f"Flood sigma {self.sigma} must equal highest - warning = {gap}"
            )
        return self

    @property
    def f_sigma(self) -> float:
        return self.highest_level - self.warning_level


class OntarioConstraints(FrozenModel):
    flood: FloodParameters
    river_flow: Demand = Demand.MEDIUM
    river_fluctuation: Demand = Demand.MEDIUM
    nature_m3s: NonNegativeFloat = 0.0
    """Flow owed to the St. Lawrence below Montreal for the ecosystem."""
    residents_m3s: NonNegativeFloat = 0.0
    """Flow owed to riparian residents and industry."""
    montreal_scale_m3s: PositiveFloat = 500.0


class StakeholderConstraints(FrozenModel):
    lakes: dict[LakeId, LakeDemand] = {}
    ontario: OntarioConstraints | None = None

    @field_validator("lakes", mode="after")
    @classmethod
    def _fill_defaults(cls, lakes: dict[LakeId, LakeDemand]) -> dict[LakeId, LakeDemand]:
        return {lake: lakes.get(lake, LakeDemand()) for lake in LAKE_ORDER}


class LevelBaseline(FrozenModel):
    h_star: float
    sigma_hat: NonNegativeFloat
    monthly: tuple[float, ...] | None = None

    @field_validator("monthly")
    @classmethod
    def _twelve(cls, monthly: tuple[float, ...] | None) -> tuple[float, ...] | None:
        if monthly is not None and len(monthly) != 12:
            raise ValueError("Monthly baseline needs exactly 12 values")
        return monthly


class FlowBaseline(FrozenModel):
    f_star: PositiveFloat
    sigma_hat: NonNegativeFloat
    monthly: tuple[float, ...] | None = None


class GradeBaselines(FrozenModel):
    lakes: dict[LakeId, LevelBaseline]
    st_lawrence: FlowBaseline | None = None

    @model_validator(mode="after")
    def _all_lakes(self) -> Self:
        missing = [lake for lake in LAKE_ORDER if lake not in self.lakes]
        if missing:
            raise ValueError(f"Baselines missing for lakes {missing}")
        return self


class LakeGrade(FrozenModel):
    level: float
    fluctuation: float
    mean_level: float
    std_level: float

    @property
    def total(self) -> float:
        return self.level + self.fluctuation


class OntarioGrade(FrozenModel):
    flood: float
    river_flow: float
    river_fluctuation: float
    montreal: float
    max_level: float
    mean_flow: float
    std_flow: float

    @property
    def total(self) -> float:
        return self.flood + self.river_flow + self.river_fluctuation + self.montreal


class GradeReport(FrozenModel):
    lakes: dict[LakeId, LakeGrade]
    ontario: OntarioGrade | None = None
    total: float

    @model_validator(mode="after")
    def _check_total(self) -> Self:
        expected = self._sum(self.lakes, self.ontario)
        if not math.isclose(self.total, expected, rel_tol=1e-9, abs_tol=1e-9):
            raise ValueError(f"Grade total {self.total} is not the sum of components {expected}")
        return self

    @staticmethod
    def _sum(lakes: dict[LakeId, LakeGrade], ontario: OntarioGrade | None) -> float:
        total = sum(g.total for g in lakes.values())
        if ontario is not None:
            total += ontario.total
        return total

    @classmethod
    def assemble(
        cls, lakes: dict[LakeId, LakeGrade], ontario: OntarioGrade | None = None
    ) -> "GradeReport":
        return cls(lakes=lakes, ontario=ontario, total=cls._sum(lakes, ontario))

    def component_vector(self) -> list[float]:
        """
        Every graded component in a fixed order: G_L, G_F per lake, then the
        Ontario extension when present.
        """
        out: list[float] = []
        for lake in LAKE_ORDER:
            g = self.lakes[lake]
            out.extend((g.level, g.fluctuation))
        if self.ontario is not None:
            o = self.ontario
            out.extend((o.flood, o.river_flow, o.river_fluctuation, o.montreal))
        return out


class GradeSummary(FrozenModel):
    level_mean: float
    level_min: float
    level_median: float
    fluctuation_mean: float
    fluctuation_min: float
    fluctuation_median: float


def _unit_interval_open(v: float) -> float:
    if not 0.0 < v < 1.0:
        raise ValueError(f"Must lie strictly between 0 and 1, got {v}")
    return v


def _unit_interval(v: float) -> float:
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"Must lie within [0, 1], got {v}")
    return v


class AnnealConfig(FrozenModel):
    t0: PositiveFloat = 1.0
    t_min: PositiveFloat = 1e-4
    alpha: Annotated[float, AfterValidator(_unit_interval_open)] = 0.995
    iterations_per_temperature: PositiveInt = 20
    step_fraction: Annotated[float, AfterValidator(_unit_interval)] = 0.05
    seed: NonNegativeInt = 0
    restarts: PositiveInt = 4
    workers: PositiveInt = 1

    @model_validator(mode="after")
    def _check(self) -> Self:
        if not self.t_min < self.t0:
            raise ValueError(f"t_min {self.t_min} must be below t0 {self.t0}")
        return self

    @property
    def temperature_levels(self) -> int:
        return math.ceil(math.log(self.t_min / self.t0) / math.log(self.alpha))


class AnnealTraceEntry(FrozenModel):
    iteration: NonNegativeInt
    temperature: PositiveFloat
    current_score: float
    best_score: float


class AnnealTrace(FrozenModel):
    """One entry per temperature level."""

    entries: tuple[AnnealTraceEntry, ...]
    evaluations: NonNegativeInt
    accepted: NonNegativeInt

    @model_validator(mode="after")
    def _best_never_drops(self) -> Self:
        for prev, cur in zip(self.entries, self.entries[1:]):
            if cur.best_score < prev.best_score:
                raise ValueError(f"Best score dropped at iteration {cur.iteration}")
        return self


class LevelBand(FrozenModel):
    low: float
    high: float

    @model_validator(mode="after")
    def _ordered(self) -> Self:
        if not self.low < self.high:
            raise ValueError(f"Band low {self.low} must be below high {self.high}")
        return self

    def contains(self, level: float) -> bool:
        return self.low <= level <= self.high


class ObjectiveMode(StrEnum):
    BASIC = "basic"
    """Sum of G_L and G_F over the five lakes."""
    ONTARIO = "ontario"
    """Adds flood, river-flow and Montreal grades for Lake Ontario."""


class ControllerKind(StrEnum):
    WLPCM = "wlpcm"
    PASSTHROUGH = "passthrough"


class MpcConfig(FrozenModel):
    horizon: PositiveInt = 6
    apply_window: PositiveInt = 1
    objective: ObjectiveMode = ObjectiveMode.BASIC
    emergency_bands: dict[LakeId, LevelBand] = {}

    @model_validator(mode="after")
    def _check(self) -> Self:
        if self.apply_window > self.horizon:
            raise ValueError(
                f"apply_window {self.apply_window} cannot exceed horizon {self.horizon}"
            )
        return self


class MpcStepRecord(FrozenModel):
    month: NonNegativeInt
    stamp: MonthStamp
    plan_step: NonNegativeInt
    forecast: dict[LakeId, tuple[float, ...]]
    plan: ControlPlan
    plan_score: float
    applied: dict[RiverId, float]
    planned_levels: dict[LakeId, float]
    state: LakeState
    realized_indicator: dict[LakeId, float]
    grades: dict[LakeId, LakeGrade]
    level_grade: float
    """Network mean of the rolling 12-month G_L."""
    fluctuation_grade: float
    ontario: OntarioGrade | None = None
    """Ontario and Montreal grades of the last 12 realized months, if constrained."""
    history_length: PositiveInt


class MpcRunRecord(FrozenModel):
    controller: ControllerKind
    start: MonthStamp
    initial: LakeState
    months: tuple[MpcStepRecord, ...] = ()
    halted: bool = False
    halt_reason: str | None = None
    summary: GradeSummary | None = None


class PerturbationKind(StrEnum):
    PRECIPITATION = "precipitation"
    """Scale every indicator by (1 +/- delta)."""
    ICE_CLOG = "ice_clog"
    """Shift river flows by -/+delta in January and +/-2 delta in March (m^3/s)."""
    SNOW_PACK = "snow_pack"
    """Add +/-delta metres of Superior level in March."""
    DAM_FLOW = "dam_flow"
    """Shift a controlled release by +/-delta (m^3/s), clipped to its bounds."""


class Perturbation(FrozenModel):
    kind: PerturbationKind
    delta: NonNegativeFloat
    edge: RiverId | None = None

    @model_validator(mode="after")
    def _check_edge(self) -> Self:
        if self.kind == PerturbationKind.DAM_FLOW and self.edge is None:
            raise ValueError("A dam-flow perturbation needs an edge")
        if self.kind != PerturbationKind.DAM_FLOW and self.edge is not None:
            raise ValueError(f"A {self.kind} perturbation does not take an edge")
        return self


class DispersionMode(StrEnum):
    RMSE = "rmse"
    STD = "std"


class SensitivityEntry(FrozenModel):
    perturbation: Perturbation
    estimator: str
    value: NonNegativeFloat


class SensitivityReport(FrozenModel):
    entries: tuple[SensitivityEntry, ...] = ()
    rain: NonNegativeFloat = 0.0
    ice: NonNegativeFloat = 0.0
    snow: NonNegativeFloat = 0.0
    dams: dict[RiverId, NonNegativeFloat] = {}
    total: NonNegativeFloat = 0.0

    @model_validator(mode="after")
    def _check_total(self) -> Self:
        if not math.isclose(
            self.total, self.rain + self.ice + self.snow, rel_tol=1e-12, abs_tol=1e-12
        ):
            raise ValueError("Total sensitivity must equal rain + ice + snow")
        return self


class Scenario(FrozenModel):
    """
    One planning year: the network, the state it starts from, the releases to
    evaluate and the true indicators and gauges over the year.
    """

    name: str
    start: MonthStamp
    topology: NetworkTopology
    coefficients: FlowCoefficients
    initial: LakeState
    plan: ControlPlan
    indicators: IndicatorSeries
    exogenous: dict[RiverId, tuple[float, ...]] = {}
    flow_offsets: dict[RiverId, tuple[float, ...]] = {}
    baselines: GradeBaselines

    @model_validator(mode="after")
    def _check(self) -> Self:
        horizon = self.plan.horizon
        if len(self.indicators) < horizon:
            raise ValueError(
                f"Scenario '{self.name}' has {len(self.indicators)} months of indicators for a {horizon} month plan"
            )
        for river, values in [*self.exogenous.items(), *self.flow_offsets.items()]:
            if len(values) != horizon:
                raise ValueError(f"Series for river '{river}' does not span the horizon")
        return self

    @property
    def horizon(self) -> int:
        return self.plan.horizon

    def month_stamps(self) -> list[MonthStamp]:
        return [self.start.shift(t) for t in range(self.horizon)]


class ScenarioDocument(FrozenModel):
    """
    On-disk description of a planning year. Paths are relative to the file.
    """

    name: str
    history: str
    topology: str | None = None
    coefficients: str | None = None
    start: MonthStamp
    horizon: PositiveInt = 12
    indicators: dict[LakeId, tuple[float, ...]]
    exogenous: dict[RiverId, tuple[float, ...]] = {}
    area_overrides: dict[LakeId, PositiveFloat] = {}

    @model_validator(mode="after")
    def _check(self) -> Self:
        for lake in LAKE_ORDER:
            values = self.indicators.get(lake)
            if values is None or len(values) != self.horizon:
                raise ValueError(f"Need {self.horizon} indicator values for lake {lake}")
        for river, values in self.exogenous.items():
            if river not in EXOGENOUS_RIVERS:
                raise ValueError(f"'{river}' is not an exogenous gauge")
            if len(values) != self.horizon:
                raise ValueError(f"Need {self.horizon} values for gauge '{river}'")
        return self


class InputFile(FrozenModel):
    path: str
    sha256: str


class RunManifest(FrozenModel):
    subcommand: str
    tool_version: str
    seed: int | None = None
    config: str | None = None
    out_dir: str
    inputs: tuple[InputFile, ...] = ()


class RunConfig(FrozenModel):
    scenario: str
    constraints: str
    seed: NonNegativeInt = 0
    anneal: AnnealConfig = AnnealConfig()
    mpc: MpcConfig = MpcConfig()
    sensitivity: tuple[Perturbation, ...] = ()
    dispersion: DispersionMode = DispersionMode.RMSE
    compare_passthrough: bool = Field(
        default=True, description="Also run the passthrough controller in `mpc`"
    )
