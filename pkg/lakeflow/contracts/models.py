from collections.abc import Mapping, Sequence
from enum import StrEnum
import math
import re
from typing import Any, Literal, Self

import numpy as np
from numpy.typing import NDArray
from pydantic import (
    BaseModel,
    ConfigDict,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    model_serializer,
    model_validator,
)

from lakeflow.contracts.errors import PreconditionError

SECONDS_PER_DAY = 86_400
DEFAULT_MONTH_DAYS = 30.44

# Published rating coefficients are quoted in these units.
SLOPE_UNIT = 1e3  # m^2/s
INTERCEPT_UNIT = 1e5  # m^3/s

DEFAULT_BOUND_FRACTIONS = (0.5, 1.5)


class FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class LakeId(StrEnum):
    SUPERIOR = "A"
    MICHIGAN_HURON = "B"
    ST_CLAIR = "C"
    ERIE = "D"
    ONTARIO = "E"

    @property
    def display_name(self) -> str:
        match self:
            case LakeId.SUPERIOR:
                return "Superior"
            case LakeId.MICHIGAN_HURON:
                return "Michigan-Huron"
            case LakeId.ST_CLAIR:
                return "St. Clair"
            case LakeId.ERIE:
                return "Erie"
            case LakeId.ONTARIO:
                return "Ontario"

    @property
    def position(self) -> int:
        return LAKE_ORDER.index(self)


LAKE_ORDER: tuple[LakeId, ...] = tuple(LakeId)


class RiverId(StrEnum):
    ST_MARYS = "a"
    ST_CLAIR = "b"
    DETROIT = "c"
    NIAGARA = "d"
    ST_LAWRENCE = "e"
    OTTAWA = "ottawa"
    MONTREAL = "montreal"
    """St. Lawrence gauged at Montreal, below the Ottawa confluence."""

    @property
    def display_name(self) -> str:
        match self:
            case RiverId.ST_MARYS:
                return "St. Marys"
            case RiverId.ST_CLAIR:
                return "St. Clair"
            case RiverId.DETROIT:
                return "Detroit"
            case RiverId.NIAGARA:
                return "Niagara"
            case RiverId.ST_LAWRENCE:
                return "St. Lawrence"
            case RiverId.OTTAWA:
                return "Ottawa"
            case RiverId.MONTREAL:
                return "St. Lawrence at Montreal"

    @property
    def is_routed(self) -> bool:
        """
        Routed rivers move water between lakes (or out of Ontario).
        The others are gauges we only ever read.
        """
        return self not in (RiverId.OTTAWA, RiverId.MONTREAL)


ROUTED_RIVERS: tuple[RiverId, ...] = tuple(r for r in RiverId if r.is_routed)
EXOGENOUS_RIVERS: tuple[RiverId, ...] = (RiverId.OTTAWA, RiverId.MONTREAL)

_MONTH_RE = re.compile(r"^\s*(\d{4})-(\d{1,2})\s*$")


class MonthStamp(FrozenModel):
    year: int
    month: int

    @model_validator(mode="before")
    @classmethod
    def _from_text(cls, data: Any) -> Any:
        if isinstance(data, str):
            m = _MONTH_RE.match(data)
            if m is None:
                raise ValueError(f"Invalid month stamp '{data}', expected YYYY-MM")
            return {"year": int(m.group(1)), "month": int(m.group(2))}
        return data

    @model_validator(mode="after")
    def _check_month(self) -> Self:
        if not 1 <= self.month <= 12:
            raise ValueError(f"Month must be within 1..12, got {self.month}")
        return self

    @model_serializer
    def _as_text(self) -> str:
        return str(self)

    @classmethod
    def parse(cls, text: str) -> "MonthStamp":
        return cls.model_validate(text)

    @classmethod
    def from_index(cls, index: int) -> "MonthStamp":
        return cls(year=index // 12, month=index % 12 + 1)

    @property
    def index(self) -> int:
        """Months since year 0, handy for differences."""
        return self.year * 12 + self.month - 1

    @property
    def calendar_index(self) -> int:
        """0 for January .. 11 for December."""
        return self.month - 1

    def shift(self, months: int) -> "MonthStamp":
        return MonthStamp.from_index(self.index + months)

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    def __lt__(self, other: "MonthStamp") -> bool:
        return self.index < other.index

    def __le__(self, other: "MonthStamp") -> bool:
        return self.index <= other.index


class OutlierRule(StrEnum):
    THREE_SIGMA = "three_sigma"
    IQR = "iqr"


class MonthlySeries(FrozenModel):
    """
    Values at consecutive months starting at `start`.

    NaN marks a sample dropped by outlier cleaning; `cleaned_by` records the
    rule that dropped it.
    """

    start: MonthStamp
    values: tuple[float, ...]
    cleaned_by: OutlierRule | None = None

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, index: int) -> float:
        return self.values[index]

    @property
    def end(self) -> MonthStamp:
        return self.start.shift(len(self.values) - 1)

    def stamp(self, i: int) -> MonthStamp:
        return self.start.shift(i)

    def calendar_index(self, i: int) -> int:
        return (self.start.calendar_index + i) % 12

    def array(self) -> NDArray[np.float64]:
        return np.asarray(self.values, dtype=np.float64)

    def is_aligned_with(self, other: "MonthlySeries") -> bool:
        return self.start == other.start and len(self) == len(other)

    def slice(self, start: int, stop: int | None = None) -> "MonthlySeries":
        values = self.values[start:stop]
        return MonthlySeries(
            start=self.start.shift(start), values=values, cleaned_by=self.cleaned_by
        )

    def extended(self, values: Sequence[float]) -> "MonthlySeries":
        return MonthlySeries(
            start=self.start,
            values=self.values + tuple(float(v) for v in values),
            cleaned_by=self.cleaned_by,
        )

    @classmethod
    def from_array(
        cls, start: MonthStamp, values: Sequence[float] | NDArray[np.float64]
    ) -> "MonthlySeries":
        return cls(start=start, values=tuple(float(v) for v in values))


class LakeSpec(FrozenModel):
    id: LakeId
    area_m2: PositiveFloat
    initial_level_m: PositiveFloat


class EdgeSpec(FrozenModel):
    id: RiverId
    source: LakeId | None
    target: LakeId | None
    """None means the water leaves the chain."""
    controllable: bool = False
    min_flow: NonNegativeFloat | None = None
    max_flow: PositiveFloat | None = None
    delay_months: Literal[1] = 1

    @model_validator(mode="after")
    def _check_bounds(self) -> Self:
        if not self.id.is_routed:
            raise ValueError(f"River '{self.id}' is a gauge, not a routed edge")
        if (
            self.min_flow is not None
            and self.max_flow is not None
            and self.min_flow >= self.max_flow
        ):
            raise ValueError(
                f"Edge {self.id}: min_flow {self.min_flow} must be below max_flow {self.max_flow}"
            )
        if not self.controllable and (
            self.min_flow is not None or self.max_flow is not None
        ):
            raise ValueError(f"Edge {self.id} is not controllable but has bounds")
        return self

    @property
    def has_bounds(self) -> bool:
        return self.min_flow is not None and self.max_flow is not None


_CHAIN: dict[RiverId, tuple[LakeId, LakeId | None]] = {
    RiverId.ST_MARYS: (LakeId.SUPERIOR, LakeId.MICHIGAN_HURON),
    RiverId.ST_CLAIR: (LakeId.MICHIGAN_HURON, LakeId.ST_CLAIR),
    RiverId.DETROIT: (LakeId.ST_CLAIR, LakeId.ERIE),
    RiverId.NIAGARA: (LakeId.ERIE, LakeId.ONTARIO),
    RiverId.ST_LAWRENCE: (LakeId.ONTARIO, None),
}


class NetworkTopology(FrozenModel):
    month_days: PositiveFloat = DEFAULT_MONTH_DAYS
    lakes: tuple[LakeSpec, ...]
    edges: tuple[EdgeSpec, ...]

    @model_validator(mode="after")
    def _check_chain(self) -> Self:
        lake_ids = [lake.id for lake in self.lakes]
        if sorted(lake_ids) != sorted(LAKE_ORDER):
            raise ValueError(
                f"Topology needs each of the five lakes exactly once, got {lake_ids}"
            )
        edge_ids = [edge.id for edge in self.edges]
        if sorted(edge_ids) != sorted(ROUTED_RIVERS):
            raise ValueError(
                f"Topology needs each routed river exactly once, got {edge_ids}"
            )
        for edge in self.edges:
            if (edge.source, edge.target) != _CHAIN[edge.id]:
                raise ValueError(
                    f"Edge {edge.id} must run {_CHAIN[edge.id][0]} -> {_CHAIN[edge.id][1]}, "
                    f"got {edge.source} -> {edge.target}"
                )
        return self

    @property
    def month_seconds(self) -> float:
        return self.month_days * SECONDS_PER_DAY

    def lake(self, lake_id: LakeId) -> LakeSpec:
        for lake in self.lakes:
            if lake.id == lake_id:
                return lake
        raise KeyError(lake_id)

    def edge(self, river: RiverId) -> EdgeSpec:
        for edge in self.edges:
            if edge.id == river:
                return edge
        raise KeyError(river)

    @property
    def ordered_lakes(self) -> tuple[LakeSpec, ...]:
        return tuple(self.lake(lake_id) for lake_id in LAKE_ORDER)

    @property
    def ordered_edges(self) -> tuple[EdgeSpec, ...]:
        return tuple(self.edge(river) for river in ROUTED_RIVERS)

    @property
    def controllable(self) -> tuple[RiverId, ...]:
        return tuple(e.id for e in self.ordered_edges if e.controllable)

    @property
    def fitted(self) -> tuple[RiverId, ...]:
        """Uncontrolled edges, whose flow follows the source lake's level."""
        return tuple(e.id for e in self.ordered_edges if not e.controllable)

    def inflows(self, lake_id: LakeId) -> tuple[RiverId, ...]:
        return tuple(e.id for e in self.ordered_edges if e.target == lake_id)

    def outflows(self, lake_id: LakeId) -> tuple[RiverId, ...]:
        return tuple(e.id for e in self.ordered_edges if e.source == lake_id)

    def bounds(self, river: RiverId) -> tuple[float, float]:
        edge = self.edge(river)
        if edge.min_flow is None or edge.max_flow is None:
            raise PreconditionError(
                f"Controllable river '{river}' has no flow bounds; "
                "supply them or derive them from historical means"
            )
        return edge.min_flow, edge.max_flow

    def with_bounds_from_means(self, means: Mapping[RiverId, float]) -> "NetworkTopology":
        """
        Fill in missing bounds of controllable edges as 0.5x..1.5x the historical mean.
        """
        low, high = DEFAULT_BOUND_FRACTIONS
        edges: list[EdgeSpec] = []
        for edge in self.edges:
            if edge.controllable and not edge.has_bounds:
                if edge.id not in means or means[edge.id] <= 0:
                    raise PreconditionError(
                        f"Need a positive historical mean flow for '{edge.id}' to derive bounds"
                    )
                mean = means[edge.id]
                edge = edge.model_copy(
                    update={
                        "min_flow": edge.min_flow if edge.min_flow is not None else low * mean,
                        "max_flow": edge.max_flow if edge.max_flow is not None else high * mean,
                    }
                )
            edges.append(edge)
        return self.model_copy(update={"edges": tuple(edges)})

    def with_area(self, lake_id: LakeId, area_m2: float) -> "NetworkTopology":
        lakes = tuple(
            lake.model_copy(update={"area_m2": area_m2}) if lake.id == lake_id else lake
            for lake in self.lakes
        )
        return self.model_copy(update={"lakes": lakes})


class LakeState(FrozenModel):
    """
    Levels at the start of run month `month` together with the flows of the
    month before it.
    """

    month: NonNegativeInt
    levels: dict[LakeId, PositiveFloat]
    flows: dict[RiverId, NonNegativeFloat]

    @model_validator(mode="after")
    def _check(self) -> Self:
        missing = [lake for lake in LAKE_ORDER if lake not in self.levels]
        if missing:
            raise ValueError(f"State is missing levels for {missing}")
        for lake, level in self.levels.items():
            if not math.isfinite(level):
                raise ValueError(f"Level of lake {lake} is not finite: {level}")
        for river, flow in self.flows.items():
            if not math.isfinite(flow):
                raise ValueError(f"Flow of river {river} is not finite: {flow}")
        return self

    def level_vector(self) -> list[float]:
        return [self.levels[lake] for lake in LAKE_ORDER]


class FlowCoefficient(FrozenModel):
    """
    flow = max(0, slope * 1e3 * level + intercept * 1e5)
    """

    slope: PositiveFloat
    intercept: float
    r_squared: float | None = None
    samples: PositiveInt | None = None

    @property
    def slope_si(self) -> float:
        return self.slope * SLOPE_UNIT

    @property
    def intercept_si(self) -> float:
        return self.intercept * INTERCEPT_UNIT

    @property
    def zero_flow_level(self) -> float:
        return -self.intercept_si / self.slope_si


class FlowCoefficients(FrozenModel):
    entries: dict[RiverId, FlowCoefficient]

    @model_validator(mode="after")
    def _check_rivers(self) -> Self:
        for river in self.entries:
            if not river.is_routed or river == RiverId.ST_LAWRENCE:
                raise ValueError(f"No level-flow relation is defined for river '{river}'")
        return self

    def __getitem__(self, river: RiverId) -> FlowCoefficient:
        return self.entries[river]

    def __contains__(self, river: object) -> bool:
        return river in self.entries

    @classmethod
    def published(cls) -> "FlowCoefficients":
        """
        Rating relations fitted to the 2006-2016 record of the International
        Great Lakes Datum stations.
        """
        return cls(
            entries={
                RiverId.ST_MARYS: FlowCoefficient(slope=1.69, intercept=-3.0744),
                RiverId.ST_CLAIR: FlowCoefficient(slope=1.97, intercept=-3.3980),
                RiverId.DETROIT: FlowCoefficient(slope=1.51, intercept=-2.6076),
                RiverId.NIAGARA: FlowCoefficient(slope=2.09, intercept=-3.5799),
            }
        )


class ControlPlan(FrozenModel):
    """
    Monthly releases for every controllable river over a planning horizon.
    """

    releases: dict[RiverId, tuple[NonNegativeFloat, ...]]

    @model_validator(mode="after")
    def _check(self) -> Self:
        if not self.releases:
            raise ValueError("A control plan needs at least one controlled river")
        lengths = {len(v) for v in self.releases.values()}
        if len(lengths) != 1:
            raise ValueError(f"All rivers must share one horizon, got lengths {lengths}")
        if lengths == {0}:
            raise ValueError("Control plan horizon must be at least one month")
        for river, values in self.releases.items():
            if not all(math.isfinite(v) for v in values):
                raise ValueError(f"Non-finite release for river {river}")
        return self

    @property
    def horizon(self) -> int:
        return len(next(iter(self.releases.values())))

    @property
    def rivers(self) -> tuple[RiverId, ...]:
        return tuple(r for r in ROUTED_RIVERS if r in self.releases)

    def at(self, t: int) -> dict[RiverId, float]:
        return {river: values[t] for river, values in self.releases.items()}

    def head(self, months: int) -> "ControlPlan":
        return ControlPlan(releases={r: v[:months] for r, v in self.releases.items()})

    def to_vector(self) -> NDArray[np.float64]:
        """Releases laid out river by river in routing order."""
        return np.concatenate(
            [np.asarray(self.releases[r], dtype=np.float64) for r in self.rivers]
        )

    @classmethod
    def from_vector(
        cls, vector: NDArray[np.float64], rivers: Sequence[RiverId], horizon: int
    ) -> "ControlPlan":
        if vector.shape != (len(rivers) * horizon,):
            raise ValueError(
                f"Vector of shape {vector.shape} does not fit {len(rivers)} rivers x {horizon} months"
            )
        return cls(
            releases={
                river: tuple(float(v) for v in vector[i * horizon : (i + 1) * horizon])
                for i, river in enumerate(rivers)
            }
        )

    @classmethod
    def constant(
        cls, values: Mapping[RiverId, float], horizon: int
    ) -> "ControlPlan":
        return cls(releases={r: (float(v),) * horizon for r, v in values.items()})


class IndicatorSeries(FrozenModel):
    """
    Lumped monthly water-supply indicator per lake, in m^3 per month:
    everything the routed flows do not explain (precipitation, runoff,
    evaporation, diversions).
    """

    series: dict[LakeId, MonthlySeries]

    @model_validator(mode="after")
    def _check_aligned(self) -> Self:
        missing = [lake for lake in LAKE_ORDER if lake not in self.series]
        if missing:
            raise ValueError(f"Indicators missing for lakes {missing}")
        first = self.series[LAKE_ORDER[0]]
        for lake, s in self.series.items():
            if not s.is_aligned_with(first):
                raise ValueError(
                    f"Indicator series for lake {lake} is not aligned with lake {LAKE_ORDER[0]}"
                )
        return self

    @property
    def start(self) -> MonthStamp:
        return self.series[LAKE_ORDER[0]].start

    def __len__(self) -> int:
        return len(self.series[LAKE_ORDER[0]])

    def __getitem__(self, lake: LakeId) -> MonthlySeries:
        return self.series[lake]

    def matrix(self) -> NDArray[np.float64]:
        """Shape (lakes, months)."""
        return np.vstack([self.series[lake].array() for lake in LAKE_ORDER])

    def slice(self, start: int, stop: int | None = None) -> "IndicatorSeries":
        return IndicatorSeries(
            series={lake: s.slice(start, stop) for lake, s in self.series.items()}
        )

    def extended(self, month_values: Mapping[LakeId, float]) -> "IndicatorSeries":
        return IndicatorSeries(
            series={
                lake: s.extended([month_values[lake]]) for lake, s in self.series.items()
            }
        )

    @classmethod
    def from_matrix(
        cls, start: MonthStamp, matrix: NDArray[np.float64]
    ) -> "IndicatorSeries":
        return cls(
            series={
                lake: MonthlySeries.from_array(start, matrix[i])
                for i, lake in enumerate(LAKE_ORDER)
            }
        )


class CleaningReport(FrozenModel):
    series_id: str
    rule: OutlierRule
    sample_count: NonNegativeInt
    removed: tuple[NonNegativeInt, ...]
    monthly_means: tuple[float | None, ...]

    @model_validator(mode="after")
    def _check(self) -> Self:
        if list(self.removed) != sorted(set(self.removed)):
            raise ValueError("Removed indices must be sorted and unique")
        if self.removed and self.removed[-1] >= self.sample_count:
            raise ValueError("Removed index beyond the end of the series")
        if len(self.monthly_means) != 12:
            raise ValueError("Need one mean per calendar month")
        return self


class HistoricalData(FrozenModel):
    """
    Month-aligned historical record: lake levels (end of month, metres) and
    river flows (monthly mean, m^3/s).
    """

    levels: dict[LakeId, MonthlySeries]
    flows: dict[RiverId, MonthlySeries]

    @model_validator(mode="after")
    def _check_aligned(self) -> Self:
        all_series = [*self.levels.values(), *self.flows.values()]
        if not all_series:
            raise ValueError("Historical record is empty")
        first = all_series[0]
        for name, s in [*self.levels.items(), *self.flows.items()]:
            if not s.is_aligned_with(first):
                raise ValueError(
                    f"Series '{name}' covers {s.start}..{s.end}, expected {first.start}..{first.end}"
                )
        return self

    @property
    def start(self) -> MonthStamp:
        return next(iter([*self.levels.values(), *self.flows.values()])).start

    def __len__(self) -> int:
        return len(next(iter([*self.levels.values(), *self.flows.values()])))

    def level(self, lake: LakeId) -> MonthlySeries:
        try:
            return self.levels[lake]
        except KeyError:
            raise PreconditionError(f"History has no level series for lake {lake}")

    def flow(self, river: RiverId) -> MonthlySeries:
        try:
            return self.flows[river]
        except KeyError:
            raise PreconditionError(f"History has no flow series for river '{river}'")


class Trajectory(FrozenModel):
    """
    states[0] is the initial state, states[t + 1] the state after month t.
    A zero-month trajectory holds the initial state alone and no plan.
    """

    start: MonthStamp
    states: tuple[LakeState, ...]
    plan: ControlPlan | None
    indicators: IndicatorSeries
    exogenous: dict[RiverId, tuple[float, ...]] = {}

    @model_validator(mode="after")
    def _check(self) -> Self:
        if not self.states:
            raise ValueError("A trajectory needs at least its initial state")
        horizon = len(self.states) - 1
        planned = self.plan.horizon if self.plan is not None else 0
        if planned != horizon:
            raise ValueError(
                f"{len(self.states)} states do not match a {planned} month plan"
            )
        first = self.states[0].month
        for i, state in enumerate(self.states):
            if state.month != first + i:
                raise ValueError(f"State months are not contiguous at position {i}")
        for river, values in self.exogenous.items():
            if len(values) != horizon:
                raise ValueError(f"Exogenous series '{river}' does not span the horizon")
        return self

    @property
    def horizon(self) -> int:
        return len(self.states) - 1

    def levels(self, lake: LakeId) -> list[float]:
        """Level samples at the close of each simulated month."""
        return [s.levels[lake] for s in self.states[1:]]

    def flows(self, river: RiverId) -> list[float]:
        return [s.flows[river] for s in self.states[1:]]

    def level_matrix(self) -> NDArray[np.float64]:
        return np.array(
            [[s.levels[lake] for s in self.states[1:]] for lake in LAKE_ORDER],
            dtype=np.float64,
        )
