"""
Seeded synthetic record and planning year, so everything runs without
external data.

Levels follow a seasonal cosine around a typical level per lake; routed
flows follow the published rating relations from the previous month's level
plus Gaussian noise. The planning year after the record carries a wet
winter and spring that the passthrough releases cannot absorb.
"""

from dataclasses import dataclass
import math

from loguru import logger
import numpy as np
from numpy.typing import NDArray

from lakeflow.contracts.control_models import (
    AnnealConfig,
    Demand,
    LakeDemand,
    LevelBand,
    MpcConfig,
    OntarioConstraints,
    Perturbation,
    PerturbationKind,
    RunConfig,
    ScenarioDocument,
    StakeholderConstraints,
)
from lakeflow.contracts.models import (
    LAKE_ORDER,
    EdgeSpec,
    FlowCoefficients,
    HistoricalData,
    LakeId,
    MonthStamp,
    MonthlySeries,
    NetworkTopology,
    RiverId,
)
from lakeflow.logic.indicators import (
    derive_flood_parameters,
    extract_network_indicators,
    monthly_baseline,
)

type FloatArray = NDArray[np.float64]

SCENARIO_NAME = "synthetic-2017"
HISTORY_START = MonthStamp(year=2006, month=1)
HISTORY_MONTHS = 132
PLAN_MONTHS = 12

HISTORY_FILE = "history.csv"
TOPOLOGY_FILE = "topology.json"
SCENARIO_FILE = "scenario.json"
CONSTRAINTS_FILE = "constraints.json"
RUN_FILE = "run.json"

LEVEL_NOISE_M = 0.005
FLOW_NOISE_M3S = 50.0
ST_CLAIR_AREA_M2 = 8.0e9
"""St. Clair is small enough that the monthly step overshoots; this keeps it stable."""

CENTER_LEVEL_M: dict[LakeId, float] = {
    LakeId.SUPERIOR: 183.4,
    LakeId.MICHIGAN_HURON: 176.4,
    LakeId.ST_CLAIR: 175.1,
    LakeId.ERIE: 174.3,
    LakeId.ONTARIO: 74.8,
}
AMPLITUDE_M: dict[LakeId, float] = {
    LakeId.SUPERIOR: 0.8,
    LakeId.MICHIGAN_HURON: 0.8,
    LakeId.ST_CLAIR: 0.8,
    LakeId.ERIE: 0.8,
    LakeId.ONTARIO: 0.3,
}
PEAK_MONTH: dict[LakeId, int] = {
    LakeId.SUPERIOR: 8,
    LakeId.MICHIGAN_HURON: 7,
    LakeId.ST_CLAIR: 6,
    LakeId.ERIE: 5,
    LakeId.ONTARIO: 5,
}
"""Calendar index (0 = January) of the seasonal high."""

ST_LAWRENCE_MEAN_M3S = 7000.0
ST_LAWRENCE_AMPLITUDE_M3S = 800.0
OTTAWA_BASE_M3S = 2000.0
OTTAWA_FRESHET_M3S = 1500.0
OTTAWA_FRESHET_PEAK = 4
NATURE_M3S = 300.0
RESIDENTS_M3S = 200.0
MONTREAL_NOISE_M3S = 100.0

BOUNDS_M3S: dict[RiverId, tuple[float, float]] = {
    RiverId.ST_MARYS: (500.0, 4500.0),
    RiverId.ST_LAWRENCE: (3500.0, 10500.0),
}

WET_ANOMALY_M3S: dict[LakeId, tuple[float, range]] = {
    LakeId.SUPERIOR: (1000.0, range(3, 7)),
    LakeId.MICHIGAN_HURON: (1500.0, range(0, 6)),
    LakeId.ERIE: (1000.0, range(1, 5)),
    LakeId.ONTARIO: (2000.0, range(0, 6)),
}
"""
Extra supply (m^3/s for a month) and the calendar months it falls in.

Ontario's surplus stays below the St. Lawrence headroom over its passthrough
release, so a controller that reacts a month late can still drain it.
"""

FRESHET_FACTOR = 1.6
FRESHET_MONTHS = range(3, 6)
EMERGENCY_MARGIN_M = 3.0


@dataclass(frozen=True)
class SyntheticBundle:
    history: HistoricalData
    topology: NetworkTopology
    scenario: ScenarioDocument
    constraints: StakeholderConstraints
    run_config: RunConfig


def synthetic_topology(base: NetworkTopology) -> NetworkTopology:
    topology = base.with_area(LakeId.ST_CLAIR, ST_CLAIR_AREA_M2)
    edges: list[EdgeSpec] = []
    for edge in topology.edges:
        if edge.id in BOUNDS_M3S:
            low, high = BOUNDS_M3S[edge.id]
            edge = edge.model_copy(
                update={"controllable": True, "min_flow": low, "max_flow": high}
            )
        edges.append(edge)
    lakes = tuple(
        lake.model_copy(update={"initial_level_m": CENTER_LEVEL_M[lake.id]})
        for lake in topology.lakes
    )
    return topology.model_copy(update={"edges": tuple(edges), "lakes": lakes})


def _seasonal(calendar: NDArray[np.int64], peak: int) -> FloatArray:
    return np.cos(2.0 * math.pi * (calendar - peak) / 12.0)


def _history(rng: np.random.Generator, topology: NetworkTopology) -> HistoricalData:
    # one month before the record so the first flows have a level to follow
    calendar = (np.arange(-1, HISTORY_MONTHS) + HISTORY_START.calendar_index) % 12
    levels: dict[LakeId, FloatArray] = {}
    for lake in LAKE_ORDER:
        levels[lake] = (
            CENTER_LEVEL_M[lake]
            + AMPLITUDE_M[lake] * _seasonal(calendar, PEAK_MONTH[lake])
            + rng.normal(0.0, LEVEL_NOISE_M, calendar.shape[0])
        )

    coefficients = FlowCoefficients.published()
    record_calendar = calendar[1:]
    flows: dict[RiverId, FloatArray] = {}
    for edge in topology.ordered_edges:
        if edge.id == RiverId.ST_LAWRENCE:
            continue
        assert edge.source is not None
        c = coefficients[edge.id]
        flows[edge.id] = (
            c.slope_si * levels[edge.source][:-1]
            + c.intercept_si
            + rng.normal(0.0, FLOW_NOISE_M3S, HISTORY_MONTHS)
        )
    flows[RiverId.ST_LAWRENCE] = (
        ST_LAWRENCE_MEAN_M3S
        + ST_LAWRENCE_AMPLITUDE_M3S * _seasonal(record_calendar, PEAK_MONTH[LakeId.ONTARIO])
        + rng.normal(0.0, FLOW_NOISE_M3S, HISTORY_MONTHS)
    )
    flows[RiverId.OTTAWA] = (
        OTTAWA_BASE_M3S
        + OTTAWA_FRESHET_M3S * np.maximum(0.0, _seasonal(record_calendar, OTTAWA_FRESHET_PEAK))
        + rng.normal(0.0, FLOW_NOISE_M3S, HISTORY_MONTHS)
    )
    flows[RiverId.MONTREAL] = (
        flows[RiverId.ST_LAWRENCE]
        + flows[RiverId.OTTAWA]
        + NATURE_M3S
        + RESIDENTS_M3S
        + rng.normal(0.0, MONTREAL_NOISE_M3S, HISTORY_MONTHS)
    )

    return HistoricalData(
        levels={
            lake: MonthlySeries.from_array(HISTORY_START, np.round(v[1:], 4))
            for lake, v in levels.items()
        },
        flows={
            river: MonthlySeries.from_array(HISTORY_START, np.round(v, 1))
            for river, v in flows.items()
        },
    )


def _planning_year(
    history: HistoricalData, topology: NetworkTopology, start: MonthStamp
) -> ScenarioDocument:
    indicators = extract_network_indicators(history, topology)
    ms = topology.month_seconds
    calendar = [start.shift(t).calendar_index for t in range(PLAN_MONTHS)]

    truth: dict[LakeId, tuple[float, ...]] = {}
    for lake in LAKE_ORDER:
        climatology = monthly_baseline(indicators[lake])
        extra, months = WET_ANOMALY_M3S.get(lake, (0.0, range(0)))
        truth[lake] = tuple(
            climatology[c] + (extra * ms if c in months else 0.0) for c in calendar
        )

    ottawa_clim = monthly_baseline(history.flow(RiverId.OTTAWA))
    montreal_clim = monthly_baseline(history.flow(RiverId.MONTREAL))
    ottawa = [
        ottawa_clim[c] * (FRESHET_FACTOR if c in FRESHET_MONTHS else 1.0) for c in calendar
    ]
    montreal = [
        montreal_clim[c] + ottawa[t] - ottawa_clim[c] for t, c in enumerate(calendar)
    ]
    return ScenarioDocument(
        name=SCENARIO_NAME,
        history=HISTORY_FILE,
        topology=TOPOLOGY_FILE,
        start=start,
        horizon=PLAN_MONTHS,
        indicators=truth,
        exogenous={
            RiverId.OTTAWA: tuple(round(v, 1) for v in ottawa),
            RiverId.MONTREAL: tuple(round(v, 1) for v in montreal),
        },
    )


def _constraints(history: HistoricalData) -> StakeholderConstraints:
    return StakeholderConstraints(
        lakes={
            lake: LakeDemand(level=Demand.MEDIUM, fluctuation=Demand.MEDIUM)
            for lake in LAKE_ORDER
        },
        ontario=OntarioConstraints(
            flood=derive_flood_parameters(history.level(LakeId.ONTARIO)),
            nature_m3s=NATURE_M3S,
            residents_m3s=RESIDENTS_M3S,
        ),
    )


def _run_config(seed: int) -> RunConfig:
    niagara = FlowCoefficients.published()[RiverId.NIAGARA]
    niagara_flow = niagara.slope_si * CENTER_LEVEL_M[LakeId.ERIE] + niagara.intercept_si
    return RunConfig(
        scenario=SCENARIO_FILE,
        constraints=CONSTRAINTS_FILE,
        seed=seed,
        anneal=AnnealConfig(
            t0=1.0,
            t_min=1e-3,
            alpha=0.95,
            iterations_per_temperature=10,
            step_fraction=0.1,
            restarts=3,
            seed=seed,
        ),
        mpc=MpcConfig(
            horizon=6,
            apply_window=1,
            emergency_bands={
                lake: LevelBand(
                    low=CENTER_LEVEL_M[lake] - EMERGENCY_MARGIN_M,
                    high=CENTER_LEVEL_M[lake] + EMERGENCY_MARGIN_M,
                )
                for lake in LAKE_ORDER
            },
        ),
        sensitivity=(
            Perturbation(kind=PerturbationKind.PRECIPITATION, delta=0.03),
            Perturbation(kind=PerturbationKind.ICE_CLOG, delta=round(0.03 * niagara_flow, 1)),
            Perturbation(kind=PerturbationKind.SNOW_PACK, delta=0.03),
            Perturbation(
                kind=PerturbationKind.DAM_FLOW,
                delta=0.03 * sum(BOUNDS_M3S[RiverId.ST_MARYS]) / 2.0,
                edge=RiverId.ST_MARYS,
            ),
            Perturbation(
                kind=PerturbationKind.DAM_FLOW,
                delta=0.03 * ST_LAWRENCE_MEAN_M3S,
                edge=RiverId.ST_LAWRENCE,
            ),
        ),
    )


def generate_synthetic(seed: int, base: NetworkTopology) -> SyntheticBundle:
    """
    A 2006-2016 record and the 2017 planning year after it, from one seed.
    """
    rng = np.random.default_rng(seed)
    topology = synthetic_topology(base)
    history = _history(rng, topology)
    scenario = _planning_year(history, topology, HISTORY_START.shift(HISTORY_MONTHS))
    logger.info(
        "Generated {} months of synthetic record and scenario '{}' (seed {})",
        HISTORY_MONTHS,
        scenario.name,
        seed,
    )
    return SyntheticBundle(
        history=history,
        topology=topology,
        scenario=scenario,
        constraints=_constraints(history),
        run_config=_run_config(seed),
    )
