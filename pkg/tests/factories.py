from collections.abc import Mapping

import numpy as np

from lakeflow.contracts.control_models import (
    Demand,
    GradeBaselines,
    LakeDemand,
    LevelBaseline,
    Scenario,
    StakeholderConstraints,
)
from lakeflow.contracts.models import (
    LAKE_ORDER,
    ControlPlan,
    FlowCoefficient,
    FlowCoefficients,
    IndicatorSeries,
    LakeId,
    LakeState,
    MonthStamp,
    MonthlySeries,
    NetworkTopology,
    RiverId,
)
from lakeflow.infrastructure.json_file import default_topology
from lakeflow.logic.hydronet import LakeNetwork, river_flow
from lakeflow.logic.synthetic import CENTER_LEVEL_M, synthetic_topology
from lakeflow.logic.wlpcm import RecentHistory

START = MonthStamp(year=2017, month=1)
A_RELEASE = 2500.0
E_RELEASE = 7000.0


def bounded_topology() -> NetworkTopology:
    """Packaged topology with a stable St. Clair and bounds on a and e."""
    return synthetic_topology(default_topology())


def open_topology() -> NetworkTopology:
    """Bounds on a and e that admit a closed dam."""
    topology = bounded_topology()
    edges = tuple(
        edge.model_copy(update={"min_flow": 0.0}) if edge.controllable else edge
        for edge in topology.edges
    )
    return topology.model_copy(update={"edges": edges})


def dry_coefficients() -> FlowCoefficients:
    """Rating relations that never produce flow at lake-like levels."""
    dry = FlowCoefficient(slope=1.0, intercept=-1e3)
    return FlowCoefficients(
        entries={r: dry for r in (RiverId.ST_MARYS, RiverId.ST_CLAIR, RiverId.DETROIT, RiverId.NIAGARA)}
    )


def network(topology: NetworkTopology | None = None) -> LakeNetwork:
    return LakeNetwork(topology or bounded_topology(), FlowCoefficients.published())


def center_levels() -> dict[LakeId, float]:
    return dict(CENTER_LEVEL_M)


def lake_state(levels: Mapping[LakeId, float] | None = None, month: int = 0) -> LakeState:
    return LakeState(month=month, levels=dict(levels or center_levels()), flows={})


def constant_plan(months: int, a: float = A_RELEASE, e: float = E_RELEASE) -> ControlPlan:
    return ControlPlan.constant({RiverId.ST_MARYS: a, RiverId.ST_LAWRENCE: e}, months)


def constant_indicators(
    values: Mapping[LakeId, float], months: int, start: MonthStamp = START
) -> IndicatorSeries:
    return IndicatorSeries(
        series={
            lake: MonthlySeries.from_array(start, [values[lake]] * months)
            for lake in LAKE_ORDER
        }
    )


def equilibrium_indicators(
    topology: NetworkTopology | None = None,
    levels: Mapping[LakeId, float] | None = None,
    a: float = A_RELEASE,
    e: float = E_RELEASE,
) -> dict[LakeId, float]:
    """
    Per-lake supply that exactly balances the flows at `levels`, so the
    levels stay put under constant releases a and e.
    """
    topology = topology or bounded_topology()
    levels = levels or center_levels()
    coefficients = FlowCoefficients.published()
    flows = {
        RiverId.ST_MARYS: a,
        RiverId.ST_CLAIR: river_flow(levels[LakeId.MICHIGAN_HURON], coefficients[RiverId.ST_CLAIR]),
        RiverId.DETROIT: river_flow(levels[LakeId.ST_CLAIR], coefficients[RiverId.DETROIT]),
        RiverId.NIAGARA: river_flow(levels[LakeId.ERIE], coefficients[RiverId.NIAGARA]),
        RiverId.ST_LAWRENCE: e,
    }
    ms = topology.month_seconds
    out: dict[LakeId, float] = {}
    for lake in LAKE_ORDER:
        inflow = sum(flows[r] for r in topology.inflows(lake))
        outflow = sum(flows[r] for r in topology.outflows(lake))
        out[lake] = (outflow - inflow) * ms
    return out


def medium_constraints(
    overrides: Mapping[LakeId, LakeDemand] | None = None,
) -> StakeholderConstraints:
    lakes = {lake: LakeDemand(level=Demand.MEDIUM, fluctuation=Demand.MEDIUM) for lake in LAKE_ORDER}
    lakes.update(overrides or {})
    return StakeholderConstraints(lakes=lakes)


def baselines(
    h_star: Mapping[LakeId, float] | None = None,
    sigma_hat: Mapping[LakeId, float] | None = None,
) -> GradeBaselines:
    h_star = h_star or center_levels()
    sigma_hat = sigma_hat or {}
    return GradeBaselines(
        lakes={
            lake: LevelBaseline(h_star=h_star[lake], sigma_hat=sigma_hat.get(lake, 0.0))
            for lake in LAKE_ORDER
        }
    )


def flat_recent(months: int = 24, levels: Mapping[LakeId, float] | None = None) -> RecentHistory:
    levels = levels or center_levels()
    return RecentHistory(
        levels=np.array([[levels[lake]] * months for lake in LAKE_ORDER], dtype=np.float64),
        st_lawrence=np.full(months, E_RELEASE),
        ottawa=np.zeros(months),
        montreal=np.zeros(months),
    )


def equilibrium_scenario(
    months: int = 12,
    start: MonthStamp = START,
    plan: ControlPlan | None = None,
    indicators: IndicatorSeries | None = None,
    grade_baselines: GradeBaselines | None = None,
    topology: NetworkTopology | None = None,
) -> Scenario:
    """
    A planning year that, left alone, holds every lake at its typical level.
    """
    topology = topology or bounded_topology()
    return Scenario(
        name="equilibrium",
        start=start,
        topology=topology,
        coefficients=FlowCoefficients.published(),
        initial=lake_state(),
        plan=plan or constant_plan(months),
        indicators=indicators
        or constant_indicators(equilibrium_indicators(topology), months, start),
        baselines=grade_baselines or baselines(),
    )
