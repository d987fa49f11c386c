"""
Assembly of a planning year from its document and the history before it.
"""

from dataclasses import dataclass

from loguru import logger
import numpy as np
from numpy.typing import NDArray

from lakeflow.contracts.control_models import (
    Scenario,
    ScenarioDocument,
    StakeholderConstraints,
)
from lakeflow.contracts.errors import DataError, PreconditionError
from lakeflow.contracts.models import (
    EXOGENOUS_RIVERS,
    LAKE_ORDER,
    ROUTED_RIVERS,
    FlowCoefficients,
    HistoricalData,
    IndicatorSeries,
    LakeState,
    MonthlySeries,
    NetworkTopology,
    RiverId,
)
from lakeflow.logic.grading import baselines_from_history
from lakeflow.logic.hydronet import LakeNetwork
from lakeflow.logic.indicators import (
    extract_network_indicators,
    fit_network,
    monthly_baseline,
)
from lakeflow.logic.wlpcm import (
    MpcSetup,
    RecentHistory,
    TruthSimulator,
    passthrough_plan,
)


@dataclass(frozen=True)
class PreparedScenario:
    scenario: Scenario
    history: HistoricalData
    network: LakeNetwork
    indicator_history: IndicatorSeries
    recent: RecentHistory
    passthrough_means: dict[RiverId, tuple[float, ...]]
    gauge_climatology: dict[RiverId, tuple[float, ...]]

    def recent_for(self, constraints: StakeholderConstraints) -> RecentHistory:
        """
        The recent record, provided it holds every gauge the constraints grade.

        Raises:
            DataError: Ontario constraints are set and the history lacks the
                Ottawa or Montreal gauge.
        """
        missing = [g for g in EXOGENOUS_RIVERS if g not in self.history.flows]
        if constraints.ontario is not None and missing:
            raise DataError(
                f"Ontario grading needs the {', '.join(missing)} gauge record in the history",
                subject=missing[0],
            )
        return self.recent

    def mpc_setup(self, constraints: StakeholderConstraints) -> MpcSetup:
        return MpcSetup(
            network=self.network,
            constraints=constraints,
            baselines=self.scenario.baselines,
            indicator_history=self.indicator_history,
            recent=self.recent_for(constraints),
            passthrough_means=self.passthrough_means,
            gauge_climatology=self.gauge_climatology,
        )

    def truth(self) -> TruthSimulator:
        return TruthSimulator(
            network=self.network,
            indicators=self.scenario.indicators,
            gauges=self.scenario.exogenous,
        )


def scenario_topology(
    document: ScenarioDocument, history: HistoricalData, topology: NetworkTopology
) -> NetworkTopology:
    """
    Apply the document's area overrides and derive missing dam bounds from
    the historical mean releases.
    """
    for lake, area in document.area_overrides.items():
        logger.info("Scenario '{}': area of {} set to {:.4g} m^2", document.name, lake, area)
        topology = topology.with_area(lake, area)
    means = {
        river: float(np.nanmean(history.flows[river].array()))
        for river in topology.controllable
        if river in history.flows
    }
    return topology.with_bounds_from_means(means)


def recent_history(history: HistoricalData) -> RecentHistory:
    """
    The realized record as arrays; a gauge the history lacks reads as zero.
    """
    n = len(history)

    def flow_or_zero(river: RiverId) -> NDArray[np.float64]:
        if river in history.flows:
            return history.flows[river].array()
        logger.warning("History has no '{}' gauge, its recent flows read as zero", river)
        return np.zeros(n)

    return RecentHistory(
        levels=np.vstack([history.level(lake).array() for lake in LAKE_ORDER]),
        st_lawrence=flow_or_zero(RiverId.ST_LAWRENCE),
        ottawa=flow_or_zero(RiverId.OTTAWA),
        montreal=flow_or_zero(RiverId.MONTREAL),
    )


def initial_state(history: HistoricalData) -> LakeState:
    """Last level sample of each lake, with the last month's flows."""
    return LakeState(
        month=0,
        levels={lake: history.level(lake)[-1] for lake in LAKE_ORDER},
        flows={
            river: history.flows[river][-1]
            for river in ROUTED_RIVERS
            if river in history.flows
        },
    )


def prepare_scenario(
    document: ScenarioDocument,
    history: HistoricalData,
    topology: NetworkTopology,
    coefficients: FlowCoefficients | None = None,
) -> PreparedScenario:
    """
    Everything needed to grade, optimize, perturb and run a planning year.

    The history must end the month before the year starts. Rating
    coefficients are fitted on it when none are given, and the passthrough
    releases (each calendar month's historical mean) become the scenario plan.
    """
    next_month = history.start.shift(len(history))
    if next_month != document.start:
        raise PreconditionError(
            f"Scenario '{document.name}' starts {document.start} but history ends "
            f"{history.start.shift(len(history) - 1)}"
        )

    topology = scenario_topology(document, history, topology)
    if coefficients is None:
        coefficients = fit_network(history, topology)
    network = LakeNetwork(topology, coefficients)

    passthrough_means = {
        river: monthly_baseline(history.flow(river)) for river in topology.controllable
    }
    gauge_climatology = {
        gauge: monthly_baseline(history.flows[gauge])
        for gauge in EXOGENOUS_RIVERS
        if gauge in history.flows
    }

    indicators = IndicatorSeries(
        series={
            lake: MonthlySeries.from_array(document.start, document.indicators[lake])
            for lake in LAKE_ORDER
        }
    )
    scenario = Scenario(
        name=document.name,
        start=document.start,
        topology=topology,
        coefficients=coefficients,
        initial=initial_state(history),
        plan=passthrough_plan(passthrough_means, document.start, document.horizon, network),
        indicators=indicators,
        exogenous=dict(document.exogenous),
        baselines=baselines_from_history(history),
    )
    logger.debug(
        "Prepared scenario '{}' ({} months from {})",
        scenario.name,
        scenario.horizon,
        scenario.start,
    )
    return PreparedScenario(
        scenario=scenario,
        history=history,
        network=network,
        indicator_history=extract_network_indicators(history, topology),
        recent=recent_history(history),
        passthrough_means=passthrough_means,
        gauge_climatology=gauge_climatology,
    )
