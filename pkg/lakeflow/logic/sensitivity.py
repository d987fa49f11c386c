"""
How much the year's grades move when the weather or a dam release is nudged.
"""

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Literal

from loguru import logger
import numpy as np
from numpy.typing import NDArray

from lakeflow.contracts.control_models import (
    DispersionMode,
    GradeReport,
    Perturbation,
    PerturbationKind,
    Scenario,
    SensitivityEntry,
    SensitivityReport,
    StakeholderConstraints,
)
from lakeflow.contracts.errors import PreconditionError
from lakeflow.contracts.models import (
    ControlPlan,
    IndicatorSeries,
    LakeId,
    RiverId,
)
from lakeflow.logic.grading import grade_network
from lakeflow.logic.hydronet import LakeNetwork, simulate

type Sign = Literal[1, -1]

JANUARY = 0
MARCH = 2

CENTRAL = "central"
ONE_SIDED = "one_sided"


def grade_scenario(scenario: Scenario, constraints: StakeholderConstraints) -> GradeReport:
    """Simulate the scenario's plan over its horizon and grade the result."""
    network = LakeNetwork(scenario.topology, scenario.coefficients)
    trajectory = simulate(
        scenario.initial,
        scenario.plan,
        scenario.indicators,
        network,
        start=scenario.start,
        exogenous=scenario.exogenous,
        offsets=scenario.flow_offsets or None,
    )
    return grade_network(trajectory, constraints, scenario.baselines)


def _months_of(scenario: Scenario, calendar_month: int) -> list[int]:
    return [
        t for t, stamp in enumerate(scenario.month_stamps())
        if stamp.calendar_index == calendar_month
    ]


def _require(months: list[int], what: str, scenario: Scenario) -> None:
    if not months:
        raise PreconditionError(
            f"Scenario '{scenario.name}' ({scenario.start}, {scenario.horizon} months) "
            f"has no {what}"
        )


def apply_perturbation(scenario: Scenario, p: Perturbation, sign: Sign) -> Scenario:
    """
    The scenario with one perturbation applied in the direction of `sign`.

    Ice clog holds the rivers back by delta in January and releases 2 delta
    in March (mirrored for the negative sign). Snow pack adds delta metres of
    March water to Superior as an indicator pulse.
    """
    if sign not in (1, -1):
        raise PreconditionError(f"Sign must be +1 or -1, got {sign}")

    match p.kind:
        case PerturbationKind.ICE_CLOG:
            january = _months_of(scenario, JANUARY)
            march = _months_of(scenario, MARCH)
            _require(january, "January for the ice clog", scenario)
            _require(march, "March for the ice clog", scenario)
        case PerturbationKind.SNOW_PACK:
            march = _months_of(scenario, MARCH)
            _require(march, "March for the snow pack", scenario)
            january = []
        case PerturbationKind.DAM_FLOW:
            assert p.edge is not None
            if p.edge not in scenario.plan.releases:
                raise PreconditionError(
                    f"River '{p.edge}' has no releases in scenario '{scenario.name}'"
                )
            january = march = []
        case PerturbationKind.PRECIPITATION:
            january = march = []

    if p.delta == 0:
        return scenario

    delta = sign * p.delta
    match p.kind:
        case PerturbationKind.PRECIPITATION:
            indicators = IndicatorSeries.from_matrix(
                scenario.indicators.start, scenario.indicators.matrix() * (1.0 + delta)
            )
            return scenario.model_copy(update={"indicators": indicators})

        case PerturbationKind.ICE_CLOG:
            shift = np.zeros(scenario.horizon)
            shift[january] = -delta
            shift[march] = 2.0 * delta
            offsets = dict(scenario.flow_offsets)
            for edge in scenario.topology.ordered_edges:
                base = np.asarray(offsets.get(edge.id, np.zeros(scenario.horizon)))
                offsets[edge.id] = tuple(float(v) for v in base + shift)
            return scenario.model_copy(update={"flow_offsets": offsets})

        case PerturbationKind.SNOW_PACK:
            matrix = scenario.indicators.matrix().copy()
            area = scenario.topology.lake(LakeId.SUPERIOR).area_m2
            row = LakeId.SUPERIOR.position
            for t in march:
                matrix[row, t] += delta * area
            indicators = IndicatorSeries.from_matrix(scenario.indicators.start, matrix)
            return scenario.model_copy(update={"indicators": indicators})

        case PerturbationKind.DAM_FLOW:
            assert p.edge is not None
            low, high = scenario.topology.bounds(p.edge)
            shifted = np.clip(np.asarray(scenario.plan.releases[p.edge]) + delta, low, high)
            releases = dict(scenario.plan.releases)
            releases[p.edge] = tuple(float(v) for v in shifted)
            return scenario.model_copy(update={"plan": ControlPlan(releases=releases)})


def dispersion(differences: NDArray[np.float64], mode: DispersionMode) -> float:
    match mode:
        case DispersionMode.RMSE:
            return float(np.sqrt(np.mean(differences**2)))
        case DispersionMode.STD:
            return float(differences.std())


def _require_delta(p: Perturbation) -> None:
    if not p.delta > 0:
        raise PreconditionError(f"Sensitivity needs a positive delta, got {p.delta}")


def sensitivity_index(
    scenario: Scenario,
    constraints: StakeholderConstraints,
    p: Perturbation,
    mode: DispersionMode = DispersionMode.RMSE,
) -> float:
    """
    Central difference: dispersion of G(+delta) - G(-delta) over every
    per-lake grade component, divided by 2 delta.
    """
    _require_delta(p)
    perturbed = [apply_perturbation(scenario, p, 1), apply_perturbation(scenario, p, -1)]
    with ThreadPoolExecutor(max_workers=2) as pool:
        plus, minus = pool.map(lambda s: grade_scenario(s, constraints), perturbed)
    diff = np.asarray(plus.component_vector()) - np.asarray(minus.component_vector())
    return dispersion(diff, mode) / (2.0 * p.delta)


def dam_sensitivity(
    scenario: Scenario,
    constraints: StakeholderConstraints,
    edge: RiverId,
    delta: float,
    mode: DispersionMode = DispersionMode.RMSE,
) -> float:
    """
    One-sided difference of the grades when the dam releases delta less.
    """
    p = Perturbation(kind=PerturbationKind.DAM_FLOW, delta=delta, edge=edge)
    _require_delta(p)
    base = grade_scenario(scenario, constraints)
    lowered = grade_scenario(apply_perturbation(scenario, p, -1), constraints)
    diff = np.asarray(base.component_vector()) - np.asarray(lowered.component_vector())
    return dispersion(diff, mode) / delta


def run_sensitivity(
    scenario: Scenario,
    constraints: StakeholderConstraints,
    perturbations: Sequence[Perturbation],
    mode: DispersionMode = DispersionMode.RMSE,
) -> SensitivityReport:
    """
    Every perturbation in order. A kind listed twice keeps its last index.
    """
    entries: list[SensitivityEntry] = []
    weather: dict[PerturbationKind, float] = {}
    dams: dict[RiverId, float] = {}
    for p in perturbations:
        if p.kind == PerturbationKind.DAM_FLOW:
            assert p.edge is not None
            value = dam_sensitivity(scenario, constraints, p.edge, p.delta, mode)
            dams[p.edge] = value
            estimator = ONE_SIDED
        else:
            value = sensitivity_index(scenario, constraints, p, mode)
            if p.kind in weather:
                logger.warning("{} listed more than once; keeping the last index", p.kind)
            weather[p.kind] = value
            estimator = CENTRAL
        logger.info("Sensitivity to {} (delta={}): {:.6g}", p.kind, p.delta, value)
        entries.append(SensitivityEntry(perturbation=p, estimator=estimator, value=value))

    rain = weather.get(PerturbationKind.PRECIPITATION, 0.0)
    ice = weather.get(PerturbationKind.ICE_CLOG, 0.0)
    snow = weather.get(PerturbationKind.SNOW_PACK, 0.0)
    return SensitivityReport(
        entries=tuple(entries),
        rain=rain,
        ice=ice,
        snow=snow,
        dams=dams,
        total=rain + ice + snow,
    )
