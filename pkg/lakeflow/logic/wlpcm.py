"""
Water-level prediction and control: receding-horizon planning of the dammed
releases, closed against a truth model month by month.
"""

from abc import ABC, abstractmethod
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

from loguru import logger
import numpy as np
from numpy.typing import NDArray

from lakeflow.contracts.control_models import (
    AnnealConfig,
    ControllerKind,
    GradeBaselines,
    GradeSummary,
    LakeGrade,
    MpcConfig,
    MpcRunRecord,
    MpcStepRecord,
    ObjectiveMode,
    OntarioGrade,
    Scenario,
    StakeholderConstraints,
)
from lakeflow.contracts.errors import LakeflowError, MpcRunError, PreconditionError
from lakeflow.contracts.models import (
    EXOGENOUS_RIVERS,
    LAKE_ORDER,
    ControlPlan,
    IndicatorSeries,
    LakeId,
    LakeState,
    MonthStamp,
    NetworkTopology,
    RiverId,
)
from lakeflow.logic.annealer import AnnealResult, Box, anneal_restarts
from lakeflow.logic.grading import WINDOW, NetworkGrader, summarize_grades
from lakeflow.logic.hydronet import LakeNetwork, step
from lakeflow.logic.indicators import forecast_indicator

type FloatArray = NDArray[np.float64]

TAIL = WINDOW - 1


@dataclass(frozen=True)
class RecentHistory:
    """
    Realized monthly record (oldest first) used to fill grading windows that
    reach back before the planning horizon.
    """

    levels: FloatArray
    """lakes x months"""
    st_lawrence: FloatArray
    ottawa: FloatArray
    montreal: FloatArray

    def __post_init__(self) -> None:
        n = self.levels.shape[1]
        if self.levels.shape[0] != len(LAKE_ORDER):
            raise PreconditionError("Recent history needs one level row per lake")
        if n < TAIL:
            raise PreconditionError(f"Recent history needs at least {TAIL} months, got {n}")
        for name, arr in (
            ("St. Lawrence", self.st_lawrence),
            ("Ottawa", self.ottawa),
            ("Montreal", self.montreal),
        ):
            if arr.shape != (n,):
                raise PreconditionError(f"{name} record does not match the level record")

    def __len__(self) -> int:
        return self.levels.shape[1]

    def tail(self) -> "RecentHistory":
        return RecentHistory(
            levels=self.levels[:, -TAIL:],
            st_lawrence=self.st_lawrence[-TAIL:],
            ottawa=self.ottawa[-TAIL:],
            montreal=self.montreal[-TAIL:],
        )

    def appended(
        self, state: LakeState, ottawa: float, montreal: float
    ) -> "RecentHistory":
        column = np.array([[state.levels[lake]] for lake in LAKE_ORDER])
        return RecentHistory(
            levels=np.hstack([self.levels, column]),
            st_lawrence=np.append(self.st_lawrence, state.flows.get(RiverId.ST_LAWRENCE, 0.0)),
            ottawa=np.append(self.ottawa, ottawa),
            montreal=np.append(self.montreal, montreal),
        )


class HorizonObjective:
    """
    Mean network grade over the rolling 12-month windows that end inside the
    horizon, for a flat vector of releases (river by river). With `final_only`
    only the window closing the horizon counts.
    """

    def __init__(
        self,
        network: LakeNetwork,
        grader: NetworkGrader,
        levels: Sequence[float],
        forecast: FloatArray,
        recent: RecentHistory,
        gauges: Mapping[RiverId, Sequence[float]] | None = None,
        final_only: bool = False,
    ):
        self.network = network
        self.final_only = final_only
        self.grader = grader
        self.levels = list(levels)
        self.forecast = forecast
        self.horizon = forecast.shape[1]
        self.rivers = network.controllable
        self.tail = recent.tail()
        if grader.grades_ontario:
            if RiverId.ST_LAWRENCE not in self.rivers:
                raise PreconditionError("Ontario objective needs the St. Lawrence to be controllable")
            if gauges is None or any(g not in gauges for g in EXOGENOUS_RIVERS):
                raise PreconditionError("Ontario objective needs Ottawa and Montreal forecasts")
            self._e_row = self.rivers.index(RiverId.ST_LAWRENCE)
            self._ottawa = np.asarray(gauges[RiverId.OTTAWA][: self.horizon], dtype=np.float64)
            self._montreal = np.asarray(gauges[RiverId.MONTREAL][: self.horizon], dtype=np.float64)

    def box(self) -> Box:
        lower = np.concatenate(
            [np.full(self.horizon, self.network.bounds(r)[0]) for r in self.rivers]
        )
        upper = np.concatenate(
            [np.full(self.horizon, self.network.bounds(r)[1]) for r in self.rivers]
        )
        return Box(lower=lower, upper=upper)

    def __call__(self, x: FloatArray) -> float:
        releases = x.reshape(len(self.rivers), self.horizon)
        levels = self.network.run_levels(self.levels, releases, self.forecast)
        full = np.hstack([self.tail.levels, levels])
        if not self.grader.grades_ontario:
            return self._reduce(self.grader.window_totals(full))

        e = releases[self._e_row]
        st_lawrence = np.concatenate([self.tail.st_lawrence, e])
        residuals = np.concatenate(
            [
                self.grader.residuals(self.tail.montreal, self.tail.ottawa, self.tail.st_lawrence),
                self.grader.residuals(self._montreal, self._ottawa, e),
            ]
        )
        return self._reduce(self.grader.window_totals(full, st_lawrence, residuals))

    def _reduce(self, totals: FloatArray) -> float:
        return float(totals[-1]) if self.final_only else float(totals.mean())


def gauge_forecast(
    climatology: Mapping[RiverId, Sequence[float]], start: MonthStamp, horizon: int
) -> dict[RiverId, list[float]]:
    """
    Ottawa and Montreal are not forecast from trends; the calendar-month mean stands in.
    """
    return {
        river: [monthly[start.shift(k).calendar_index] for k in range(horizon)]
        for river, monthly in climatology.items()
    }


def passthrough_plan(
    monthly_means: Mapping[RiverId, Sequence[float]],
    start: MonthStamp,
    horizon: int,
    network: LakeNetwork,
) -> ControlPlan:
    """
    Release each river's historical mean for the calendar month, inside its bounds.
    """
    releases: dict[RiverId, tuple[float, ...]] = {}
    for river in network.controllable:
        if river not in monthly_means:
            raise PreconditionError(f"No historical monthly means for river '{river}'")
        low, high = network.bounds(river)
        values = [monthly_means[river][start.shift(k).calendar_index] for k in range(horizon)]
        clipped = [min(max(v, low), high) for v in values]
        if clipped != values:
            logger.warning(
                "Passthrough releases of river '{}' clipped to [{}, {}]", river, low, high
            )
        releases[river] = tuple(clipped)
    return ControlPlan(releases=releases)


def plan_horizon(
    state: LakeState,
    forecast: IndicatorSeries,
    constraints: StakeholderConstraints,
    baselines: GradeBaselines,
    network: LakeNetwork,
    recent: RecentHistory,
    config: MpcConfig,
    anneal_config: AnnealConfig,
    initial: ControlPlan,
    gauges: Mapping[RiverId, Sequence[float]] | None = None,
) -> tuple[ControlPlan, float]:
    """
    Anneal the releases of the next `config.horizon` months against the
    forecast, starting from `initial`. Returns the plan and its predicted score.
    """
    if len(forecast) < config.horizon:
        raise PreconditionError(
            f"Forecast covers {len(forecast)} months, horizon is {config.horizon}"
        )
    if initial.horizon != config.horizon:
        raise PreconditionError("Initial plan does not span the horizon")
    grader = NetworkGrader(constraints, baselines, config.objective)
    objective = HorizonObjective(
        network,
        grader,
        state.level_vector(),
        forecast.matrix()[:, : config.horizon],
        recent,
        gauges,
    )
    result = anneal_restarts(objective, initial.to_vector(), objective.box(), anneal_config)
    plan = ControlPlan.from_vector(result.best, objective.rivers, config.horizon)
    return plan, result.best_score


def optimize_plan(
    scenario: Scenario,
    constraints: StakeholderConstraints,
    recent: RecentHistory,
    anneal_config: AnnealConfig,
    mode: ObjectiveMode = ObjectiveMode.BASIC,
) -> tuple[ControlPlan, AnnealResult]:
    """
    Open-loop optimization of a whole scenario year with its indicators known,
    starting from the scenario's own plan. Scores the grade of the closing
    12 months, as `grade_network` would.
    """
    network = LakeNetwork(scenario.topology, scenario.coefficients)
    objective = HorizonObjective(
        network,
        NetworkGrader(constraints, scenario.baselines, mode),
        scenario.initial.level_vector(),
        scenario.indicators.matrix()[:, : scenario.horizon],
        recent,
        scenario.exogenous,
        final_only=True,
    )
    if scenario.plan.rivers != objective.rivers:
        raise PreconditionError(
            f"Scenario plan controls {scenario.plan.rivers}, network controls {objective.rivers}"
        )
    result = anneal_restarts(objective, scenario.plan.to_vector(), objective.box(), anneal_config)
    logger.info(
        "Optimized '{}': {:.4f} from {:.4f} in {} evaluations",
        scenario.name,
        result.best_score,
        result.initial_score,
        result.trace.evaluations,
    )
    return ControlPlan.from_vector(result.best, objective.rivers, scenario.horizon), result


@dataclass(frozen=True)
class TruthSimulator:
    """
    Stands in for the real lakes: true indicators and gauges, run month by month.
    """

    network: LakeNetwork
    indicators: IndicatorSeries
    gauges: Mapping[RiverId, Sequence[float]]

    @property
    def months(self) -> int:
        return len(self.indicators)

    def advance(self, state: LakeState, controls: Mapping[RiverId, float], t: int) -> LakeState:
        if t >= self.months:
            raise PreconditionError(f"Truth model covers {self.months} months, month {t} requested")
        return step(
            state,
            controls,
            {lake: self.indicators[lake][t] for lake in LAKE_ORDER},
            self.network,
        )

    def gauge(self, river: RiverId, t: int) -> float:
        values = self.gauges.get(river)
        return float(values[t]) if values is not None else 0.0


def realized_indicator(
    before: LakeState, after: LakeState, topology: NetworkTopology
) -> dict[LakeId, float]:
    """
    Indicator inferred from a realized month, as it would be from measurements.
    """
    ms = topology.month_seconds
    out: dict[LakeId, float] = {}
    for lake in topology.ordered_lakes:
        inflow = sum(after.flows[r] for r in topology.inflows(lake.id))
        outflow = sum(after.flows[r] for r in topology.outflows(lake.id))
        out[lake.id] = lake.area_m2 * (
            after.levels[lake.id] - before.levels[lake.id]
        ) - (inflow - outflow) * ms
    return out


@dataclass(frozen=True)
class MpcSetup:
    network: LakeNetwork
    constraints: StakeholderConstraints
    baselines: GradeBaselines
    indicator_history: IndicatorSeries
    recent: RecentHistory
    passthrough_means: Mapping[RiverId, Sequence[float]]
    gauge_climatology: Mapping[RiverId, Sequence[float]]


@dataclass(frozen=True)
class PlanRequest:
    state: LakeState
    stamp: MonthStamp
    forecast: IndicatorSeries
    recent: RecentHistory
    gauges: dict[RiverId, list[float]]


class Controller(ABC):
    kind: ControllerKind

    def __init__(self, setup: MpcSetup, config: MpcConfig, anneal_config: AnnealConfig):
        self.setup = setup
        self.config = config
        self.anneal_config = anneal_config

    def passthrough(self, request: PlanRequest) -> ControlPlan:
        return passthrough_plan(
            self.setup.passthrough_means, request.stamp, self.config.horizon, self.setup.network
        )

    def score(self, request: PlanRequest, plan: ControlPlan) -> float:
        objective = HorizonObjective(
            self.setup.network,
            NetworkGrader(self.setup.constraints, self.setup.baselines, self.config.objective),
            request.state.level_vector(),
            request.forecast.matrix()[:, : self.config.horizon],
            request.recent,
            request.gauges,
        )
        return objective(plan.to_vector())

    @abstractmethod
    def plan(self, request: PlanRequest) -> tuple[ControlPlan, float]: ...


class AnnealingController(Controller):
    kind = ControllerKind.WLPCM

    def plan(self, request: PlanRequest) -> tuple[ControlPlan, float]:
        return plan_horizon(
            request.state,
            request.forecast,
            self.setup.constraints,
            self.setup.baselines,
            self.setup.network,
            request.recent,
            self.config,
            self.anneal_config,
            initial=self.passthrough(request),
            gauges=request.gauges,
        )


class PassthroughController(Controller):
    kind = ControllerKind.PASSTHROUGH

    def plan(self, request: PlanRequest) -> tuple[ControlPlan, float]:
        plan = self.passthrough(request)
        return plan, self.score(request, plan)


_controller_factories: dict[
    ControllerKind, Callable[[MpcSetup, MpcConfig, AnnealConfig], Controller]
] = {
    ControllerKind.WLPCM: AnnealingController,
    ControllerKind.PASSTHROUGH: PassthroughController,
}


def make_controller(
    kind: ControllerKind, setup: MpcSetup, config: MpcConfig, anneal_config: AnnealConfig
) -> Controller:
    return _controller_factories[kind](setup, config, anneal_config)


def _lake_grades(grader: NetworkGrader, recent: RecentHistory) -> dict[LakeId, LakeGrade]:
    g_level, g_fluct, mean, std = grader.lake_scores(recent.levels[:, -WINDOW:])
    return {
        lake: LakeGrade(
            level=float(g_level[i, 0]),
            fluctuation=float(g_fluct[i, 0]),
            mean_level=float(mean[i, 0]),
            std_level=float(std[i, 0]),
        )
        for i, lake in enumerate(LAKE_ORDER)
    }


def _ontario_grader(setup: MpcSetup, truth: TruthSimulator) -> NetworkGrader | None:
    if setup.constraints.ontario is None or setup.baselines.st_lawrence is None:
        return None
    missing = [str(g) for g in EXOGENOUS_RIVERS if g not in truth.gauges]
    if missing:
        logger.warning(
            "Truth model has no {} gauge, monthly Ontario grades are left out", ", ".join(missing)
        )
        return None
    return NetworkGrader(setup.constraints, setup.baselines, ObjectiveMode.ONTARIO)


def _ontario_grade(grader: NetworkGrader | None, recent: RecentHistory) -> OntarioGrade | None:
    if grader is None:
        return None
    residuals = grader.residuals(
        recent.montreal[-WINDOW:], recent.ottawa[-WINDOW:], recent.st_lawrence[-WINDOW:]
    )
    return grader.report(recent.levels, recent.st_lawrence, residuals).ontario


def mpc_run(
    initial: LakeState,
    start: MonthStamp,
    truth: TruthSimulator,
    setup: MpcSetup,
    config: MpcConfig,
    anneal_config: AnnealConfig,
    months: int,
    controller: ControllerKind = ControllerKind.WLPCM,
) -> MpcRunRecord:
    """
    Closed loop: forecast, plan, apply the first `apply_window` months to the
    truth model, learn the realized indicators, repeat.

    Plans only ever see indicators realized before the month they control.
    """
    if months < 1:
        raise PreconditionError(f"Run length must be at least one month, got {months}")
    if months > truth.months:
        raise PreconditionError(
            f"Truth model covers {truth.months} months, run asks for {months}"
        )
    if config.objective == ObjectiveMode.ONTARIO and any(
        g not in truth.gauges or g not in setup.gauge_climatology for g in EXOGENOUS_RIVERS
    ):
        raise PreconditionError("Ontario objective needs Ottawa and Montreal gauges")

    ctrl = make_controller(controller, setup, config, anneal_config)
    lake_grader = NetworkGrader(setup.constraints, setup.baselines, ObjectiveMode.BASIC)
    ontario_grader = _ontario_grader(setup, truth)
    topology = setup.network.topology

    record = MpcRunRecord(controller=controller, start=start, initial=initial)
    steps: list[MpcStepRecord] = []
    state = initial
    history = setup.indicator_history
    recent = setup.recent
    t = 0
    plan_step = 0
    try:
        while t < months:
            stamp = start.shift(t)
            forecast = forecast_indicator(history, config.horizon)
            request = PlanRequest(
                state=state,
                stamp=stamp,
                forecast=forecast,
                recent=recent,
                gauges=gauge_forecast(setup.gauge_climatology, stamp, config.horizon),
            )
            plan, score = ctrl.plan(request)
            planned = setup.network.run_levels(
                state.level_vector(),
                plan.to_vector().reshape(len(plan.rivers), plan.horizon),
                forecast.matrix()[:, : config.horizon],
            )
            logger.debug("{} {}: planned score {:.4f}", controller, stamp, score)

            for j in range(min(config.apply_window, months - t)):
                applied = plan.at(j)
                realized = truth.advance(state, applied, t)
                indicator = realized_indicator(state, realized, topology)
                history = history.extended(indicator)
                recent = recent.appended(
                    realized, truth.gauge(RiverId.OTTAWA, t), truth.gauge(RiverId.MONTREAL, t)
                )
                grades = _lake_grades(lake_grader, recent)
                steps.append(
                    MpcStepRecord(
                        month=t,
                        stamp=start.shift(t),
                        plan_step=plan_step,
                        forecast={
                            lake: tuple(forecast[lake].values[: config.horizon])
                            for lake in LAKE_ORDER
                        },
                        plan=plan,
                        plan_score=score,
                        applied=applied,
                        planned_levels={
                            lake: float(planned[i, j]) for i, lake in enumerate(LAKE_ORDER)
                        },
                        state=realized,
                        realized_indicator=indicator,
                        grades=grades,
                        level_grade=float(np.mean([g.level for g in grades.values()])),
                        fluctuation_grade=float(
                            np.mean([g.fluctuation for g in grades.values()])
                        ),
                        ontario=_ontario_grade(ontario_grader, recent),
                        history_length=len(history),
                    )
                )
                state = realized
                t += 1

                breach = _band_breach(config, realized)
                if breach is not None:
                    logger.warning("Emergency stop at {}: {}", start.shift(t - 1), breach)
                    record = _finish(record, steps, halted=True, reason=breach)
                    return record
            plan_step += 1
    except LakeflowError as e:
        partial = _finish(record, steps, halted=True, reason=str(e))
        raise MpcRunError(f"Closed-loop run failed at month {t}: {e}", partial) from e

    return _finish(record, steps)


def _band_breach(config: MpcConfig, state: LakeState) -> str | None:
    for lake, band in config.emergency_bands.items():
        level = state.levels[lake]
        if not band.contains(level):
            return (
                f"{lake.display_name} level {level:.3f} m left its band "
                f"[{band.low:.3f}, {band.high:.3f}]"
            )
    return None


def _finish(
    record: MpcRunRecord,
    steps: list[MpcStepRecord],
    halted: bool = False,
    reason: str | None = None,
) -> MpcRunRecord:
    summary = summarize_run(steps) if steps else None
    return record.model_copy(
        update={
            "months": tuple(steps),
            "halted": halted,
            "halt_reason": reason,
            "summary": summary,
        }
    )


def summarize_run(steps: Sequence[MpcStepRecord]) -> GradeSummary:
    """Mean, minimum and median of the monthly network G_L and G_F."""
    return summarize_grades(
        [s.level_grade for s in steps], [s.fluctuation_grade for s in steps]
    )

