"""
Stakeholder grades of a year of levels and flows.

Lake grades run from 0 to 4 per component; the Ontario flood and Montreal
grades are penalties from -4 to 0. Every formula lives in one vectorized
helper so the optimizer and the reports score identically.
"""

from collections.abc import Sequence
import math

from loguru import logger
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray
from pydantic import ValidationError

from lakeflow.contracts.control_models import (
    Demand,
    FloodParameters,
    FlowBaseline,
    GradeBaselines,
    GradeReport,
    GradeSummary,
    LakeGrade,
    LevelBaseline,
    ObjectiveMode,
    OntarioGrade,
    StakeholderConstraints,
)
from lakeflow.contracts.errors import DomainError, PreconditionError
from lakeflow.contracts.models import (
    LAKE_ORDER,
    HistoricalData,
    LakeId,
    OutlierRule,
    RiverId,
    Trajectory,
)
from lakeflow.logic.hydronet import montreal_residuals
from lakeflow.logic.indicators import monthly_baseline, remove_outliers

WINDOW = 12
FLOW_GRADE_UNIT = 1000.0  # flow grades read flows in 10^3 m^3/s
DEFAULT_MONTREAL_SCALE = 500.0

type FloatArray = NDArray[np.float64]


def _clip(raw: FloatArray) -> FloatArray:
    return np.clip(raw, 0.0, 4.0)


def level_score(d: FloatArray, demand: Demand) -> FloatArray:
    """d: mean level minus H* (m)."""
    match demand:
        case Demand.HIGH:
            return _clip(2.0 + 9.0 * d)
        case Demand.MEDIUM:
            return _clip(4.0 - 18.0 * np.abs(d))
        case Demand.LOW:
            return _clip(2.0 - 9.0 * d)


def fluctuation_score(d: FloatArray, demand: Demand) -> FloatArray:
    """d: level standard deviation minus sigma-hat (m)."""
    match demand:
        case Demand.HIGH:
            return _clip(2.0 + 12.0 * d)
        case Demand.MEDIUM:
            return _clip(4.0 - 24.0 * np.abs(d))
        case Demand.LOW:
            return _clip(2.0 - 12.0 * d)


def river_flow_score(d: FloatArray, demand: Demand) -> FloatArray:
    """d: mean flow minus F* in 10^3 m^3/s."""
    match demand:
        case Demand.HIGH:
            return _clip(2.0 + 200.0 * d)
        case Demand.MEDIUM:
            return _clip(4.0 - 400.0 * np.abs(d))
        case Demand.LOW:
            return _clip(2.0 - 200.0 * d)


def river_fluctuation_score(d: FloatArray, demand: Demand) -> FloatArray:
    """d: flow standard deviation minus its baseline in m^3/s."""
    match demand:
        case Demand.HIGH:
            return _clip(2.0 + d / 80.0)
        case Demand.MEDIUM:
            return _clip(4.0 - np.abs(d) / 160.0)
        case Demand.LOW:
            return _clip(2.0 - d / 80.0)


def flood_score(max_level: FloatArray, flood: FloodParameters) -> FloatArray:
    # ratio is measured against highest - warning so it reaches exactly 1 at the highest level
    ratio = (max_level - flood.warning_level) / (
        flood.highest_level - flood.warning_level
    )
    return -4.0 * np.sqrt(np.clip(ratio, 0.0, 1.0))


def montreal_score(residual: FloatArray, scale: float) -> FloatArray:
    return np.maximum(-4.0, -((residual / scale) ** 2))


def _window(values: Sequence[float], what: str) -> FloatArray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (WINDOW,):
        raise PreconditionError(f"Need exactly {WINDOW} monthly {what}, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise DomainError(f"Monthly {what} must be finite")
    return arr


def grade_level(levels: Sequence[float], h_star: float, demand: Demand) -> float:
    arr = _window(levels, "levels")
    return float(level_score(np.asarray(arr.mean() - h_star), demand))


def grade_fluctuation(levels: Sequence[float], sigma_hat: float, demand: Demand) -> float:
    arr = _window(levels, "levels")
    return float(fluctuation_score(np.asarray(arr.std() - sigma_hat), demand))


def grade_flood(
    levels: Sequence[float],
    warning_level: float,
    highest_level: float,
    f_sigma: float | None = None,
) -> float:
    """
    0 while the year's highest level stays under the warning level, falling to
    -4 along a square root as it climbs to the highest recorded level.
    """
    arr = _window(levels, "levels")
    try:
        flood = FloodParameters(
            warning_level=warning_level, highest_level=highest_level, sigma=f_sigma
        )
    except ValidationError as e:
        raise PreconditionError(f"Invalid flood levels: {e.errors(include_url=False)}")
    return float(flood_score(np.asarray(arr.max()), flood))


def grade_river_flow(flows: Sequence[float], f_star: float, demand: Demand) -> float:
    arr = _window(flows, "flows")
    d = (arr.mean() - f_star) / FLOW_GRADE_UNIT
    return float(river_flow_score(np.asarray(d), demand))


def grade_river_fluctuation(
    flows: Sequence[float], sigma_hat: float, demand: Demand
) -> float:
    arr = _window(flows, "flows")
    return float(river_fluctuation_score(np.asarray(arr.std() - sigma_hat), demand))


def grade_montreal(residual: float, scale: float = DEFAULT_MONTREAL_SCALE) -> float:
    if not scale > 0:
        raise PreconditionError(f"Montreal scale must be positive, got {scale}")
    if not math.isfinite(residual):
        raise DomainError(f"Montreal residual must be finite, got {residual}")
    return float(montreal_score(np.asarray(residual), scale))


class NetworkGrader:
    """
    Grades rolling 12-month windows of a level record in one go.

    Arrays are laid out lakes x months; window k covers months k..k+11.
    """

    def __init__(
        self,
        constraints: StakeholderConstraints,
        baselines: GradeBaselines,
        mode: ObjectiveMode = ObjectiveMode.BASIC,
    ):
        self.constraints = constraints
        self.baselines = baselines
        self.mode = mode
        self._h_star = np.array([baselines.lakes[l].h_star for l in LAKE_ORDER])
        self._sigma_hat = np.array([baselines.lakes[l].sigma_hat for l in LAKE_ORDER])
        self._demands = [constraints.lakes[l] for l in LAKE_ORDER]
        if mode == ObjectiveMode.ONTARIO:
            if constraints.ontario is None:
                raise PreconditionError("Ontario objective needs Ontario constraints")
            if baselines.st_lawrence is None:
                raise PreconditionError("Ontario objective needs a St. Lawrence flow baseline")

    @property
    def grades_ontario(self) -> bool:
        return self.mode == ObjectiveMode.ONTARIO

    def lake_scores(self, levels: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
        """
        Returns G_L and G_F (lakes x windows) with the window means and deviations.
        """
        windows = sliding_window_view(levels, WINDOW, axis=1)
        mean = windows.mean(axis=2)
        std = windows.std(axis=2)
        d_level = mean - self._h_star[:, None]
        d_fluct = std - self._sigma_hat[:, None]
        g_level = np.empty_like(mean)
        g_fluct = np.empty_like(mean)
        for i, demand in enumerate(self._demands):
            g_level[i] = level_score(d_level[i], demand.level)
            g_fluct[i] = fluctuation_score(d_fluct[i], demand.fluctuation)
        return g_level, g_fluct, mean, std

    def ontario_scores(
        self,
        ontario_levels: FloatArray,
        st_lawrence: FloatArray,
        residuals: FloatArray,
    ) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
        """
        G_D, G_L', G_F' and G_M per window.
        """
        ontario = self.constraints.ontario
        flow_base = self.baselines.st_lawrence
        assert ontario is not None and flow_base is not None
        level_w = sliding_window_view(ontario_levels, WINDOW)
        flow_w = sliding_window_view(st_lawrence, WINDOW)
        resid_w = sliding_window_view(residuals, WINDOW)
        g_flood = flood_score(level_w.max(axis=1), ontario.flood)
        g_flow = river_flow_score(
            (flow_w.mean(axis=1) - flow_base.f_star) / FLOW_GRADE_UNIT, ontario.river_flow
        )
        g_flow_fluct = river_fluctuation_score(
            flow_w.std(axis=1) - flow_base.sigma_hat, ontario.river_fluctuation
        )
        g_montreal = montreal_score(resid_w, ontario.montreal_scale_m3s).mean(axis=1)
        return g_flood, g_flow, g_flow_fluct, g_montreal

    def window_totals(
        self,
        levels: FloatArray,
        st_lawrence: FloatArray | None = None,
        residuals: FloatArray | None = None,
    ) -> FloatArray:
        g_level, g_fluct, _, _ = self.lake_scores(levels)
        totals = g_level.sum(axis=0) + g_fluct.sum(axis=0)
        if self.grades_ontario:
            if st_lawrence is None or residuals is None:
                raise PreconditionError("Ontario grading needs St. Lawrence flows and Montreal residuals")
            for part in self.ontario_scores(
                levels[LakeId.ONTARIO.position], st_lawrence, residuals
            ):
                totals = totals + part
        return totals

    def residuals(
        self, montreal: FloatArray, ottawa: FloatArray, st_lawrence: FloatArray
    ) -> FloatArray:
        ontario = self.constraints.ontario
        assert ontario is not None
        return montreal_residuals(
            montreal, ottawa, st_lawrence, ontario.nature_m3s, ontario.residents_m3s
        )

    def report(
        self,
        levels: FloatArray,
        st_lawrence: FloatArray | None = None,
        residuals: FloatArray | None = None,
    ) -> GradeReport:
        """Grade report of the last 12 months of the arrays."""
        levels = levels[:, -WINDOW:]
        g_level, g_fluct, mean, std = self.lake_scores(levels)
        lakes = {
            lake: LakeGrade(
                level=float(g_level[i, 0]),
                fluctuation=float(g_fluct[i, 0]),
                mean_level=float(mean[i, 0]),
                std_level=float(std[i, 0]),
            )
            for i, lake in enumerate(LAKE_ORDER)
        }
        ontario: OntarioGrade | None = None
        if self.grades_ontario:
            if st_lawrence is None or residuals is None:
                raise PreconditionError("Ontario grading needs St. Lawrence flows and Montreal residuals")
            flows = st_lawrence[-WINDOW:]
            g_d, g_f, g_ff, g_m = self.ontario_scores(
                levels[LakeId.ONTARIO.position], flows, residuals[-WINDOW:]
            )
            ontario = OntarioGrade(
                flood=float(g_d[0]),
                river_flow=float(g_f[0]),
                river_fluctuation=float(g_ff[0]),
                montreal=float(g_m[0]),
                max_level=float(levels[LakeId.ONTARIO.position].max()),
                mean_flow=float(flows.mean()),
                std_flow=float(flows.std()),
            )
        return GradeReport.assemble(lakes, ontario)


def grade_network(
    trajectory: Trajectory,
    constraints: StakeholderConstraints,
    baselines: GradeBaselines,
    mode: ObjectiveMode | None = None,
) -> GradeReport:
    """
    Grade the last 12 months of a trajectory. The Ontario extension is graded
    whenever the constraints carry it (or when `mode` asks for it).
    """
    if trajectory.horizon < WINDOW:
        raise PreconditionError(
            f"Grading needs {WINDOW} simulated months, trajectory has {trajectory.horizon}"
        )
    if mode is None:
        mode = ObjectiveMode.ONTARIO if constraints.ontario is not None else ObjectiveMode.BASIC
    grader = NetworkGrader(constraints, baselines, mode)
    levels = trajectory.level_matrix()
    if not grader.grades_ontario:
        return grader.report(levels)

    for gauge in (RiverId.OTTAWA, RiverId.MONTREAL):
        if gauge not in trajectory.exogenous:
            raise PreconditionError(f"Ontario grading needs the '{gauge}' gauge series")
    st_lawrence = np.asarray(trajectory.flows(RiverId.ST_LAWRENCE), dtype=np.float64)
    residuals = grader.residuals(
        np.asarray(trajectory.exogenous[RiverId.MONTREAL], dtype=np.float64),
        np.asarray(trajectory.exogenous[RiverId.OTTAWA], dtype=np.float64),
        st_lawrence,
    )
    return grader.report(levels, st_lawrence, residuals)


def baselines_from_history(
    history: HistoricalData, rule: OutlierRule = OutlierRule.IQR
) -> GradeBaselines:
    """
    H* and sigma-hat per lake (and F*, sigma-hat for the St. Lawrence) from the
    calendar-month means of the cleaned record.
    """
    lakes: dict[LakeId, LevelBaseline] = {}
    for lake in LAKE_ORDER:
        cleaned, _ = remove_outliers(history.level(lake), rule, f"level {lake}")
        monthly = np.array(monthly_baseline(cleaned))
        lakes[lake] = LevelBaseline(
            h_star=float(monthly.mean()),
            sigma_hat=float(monthly.std()),
            monthly=tuple(float(v) for v in monthly),
        )

    st_lawrence: FlowBaseline | None = None
    if RiverId.ST_LAWRENCE in history.flows:
        cleaned, _ = remove_outliers(
            history.flow(RiverId.ST_LAWRENCE), rule, "flow e"
        )
        monthly = np.array(monthly_baseline(cleaned))
        st_lawrence = FlowBaseline(
            f_star=float(monthly.mean()),
            sigma_hat=float(monthly.std()),
            monthly=tuple(float(v) for v in monthly),
        )
    else:
        logger.info("No St. Lawrence flows in history; Ontario river grades unavailable")
    return GradeBaselines(lakes=lakes, st_lawrence=st_lawrence)


def summarize_grades(
    level_grades: Sequence[float], fluctuation_grades: Sequence[float]
) -> GradeSummary:
    if not level_grades or not fluctuation_grades:
        raise PreconditionError("Nothing to summarize")
    lv = np.asarray(level_grades, dtype=np.float64)
    fv = np.asarray(fluctuation_grades, dtype=np.float64)
    return GradeSummary(
        level_mean=float(lv.mean()),
        level_min=float(lv.min()),
        level_median=float(np.median(lv)),
        fluctuation_mean=float(fv.mean()),
        fluctuation_min=float(fv.min()),
        fluctuation_median=float(np.median(fv)),
    )
