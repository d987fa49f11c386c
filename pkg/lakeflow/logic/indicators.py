from collections.abc import Sequence
import calendar
import math

from loguru import logger
import numpy as np
from numpy.typing import NDArray

from lakeflow.contracts.control_models import FloodParameters
from lakeflow.contracts.errors import (
    DataError,
    DegenerateFitError,
    DomainError,
    PreconditionError,
)
from lakeflow.contracts.models import (
    INTERCEPT_UNIT,
    LAKE_ORDER,
    SLOPE_UNIT,
    LakeId,
    CleaningReport,
    FlowCoefficient,
    FlowCoefficients,
    HistoricalData,
    IndicatorSeries,
    MonthlySeries,
    NetworkTopology,
    OutlierRule,
    RiverId,
)

MIN_FIT_MONTHS = 12
MIN_FORECAST_MONTHS = 24
MIN_CLEANING_MONTHS = 24
TREND_MIN_YEARS = 3


def _centered_ols(
    x: NDArray[np.float64], y: NDArray[np.float64]
) -> tuple[float, float, float]:
    """
    Least squares line through (x, y) on mean-removed data.

    Returns slope, intercept and the sum of squared deviations of x.
    """
    x_mean = float(x.mean())
    y_mean = float(y.mean())
    xc = x - x_mean
    sxx = float(xc @ xc)
    if sxx == 0.0:
        return 0.0, y_mean, 0.0
    slope = float(xc @ (y - y_mean)) / sxx
    return slope, y_mean - slope * x_mean, sxx


def fit_coefficients(
    levels: MonthlySeries, flows: MonthlySeries, pair: str = "lake-river pair"
) -> FlowCoefficient:
    """
    Fit flow(m) = slope * level(m - 1) + intercept by ordinary least squares.

    The level sample of a month closes it, so it drives the next month's flow.
    Coefficients come back in the published units (10^3 m^2/s, 10^5 m^3/s).
    """
    if not levels.is_aligned_with(flows):
        raise PreconditionError(
            f"{pair}: level series {levels.start}..{levels.end} and flow series "
            f"{flows.start}..{flows.end} are not aligned"
        )
    if len(levels) < MIN_FIT_MONTHS:
        raise PreconditionError(
            f"{pair}: need at least {MIN_FIT_MONTHS} months to fit, got {len(levels)}"
        )

    x = levels.array()[:-1]
    y = flows.array()[1:]
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if len(x) < 2:
        raise DegenerateFitError(pair, "fewer than two usable samples")

    slope, intercept, sxx = _centered_ols(x, y)
    if sxx <= 1e-24 * max(1.0, float(x.mean()) ** 2) * len(x):
        raise DegenerateFitError(pair, "the lake level never changes")
    if not slope > 0:
        raise DegenerateFitError(pair, f"fitted slope {slope:.4g} is not positive")

    residuals = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r_squared = 1.0 - float(residuals @ residuals) / ss_tot if ss_tot > 0 else None

    logger.debug(
        "Fitted {}: slope={:.6g} m^2/s intercept={:.6g} m^3/s r2={}",
        pair,
        slope,
        intercept,
        r_squared,
    )
    return FlowCoefficient(
        slope=slope / SLOPE_UNIT,
        intercept=intercept / INTERCEPT_UNIT,
        r_squared=r_squared,
        samples=len(x),
    )


def fit_network(history: HistoricalData, topology: NetworkTopology) -> FlowCoefficients:
    """
    Fit every river that drains a lake into another. Uncontrolled rivers are
    required; controlled ones are fitted when the record has them.
    """
    entries: dict[RiverId, FlowCoefficient] = {}
    for edge in topology.ordered_edges:
        if edge.source is None or edge.target is None:
            continue
        if edge.controllable and (
            edge.id not in history.flows or edge.source not in history.levels
        ):
            continue
        pair = f"{edge.source.display_name}->{edge.id.display_name}"
        entries[edge.id] = fit_coefficients(
            history.level(edge.source), history.flow(edge.id), pair
        )
    return FlowCoefficients(entries=entries)


def extract_indicator(
    levels: MonthlySeries,
    inflows: Sequence[MonthlySeries],
    outflows: Sequence[MonthlySeries],
    area_m2: float,
    month_seconds: float,
) -> MonthlySeries:
    """
    Invert the water balance of one lake.

    The result starts one month after `levels`:
    indicator(m) = area * (level(m) - level(m - 1)) - (in(m) - out(m)) * month_seconds
    """
    if not area_m2 > 0:
        raise DomainError(f"Lake area must be positive, got {area_m2}")
    if len(levels) < 2:
        raise PreconditionError("Need at least two level samples")
    for s in (*inflows, *outflows):
        if not s.is_aligned_with(levels):
            raise PreconditionError(
                f"Flow series {s.start}..{s.end} is not aligned with levels {levels.start}..{levels.end}"
            )

    h = levels.array()
    net = np.zeros(len(levels), dtype=np.float64)
    for s in inflows:
        net += s.array()
    for s in outflows:
        net -= s.array()
    if not (np.isfinite(h).all() and np.isfinite(net).all()):
        raise DomainError("Indicator extraction needs finite levels and flows")

    values = area_m2 * np.diff(h) - net[1:] * month_seconds
    return MonthlySeries.from_array(levels.start.shift(1), values)


def extract_network_indicators(
    history: HistoricalData, topology: NetworkTopology
) -> IndicatorSeries:
    series: dict[LakeId, MonthlySeries] = {}
    for lake in topology.ordered_lakes:
        series[lake.id] = extract_indicator(
            history.level(lake.id),
            [history.flow(r) for r in topology.inflows(lake.id)],
            [history.flow(r) for r in topology.outflows(lake.id)],
            lake.area_m2,
            topology.month_seconds,
        )
    return IndicatorSeries(series=series)


def _forecast_one(series: MonthlySeries, horizon: int) -> list[float]:
    values = series.array()
    positions = np.arange(len(values), dtype=np.float64)
    out: list[float] = []
    for k in range(horizon):
        target = len(values) + k
        cal = series.calendar_index(target)
        mask = np.array([series.calendar_index(i) == cal for i in range(len(values))])
        x, y = positions[mask], values[mask]
        if len(y) >= TREND_MIN_YEARS:
            slope, intercept, _ = _centered_ols(x, y)
            out.append(intercept + slope * target)
        else:
            out.append(float(y.mean()))
    return out


def forecast_indicator(history: IndicatorSeries, horizon: int) -> IndicatorSeries:
    """
    Extend every lake's indicator `horizon` months past the history.

    Each calendar month is forecast on its own, by the linear trend of that
    month across years, or by its mean when fewer than three years exist.
    """
    if horizon < 1:
        raise PreconditionError(f"Forecast horizon must be at least 1, got {horizon}")
    if len(history) < MIN_FORECAST_MONTHS:
        raise PreconditionError(
            f"Need at least {MIN_FORECAST_MONTHS} months of indicator history, got {len(history)}"
        )
    start = history.start.shift(len(history))
    return IndicatorSeries(
        series={
            lake: MonthlySeries.from_array(start, _forecast_one(history[lake], horizon))
            for lake in LAKE_ORDER
        }
    )


def monthly_baseline(series: MonthlySeries) -> tuple[float, ...]:
    """
    Mean of each calendar month (January first), ignoring dropped samples.
    """
    values = series.array()
    cal = np.array([series.calendar_index(i) for i in range(len(values))])
    baseline: list[float] = []
    for c in range(12):
        group = values[(cal == c) & np.isfinite(values)]
        if len(group) == 0:
            raise DataError(
                f"No retained samples for {calendar.month_name[c + 1]}",
                subject=calendar.month_name[c + 1],
            )
        baseline.append(float(group.mean()))
    return tuple(baseline)


def _outlier_mask(group: NDArray[np.float64], rule: OutlierRule) -> NDArray[np.bool_]:
    match rule:
        case OutlierRule.THREE_SIGMA:
            sd = float(group.std())
            if sd == 0.0:
                return np.zeros(len(group), dtype=bool)
            return np.abs(group - group.mean()) > 3.0 * sd
        case OutlierRule.IQR:
            q1, q3 = np.percentile(group, [25.0, 75.0])
            spread = q3 - q1
            return (group < q1 - 1.5 * spread) | (group > q3 + 1.5 * spread)


def remove_outliers(
    series: MonthlySeries, rule: OutlierRule, series_id: str = "series"
) -> tuple[MonthlySeries, CleaningReport]:
    """
    Single pass of outlier removal within each calendar month.

    Dropped samples become NaN so month positions are kept. A series already
    cleaned under the same rule comes back unchanged.
    """
    if len(series) < MIN_CLEANING_MONTHS:
        raise PreconditionError(
            f"{series_id}: need at least {MIN_CLEANING_MONTHS} months to clean, got {len(series)}"
        )

    values = series.array()
    removed = np.zeros(len(values), dtype=bool)
    cal = np.array([series.calendar_index(i) for i in range(len(values))])
    if series.cleaned_by != rule:
        for c in range(12):
            idx = np.flatnonzero((cal == c) & np.isfinite(values))
            if len(idx) == 0:
                continue
            removed[idx[_outlier_mask(values[idx], rule)]] = True
    else:
        logger.debug("{} is already cleaned by {}, leaving it as is", series_id, rule)

    cleaned_values = np.where(removed, np.nan, values)
    cleaned = MonthlySeries(
        start=series.start,
        values=tuple(float(v) for v in cleaned_values),
        cleaned_by=rule,
    )

    means: list[float | None] = []
    for c in range(12):
        group = cleaned_values[(cal == c) & np.isfinite(cleaned_values)]
        means.append(float(group.mean()) if len(group) else None)

    report = CleaningReport(
        series_id=series_id,
        rule=rule,
        sample_count=len(values),
        removed=tuple(int(i) for i in np.flatnonzero(removed)),
        monthly_means=tuple(means),
    )
    if report.removed:
        logger.info(
            "{}: {} removed {} of {} samples",
            series_id,
            rule,
            len(report.removed),
            len(values),
        )
    return cleaned, report


def derive_flood_parameters(levels: MonthlySeries) -> FloodParameters:
    """
    Warning level one standard deviation above the mean level, highest level two.
    """
    values = levels.array()
    values = values[np.isfinite(values)]
    if len(values) < 2:
        raise DataError("Need at least two level samples to derive flood levels")
    mean = float(values.mean())
    sd = float(values.std())
    if not sd > 0 or not math.isfinite(sd):
        raise DataError("Level record has no spread; cannot place flood levels")
    return FloodParameters(warning_level=mean + sd, highest_level=mean + 2.0 * sd)

