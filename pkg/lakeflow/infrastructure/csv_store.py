"""
Flat CSV files: the historical record in, plans and run records out.

The record is long format, one sample per row:

    date,series_id,kind,value
    2006-01,A,level,183.41
    2006-01,a,flow,2517.3
"""

from collections.abc import Sequence
import math
from pathlib import Path

from loguru import logger
import pandas as pd

from lakeflow.contracts.control_models import MpcRunRecord
from lakeflow.contracts.errors import SchemaError
from lakeflow.contracts.models import (
    LAKE_ORDER,
    ControlPlan,
    HistoricalData,
    LakeId,
    MonthStamp,
    MonthlySeries,
    RiverId,
)

COLUMNS = ["date", "series_id", "kind", "value"]
LEVEL = "level"
FLOW = "flow"
HEADER_LINES = 1


def _series_kind(series_id: str) -> tuple[LakeId | RiverId, str] | None:
    try:
        return LakeId(series_id), LEVEL
    except ValueError:
        pass
    try:
        return RiverId(series_id), FLOW
    except ValueError:
        return None


def read_history(path: Path | str) -> HistoricalData:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise SchemaError(f"{path} is empty")
    return parse_history(frame, source=str(path))


def parse_history(frame: pd.DataFrame, source: str = "history") -> HistoricalData:
    """
    Validate a long-format record and pivot it into aligned monthly series.

    Every series must run month by month without gaps, and all series must
    cover the same months. Errors name the file line they were found on.
    """
    missing = [c for c in COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"{source}: missing columns {missing}")
    if frame.empty:
        raise SchemaError(f"{source}: no samples")

    samples: dict[LakeId | RiverId, list[tuple[MonthStamp, float, int]]] = {}
    for i, (date, series_id, kind, raw) in enumerate(
        frame[COLUMNS].itertuples(index=False, name=None)
    ):
        line = i + HEADER_LINES + 1
        known = _series_kind(str(series_id).strip())
        if known is None:
            raise SchemaError(f"unknown series_id '{series_id}'", row=line)
        key, expected_kind = known
        if str(kind).strip() != expected_kind:
            raise SchemaError(
                f"series '{series_id}' is a {expected_kind} series, got kind '{kind}'",
                row=line,
            )
        try:
            stamp = MonthStamp.parse(str(date))
        except ValueError:
            raise SchemaError(f"invalid date '{date}', expected YYYY-MM", row=line)
        try:
            value = float(raw)
        except ValueError:
            raise SchemaError(f"value '{raw}' is not a number", row=line)
        if not math.isfinite(value):
            raise SchemaError(f"value '{raw}' is not finite", row=line)

        entries = samples.setdefault(key, [])
        if entries:
            previous = entries[-1][0]
            if not previous < stamp:
                raise SchemaError(
                    f"series '{series_id}': {stamp} does not follow {previous}", row=line
                )
            if stamp != previous.shift(1):
                raise SchemaError(
                    f"series '{series_id}': gap between {previous} and {stamp}", row=line
                )
        entries.append((stamp, value, line))

    series = {
        key: MonthlySeries.from_array(entries[0][0], [v for _, v, _ in entries])
        for key, entries in samples.items()
    }
    first_key = next(iter(series))
    first = series[first_key]
    for key, s in series.items():
        if not s.is_aligned_with(first):
            raise SchemaError(
                f"{source}: series '{key}' covers {s.start}..{s.end} but "
                f"'{first_key}' covers {first.start}..{first.end}",
                row=samples[key][0][2],
            )

    logger.info(
        "Read {} series of {} months ({}..{}) from {}",
        len(series),
        len(first),
        first.start,
        first.end,
        source,
    )
    return HistoricalData(
        levels={k: s for k, s in series.items() if isinstance(k, LakeId)},
        flows={k: s for k, s in series.items() if isinstance(k, RiverId)},
    )


def history_frame(history: HistoricalData) -> pd.DataFrame:
    rows: list[tuple[str, str, str, float]] = []
    blocks: list[tuple[str, str, MonthlySeries]] = [
        (str(lake), LEVEL, history.levels[lake]) for lake in LAKE_ORDER if lake in history.levels
    ]
    blocks += [
        (str(river), FLOW, history.flows[river]) for river in RiverId if river in history.flows
    ]
    for series_id, kind, s in blocks:
        for i, value in enumerate(s.values):
            rows.append((str(s.stamp(i)), series_id, kind, value))
    return pd.DataFrame(rows, columns=COLUMNS)


def write_history(path: Path | str, history: HistoricalData) -> None:
    history_frame(history).to_csv(path, index=False, lineterminator="\n")


def plan_frame(plan: ControlPlan, start: MonthStamp) -> pd.DataFrame:
    """One row per month and controlled river."""
    rows = [
        (str(start.shift(t)), str(river), plan.releases[river][t])
        for t in range(plan.horizon)
        for river in plan.rivers
    ]
    return pd.DataFrame(rows, columns=["date", "river", "release_m3s"])


def mpc_frame(records: Sequence[MpcRunRecord]) -> pd.DataFrame:
    """
    One row per controller, month and lake: the realized level, the releases
    applied that month and the lake's grade to date.
    """
    rows: list[dict[str, str | int | float]] = []
    for record in records:
        for month in record.months:
            controls = {f"release_{r}": v for r, v in sorted(month.applied.items())}
            for lake in LAKE_ORDER:
                grade = month.grades[lake]
                rows.append(
                    {
                        "controller": str(record.controller),
                        "month": month.month,
                        "date": str(month.stamp),
                        "lake": str(lake),
                        "level_m": month.state.levels[lake],
                        "planned_level_m": month.planned_levels[lake],
                        **controls,
                        "grade_level": grade.level,
                        "grade_fluctuation": grade.fluctuation,
                        **(
                            {"grade_ontario": month.ontario.total}
                            if month.ontario is not None
                            else {}
                        ),
                    }
                )
    return pd.DataFrame(rows)
