"""
Monthly water balance of the five-lake chain.

Levels are integrated with an explicit monthly step: every routed river
carries its month-t flow from the source lake's level at the start of
month t (or from the control plan when it is dammed), so a change
travels one lake per month.
"""

from collections.abc import Mapping, Sequence
import math

from loguru import logger
import numpy as np
from numpy.typing import NDArray
import pandas as pd

from lakeflow.contracts.errors import (
    ConstraintViolationError,
    DomainError,
    NumericalError,
    PreconditionError,
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
    Trajectory,
)


def river_flow(level: float, coefficient: FlowCoefficient) -> float:
    """
    Outflow (m^3/s) of an uncontrolled river given its source lake level (m).
    """
    if not math.isfinite(level):
        raise DomainError(f"Level must be finite, got {level}")
    return max(0.0, coefficient.slope_si * level + coefficient.intercept_si)


def loop_gains(
    topology: NetworkTopology, coefficients: FlowCoefficients
) -> dict[RiverId, float]:
    """
    Per-month feedback gain of every uncontrolled river on its source lake.

    Above 1 the explicit monthly step overshoots and oscillates, above 2 it diverges.
    """
    gains: dict[RiverId, float] = {}
    for edge in topology.ordered_edges:
        if edge.controllable or edge.source is None or edge.id not in coefficients:
            continue
        area = topology.lake(edge.source).area_m2
        gains[edge.id] = coefficients[edge.id].slope_si * topology.month_seconds / area
    return gains


def montreal_balance(
    st_lawrence_at_montreal: float,
    ottawa: float,
    st_lawrence_release: float,
    nature: float,
    residents: float,
) -> float:
    """
    What is left of the flow at Montreal once the Ottawa, the Ontario release
    and the downstream needs are accounted for. Negative means a shortfall.
    """
    flows = {
        "St. Lawrence at Montreal": st_lawrence_at_montreal,
        "Ottawa": ottawa,
        "St. Lawrence release": st_lawrence_release,
        "nature": nature,
        "residents": residents,
    }
    for name, value in flows.items():
        if not math.isfinite(value):
            raise DomainError(f"{name} flow must be finite, got {value}")
        if value < 0:
            raise DomainError(f"{name} flow must be non-negative, got {value}")
    return st_lawrence_at_montreal - ottawa - st_lawrence_release - nature - residents


def montreal_residuals(
    st_lawrence_at_montreal: NDArray[np.float64],
    ottawa: NDArray[np.float64],
    st_lawrence_release: NDArray[np.float64],
    nature: float,
    residents: float,
) -> NDArray[np.float64]:
    """
    `montreal_balance` month by month, without the checks.
    """
    return st_lawrence_at_montreal - ottawa - st_lawrence_release - nature - residents


class LakeNetwork:
    """
    A topology with its rating coefficients, ready to be stepped.

    Every simulation in the package goes through `advance`, so a plan scored
    by the optimizer and the same plan replayed month by month agree to the bit.
    """

    def __init__(self, topology: NetworkTopology, coefficients: FlowCoefficients):
        self.topology = topology
        self.coefficients = coefficients
        self.month_seconds = topology.month_seconds
        self._areas = [lake.area_m2 for lake in topology.ordered_lakes]
        self._edges: list[tuple[RiverId, int, int, bool, float, float]] = []
        for edge in topology.ordered_edges:
            assert edge.source is not None
            src = edge.source.position
            dst = edge.target.position if edge.target is not None else -1
            if edge.controllable:
                self._edges.append((edge.id, src, dst, True, 0.0, 0.0))
                continue
            if edge.id not in coefficients:
                raise PreconditionError(
                    f"River '{edge.id}' is uncontrolled but has no fitted coefficients"
                )
            c = coefficients[edge.id]
            self._edges.append((edge.id, src, dst, False, c.slope_si, c.intercept_si))

        self.routed = tuple(e[0] for e in self._edges)
        self.controllable = topology.controllable
        self._bounds = {river: topology.bounds(river) for river in self.controllable}

        for river, gain in loop_gains(topology, coefficients).items():
            if gain >= 2.0:
                logger.warning(
                    "Loop gain of river '{}' is {:.2f}: the monthly step diverges; "
                    "increase the source lake area",
                    river,
                    gain,
                )
            elif gain >= 1.0:
                logger.warning(
                    "Loop gain of river '{}' is {:.2f}: the monthly step oscillates",
                    river,
                    gain,
                )

    def bounds(self, river: RiverId) -> tuple[float, float]:
        return self._bounds[river]

    def check_controls(self, controls: Mapping[RiverId, float], month: int) -> None:
        for river in self.controllable:
            if river not in controls:
                raise PreconditionError(
                    f"No release given for controllable river '{river}' at month {month}"
                )
            value = controls[river]
            low, high = self._bounds[river]
            if not (math.isfinite(value) and low <= value <= high):
                raise ConstraintViolationError(river, month, value)

    def advance(
        self,
        levels: Sequence[float],
        controls: Mapping[RiverId, float],
        deltas: Sequence[float],
        forced: Mapping[RiverId, float] | None = None,
        offsets: Mapping[RiverId, float] | None = None,
    ) -> tuple[list[float], list[float]]:
        """
        One month. Returns next levels (lake order) and this month's flows (routing order).
        """
        net = [0.0] * len(self._areas)
        flows: list[float] = []
        for river, src, dst, controlled, slope, intercept in self._edges:
            if controlled:
                q = controls[river]
            elif forced is not None and river in forced:
                q = forced[river]
            else:
                q = max(0.0, slope * levels[src] + intercept)
            if offsets is not None and river in offsets:
                q = max(0.0, q + offsets[river])
            flows.append(q)
            net[src] -= q
            if dst >= 0:
                net[dst] += q

        ms = self.month_seconds
        new_levels = [
            h + (n * ms + d) / area
            for h, n, d, area in zip(levels, net, deltas, self._areas)
        ]
        if not all(math.isfinite(h) and h > 0 for h in new_levels):
            raise NumericalError(f"Levels left the physical range: {new_levels}")
        return new_levels, flows

    def run_levels(
        self,
        levels: Sequence[float],
        releases: NDArray[np.float64],
        deltas: NDArray[np.float64],
    ) -> NDArray[np.float64]:
        """
        Level samples (lakes x months) for releases shaped (controllable rivers x months).
        """
        horizon = releases.shape[1]
        out = np.empty((len(self._areas), horizon), dtype=np.float64)
        current = list(levels)
        rel = releases.tolist()
        dl = deltas.T.tolist()
        for t in range(horizon):
            controls = {river: rel[i][t] for i, river in enumerate(self.controllable)}
            current, _ = self.advance(current, controls, dl[t])
            out[:, t] = current
        return out


def step(
    state: LakeState,
    controls: Mapping[RiverId, float],
    indicators: Mapping[LakeId, float],
    network: LakeNetwork,
    forced: Mapping[RiverId, float] | None = None,
    offsets: Mapping[RiverId, float] | None = None,
) -> LakeState:
    """
    Advance the network one month.

    `indicators` is the month's supply indicator per lake (m^3); `forced`
    overrides uncontrolled rivers with observed flows.
    """
    network.check_controls(controls, state.month)
    for lake in LAKE_ORDER:
        if not math.isfinite(indicators[lake]):
            raise DomainError(f"Indicator for lake {lake} is not finite")
    new_levels, flows = network.advance(
        state.level_vector(),
        controls,
        [indicators[lake] for lake in LAKE_ORDER],
        forced,
        offsets,
    )
    return LakeState(
        month=state.month + 1,
        levels=dict(zip(LAKE_ORDER, new_levels)),
        flows=dict(zip(network.routed, flows)),
    )


def _month_slice(
    series: Mapping[RiverId, Sequence[float]] | None, t: int
) -> dict[RiverId, float] | None:
    if not series:
        return None
    return {river: values[t] for river, values in series.items()}


def simulate(
    initial: LakeState,
    plan: ControlPlan,
    indicators: IndicatorSeries,
    network: LakeNetwork,
    start: MonthStamp | None = None,
    horizon: int | None = None,
    forced_flows: Mapping[RiverId, Sequence[float]] | None = None,
    exogenous: Mapping[RiverId, Sequence[float]] | None = None,
    offsets: Mapping[RiverId, Sequence[float]] | None = None,
) -> Trajectory:
    """
    Fold `step` over the plan. Indicator month 0 applies to the plan's first month;
    a zero horizon gives back the initial state alone.
    """
    horizon = plan.horizon if horizon is None else horizon
    if horizon < 0:
        raise PreconditionError(f"Horizon must not be negative, got {horizon}")
    if horizon > plan.horizon:
        raise PreconditionError(
            f"Plan covers {plan.horizon} months, {horizon} requested"
        )
    if len(indicators) < horizon:
        raise PreconditionError(
            f"Indicators cover {len(indicators)} months, {horizon} requested"
        )
    for name, block in (("forced", forced_flows), ("exogenous", exogenous), ("offset", offsets)):
        for river, values in (block or {}).items():
            if len(values) < horizon:
                raise PreconditionError(
                    f"{name} series for river '{river}' covers {len(values)} of {horizon} months"
                )

    matrix = indicators.matrix()
    states = [initial]
    for t in range(horizon):
        states.append(
            step(
                states[-1],
                plan.at(t),
                dict(zip(LAKE_ORDER, matrix[:, t].tolist())),
                network,
                forced=_month_slice(forced_flows, t),
                offsets=_month_slice(offsets, t),
            )
        )

    return Trajectory(
        start=start if start is not None else indicators.start,
        states=tuple(states),
        plan=plan.head(horizon) if horizon > 0 else None,
        indicators=indicators.slice(0, horizon),
        exogenous={r: tuple(v[:horizon]) for r, v in (exogenous or {}).items()},
    )


def water_level_index(
    flow: MonthlySeries, baseline_by_month: Sequence[float]
) -> MonthlySeries:
    """
    Flow relative to the same calendar month's historical baseline; 1.0 is normal.
    """
    if len(baseline_by_month) != 12:
        raise PreconditionError("Need one baseline flow per calendar month")
    for month, b in enumerate(baseline_by_month, start=1):
        if not b > 0:
            raise DomainError(f"Baseline flow for month {month} must be positive, got {b}")
    return MonthlySeries.from_array(
        flow.start,
        [v / baseline_by_month[flow.calendar_index(i)] for i, v in enumerate(flow.values)],
    )


def river_level_index_report(
    flows: Mapping[RiverId, MonthlySeries],
    baselines: Mapping[RiverId, Sequence[float]],
) -> pd.DataFrame:
    """
    Long table (month, river, index) of the water-level index of every river
    with a baseline, ready to pivot into a heat map.
    """
    rows: list[dict[str, str | float]] = []
    for river, series in flows.items():
        if river not in baselines:
            continue
        index = water_level_index(series, baselines[river])
        for i, value in enumerate(index.values):
            rows.append({"month": str(index.stamp(i)), "river": str(river), "index": value})
    return pd.DataFrame(rows, columns=["month", "river", "index"])

