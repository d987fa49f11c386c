import math

import numpy as np
import pytest

from lakeflow.contracts.errors import (
    ConstraintViolationError,
    DomainError,
    PreconditionError,
)
from lakeflow.contracts.models import (
    LAKE_ORDER,
    ControlPlan,
    FlowCoefficient,
    FlowCoefficients,
    LakeId,
    MonthStamp,
    MonthlySeries,
    RiverId,
)
from lakeflow.infrastructure.json_file import default_topology
from lakeflow.logic.hydronet import (
    LakeNetwork,
    loop_gains,
    montreal_balance,
    river_flow,
    river_level_index_report,
    simulate,
    step,
    water_level_index,
)
from lakeflow.logic.scenario import prepare_scenario
from lakeflow.logic.synthetic import generate_synthetic
from tests.conftest import GoldenFiles
from tests.factories import (
    START,
    bounded_topology,
    constant_indicators,
    constant_plan,
    dry_coefficients,
    equilibrium_indicators,
    lake_state,
    network,
    open_topology,
)

NO_SUPPLY = {lake: 0.0 for lake in LAKE_ORDER}


def test_river_flow_from_rating_relation():
    niagara = FlowCoefficient(slope=2.09, intercept=-3.5799)
    assert river_flow(174.00, niagara) == pytest.approx(5670.0, rel=1e-12)


def test_river_flow_clamps_below_zero_crossing():
    st_marys = FlowCoefficient(slope=1.69, intercept=-3.0744)
    assert river_flow(181.90, st_marys) == 0.0
    assert river_flow(st_marys.zero_flow_level, st_marys) == pytest.approx(0.0, abs=1e-9)
    # above the crossing the relation is live again
    assert river_flow(181.92, st_marys) == pytest.approx(4.8, rel=1e-6)


def test_river_flow_zero_level_zero_intercept():
    assert river_flow(0.0, FlowCoefficient(slope=3.0, intercept=0.0)) == 0.0


def test_river_flow_rejects_non_finite_level():
    with pytest.raises(DomainError):
        river_flow(math.nan, FlowCoefficient(slope=1.0, intercept=0.0))


def test_river_flow_is_monotone_in_level():
    c = FlowCoefficients.published()[RiverId.DETROIT]
    levels = np.linspace(170.0, 180.0, 500)
    flows = [river_flow(float(h), c) for h in levels]
    assert all(b >= a for a, b in zip(flows, flows[1:]))


def test_step_without_flux_keeps_levels():
    net = LakeNetwork(open_topology(), dry_coefficients())
    state = lake_state()
    after = step(state, {RiverId.ST_MARYS: 0.0, RiverId.ST_LAWRENCE: 0.0}, NO_SUPPLY, net)
    assert after.levels == state.levels
    assert after.month == 1


def test_step_supply_raises_superior_one_centimetre():
    net = LakeNetwork(open_topology(), dry_coefficients())
    state = lake_state()
    supply = dict(NO_SUPPLY)
    supply[LakeId.SUPERIOR] = 8.21e8
    after = step(state, {RiverId.ST_MARYS: 0.0, RiverId.ST_LAWRENCE: 0.0}, supply, net)
    assert after.levels[LakeId.SUPERIOR] - state.levels[LakeId.SUPERIOR] == pytest.approx(
        0.01, rel=1e-9
    )
    for lake in LAKE_ORDER[1:]:
        assert after.levels[lake] == state.levels[lake]


def test_step_rejects_release_out_of_bounds():
    net = network()
    with pytest.raises(ConstraintViolationError) as e:
        step(lake_state(), {RiverId.ST_MARYS: 9000.0, RiverId.ST_LAWRENCE: 7000.0}, NO_SUPPLY, net)
    assert e.value.edge == RiverId.ST_MARYS
    assert e.value.value == 9000.0


def test_step_requires_every_controlled_release():
    with pytest.raises(PreconditionError):
        step(lake_state(), {RiverId.ST_MARYS: 2500.0}, NO_SUPPLY, network())


def test_step_conserves_volume():
    topology = bounded_topology()
    net = network(topology)
    rng = np.random.default_rng(11)
    ms = topology.month_seconds
    base = lake_state()
    for _ in range(1000):
        levels = {
            lake: base.levels[lake] + float(rng.uniform(-1.5, 1.5)) for lake in LAKE_ORDER
        }
        controls = {
            RiverId.ST_MARYS: float(rng.uniform(500.0, 4500.0)),
            RiverId.ST_LAWRENCE: float(rng.uniform(3500.0, 10500.0)),
        }
        supply = {lake: float(rng.normal(0.0, 2e10)) for lake in LAKE_ORDER}
        before = lake_state(levels)
        after = step(before, controls, supply, net)
        for lake in topology.ordered_lakes:
            inflow = sum(after.flows[r] for r in topology.inflows(lake.id))
            outflow = sum(after.flows[r] for r in topology.outflows(lake.id))
            stored = lake.area_m2 * (after.levels[lake.id] - before.levels[lake.id])
            expected = (inflow - outflow) * ms + supply[lake.id]
            scale = max(abs(inflow * ms), abs(outflow * ms), abs(supply[lake.id]), 1.0)
            assert math.isclose(stored, expected, rel_tol=1e-9, abs_tol=1e-9 * scale)


def test_simulate_zero_horizon_is_initial_state():
    initial = lake_state()
    trajectory = simulate(
        initial,
        constant_plan(3),
        constant_indicators(equilibrium_indicators(), 3),
        network(),
        horizon=0,
    )
    assert trajectory.states == (initial,)
    assert trajectory.horizon == 0
    assert trajectory.plan is None


def test_simulate_holds_equilibrium():
    trajectory = simulate(
        lake_state(), constant_plan(12), constant_indicators(equilibrium_indicators(), 12), network()
    )
    assert trajectory.horizon == 12
    for lake in LAKE_ORDER:
        assert trajectory.levels(lake) == pytest.approx(
            [lake_state().levels[lake]] * 12, abs=1e-9
        )


def test_simulate_is_deterministic():
    indicators = constant_indicators(equilibrium_indicators(), 12)
    plan = ControlPlan(
        releases={
            RiverId.ST_MARYS: tuple(2000.0 + 100.0 * t for t in range(12)),
            RiverId.ST_LAWRENCE: tuple(8000.0 - 50.0 * t for t in range(12)),
        }
    )
    first = simulate(lake_state(), plan, indicators, network())
    second = simulate(lake_state(), plan, indicators, network())
    assert first == second


def test_impulse_travels_one_lake_per_month():
    indicators = constant_indicators(equilibrium_indicators(), 12)
    base_plan = constant_plan(12)
    impulse = list(base_plan.releases[RiverId.ST_MARYS])
    t = 3
    impulse[t] += 1000.0
    plan = ControlPlan(
        releases={
            RiverId.ST_MARYS: tuple(impulse),
            RiverId.ST_LAWRENCE: base_plan.releases[RiverId.ST_LAWRENCE],
        }
    )
    base = simulate(lake_state(), base_plan, indicators, network())
    kicked = simulate(lake_state(), plan, indicators, network())

    for k in range(t + 1):
        assert kicked.states[k].levels == base.states[k].levels
    for lag, lake in enumerate(LAKE_ORDER[1:], start=1):
        first_change = next(
            k
            for k, (x, y) in enumerate(zip(base.states, kicked.states))
            if x.levels[lake] != y.levels[lake]
        )
        assert first_change == t + lag


def test_simulate_rejects_short_inputs():
    with pytest.raises(PreconditionError):
        simulate(
            lake_state(), constant_plan(6), constant_indicators(NO_SUPPLY, 12), network(), horizon=12
        )
    with pytest.raises(PreconditionError):
        simulate(
            lake_state(), constant_plan(12), constant_indicators(NO_SUPPLY, 6), network(), horizon=12
        )


def test_ice_offsets_shift_routed_flows():
    indicators = constant_indicators(equilibrium_indicators(), 2)
    offsets = {RiverId.NIAGARA: (-100.0, 0.0)}
    base = simulate(lake_state(), constant_plan(2), indicators, network())
    shifted = simulate(lake_state(), constant_plan(2), indicators, network(), offsets=offsets)
    assert shifted.flows(RiverId.NIAGARA)[0] == pytest.approx(
        base.flows(RiverId.NIAGARA)[0] - 100.0
    )


def test_default_st_clair_loop_is_unstable():
    gains = loop_gains(default_topology(), FlowCoefficients.published())
    assert gains[RiverId.DETROIT] > 2.0
    assert RiverId.ST_MARYS not in gains
    stable = loop_gains(bounded_topology(), FlowCoefficients.published())
    assert all(g < 1.0 for g in stable.values())


def test_uncontrolled_river_needs_coefficients():
    partial = FlowCoefficients(
        entries={RiverId.ST_CLAIR: FlowCoefficients.published()[RiverId.ST_CLAIR]}
    )
    with pytest.raises(PreconditionError):
        LakeNetwork(bounded_topology(), partial)


def test_water_level_index():
    start = MonthStamp(year=2010, month=1)
    baseline = [5400.0] * 12
    same = water_level_index(MonthlySeries.from_array(start, baseline), baseline)
    assert same.values == (1.0,) * 12

    flows = MonthlySeries.from_array(start, [7020.0, 0.0])
    index = water_level_index(flows, baseline)
    assert index.values[0] == pytest.approx(1.30)
    assert index.values[1] == 0.0


def test_water_level_index_rejects_non_positive_baseline():
    flows = MonthlySeries.from_array(START, [1.0])
    with pytest.raises(DomainError):
        water_level_index(flows, [1.0] * 11 + [0.0])


def test_river_level_index_report_skips_rivers_without_baseline():
    flows = {
        RiverId.NIAGARA: MonthlySeries.from_array(START, [6000.0, 6600.0]),
        RiverId.OTTAWA: MonthlySeries.from_array(START, [2000.0, 2000.0]),
    }
    report = river_level_index_report(flows, {RiverId.NIAGARA: [6000.0] * 12})
    assert list(report.columns) == ["month", "river", "index"]
    assert report["river"].tolist() == ["d", "d"]
    assert report["index"].tolist() == pytest.approx([1.0, 1.1])


@pytest.mark.parametrize(
    "montreal, expected",
    [(9000.0, 0.0), (9500.0, 500.0), (8700.0, -300.0)],
)
def test_montreal_balance(montreal: float, expected: float):
    assert montreal_balance(montreal, 2000.0, 6500.0, 300.0, 200.0) == expected


def test_montreal_balance_rejects_negative_flow():
    with pytest.raises(DomainError):
        montreal_balance(9000.0, -1.0, 6500.0, 300.0, 200.0)


def test_synthetic_year_passthrough_trajectory(golden: GoldenFiles):
    bundle = generate_synthetic(0, default_topology())
    prepared = prepare_scenario(bundle.scenario, bundle.history, bundle.topology)
    scenario = prepared.scenario
    trajectory = simulate(
        scenario.initial,
        scenario.plan,
        scenario.indicators,
        prepared.network,
        start=scenario.start,
        horizon=12,
        exogenous=scenario.exogenous,
    )
    assert trajectory.horizon == 12
    golden.check("synthetic_passthrough_trajectory.json", trajectory.model_dump_json(indent=2) + "\n")
