import math

import numpy as np
import pytest

from lakeflow.contracts.control_models import (
    Demand,
    DispersionMode,
    LakeDemand,
    Perturbation,
    PerturbationKind,
)
from lakeflow.contracts.errors import PreconditionError
from lakeflow.contracts.models import LAKE_ORDER, LakeId, RiverId
from lakeflow.logic.sensitivity import (
    apply_perturbation,
    dam_sensitivity,
    dispersion,
    grade_scenario,
    run_sensitivity,
    sensitivity_index,
)
from tests.factories import (
    START,
    baselines,
    constant_indicators,
    constant_plan,
    equilibrium_indicators,
    equilibrium_scenario,
    medium_constraints,
)

RAIN = Perturbation(kind=PerturbationKind.PRECIPITATION, delta=0.03)
ICE = Perturbation(kind=PerturbationKind.ICE_CLOG, delta=100.0)
SNOW = Perturbation(kind=PerturbationKind.SNOW_PACK, delta=0.03)


def test_zero_delta_returns_the_scenario():
    scenario = equilibrium_scenario()
    for kind in (PerturbationKind.PRECIPITATION, PerturbationKind.SNOW_PACK):
        assert apply_perturbation(scenario, Perturbation(kind=kind, delta=0.0), 1) is scenario


def test_precipitation_scales_every_indicator():
    scenario = equilibrium_scenario(indicators=constant_indicators({lake: 100.0 for lake in LAKE_ORDER}, 12))
    wetter = apply_perturbation(scenario, RAIN, 1)
    drier = apply_perturbation(scenario, RAIN, -1)
    for lake in LAKE_ORDER:
        assert wetter.indicators[lake].values == pytest.approx((103.0,) * 12)
        assert drier.indicators[lake].values == pytest.approx((97.0,) * 12)


def test_ice_clog_holds_back_january_and_releases_march():
    scenario = equilibrium_scenario()
    clogged = apply_perturbation(scenario, ICE, 1)
    expected = [0.0] * 12
    expected[0], expected[2] = -100.0, 200.0
    assert set(clogged.flow_offsets) == {edge.id for edge in scenario.topology.edges}
    for offsets in clogged.flow_offsets.values():
        assert list(offsets) == expected

    mirrored = apply_perturbation(scenario, ICE, -1)
    assert mirrored.flow_offsets[RiverId.NIAGARA][0] == 100.0
    assert mirrored.flow_offsets[RiverId.NIAGARA][2] == -200.0


def test_ice_clog_needs_a_january():
    spring = equilibrium_scenario(months=6, start=START.shift(3))
    with pytest.raises(PreconditionError):
        apply_perturbation(spring, ICE, 1)


def test_snow_pack_needs_a_march():
    summer = equilibrium_scenario(months=6, start=START.shift(4))
    with pytest.raises(PreconditionError):
        apply_perturbation(summer, SNOW, 1)


def test_snow_pack_adds_superior_water_in_march():
    scenario = equilibrium_scenario()
    snowed = apply_perturbation(scenario, SNOW, 1)
    area = scenario.topology.lake(LakeId.SUPERIOR).area_m2
    before = scenario.indicators[LakeId.SUPERIOR].values
    after = snowed.indicators[LakeId.SUPERIOR].values
    assert after[2] - before[2] == pytest.approx(0.03 * area)
    assert [a == b for a, b in zip(before, after)].count(False) == 1
    for lake in LAKE_ORDER[1:]:
        assert snowed.indicators[lake].values == scenario.indicators[lake].values


def test_dam_perturbation_clips_to_bounds():
    scenario = equilibrium_scenario(plan=constant_plan(12, a=500.0))
    p = Perturbation(kind=PerturbationKind.DAM_FLOW, delta=75.0, edge=RiverId.ST_MARYS)
    assert apply_perturbation(scenario, p, -1).plan.releases[RiverId.ST_MARYS] == (500.0,) * 12
    assert apply_perturbation(scenario, p, 1).plan.releases[RiverId.ST_MARYS] == (575.0,) * 12


def test_no_supply_means_no_rain_sensitivity():
    scenario = equilibrium_scenario(indicators=constant_indicators({lake: 0.0 for lake in LAKE_ORDER}, 12))
    assert sensitivity_index(scenario, medium_constraints(), RAIN) == 0.0


def test_snow_pack_index_on_a_single_lake():
    delta = 1e-3
    constraints = medium_constraints(
        {LakeId.SUPERIOR: LakeDemand(level=Demand.HIGH, fluctuation=Demand.HIGH)}
    )
    scenario = equilibrium_scenario(grade_baselines=baselines(sigma_hat={LakeId.SUPERIOR: 5.0}))
    index = sensitivity_index(
        scenario, constraints, Perturbation(kind=PerturbationKind.SNOW_PACK, delta=delta)
    )
    # ten of the twelve graded months sit delta higher: G_L moves by 9 * 10/12 per metre
    assert index == pytest.approx(7.5 / math.sqrt(10.0), rel=1e-3)


def test_dam_at_lower_bound_has_no_downward_sensitivity():
    scenario = equilibrium_scenario(
        plan=constant_plan(12, a=500.0),
        indicators=constant_indicators(equilibrium_indicators(a=500.0), 12),
    )
    assert dam_sensitivity(scenario, medium_constraints(), RiverId.ST_MARYS, 75.0) == 0.0


def test_dam_sensitivity_scales_with_step():
    scenario = equilibrium_scenario()
    small = dam_sensitivity(scenario, medium_constraints(), RiverId.ST_LAWRENCE, 21.0)
    large = dam_sensitivity(scenario, medium_constraints(), RiverId.ST_LAWRENCE, 42.0)
    assert small > 0.0
    assert 0.5 <= large / small <= 2.0


def test_sensitivity_needs_a_positive_delta():
    with pytest.raises(PreconditionError):
        sensitivity_index(
            equilibrium_scenario(),
            medium_constraints(),
            Perturbation(kind=PerturbationKind.PRECIPITATION, delta=0.0),
        )


def test_dispersion_modes():
    assert dispersion(np.array([1.0, -1.0]), DispersionMode.RMSE) == 1.0
    assert dispersion(np.array([1.0, -1.0]), DispersionMode.STD) == 1.0
    assert dispersion(np.array([2.0, 2.0]), DispersionMode.RMSE) == 2.0
    assert dispersion(np.array([2.0, 2.0]), DispersionMode.STD) == 0.0


def test_equilibrium_year_grades_near_full_marks():
    report = grade_scenario(equilibrium_scenario(), medium_constraints())
    assert report.total == pytest.approx(40.0, abs=1e-6)


def test_run_sensitivity_totals_the_weather():
    dam = Perturbation(kind=PerturbationKind.DAM_FLOW, delta=210.0, edge=RiverId.ST_LAWRENCE)
    report = run_sensitivity(
        equilibrium_scenario(), medium_constraints(), [RAIN, ICE, SNOW, dam]
    )
    assert report.total == pytest.approx(report.rain + report.ice + report.snow)
    assert [e.perturbation.kind for e in report.entries] == [
        PerturbationKind.PRECIPITATION,
        PerturbationKind.ICE_CLOG,
        PerturbationKind.SNOW_PACK,
        PerturbationKind.DAM_FLOW,
    ]
    assert report.entries[-1].estimator == "one_sided"
    assert set(report.dams) == {RiverId.ST_LAWRENCE}


def test_run_sensitivity_without_perturbations():
    report = run_sensitivity(equilibrium_scenario(), medium_constraints(), [])
    assert report.entries == ()
    assert report.total == 0.0
