import pytest

from lakeflow.contracts.models import LAKE_ORDER, FlowCoefficients, LakeId, MonthStamp, RiverId
from lakeflow.infrastructure.json_file import default_topology
from lakeflow.logic.hydronet import loop_gains
from lakeflow.logic.indicators import fit_network
from lakeflow.logic.scenario import prepare_scenario
from lakeflow.logic.synthetic import CENTER_LEVEL_M, generate_synthetic


def test_fit_recovers_generator_coefficients():
    bundle = generate_synthetic(0, default_topology())
    fitted = fit_network(bundle.history, bundle.topology)
    published = FlowCoefficients.published()
    for river in (RiverId.ST_MARYS, RiverId.ST_CLAIR, RiverId.DETROIT, RiverId.NIAGARA):
        assert fitted[river].slope == pytest.approx(published[river].slope, rel=0.02)
        assert fitted[river].intercept == pytest.approx(published[river].intercept, rel=0.02)


def test_same_seed_same_bundle():
    first = generate_synthetic(7, default_topology())
    second = generate_synthetic(7, default_topology())
    assert first.history == second.history
    assert first.scenario == second.scenario
    assert first.run_config == second.run_config


def test_seeds_differ():
    assert generate_synthetic(1, default_topology()).history != generate_synthetic(
        2, default_topology()
    ).history


def test_record_and_planning_year_line_up():
    bundle = generate_synthetic(0, default_topology())
    assert bundle.history.start == MonthStamp(year=2006, month=1)
    assert len(bundle.history) == 132
    assert bundle.scenario.start == MonthStamp(year=2017, month=1)
    assert bundle.scenario.horizon == 12
    assert set(bundle.history.flows) == set(RiverId)


def test_levels_stay_near_their_centres():
    bundle = generate_synthetic(0, default_topology())
    for lake in LAKE_ORDER:
        values = bundle.history.level(lake).values
        assert max(abs(v - CENTER_LEVEL_M[lake]) for v in values) < 1.0


def test_synthetic_network_is_stable():
    bundle = generate_synthetic(0, default_topology())
    gains = loop_gains(bundle.topology, FlowCoefficients.published())
    assert all(g < 1.0 for g in gains.values())
    assert bundle.topology.bounds(RiverId.ST_MARYS) == (500.0, 4500.0)
    assert bundle.topology.bounds(RiverId.ST_LAWRENCE) == (3500.0, 10500.0)


def test_planning_year_is_wetter_than_usual():
    bundle = generate_synthetic(0, default_topology())
    prepared = prepare_scenario(bundle.scenario, bundle.history, bundle.topology)
    history = prepared.indicator_history
    january = [
        history[LakeId.ONTARIO][i]
        for i in range(len(history))
        if history[LakeId.ONTARIO].calendar_index(i) == 0
    ]
    assert bundle.scenario.indicators[LakeId.ONTARIO][0] > max(january)


def test_run_config_matches_the_bundle():
    bundle = generate_synthetic(3, default_topology())
    run = bundle.run_config
    assert run.seed == run.anneal.seed == 3
    assert run.mpc.horizon == 6
    assert set(run.mpc.emergency_bands) == set(LAKE_ORDER)
    assert bundle.constraints.ontario is not None
    assert bundle.constraints.ontario.flood.warning_level < bundle.constraints.ontario.flood.highest_level
