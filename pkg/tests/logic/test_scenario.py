import numpy as np
import pytest

from lakeflow.contracts.control_models import StakeholderConstraints
from lakeflow.contracts.errors import DataError, PreconditionError
from lakeflow.contracts.models import HistoricalData, MonthlySeries, RiverId
from lakeflow.infrastructure.json_file import default_topology
from lakeflow.logic.scenario import prepare_scenario
from lakeflow.logic.synthetic import SyntheticBundle, generate_synthetic


@pytest.fixture(scope="module")
def bundle() -> SyntheticBundle:
    return generate_synthetic(0, default_topology())


def without_gauge(history: HistoricalData, gauge: RiverId) -> HistoricalData:
    return HistoricalData(
        levels=history.levels,
        flows={river: series for river, series in history.flows.items() if river != gauge},
    )


def test_missing_gauge_fails_ontario_grading(bundle: SyntheticBundle):
    history = without_gauge(bundle.history, RiverId.OTTAWA)
    prepared = prepare_scenario(bundle.scenario, history, bundle.topology)
    with pytest.raises(DataError) as e:
        prepared.mpc_setup(bundle.constraints)
    assert e.value.subject == RiverId.OTTAWA
    with pytest.raises(DataError):
        prepared.recent_for(bundle.constraints)


def test_missing_gauge_reads_as_zero_without_ontario(bundle: SyntheticBundle):
    history = without_gauge(bundle.history, RiverId.MONTREAL)
    prepared = prepare_scenario(bundle.scenario, history, bundle.topology)
    setup = prepared.mpc_setup(StakeholderConstraints(lakes=bundle.constraints.lakes))
    assert not setup.recent.montreal.any()
    assert np.array_equal(setup.recent.ottawa, bundle.history.flows[RiverId.OTTAWA].array())


def test_complete_history_keeps_every_gauge(bundle: SyntheticBundle):
    prepared = prepare_scenario(bundle.scenario, bundle.history, bundle.topology)
    recent = prepared.recent_for(bundle.constraints)
    assert len(recent) == len(bundle.history)
    assert np.array_equal(recent.montreal, bundle.history.flows[RiverId.MONTREAL].array())


def test_history_must_end_before_the_scenario(bundle: SyntheticBundle):
    short = HistoricalData(
        levels={
            lake: MonthlySeries.from_array(s.start, s.values[:-1])
            for lake, s in bundle.history.levels.items()
        },
        flows={
            river: MonthlySeries.from_array(s.start, s.values[:-1])
            for river, s in bundle.history.flows.items()
        },
    )
    with pytest.raises(PreconditionError):
        prepare_scenario(bundle.scenario, short, bundle.topology)
