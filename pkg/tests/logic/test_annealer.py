import itertools
import math

import numpy as np
import pytest

from lakeflow.contracts.control_models import AnnealConfig
from lakeflow.contracts.errors import OptimizationError, PreconditionError
from lakeflow.logic.annealer import Box, anneal, anneal_restarts, neighbor

FAST = AnnealConfig(
    t0=1.0, t_min=1e-3, alpha=0.98, iterations_per_temperature=20, step_fraction=0.1
)


def square(lower: float, upper: float, size: int) -> Box:
    return Box(lower=np.full(size, lower), upper=np.full(size, upper))


def bowl(center: np.ndarray):
    def objective(x: np.ndarray) -> float:
        return -float(((x - center) ** 2).sum())

    return objective


def snapped_waves(x: np.ndarray) -> float:
    """Two ridges and several side peaks, read off a 0.5 grid."""
    gx, gy = np.round(x * 2.0) / 2.0
    return 2.0 + math.sin(gx) + math.cos(gy)


def test_neighbor_with_zero_step_is_identity():
    rng = np.random.default_rng(0)
    x = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(neighbor(x, square(0.0, 5.0, 3), 0.0, rng), x)


def test_neighbor_moves_one_coordinate_inside_the_box():
    rng = np.random.default_rng(1)
    box = square(0.0, 1.0, 4)
    x = np.ones(4)
    for _ in range(500):
        y = neighbor(x, box, 1.0, rng)
        assert box.contains(y)
        assert int((y != x).sum()) <= 1


def test_neighbor_is_seeded():
    x = np.full(6, 0.5)
    box = square(0.0, 1.0, 6)
    a = neighbor(x, box, 0.2, np.random.default_rng(42))
    b = neighbor(x, box, 0.2, np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_box_rejects_crossed_bounds():
    with pytest.raises(PreconditionError):
        Box(lower=np.array([1.0]), upper=np.array([0.0]))
    with pytest.raises(PreconditionError):
        Box(lower=np.array([0.0]), upper=np.array([math.inf]))


def test_initial_vector_must_fit_the_box():
    with pytest.raises(PreconditionError):
        anneal(lambda x: 0.0, np.zeros(3), square(0.0, 1.0, 2), FAST)


def test_initial_vector_is_clipped_before_scoring():
    result = anneal(lambda x: float(x.sum()), np.array([5.0, -5.0]), square(0.0, 1.0, 2), FAST)
    assert result.initial_score == 1.0
    assert square(0.0, 1.0, 2).contains(result.best)


def test_constant_objective_keeps_initial_score():
    result = anneal(lambda x: 7.0, np.full(3, 0.5), square(0.0, 1.0, 3), FAST)
    assert result.best_score == result.initial_score == 7.0
    assert all(e.best_score == 7.0 for e in result.trace.entries)


def test_concave_objective_recovers_nearly_all_improvement():
    center = np.linspace(2.0, 8.0, 12)
    box = square(0.0, 10.0, 12)
    result = anneal(bowl(center), np.zeros(12), box, AnnealConfig(seed=7))
    improvement = result.best_score - result.initial_score
    assert improvement >= 0.99 * (0.0 - result.initial_score)
    assert box.contains(result.best)


def test_grid_objective_against_exhaustive_search():
    box = square(0.0, 10.0, 2)
    grid = np.arange(0.0, 10.5, 0.5)
    oracle = max(snapped_waves(np.array(p)) for p in itertools.product(grid, grid))

    for seed in range(20):
        result = anneal(snapped_waves, np.array([5.0, 5.0]), box, FAST, seed=seed)
        assert result.best_score >= 0.95 * oracle
        assert result.best_score <= oracle + 1e-12
        assert box.contains(result.best)
        best = [e.best_score for e in result.trace.entries]
        assert all(b >= a for a, b in zip(best, best[1:]))


def test_trace_has_one_entry_per_temperature():
    result = anneal(bowl(np.ones(2)), np.zeros(2), square(0.0, 2.0, 2), FAST)
    assert len(result.trace.entries) == FAST.temperature_levels
    assert result.trace.evaluations == FAST.temperature_levels * FAST.iterations_per_temperature + 1
    temperatures = [e.temperature for e in result.trace.entries]
    assert temperatures[0] == FAST.t0
    assert all(b < a for a, b in zip(temperatures, temperatures[1:]))


def test_same_seed_same_result():
    objective = bowl(np.array([3.0, 1.0, 4.0]))
    box = square(0.0, 5.0, 3)
    first = anneal(objective, np.zeros(3), box, FAST)
    second = anneal(objective, np.zeros(3), box, FAST)
    assert np.array_equal(first.best, second.best)
    assert first.trace == second.trace


def test_non_finite_objective_is_an_optimization_error():
    with pytest.raises(OptimizationError) as e:
        anneal(lambda x: math.nan, np.zeros(2), square(0.0, 1.0, 2), FAST)
    assert e.value.plan == [0.0, 0.0]


def test_restarts_ignore_thread_count():
    objective = bowl(np.array([1.0, 9.0, 5.0]))
    box = square(0.0, 10.0, 3)
    serial = anneal_restarts(objective, np.zeros(3), box, FAST.model_copy(update={"restarts": 3}))
    pooled = anneal_restarts(
        objective, np.zeros(3), box, FAST.model_copy(update={"restarts": 3, "workers": 3})
    )
    assert serial.chain == pooled.chain
    assert serial.best_score == pooled.best_score
    assert np.array_equal(serial.best, pooled.best)


def test_restarts_keep_the_best_chain():
    objective = bowl(np.array([2.0, 2.0]))
    box = square(0.0, 4.0, 2)
    config = FAST.model_copy(update={"restarts": 4})
    best = anneal_restarts(objective, np.zeros(2), box, config)
    seeds = np.random.SeedSequence(config.seed).spawn(4)
    scores = [anneal(objective, np.zeros(2), box, config, seeds[i]).best_score for i in range(4)]
    assert best.best_score == max(scores)
    assert best.chain == scores.index(max(scores))
