"""
Simulated annealing over box-bounded real vectors (maximization).
"""

from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

from loguru import logger
import numpy as np
from numpy.typing import NDArray

from lakeflow.contracts.control_models import AnnealConfig, AnnealTrace, AnnealTraceEntry
from lakeflow.contracts.errors import OptimizationError, PreconditionError

type Vector = NDArray[np.float64]
type Objective = Callable[[Vector], float]


@dataclass(frozen=True)
class Box:
    lower: Vector
    upper: Vector

    def __post_init__(self) -> None:
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise PreconditionError(
                f"Bounds must be two vectors of one shape, got {self.lower.shape} and {self.upper.shape}"
            )
        if not (np.isfinite(self.lower).all() and np.isfinite(self.upper).all()):
            raise PreconditionError("Bounds must be finite")
        if (self.lower > self.upper).any():
            raise PreconditionError("Every lower bound must be at most its upper bound")

    @property
    def size(self) -> int:
        return self.lower.shape[0]

    def clip(self, x: Vector) -> Vector:
        return np.clip(x, self.lower, self.upper)

    def contains(self, x: Vector) -> bool:
        return bool(((x >= self.lower) & (x <= self.upper)).all())


@dataclass(frozen=True)
class AnnealResult:
    best: Vector
    best_score: float
    initial_score: float
    trace: AnnealTrace
    chain: int = 0


def neighbor(
    x: Vector, box: Box, step_fraction: float, rng: np.random.Generator
) -> Vector:
    """
    Move one random coordinate by up to `step_fraction` of its bound width, clipped.
    """
    out = x.copy()
    i = int(rng.integers(x.shape[0]))
    half = step_fraction * (box.upper[i] - box.lower[i])
    out[i] = min(max(out[i] + rng.uniform(-half, half), box.lower[i]), box.upper[i])
    return out


def _score(objective: Objective, x: Vector) -> float:
    score = float(objective(x))
    if not math.isfinite(score):
        raise OptimizationError(f"Objective returned {score}", plan=x.tolist())
    return score


def anneal(
    objective: Objective,
    initial: Vector,
    box: Box,
    config: AnnealConfig,
    seed: int | np.random.SeedSequence | None = None,
) -> AnnealResult:
    """
    Metropolis acceptance with geometric cooling from t0 down to t_min.

    The best vector ever evaluated is returned, so the result never scores
    below the (clipped) initial vector.
    """
    initial = np.asarray(initial, dtype=np.float64)
    if initial.shape != box.lower.shape:
        raise PreconditionError(
            f"Initial vector of shape {initial.shape} does not fit bounds of shape {box.lower.shape}"
        )
    rng = np.random.default_rng(config.seed if seed is None else seed)

    x = box.clip(initial)
    g = _score(objective, x)
    initial_score = g
    best, best_g = x, g

    entries: list[AnnealTraceEntry] = []
    iteration = 0
    accepted = 0
    t = config.t0
    while t > config.t_min:
        for _ in range(config.iterations_per_temperature):
            candidate = neighbor(x, box, config.step_fraction, rng)
            gc = _score(objective, candidate)
            dg = gc - g
            if dg > 0 or rng.random() < math.exp(dg / t):
                x, g = candidate, gc
                accepted += 1
                if g > best_g:
                    best, best_g = x, g
            iteration += 1
        entries.append(
            AnnealTraceEntry(
                iteration=iteration, temperature=t, current_score=g, best_score=best_g
            )
        )
        t *= config.alpha

    return AnnealResult(
        best=best.copy(),
        best_score=best_g,
        initial_score=initial_score,
        trace=AnnealTrace(
            entries=tuple(entries), evaluations=iteration + 1, accepted=accepted
        ),
    )


def anneal_restarts(
    objective: Objective, initial: Vector, box: Box, config: AnnealConfig
) -> AnnealResult:
    """
    Independent chains seeded from the config seed; the best one wins (lowest
    chain on ties). The thread count never changes the answer.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.restarts)

    def run(chain: int) -> AnnealResult:
        result = anneal(objective, initial, box, config, seeds[chain])
        logger.debug(
            "Anneal chain {}: best {:.6f} from {:.6f} ({} accepted of {})",
            chain,
            result.best_score,
            result.initial_score,
            result.trace.accepted,
            result.trace.evaluations,
        )
        return AnnealResult(
            best=result.best,
            best_score=result.best_score,
            initial_score=result.initial_score,
            trace=result.trace,
            chain=chain,
        )

    if config.workers > 1 and config.restarts > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run, range(config.restarts)))
    else:
        results = [run(chain) for chain in range(config.restarts)]

    best = results[0]
    for result in results[1:]:
        if result.best_score > best.best_score:
            best = result
    return best
