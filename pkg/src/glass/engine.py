"""NSGA-II search core.

Fast non-dominated sorting, crowding distance, crowded binary tournaments,
and elitist (mu+lambda) environmental selection over a combined
parent+offspring set.  With a single objective the front partition
degenerates into a total order and the loop behaves as a classical elitist
genetic algorithm; no separate code path exists for that case.

Objective vectors use the all-minimized internal convention.  Non-finite
values coming back from an evaluator are replaced by a large penalty
constant before any dominance comparison and counted in the per-generation
history.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, TextIO

import numpy as np

from .objectives import ObjectiveSpec
from .space import LatentSpaceSpec, OperatorParams, crossover, mutate, sample

__all__ = [
    "PENALTY",
    "Individual",
    "SearchConfig",
    "GenerationStats",
    "SearchResult",
    "SearchAborted",
    "Evaluator",
    "dominates",
    "non_dominated_sort",
    "crowding_distance",
    "tournament_select",
    "evolve_generation",
    "run_search",
]

PENALTY = 1e12  # stands in for NaN/inf objective values so dominance stays defined

# Maps a batch of genomes to one raw objective sequence per genome, in order.
Evaluator = Callable[[list[np.ndarray]], Sequence[Sequence[float]]]


@dataclass
class Individual:
    genome: np.ndarray
    objectives: np.ndarray
    rank: int = -1
    crowding: float = 0.0


@dataclass
class SearchConfig:
    space: LatentSpaceSpec
    objective_specs: list[ObjectiveSpec]
    operator_params: OperatorParams = field(default_factory=OperatorParams)
    population_size: int = 64
    generations: int = 500
    seed: int = 0
    log_every: int = 1

    def __post_init__(self) -> None:
        if self.population_size < 4 or self.population_size % 2 != 0:
            raise ValueError("population_size must be an even integer >= 4")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        if not self.objective_specs:
            raise ValueError("at least one objective spec is required")

    @property
    def n_objectives(self) -> int:
        return len(self.objective_specs)


@dataclass
class GenerationStats:
    generation: int
    evaluations: int  # cumulative oracle calls up to and including this generation
    best: list[float]  # per-objective minimum over the surviving population
    mean: list[float]
    penalized: int  # evaluations this generation whose values were penalty-mapped

    def to_record(self) -> dict:
        return {
            "type": "generation",
            "generation": self.generation,
            "evaluations": self.evaluations,
            "best": self.best,
            "mean": self.mean,
            "penalized": self.penalized,
        }


@dataclass
class SearchResult:
    pareto_front: list[Individual]
    best: Individual
    history: list[GenerationStats]
    evaluations: int
    final_population: list[Individual]


class SearchAborted(RuntimeError):
    """Raised when a run cannot finish; carries the partial history, the
    underlying cause (if any), and whether the abort was an interrupt."""

    def __init__(
        self,
        reason: str,
        generation: int,
        history: list[GenerationStats],
        cause: Optional[BaseException] = None,
        interrupted: bool = False,
    ):
        super().__init__(reason)
        self.reason = reason
        self.generation = generation
        self.history = history
        self.cause = cause
        self.interrupted = interrupted


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """Pareto dominance under minimization: a <= b everywhere, < somewhere."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"objective vector lengths differ: {a.shape} vs {b.shape}")
    return bool((a <= b).all() and (a < b).any())


def non_dominated_sort(points: Sequence[Sequence[float]]) -> list[list[int]]:
    """Partition points into ranked fronts (front 0 = non-dominated set).

    Vectorized pairwise dominance; every index appears in exactly one
    front.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("expected a 2-D array of objective vectors with equal lengths")
    n = pts.shape[0]
    if n == 0:
        return []
    le = (pts[:, None, :] <= pts[None, :, :]).all(axis=2)
    lt = (pts[:, None, :] < pts[None, :, :]).any(axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    dominated_by = dom.sum(axis=0)

    fronts: list[list[int]] = []
    assigned = np.zeros(n, dtype=bool)
    while not assigned.all():
        current = np.flatnonzero((dominated_by == 0) & ~assigned)
        fronts.append([int(i) for i in current])
        assigned[current] = True
        dominated_by = dominated_by - dom[current].sum(axis=0)
    return fronts


def crowding_distance(front: Sequence[Sequence[float]]) -> np.ndarray:
    """NSGA-II crowding distance of each point within one front.

    Boundary points along any objective get +inf; interior points sum the
    normalized gap between their neighbors per objective.  Objectives with
    zero range contribute nothing.
    """
    pts = np.asarray(front, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("front must be a non-empty 2-D array")
    n, m = pts.shape
    distances = np.zeros(n, dtype=np.float64)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(m):
        order = np.argsort(pts[:, k], kind="stable")
        column = pts[order, k]
        span = column[-1] - column[0]
        distances[order[0]] = np.inf
        distances[order[-1]] = np.inf
        if span == 0.0:
            continue
        gaps = (column[2:] - column[:-2]) / span
        distances[order[1:-1]] += gaps
    return distances


def tournament_select(population: Sequence[Individual], rng: np.random.Generator) -> Individual:
    """Crowded binary tournament: lower rank wins, then larger crowding,
    then the first-drawn candidate."""
    if not population:
        raise ValueError("cannot select from an empty population")
    i, j = rng.integers(0, len(population), size=2)
    first, second = population[int(i)], population[int(j)]
    if second.rank < first.rank:
        return second
    if second.rank == first.rank and second.crowding > first.crowding:
        return second
    return first


def _sanitize(raw: Sequence[Sequence[float]], n_objectives: int) -> tuple[list[np.ndarray], int]:
    """Coerce evaluator output to finite float64 vectors; count penalties."""
    vectors: list[np.ndarray] = []
    penalized = 0
    for row in raw:
        vec = np.asarray(row, dtype=np.float64)
        if vec.shape != (n_objectives,):
            raise ValueError(
                f"evaluator returned a vector of shape {vec.shape}, expected ({n_objectives},)"
            )
        bad = ~np.isfinite(vec)
        if bad.any():
            vec = np.where(bad, PENALTY, vec)
            penalized += 1
        vectors.append(vec)
    return vectors, penalized


def _rank_and_crowd(individuals: list[Individual]) -> list[Individual]:
    """Assign rank and crowding in place; return individuals in front order."""
    pts = np.stack([ind.objectives for ind in individuals])
    ordered: list[Individual] = []
    for rank, front in enumerate(non_dominated_sort(pts)):
        crowd = crowding_distance(pts[front])
        for local, idx in enumerate(front):
            individuals[idx].rank = rank
            individuals[idx].crowding = float(crowd[local])
            ordered.append(individuals[idx])
    return ordered


def evolve_generation(
    population: list[Individual],
    config: SearchConfig,
    evaluator: Evaluator,
    rng: np.random.Generator,
) -> tuple[list[Individual], int]:
    """One generational step: breed N offspring, evaluate them in a single
    batch, then keep the best N of the combined 2N set.

    Returns the ranked-and-crowded survivors and the number of offspring
    whose objectives were penalty-mapped.
    """
    n = config.population_size
    offspring_genomes: list[np.ndarray] = []
    for _ in range(n // 2):
        parent_a = tournament_select(population, rng)
        parent_b = tournament_select(population, rng)
        child_a, child_b = crossover(
            config.space, parent_a.genome, parent_b.genome, config.operator_params, rng
        )
        offspring_genomes.append(mutate(config.space, child_a, config.operator_params, rng))
        offspring_genomes.append(mutate(config.space, child_b, config.operator_params, rng))

    vectors, penalized = _sanitize(evaluator(offspring_genomes), config.n_objectives)
    combined = list(population) + [
        Individual(genome=g, objectives=v) for g, v in zip(offspring_genomes, vectors)
    ]

    pts = np.stack([ind.objectives for ind in combined])
    survivors: list[Individual] = []
    for rank, front in enumerate(non_dominated_sort(pts)):
        crowd = crowding_distance(pts[front])
        for local, idx in enumerate(front):
            combined[idx].rank = rank
            combined[idx].crowding = float(crowd[local])
        if len(survivors) + len(front) <= n:
            survivors.extend(combined[idx] for idx in front)
            if len(survivors) == n:
                break
        else:
            # Truncate the split front by crowding; boundary ties fall back
            # to the lower combined index for determinism.
            slots = n - len(survivors)
            order = sorted(range(len(front)), key=lambda i: (-crowd[i], front[i]))
            survivors.extend(combined[front[i]] for i in order[:slots])
            break
    return survivors, penalized


def _stats(
    population: list[Individual], generation: int, evaluations: int, penalized: int
) -> GenerationStats:
    pts = np.stack([ind.objectives for ind in population])
    return GenerationStats(
        generation=generation,
        evaluations=evaluations,
        best=[float(v) for v in pts.min(axis=0)],
        mean=[float(v) for v in pts.mean(axis=0)],
        penalized=penalized,
    )


def _emit(stream: Optional[TextIO], stats: GenerationStats, log_every: int, last: bool) -> None:
    if stream is None:
        return
    if stats.generation % log_every == 0 or last:
        stream.write(json.dumps(stats.to_record()) + "\n")
        stream.flush()


def run_search(
    config: SearchConfig,
    evaluator: Evaluator,
    progress_stream: Optional[TextIO] = None,
) -> SearchResult:
    """Run the full generational search.

    The population is initialized by sampling the latent space, then
    evolved for ``config.generations`` steps.  Progress records are written
    as JSON lines to ``progress_stream`` every ``log_every`` generations.
    Evaluator failures and interrupts raise :class:`SearchAborted` with the
    history accumulated so far.
    """
    rng = np.random.default_rng(config.seed)
    n = config.population_size
    history: list[GenerationStats] = []

    genomes = [sample(config.space, rng) for _ in range(n)]
    try:
        vectors, penalized = _sanitize(evaluator(genomes), config.n_objectives)
    except KeyboardInterrupt:
        raise SearchAborted("interrupted", 0, history, interrupted=True) from None
    except Exception as exc:
        raise SearchAborted(
            f"evaluator failed at initialization: {exc}", 0, history, cause=exc
        ) from exc

    population = [Individual(genome=g, objectives=v) for g, v in zip(genomes, vectors)]
    population = _rank_and_crowd(population)
    evaluations = n
    stats = _stats(population, 0, evaluations, penalized)
    history.append(stats)
    _emit(progress_stream, stats, config.log_every, last=False)

    for generation in range(1, config.generations + 1):
        try:
            population, penalized = evolve_generation(population, config, evaluator, rng)
        except KeyboardInterrupt:
            raise SearchAborted("interrupted", generation, history, interrupted=True) from None
        except Exception as exc:
            raise SearchAborted(
                f"evaluator failed at generation {generation}: {exc}",
                generation,
                history,
                cause=exc,
            ) from exc
        evaluations += n
        stats = _stats(population, generation, evaluations, penalized)
        history.append(stats)
        _emit(progress_stream, stats, config.log_every, last=generation == config.generations)

    pareto_front = [ind for ind in population if ind.rank == 0]
    best = min(range(len(population)), key=lambda i: (population[i].objectives[0], i))
    return SearchResult(
        pareto_front=pareto_front,
        best=population[best],
        history=history,
        evaluations=evaluations,
        final_population=population,
    )
