"""Generational elitist GP loop."""
from __future__ import annotations

import math
import random
import statistics
import time
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Sequence

from .exprtree import ConfigurationError, ExprTree, PrimitiveSet, grow_tree
from .operators import (
    BroodConfig,
    Individual,
    Operator,
    SizeBounds,
    brood_generate,
    msbc_select,
    sbc_select,
    subtree_crossover,
    subtree_mutate,
    tournament_select,
)
from .problems import METRICS, Fitness, FitnessCases, ProblemSpec, fitness_of, generate_cases, get_problem

SEED_MASK = (1 << 64) - 1


def time_seed() -> int:
    return time.time_ns() // 1_000_000


@dataclass(frozen=True)
class GPConfig:
    problem: str = "P2"
    operator: Operator = Operator.MSBC
    population_size: int = 100
    max_generations: int = 50
    min_tree_size: int = 3
    max_tree_size: int = 25
    tournament_k: int = 7
    crossover_probability: float = 0.8
    mutation_probability: float = 0.1
    elite_count: int = 1
    brood: BroodConfig = field(default_factory=BroodConfig)
    seed: int | str = "time"
    metric: str = "mse"
    case_count: int | None = None
    sampling_interval: tuple[float, float] | None = None
    functions: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "operator", Operator.parse(self.operator))
        object.__setattr__(self, "problem", get_problem(self.problem).id.value)
        if self.population_size < 2:
            raise ConfigurationError("population_size must be >= 2")
        if self.max_generations < 1:
            raise ConfigurationError("max_generations must be >= 1")
        if self.tournament_k < 1:
            raise ConfigurationError("tournament_k must be >= 1")
        for name in ("crossover_probability", "mutation_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {p}")
        if not 0 <= self.elite_count < self.population_size:
            raise ConfigurationError("elite_count must satisfy 0 <= elite_count < population_size")
        if self.metric not in METRICS:
            raise ConfigurationError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.case_count is not None and self.case_count < 1:
            raise ConfigurationError("case_count must be positive")
        if self.seed != "time" and not (isinstance(self.seed, int) and 0 <= self.seed <= SEED_MASK):
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer or 'time', got {self.seed!r}")
        SizeBounds(self.min_tree_size, self.max_tree_size)
        if self.functions is not None:
            object.__setattr__(self, "functions", tuple(self.functions))
        if self.sampling_interval is not None:
            object.__setattr__(self, "sampling_interval", tuple(map(float, self.sampling_interval)))
        try:
            pset = self.primitive_set()
        except KeyError as exc:
            raise ConfigurationError(exc.args[0]) from None
        if not pset.achievable_sizes(self.min_tree_size, self.max_tree_size):
            raise ConfigurationError(
                f"no tree with size in [{self.min_tree_size}, {self.max_tree_size}] can be built "
                f"from functions {[f.name for f in pset.functions]}"
            )

    @property
    def problem_spec(self) -> ProblemSpec:
        return get_problem(self.problem)

    @property
    def bounds(self) -> SizeBounds:
        return SizeBounds(self.min_tree_size, self.max_tree_size)

    def primitive_set(self) -> PrimitiveSet:
        return self.problem_spec.primitive_set(self.functions)

    def with_seed(self, seed: int | str) -> GPConfig:
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "brood":
                out.update(brood_n=value.brood_n, switch_ratio=value.switch_ratio, max_retries=value.max_retries)
            elif isinstance(value, Operator):
                out[f.name] = value.value
            elif isinstance(value, tuple):
                out[f.name] = list(value)
            else:
                out[f.name] = value
        return out


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_size: int
    invalid_count: int


@dataclass(frozen=True)
class RunResult:
    stats: tuple[GenerationStats, ...]
    best_individual: Individual
    best_found_at: int
    seed_used: int

    @property
    def best_fitness(self) -> float:
        return float(self.best_individual.fitness)


class Evaluator:
    """Binds a run's fitness cases and metric so trees can be scored directly."""

    max_cache = 100_000

    def __init__(self, cases: FitnessCases, metric: str = "mse"):
        self.cases = cases
        self.metric = metric
        self._cache: dict[ExprTree, Fitness] = {}

    def __call__(self, genome: ExprTree) -> Individual:
        fitness = self._cache.get(genome)
        if fitness is None:
            fitness = fitness_of(genome, self.cases, self.metric)
            if len(self._cache) >= self.max_cache:
                self._cache.clear()
            self._cache[genome] = fitness
        return Individual(genome, fitness)


def init_population(config: GPConfig, rng: random.Random, evaluator: Evaluator) -> list[Individual]:
    pset = config.primitive_set()
    return [
        evaluator(grow_tree(pset, config.min_tree_size, config.max_tree_size, rng))
        for _ in range(config.population_size)
    ]


def _breed_pair(
    parents: tuple[Individual, Individual],
    config: GPConfig,
    generation: int,
    rng: random.Random,
    evaluator: Evaluator,
) -> list[Individual]:
    p1, p2 = parents
    if rng.random() >= config.crossover_probability:
        return [p1, p2]
    if config.operator is Operator.SUBTREE:
        return [evaluator(c) for c in subtree_crossover(p1, p2, config.bounds, rng, config.brood.max_retries)]
    brood = [evaluator(c) for c in brood_generate(p1, p2, config.brood, config.bounds, rng)]
    if config.operator is Operator.SBC:
        return list(sbc_select(brood))
    return list(msbc_select(brood, generation, config.max_generations, config.brood.switch_ratio))


def step_generation(
    population: Sequence[Individual],
    config: GPConfig,
    generation: int,
    rng: random.Random,
    evaluator: Evaluator,
) -> list[Individual]:
    """Produce the next generation: elites, then tournament-bred pairs, then mutation."""
    if len(population) != config.population_size:
        raise ValueError(f"population has {len(population)} members, expected {config.population_size}")
    if not 1 <= generation <= config.max_generations:
        raise ValueError(f"generation {generation} outside 1..{config.max_generations}")
    ranked = sorted(range(len(population)), key=lambda i: population[i].fitness)
    elites = [population[i] for i in ranked[: config.elite_count]]

    need = config.population_size - config.elite_count
    offspring: list[Individual] = []
    while len(offspring) < need:
        parents = (
            tournament_select(population, config.tournament_k, rng),
            tournament_select(population, config.tournament_k, rng),
        )
        children = _breed_pair(parents, config, generation, rng, evaluator)
        offspring.extend(children[: need - len(offspring)])

    pset = config.primitive_set()
    for i, child in enumerate(offspring):
        if rng.random() < config.mutation_probability:
            offspring[i] = evaluator(
                subtree_mutate(child, pset, config.bounds, rng, config.brood.max_retries)
            )
    return elites + offspring


def generation_stats(generation: int, population: Sequence[Individual]) -> GenerationStats:
    best = min(population, key=lambda ind: ind.fitness)
    finite = [ind.fitness.value for ind in population if ind.fitness.valid]
    return GenerationStats(
        generation=generation,
        best_fitness=float(best.fitness),
        mean_fitness=statistics.fmean(finite) if finite else math.inf,
        best_size=len(best.genome),
        invalid_count=len(population) - len(finite),
    )


def run(
    config: GPConfig,
    on_generation: Callable[[int, list[Individual]], None] | None = None,
) -> RunResult:
    """Evolve for exactly ``config.max_generations`` generations.

    ``on_generation(g, population)`` is called for generation 0 and after
    every step; it must not mutate the population.
    """
    seed = time_seed() if config.seed == "time" else config.seed
    rng = random.Random(seed)
    cases = generate_cases(config.problem_spec, rng, config.case_count, config.sampling_interval)
    evaluator = Evaluator(cases, config.metric)

    population = init_population(config, rng, evaluator)
    stats = [generation_stats(0, population)]
    if on_generation:
        on_generation(0, population)
    best = min(population, key=lambda ind: ind.fitness)
    for generation in range(1, config.max_generations + 1):
        population = step_generation(population, config, generation, rng, evaluator)
        stats.append(generation_stats(generation, population))
        if on_generation:
            on_generation(generation, population)
        best = min(best, min(population, key=lambda ind: ind.fitness), key=lambda ind: ind.fitness)

    best_value = float(best.fitness)
    found_at = next(s.generation for s in stats if s.best_fitness == best_value)
    return RunResult(tuple(stats), best, found_at, seed)
