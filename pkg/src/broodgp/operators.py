"""Selection and variation operators, including soft and modified soft brood crossover."""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Sequence

from .exprtree import ConfigurationError, ExprTree, PrimitiveSet, grow_tree, replace_subtree
from .problems import Fitness


class Operator(str, enum.Enum):
    SUBTREE = "subtree"
    SBC = "sbc"
    MSBC = "msbc"

    @classmethod
    def parse(cls, name: str | Operator) -> Operator:
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(op.value for op in cls)
            raise ValueError(f"unknown operator {name!r}; valid operators: {valid}") from None


@dataclass(frozen=True)
class Individual:
    genome: ExprTree
    fitness: Fitness


@dataclass(frozen=True)
class SizeBounds:
    min_size: int = 3
    max_size: int = 25

    def __post_init__(self):
        if not 1 <= self.min_size <= self.max_size:
            raise ConfigurationError(f"invalid size bounds [{self.min_size}, {self.max_size}]")

    def __contains__(self, tree: ExprTree) -> bool:
        return self.min_size <= len(tree) <= self.max_size


@dataclass(frozen=True)
class BroodConfig:
    brood_n: int = 4
    switch_ratio: float = 0.5
    max_retries: int = 10

    def __post_init__(self):
        if self.brood_n < 1:
            raise ConfigurationError(f"brood_n must be >= 1, got {self.brood_n}")
        if not 0.0 < self.switch_ratio < 1.0:
            raise ConfigurationError(f"switch_ratio must lie in (0, 1), got {self.switch_ratio}")
        if self.max_retries < 1:
            raise ConfigurationError(f"max_retries must be >= 1, got {self.max_retries}")


def tournament_select(population: Sequence[Individual], k: int, rng: random.Random) -> Individual:
    """Best of ``k`` uniform draws with replacement; the earliest draw wins ties."""
    if not population:
        raise ValueError("tournament on an empty population")
    if k < 1:
        raise ValueError(f"tournament size must be >= 1, got {k}")
    n = len(population)
    winner = population[rng.randrange(n)]
    for _ in range(k - 1):
        challenger = population[rng.randrange(n)]
        if challenger.fitness < winner.fitness:
            winner = challenger
    return winner


def subtree_crossover(
    p1: ExprTree | Individual,
    p2: ExprTree | Individual,
    bounds: SizeBounds,
    rng: random.Random,
    max_retries: int = 10,
) -> tuple[ExprTree, ExprTree]:
    t1 = p1.genome if isinstance(p1, Individual) else p1
    t2 = p2.genome if isinstance(p2, Individual) else p2
    for _ in range(1 + max_retries):
        i = rng.randrange(len(t1))
        j = rng.randrange(len(t2))
        s1, s2 = t1.subtree_span(i), t2.subtree_span(j)
        len1, len2 = s1.stop - s1.start, s2.stop - s2.start
        if (
            bounds.min_size <= len(t1) - len1 + len2 <= bounds.max_size
            and bounds.min_size <= len(t2) - len2 + len1 <= bounds.max_size
        ):
            return (
                ExprTree(t1.nodes[: s1.start] + t2.nodes[s2] + t1.nodes[s1.stop :]),
                ExprTree(t2.nodes[: s2.start] + t1.nodes[s1] + t2.nodes[s2.stop :]),
            )
    return t1, t2


def brood_generate(
    p1: ExprTree | Individual,
    p2: ExprTree | Individual,
    cfg: BroodConfig,
    bounds: SizeBounds,
    rng: random.Random,
) -> list[ExprTree]:
    """Run ``cfg.brood_n`` crossovers on one parent pair and collect all 2N children."""
    brood: list[ExprTree] = []
    for _ in range(cfg.brood_n):
        brood.extend(subtree_crossover(p1, p2, bounds, rng, cfg.max_retries))
    return brood


def _check_brood(brood: Sequence[Individual]) -> None:
    if len(brood) < 2:
        raise ValueError(f"brood selection needs at least 2 members, got {len(brood)}")


def sbc_select(brood: Sequence[Individual]) -> tuple[Individual, Individual]:
    """Keep the two fittest children (lowest index first on ties)."""
    _check_brood(brood)
    order = sorted(range(len(brood)), key=lambda i: brood[i].fitness)
    return brood[order[0]], brood[order[1]]


def most_dissimilar_pair(brood: Sequence[Individual]) -> tuple[Individual, Individual]:
    """The pair furthest apart in fitness: the best member and the worst other member."""
    _check_brood(brood)
    lo = min(range(len(brood)), key=lambda i: brood[i].fitness)
    hi = max((i for i in range(len(brood)) if i != lo), key=lambda i: (brood[i].fitness, -i))
    return brood[lo], brood[hi]


def in_first_phase(generation: int, total_generations: int, switch_ratio: float) -> bool:
    return generation <= switch_ratio * total_generations


def msbc_select(
    brood: Sequence[Individual],
    generation: int,
    total_generations: int,
    switch_ratio: float = 0.5,
) -> tuple[Individual, Individual]:
    """Diversity-preserving pick early in the run, fittest-two pick afterwards."""
    _check_brood(brood)
    if not 1 <= generation <= total_generations:
        raise ValueError(f"generation {generation} outside 1..{total_generations}")
    if in_first_phase(generation, total_generations, switch_ratio):
        return most_dissimilar_pair(brood)
    return sbc_select(brood)


def subtree_mutate(
    tree: ExprTree | Individual,
    pset: PrimitiveSet,
    bounds: SizeBounds,
    rng: random.Random,
    max_retries: int = 10,
) -> ExprTree:
    """Replace a random subtree with a freshly grown one, keeping the size in bounds."""
    tree = tree.genome if isinstance(tree, Individual) else tree
    for _ in range(1 + max_retries):
        i = rng.randrange(len(tree))
        span = tree.subtree_span(i)
        rest = len(tree) - (span.stop - span.start)
        lo = max(1, bounds.min_size - rest)
        hi = bounds.max_size - rest
        if lo > hi or not pset.achievable_sizes(lo, hi):
            continue
        return replace_subtree(tree, i, grow_tree(pset, lo, hi, rng))
    return tree
