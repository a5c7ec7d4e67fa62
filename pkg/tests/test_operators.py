from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from broodgp.exprtree import ConfigurationError, PrimitiveSet, grow_tree, parse
from broodgp.operators import (
    BroodConfig,
    Individual,
    Operator,
    SizeBounds,
    brood_generate,
    in_first_phase,
    msbc_select,
    sbc_select,
    subtree_crossover,
    subtree_mutate,
    tournament_select,
)
from broodgp.problems import Fitness

PSET = PrimitiveSet.from_names(["add", "sub", "mul", "sin"], ["x"], (0.0, 1.0))
BOUNDS = SizeBounds(3, 25)


def ind(fitness, text="(add x x)") -> Individual:
    fit = fitness if isinstance(fitness, Fitness) else Fitness(fitness)
    return Individual(parse(text), fit)


def brood_of(values) -> list[Individual]:
    return [ind(v, f"(add x {i}.0)") for i, v in enumerate(values)]


def index_of(brood, member):
    return next(i for i, b in enumerate(brood) if b is member)


# -- oracles ---------------------------------------------------------------

def two_smallest_oracle(fits):
    best = None
    for i, j in itertools.combinations(range(len(fits)), 2):
        key = (sorted([(fits[i], i), (fits[j], j)]))
        if best is None or key < best:
            best = key
    return best[0][1], best[1][1]


def max_distance_oracle(fits):
    """Enumerate pairs; a sentinel is farther from any finite value than any finite value is."""
    def distance(lo, hi):
        a, b = fits[lo], fits[hi]
        if b.valid:
            return (0, b.value - a.value)
        if a.valid:
            return (1, -a.value)
        return (0, 0.0)

    best_key, best = None, None
    for i, j in itertools.permutations(range(len(fits)), 2):
        if fits[j] < fits[i]:
            continue  # i is the lower member of the pair
        key = (distance(i, j), -i, -j)
        if best_key is None or key > best_key:
            best_key, best = key, (i, j)
    return best


def random_fitnesses(rng, n):
    out = []
    for _ in range(n):
        r = rng.random()
        if r < 0.1:
            out.append(Fitness.invalid())
        elif r < 0.2 and out:
            out.append(rng.choice(out))  # ties
        else:
            out.append(Fitness(rng.uniform(0, 10)))
    return out


# -- tournament ------------------------------------------------------------

def test_tournament_examples():
    rng = random.Random(0)
    solo = ind(0.5)
    assert tournament_select([solo], 7, rng) is solo
    pop = [ind(v) for v in (0.4, 0.1, 0.9)]
    picks = [tournament_select(pop, 1, rng) for _ in range(3000)]
    counts = [sum(p is x for p in picks) for x in pop]
    assert all(900 < c < 1100 for c in counts)
    with pytest.raises(ValueError):
        tournament_select([], 3, rng)


def test_tournament_winner_is_best_of_its_sample():
    pop = [ind(v) for v in (0.4, 0.1, 0.9, 0.3, 0.3, 0.8)]
    for seed in range(200):
        sampler = random.Random(seed)
        sample = [pop[sampler.randrange(len(pop))] for _ in range(4)]
        winner = tournament_select(pop, 4, random.Random(seed))
        assert all(not (s.fitness < winner.fitness) for s in sample)
        assert winner is next(s for s in sample if s.fitness == min(x.fitness for x in sample))


# -- subtree crossover -----------------------------------------------------

def test_crossover_identical_parents_same_point():
    tree = parse("(add (mul x x) x)")
    rng = random.Random(3)
    for _ in range(100):
        c1, c2 = subtree_crossover(tree, tree, BOUNDS, rng)
        assert len(c1) + len(c2) == 2 * len(tree)


class _Scripted(random.Random):
    """Serves the scripted ``randrange`` draws first, then behaves like ``Random(seed)``."""

    def __new__(cls, draws, seed=0):
        return super().__new__(cls, seed)

    def __init__(self, draws, seed=0):
        super().__init__(seed)
        self._draws = list(draws)

    def randrange(self, *args):
        if self._draws:
            return self._draws.pop(0)
        return super().randrange(*args)


def test_crossover_scripted_points():
    p1, p2 = parse("(add x x)"), parse("(mul (sin x) x)")
    assert subtree_crossover(p1, p2, BOUNDS, _Scripted([0, 0])) == (p2, p1)
    assert subtree_crossover(p1, p1, BOUNDS, _Scripted([1, 1])) == (p1, p1)
    c1, c2 = subtree_crossover(p1, p2, BOUNDS, _Scripted([2, 1]))
    assert c1 == parse("(add x (sin x))")
    assert c2 == parse("(mul x x)")


def test_crossover_falls_back_to_parents_when_every_swap_overflows():
    pset = PrimitiveSet.from_names(["add"], ["x"])
    big = grow_tree(pset, 25, 25, random.Random(0))
    other = grow_tree(pset, 25, 25, random.Random(1))
    bounds = SizeBounds(25, 25)
    # a swap keeps both at 25 only when subtree sizes match; force mismatching draws
    rng = _Scripted([0, 1] * 11)
    assert subtree_crossover(big, other, bounds, rng, max_retries=10) == (big, other)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_crossover_children_always_in_bounds(seed):
    rng = random.Random(seed)
    p1 = grow_tree(PSET, 3, 25, rng)
    p2 = grow_tree(PSET, 3, 25, rng)
    for child in subtree_crossover(p1, p2, BOUNDS, rng):
        assert child in BOUNDS


# -- brood -----------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 4, 7])
def test_brood_has_2n_children_in_bounds(n):
    rng = random.Random(n)
    p1, p2 = (ind(0.0, str(grow_tree(PSET, 3, 25, rng))) for _ in range(2))
    brood = brood_generate(p1, p2, BroodConfig(brood_n=n), BOUNDS, rng)
    assert len(brood) == 2 * n
    assert all(c in BOUNDS for c in brood)


def test_brood_is_n_crossovers_in_order():
    rng_a, rng_b = random.Random(9), random.Random(9)
    p1, p2 = parse("(add (sin x) x)"), parse("(mul x (sub x x))")
    brood = brood_generate(p1, p2, BroodConfig(brood_n=3), BOUNDS, rng_a)
    expected = [c for _ in range(3) for c in subtree_crossover(p1, p2, BOUNDS, rng_b)]
    assert brood == expected


def test_brood_config_invariants():
    with pytest.raises(ConfigurationError):
        BroodConfig(brood_n=0)
    for bad in (0.0, 1.0, 1.5, -0.1):
        with pytest.raises(ConfigurationError):
            BroodConfig(switch_ratio=bad)


# -- sbc / msbc --------------------------------------------------------------

def test_sbc_examples():
    brood = brood_of([0.5, 0.2, 0.9, 0.4])
    a, b = sbc_select(brood)
    assert (a.fitness.value, b.fitness.value) == (0.2, 0.4)
    pair = brood_of([0.7, 0.1])
    assert set(map(id, sbc_select(pair))) == set(map(id, pair))
    ties = brood_of([0.3, 0.3, 0.3, 0.7])
    assert [index_of(ties, m) for m in sbc_select(ties)] == [0, 1]
    with pytest.raises(ValueError):
        sbc_select(brood_of([0.1]))


def test_msbc_examples():
    brood = brood_of([0.5, 0.2, 0.9, 0.4])
    early = msbc_select(brood, 10, 50, 0.5)
    assert sorted(m.fitness.value for m in early) == [0.2, 0.9]
    late = msbc_select(brood, 30, 50, 0.5)
    assert sorted(m.fitness.value for m in late) == [0.2, 0.4]
    boundary = msbc_select(brood, 25, 50, 0.5)
    assert sorted(m.fitness.value for m in boundary) == [0.2, 0.9]
    with pytest.raises(ValueError):
        msbc_select(brood_of([0.1]), 1, 50)
    with pytest.raises(ValueError):
        msbc_select(brood, 51, 50)


def test_msbc_sentinel_counts_as_maximal():
    brood = brood_of([0.5, Fitness.invalid(), 0.2, 0.9])
    lo, hi = msbc_select(brood, 1, 50, 0.5)
    assert (index_of(brood, lo), index_of(brood, hi)) == (2, 1)


def test_msbc_all_equal_returns_two_distinct_members():
    brood = brood_of([0.3, 0.3, 0.3])
    lo, hi = msbc_select(brood, 1, 50, 0.5)
    assert (index_of(brood, lo), index_of(brood, hi)) == (0, 1)


def test_selection_oracles_on_random_broods():
    rng = random.Random(1234)
    for _ in range(1500):
        fits = random_fitnesses(rng, rng.randint(2, 16))
        brood = brood_of(fits)
        got = tuple(index_of(brood, m) for m in sbc_select(brood))
        assert got == two_smallest_oracle(fits)
        got = tuple(index_of(brood, m) for m in msbc_select(brood, 1, 50, 0.5))
        assert got == max_distance_oracle(fits)
        late = tuple(index_of(brood, m) for m in msbc_select(brood, 50, 50, 0.5))
        assert late == two_smallest_oracle(fits)


def test_first_phase_predicate_is_real_valued():
    assert [g for g in range(1, 51) if in_first_phase(g, 50, 0.5)] == list(range(1, 26))
    assert [g for g in range(1, 51) if in_first_phase(g, 50, 0.33)] == list(range(1, 17))
    assert not in_first_phase(1, 50, 0.01)


# -- mutation ----------------------------------------------------------------

def test_mutation_at_root_grows_fresh_tree():
    tree = parse("(add x (mul x x))")
    out = subtree_mutate(tree, PSET, BOUNDS, _Scripted([0], seed=5))
    assert out == grow_tree(PSET, 3, 25, random.Random(5))
    assert out in BOUNDS


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_mutation_bounds_and_determinism(seed):
    tree = grow_tree(PSET, 3, 25, random.Random(seed))
    a = subtree_mutate(tree, PSET, BOUNDS, random.Random(seed + 1))
    b = subtree_mutate(tree, PSET, BOUNDS, random.Random(seed + 1))
    assert a == b
    assert a in BOUNDS


def test_mutation_falls_back_when_no_window_exists():
    pset = PrimitiveSet.from_names(["add"], ["x"])
    tree = parse("(sin (sin (sin x)))")
    # cutting at 0 or 2 leaves a window of size 4 or 2, which binary trees cannot fill
    out = subtree_mutate(tree, pset, SizeBounds(4, 4), _Scripted([0, 2, 0, 2]), max_retries=3)
    assert out == tree


def test_operator_enum():
    assert Operator.parse("msbc") is Operator.MSBC
    with pytest.raises(ValueError, match="subtree, sbc, msbc"):
        Operator.parse("semantic")
