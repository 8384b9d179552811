"""NSGA-II primitives: dominance, fast non-dominated sort, crowding distance,
crowded comparison, and the half-elitist generation step.

Each new generation keeps the better half of the population under the
crowded comparison and fills the other half with offspring bred from the
survivors by binary tournament, uniform crossover, and per-gene mutation.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .space import (
    DEFAULT_MUTATION_PROB,
    Genome,
    SearchSpace,
    StageMask,
    crossover,
    mutate,
)

OBJECTIVE_LABELS = ("miou_error", "params", "flops")


@dataclass(frozen=True)
class ObjectiveVector:
    """Minimization objectives with their labels."""

    values: tuple
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.values) != len(self.labels):
            raise ValueError("values and labels differ in length")
        if not 2 <= len(self.values) <= 3:
            raise ValueError(f"expected 2 or 3 objectives, got {len(self.values)}")
        for label, value in zip(self.labels, self.values):
            if label not in OBJECTIVE_LABELS:
                raise ValueError(f"unknown objective label {label!r}")
            if not math.isfinite(value):
                raise ValueError(f"{label}: objective value {value} is not finite")


@dataclass
class Individual:
    genome: Genome
    objectives: ObjectiveVector | None = None
    rank: int | None = None
    crowding: float | None = None


@dataclass
class Population:
    individuals: list
    generation: int = 1

    def __len__(self) -> int:
        return len(self.individuals)


def dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    """True iff a is no worse everywhere and strictly better somewhere."""
    if a.labels != b.labels:
        raise ValueError(f"objective labels differ: {a.labels} vs {b.labels}")
    no_worse = all(x <= y for x, y in zip(a.values, b.values))
    return no_worse and any(x < y for x, y in zip(a.values, b.values))


def fast_non_dominated_sort(population: Population) -> list[list[int]]:
    """Deb's fast non-dominated sort; sets each individual's rank."""
    inds = population.individuals
    n = len(inds)
    if n == 0:
        raise ValueError("population is empty")
    dominated = [[] for _ in range(n)]
    dominating = [0] * n
    fronts: list[list[int]] = [[]]
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            if dominates(inds[p].objectives, inds[q].objectives):
                dominated[p].append(q)
            elif dominates(inds[q].objectives, inds[p].objectives):
                dominating[p] += 1
        if dominating[p] == 0:
            inds[p].rank = 0
            fronts[0].append(p)
    i = 0
    while fronts[i]:
        nxt = []
        for p in fronts[i]:
            for q in dominated[p]:
                dominating[q] -= 1
                if dominating[q] == 0:
                    inds[q].rank = i + 1
                    nxt.append(q)
        i += 1
        fronts.append(nxt)
    fronts.pop()
    return fronts


def crowding_distance(front: list[ObjectiveVector]) -> list[float]:
    """Crowding distances for one front; boundary members get +inf."""
    n = len(front)
    if n == 0:
        raise ValueError("front is empty")
    distances = [0.0] * n
    if n <= 2:
        return [math.inf] * n
    for m in range(len(front[0].values)):
        order = sorted(range(n), key=lambda i: front[i].values[m])
        lo, hi = front[order[0]].values[m], front[order[-1]].values[m]
        distances[order[0]] = math.inf
        distances[order[-1]] = math.inf
        if hi == lo:
            continue
        span = hi - lo
        for k in range(1, n - 1):
            i = order[k]
            if distances[i] == math.inf:
                continue
            prev_v = front[order[k - 1]].values[m]
            next_v = front[order[k + 1]].values[m]
            distances[i] += (next_v - prev_v) / span
    return distances


def assign_ranks_and_crowding(population: Population) -> list[list[int]]:
    """Run the sort, then fill in per-front crowding distances."""
    fronts = fast_non_dominated_sort(population)
    for front in fronts:
        vectors = [population.individuals[i].objectives for i in front]
        for i, d in zip(front, crowding_distance(vectors)):
            population.individuals[i].crowding = d
    return fronts


def crowded_compare(a: Individual, b: Individual) -> int:
    """-1 if a precedes b, +1 if b precedes a, 0 on full tie.

    Lower rank wins; equal ranks prefer larger crowding; remaining ties go
    to the lexicographically smaller canonical genome string.
    """
    for ind in (a, b):
        if ind.rank is None or ind.crowding is None:
            raise ValueError("rank and crowding must be assigned before comparison")
    if a.rank != b.rank:
        return -1 if a.rank < b.rank else 1
    if a.crowding != b.crowding:
        return -1 if a.crowding > b.crowding else 1
    ka, kb = a.genome.canonical(), b.genome.canonical()
    if ka != kb:
        return -1 if ka < kb else 1
    return 0


def _selection_key(ind: Individual) -> tuple:
    return (ind.rank, -ind.crowding, ind.genome.canonical())


def _tournament(survivors: list, rng: random.Random) -> Individual:
    a = survivors[rng.randrange(len(survivors))]
    b = survivors[rng.randrange(len(survivors))]
    return a if crowded_compare(a, b) <= 0 else b


def next_generation(
    population: Population,
    space: SearchSpace,
    mask: StageMask,
    rng: random.Random,
    mutation_prob: float = DEFAULT_MUTATION_PROB,
) -> Population:
    """Half-elitist step: keep the best half, breed the other half.

    For odd population sizes the survivor half is rounded up and the
    offspring half down, keeping the size constant. Offspring genomes are
    unevaluated (objectives None).
    """
    n = len(population)
    if n < 2:
        raise ValueError(f"population size must be >= 2, got {n}")
    for ind in population.individuals:
        if ind.objectives is None:
            raise ValueError("population must be fully evaluated before selection")
    assign_ranks_and_crowding(population)
    ordered = sorted(population.individuals, key=_selection_key)
    n_offspring = n // 2
    survivors = ordered[: n - n_offspring]
    children: list[Individual] = []
    while len(children) < n_offspring:
        p1 = _tournament(survivors, rng)
        p2 = _tournament(survivors, rng)
        c1, c2 = crossover(p1.genome, p2.genome, mask, rng)
        children.append(Individual(genome=mutate(space, c1, mask, rng, mutation_prob)))
        if len(children) < n_offspring:
            children.append(Individual(genome=mutate(space, c2, mask, rng, mutation_prob)))
    return Population(
        individuals=list(survivors) + children,
        generation=population.generation + 1,
    )
