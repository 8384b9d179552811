"""Search orchestration: seeding, generation loop, Pareto-front history,
hyperarea-difference stopping, and the two-stage schedule.

A run is a pure function of (config, space, supernet description, evaluator
kind): genome operators draw from one seeded RNG, candidate accuracies come
from the seed-pinned evaluator, and objective values are cached by canonical
genome string so a genome is never re-sent to an evaluator within a run.
"""

from __future__ import annotations

import logging
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .cost import SupernetDescription, count_flops, count_params
from .evaluation import (
    BuiltinSurrogateEvaluator,
    EarlyStopPolicy,
    EvaluationError,
    EvaluationOutcome,
    evaluate_with_early_stopping,
)
from .nsga2 import (
    Individual,
    ObjectiveVector,
    Population,
    assign_ranks_and_crowding,
    next_generation,
)
from .space import (
    DEFAULT_MUTATION_PROB,
    Genome,
    MaskMode,
    SearchSpace,
    StageMask,
    decode,
    random_genome,
    supernet_genome,
)

log = logging.getLogger("sss3d")

MIOU_ERROR = "miou_error"
PARAMS = "params"
FLOPS = "flops"

_MASK64 = (1 << 64) - 1
HD_FLOOR = 1e-12
REFERENCE_COORDINATE = 1.1


@dataclass(frozen=True)
class SearchConfig:
    population_size: int
    max_generations: int
    objectives: tuple
    mask_mode: MaskMode = MaskMode.FULL
    run_seed: int = 0
    mutation_prob: float = DEFAULT_MUTATION_PROB
    hd_epsilon: float = 0.01
    hd_window: int = 5
    early_stop: EarlyStopPolicy = field(default_factory=EarlyStopPolicy)
    base_genome: Genome | None = None

    def __post_init__(self):
        object.__setattr__(self, "objectives", tuple(self.objectives))
        if self.population_size < 2:
            raise ValueError(f"population_size must be >= 2, got {self.population_size}")
        if self.max_generations < 1:
            raise ValueError(f"max_generations must be >= 1, got {self.max_generations}")
        if not 2 <= len(self.objectives) <= 3 or len(set(self.objectives)) != len(self.objectives):
            raise ValueError(f"objectives must be 2 or 3 distinct labels, got {self.objectives}")
        if MIOU_ERROR not in self.objectives:
            raise ValueError("objectives must include miou_error")
        for label in self.objectives:
            if label not in (MIOU_ERROR, PARAMS, FLOPS):
                raise ValueError(f"unknown objective label {label!r}")
        if not 0 <= self.run_seed <= _MASK64:
            raise ValueError("run_seed must be an unsigned 64-bit integer")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError(f"mutation_prob must be in [0, 1], got {self.mutation_prob}")
        if self.hd_epsilon <= 0 or self.hd_window < 1:
            raise ValueError("hd_epsilon must be > 0 and hd_window >= 1")

    def evaluation_budget(self) -> int:
        """Nominal candidate-evaluation budget: population times generations."""
        return self.population_size * self.max_generations

    def to_json_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "max_generations": self.max_generations,
            "objectives": list(self.objectives),
            "mask_mode": self.mask_mode.value,
            "run_seed": self.run_seed,
            "mutation_prob": self.mutation_prob,
            "hd_epsilon": self.hd_epsilon,
            "hd_window": self.hd_window,
            "early_stop": {
                "check_fraction": self.early_stop.check_fraction,
                "accuracy_threshold": self.early_stop.accuracy_threshold,
                "total_batches": self.early_stop.total_batches,
            },
            "base_genome": self.base_genome.canonical() if self.base_genome else None,
        }


@dataclass(frozen=True)
class FrontEntry:
    genome: str
    objectives: dict
    miou_error: float
    params: int
    flops: int

    def to_json_dict(self) -> dict:
        return {
            "genome": self.genome,
            "objectives": dict(self.objectives),
            "miou_error": self.miou_error,
            "params": self.params,
            "flops": self.flops,
        }


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    front: tuple
    hypervolume: float
    hd_vs_previous: float | None
    evaluations_performed: int
    early_stops: int

    def to_json_dict(self) -> dict:
        return {
            "generation": self.generation,
            "front": [e.to_json_dict() for e in self.front],
            "hypervolume": self.hypervolume,
            "hd_vs_previous": self.hd_vs_previous,
            "evaluations_performed": self.evaluations_performed,
            "early_stops": self.early_stops,
        }


@dataclass(frozen=True)
class SearchResult:
    config: SearchConfig
    history: tuple
    final_front: tuple
    total_evaluations: int
    total_early_stops: int
    stopped_early_by_hd: bool
    normalization: dict

    @property
    def hd_series(self) -> list:
        return [r.hd_vs_previous for r in self.history if r.hd_vs_previous is not None]

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.to_json_dict(),
            "normalization": dict(self.normalization),
            "history": [r.to_json_dict() for r in self.history],
            "final_front": [e.to_json_dict() for e in self.final_front],
            "hd_series": self.hd_series,
            "total_evaluations": self.total_evaluations,
            "total_early_stops": self.total_early_stops,
            "stopped_early_by_hd": self.stopped_early_by_hd,
        }


@dataclass(frozen=True)
class PivotRun:
    pivot: str
    run_seed: int
    result: SearchResult


@dataclass(frozen=True)
class TwoStageResult:
    stage1: SearchResult
    pivot_runs: tuple

    def total_evaluations(self) -> int:
        return self.stage1.total_evaluations + sum(
            p.result.total_evaluations for p in self.pivot_runs
        )

    def to_json_dict(self) -> dict:
        return {
            "stage1": self.stage1.to_json_dict(),
            "pivots": [
                {
                    "pivot": p.pivot,
                    "run_seed": p.run_seed,
                    "result": p.result.to_json_dict(),
                }
                for p in self.pivot_runs
            ],
            "total_evaluations": self.total_evaluations(),
        }


def hypervolume(front, reference_point) -> float:
    """Lebesgue measure of the union of boxes [point, reference].

    Minimization: every front point must strictly dominate the reference in
    each coordinate. Two objectives use a sorted sweep, three use slicing
    on the third coordinate; both are exact for finite fronts.
    """
    points = [tuple(float(v) for v in p) for p in front]
    ref = tuple(float(v) for v in reference_point)
    if not points:
        return 0.0
    dims = len(ref)
    if dims not in (2, 3):
        raise ValueError(f"hypervolume supports 2 or 3 objectives, got {dims}")
    for p in points:
        if len(p) != dims:
            raise ValueError(f"point {p} has {len(p)} coordinates, expected {dims}")
        if any(v >= r for v, r in zip(p, ref)):
            raise ValueError(f"point {p} does not dominate reference {ref}")
    if dims == 2:
        return _hypervolume_2d(points, ref)
    return _hypervolume_3d(points, ref)


def _hypervolume_2d(points, ref) -> float:
    total = 0.0
    best_y = ref[1]
    for x, y in sorted(points):
        if y < best_y:
            total += (ref[0] - x) * (best_y - y)
            best_y = y
    return total


def _hypervolume_3d(points, ref) -> float:
    order = sorted(points, key=lambda p: p[2])
    zs = sorted({p[2] for p in order})
    zs.append(ref[2])
    total = 0.0
    for z_lo, z_hi in zip(zs, zs[1:]):
        slab = [(p[0], p[1]) for p in order if p[2] <= z_lo]
        total += _hypervolume_2d(slab, ref[:2]) * (z_hi - z_lo)
    return total


def hyperarea_difference(front_t, front_prev, reference_point) -> float:
    """Normalized absolute hypervolume change between consecutive fronts.

    An empty previous front has no defined baseline; that case reports
    +infinity.
    """
    hv_prev = hypervolume(front_prev, reference_point)
    hv_t = hypervolume(front_t, reference_point)
    if hv_prev <= 0.0:
        return math.inf if hv_t > 0.0 else 0.0
    return abs(hv_t - hv_prev) / max(hv_prev, HD_FLOOR)


def build_mask(config: SearchConfig) -> StageMask:
    if config.mask_mode is MaskMode.FULL:
        return StageMask(MaskMode.FULL)
    base = config.base_genome if config.base_genome is not None else supernet_genome()
    return StageMask(config.mask_mode, base)


def seed_population(config: SearchConfig, space: SearchSpace, rng: random.Random) -> Population:
    """N-1 random genomes plus the supernet itself as the last member."""
    mask = build_mask(config)
    individuals = [
        Individual(genome=random_genome(space, mask, rng))
        for _ in range(config.population_size - 1)
    ]
    individuals.append(Individual(genome=mask.apply(supernet_genome())))
    return Population(individuals=individuals, generation=1)


class _ObjectiveCache:
    """Per-run memo of evaluated objective components, keyed by genome string."""

    def __init__(self):
        self._entries: dict = {}
        self.hits = 0

    def get(self, key: str):
        entry = self._entries.get(key)
        if entry is not None:
            self.hits += 1
        return entry

    def peek(self, key: str):
        return self._entries.get(key)

    def put(self, key: str, entry: dict) -> None:
        self._entries[key] = entry


class _EvaluatorPool:
    """Fixed set of evaluators; candidates are merged back by index."""

    def __init__(self, factory, config: SearchConfig, jobs: int):
        self.evaluators = []
        try:
            for _ in range(max(1, jobs)):
                self.evaluators.append(
                    factory(config.run_seed, config.early_stop.total_batches)
                )
        except Exception:
            self.close()
            raise

    def evaluate(self, genomes, policy: EarlyStopPolicy) -> list[EvaluationOutcome]:
        outcomes: list = [None] * len(genomes)

        def run_slice(slot: int) -> None:
            evaluator = self.evaluators[slot]
            for idx in range(slot, len(genomes), len(self.evaluators)):
                outcomes[idx] = self._evaluate_one(evaluator, genomes[idx], policy)

        if len(self.evaluators) == 1 or len(genomes) <= 1:
            run_slice(0)
        else:
            with ThreadPoolExecutor(max_workers=len(self.evaluators)) as pool:
                list(pool.map(run_slice, range(len(self.evaluators))))
        return outcomes

    @staticmethod
    def _evaluate_one(evaluator, genome: Genome, policy: EarlyStopPolicy) -> EvaluationOutcome:
        try:
            return evaluate_with_early_stopping(evaluator, genome, policy)
        except EvaluationError as exc:
            log.warning("candidate scored worst-case after evaluator fault: %s", exc)
            return EvaluationOutcome(
                miou=0.0, miou_error=1.0, batches_used=0, early_stopped=False
            )

    def close(self) -> None:
        for evaluator in self.evaluators:
            try:
                evaluator.close()
            except Exception:
                log.warning("evaluator close failed", exc_info=True)


def builtin_evaluator_factory(params=None):
    def factory(run_seed: int, total_batches: int) -> BuiltinSurrogateEvaluator:
        if params is None:
            return BuiltinSurrogateEvaluator(run_seed, total_batches)
        return BuiltinSurrogateEvaluator(run_seed, total_batches, params)

    return factory


def external_evaluator_factory(command, timeout_s: float = 300.0):
    from .protocol import ExternalProcessEvaluator

    def factory(run_seed: int, total_batches: int) -> ExternalProcessEvaluator:
        return ExternalProcessEvaluator(command, run_seed, total_batches, timeout_s)

    return factory


def normalization_bounds(config: SearchConfig, desc: SupernetDescription) -> dict:
    """Fixed per-run scale for each objective, from the supernet's costs."""
    supernet = supernet_genome()
    bounds = {}
    for label in config.objectives:
        if label == MIOU_ERROR:
            bounds[label] = 1.0
        elif label == PARAMS:
            bounds[label] = float(count_params(supernet, desc))
        else:
            bounds[label] = float(count_flops(supernet, desc))
    return bounds


def _normalized_front_points(front, config: SearchConfig, bounds: dict):
    points = []
    for entry in front:
        points.append(
            tuple(entry.objectives[label] / bounds[label] for label in config.objectives)
        )
    return points


def _front_hypervolume(front, config: SearchConfig, bounds: dict) -> float:
    """Hypervolume of the dominating subset of a recorded front.

    Candidates can exceed the supernet's FLOPs (e.g. gentler subsampling
    than the baseline), landing outside the reference box; such points
    bound no volume and are excluded rather than treated as errors.
    """
    ref = (REFERENCE_COORDINATE,) * len(config.objectives)
    points = [
        p
        for p in _normalized_front_points(front, config, bounds)
        if all(v < r for v, r in zip(p, ref))
    ]
    return hypervolume(points, ref)


class _SearchState:
    def __init__(self, config, desc, pool):
        self.config = config
        self.desc = desc
        self.pool = pool
        self.cache = _ObjectiveCache()
        self.history: list = []
        self.total_evaluations = 0
        self.total_early_stops = 0

    def evaluate_population(self, population: Population) -> tuple[int, int]:
        """Fill missing objective vectors; returns (evaluations, early stops)."""
        pending = []
        pending_keys = set()
        for ind in population.individuals:
            if ind.objectives is not None:
                continue
            key = ind.genome.canonical()
            if self.cache.get(key) is None and key not in pending_keys:
                pending.append(ind.genome)
                pending_keys.add(key)
        outcomes = self.pool.evaluate(pending, self.config.early_stop)
        early_stops = 0
        for genome, outcome in zip(pending, outcomes):
            if outcome.early_stopped:
                early_stops += 1
            self.cache.put(
                genome.canonical(),
                {
                    MIOU_ERROR: outcome.miou_error,
                    PARAMS: count_params(genome, self.desc),
                    FLOPS: count_flops(genome, self.desc),
                },
            )
        for ind in population.individuals:
            if ind.objectives is None:
                entry = self.cache.peek(ind.genome.canonical())
                ind.objectives = ObjectiveVector(
                    values=tuple(entry[label] for label in self.config.objectives),
                    labels=self.config.objectives,
                )
        return len(pending), early_stops

    def record_generation(self, population: Population, evals: int, stops: int, bounds: dict):
        fronts = assign_ranks_and_crowding(population)
        entries = []
        for idx in fronts[0]:
            ind = population.individuals[idx]
            cached = self.cache.peek(ind.genome.canonical())
            entries.append(
                FrontEntry(
                    genome=ind.genome.canonical(),
                    objectives={
                        label: value
                        for label, value in zip(ind.objectives.labels, ind.objectives.values)
                    },
                    miou_error=cached[MIOU_ERROR],
                    params=int(cached[PARAMS]),
                    flops=int(cached[FLOPS]),
                )
            )
        front = tuple(entries)
        hv = _front_hypervolume(front, self.config, bounds)
        if self.history:
            prev_hv = self.history[-1].hypervolume
            if prev_hv <= 0.0:
                hd = math.inf if hv > 0.0 else 0.0
            else:
                hd = abs(hv - prev_hv) / max(prev_hv, HD_FLOOR)
        else:
            hd = None
        self.history.append(
            GenerationRecord(
                generation=population.generation,
                front=front,
                hypervolume=hv,
                hd_vs_previous=hd,
                evaluations_performed=evals,
                early_stops=stops,
            )
        )
        self.total_evaluations += evals
        self.total_early_stops += stops

    def hd_stop_reached(self) -> bool:
        window = self.config.hd_window
        hd_values = [r.hd_vs_previous for r in self.history if r.hd_vs_previous is not None]
        if len(hd_values) < window:
            return False
        return all(v < self.config.hd_epsilon for v in hd_values[-window:])


def run_single_stage(
    config: SearchConfig,
    space: SearchSpace,
    desc: SupernetDescription,
    evaluator_factory,
    jobs: int = 1,
) -> SearchResult:
    """Seeded NSGA-II loop with front history and HD-based early stopping."""
    bounds = normalization_bounds(config, desc)
    rng = random.Random(config.run_seed)
    mask = build_mask(config)
    pool = _EvaluatorPool(evaluator_factory, config, jobs)
    try:
        state = _SearchState(config, desc, pool)
        population = seed_population(config, space, rng)
        evals, stops = state.evaluate_population(population)
        state.record_generation(population, evals, stops, bounds)
        stopped_by_hd = False
        while population.generation < config.max_generations:
            population = next_generation(
                population, space, mask, rng, config.mutation_prob
            )
            evals, stops = state.evaluate_population(population)
            state.record_generation(population, evals, stops, bounds)
            if state.hd_stop_reached():
                stopped_by_hd = True
                break
        return SearchResult(
            config=config,
            history=tuple(state.history),
            final_front=state.history[-1].front,
            total_evaluations=state.total_evaluations,
            total_early_stops=state.total_early_stops,
            stopped_early_by_hd=stopped_by_hd,
            normalization=bounds,
        )
    finally:
        pool.close()


def default_pivot_selection(front, max_pivots: int = 3) -> list[str]:
    """Pick up to three stage-1 pivots: best error, best cost, best trade-off.

    ``front`` entries carry (miou_error, cost) objective pairs; the trade-off
    pick minimizes the sum of per-objective min-max normalized values. Ties
    break on the genome string; duplicates collapse.
    """
    if not front:
        raise ValueError("stage-1 front is empty")
    entries = list(front)
    labels = list(entries[0].objectives)
    error_label, cost_label = labels[0], labels[1]

    def by(label):
        return min(entries, key=lambda e: (e.objectives[label], e.genome))

    lows = {label: min(e.objectives[label] for e in entries) for label in labels}
    highs = {label: max(e.objectives[label] for e in entries) for label in labels}

    def knee_score(entry):
        score = 0.0
        for label in labels:
            span = highs[label] - lows[label]
            if span > 0:
                score += (entry.objectives[label] - lows[label]) / span
        return score

    knee = min(entries, key=lambda e: (knee_score(e), e.genome))
    picks = []
    for entry in (by(error_label), by(cost_label), knee):
        if entry.genome not in picks:
            picks.append(entry.genome)
    return picks[: max(1, max_pivots)]


def run_two_stage(
    config_stage1: SearchConfig,
    config_stage2: SearchConfig,
    space: SearchSpace,
    desc: SupernetDescription,
    evaluator_factory,
    jobs: int = 1,
    max_pivots: int = 3,
    pick=default_pivot_selection,
) -> TwoStageResult:
    """Sampling-space search, then one architectural search per pivot.

    Stage 1 must optimize (miou_error, flops) over the sampling genes;
    stage 2 freezes each pivot's sampling genes and optimizes
    (miou_error, params) over the filter ratios. Pivot runs derive their
    seeds from the stage-2 seed so the whole schedule replays.
    """
    if config_stage1.mask_mode is not MaskMode.SAMPLING_ONLY:
        raise ValueError("stage 1 must use the sampling_only mask")
    if config_stage1.objectives != (MIOU_ERROR, FLOPS):
        raise ValueError("stage 1 objectives must be (miou_error, flops)")
    if config_stage2.mask_mode is not MaskMode.ARCHITECTURAL_ONLY:
        raise ValueError("stage 2 must use the architectural_only mask")
    if config_stage2.objectives != (MIOU_ERROR, PARAMS):
        raise ValueError("stage 2 objectives must be (miou_error, params)")

    stage1 = run_single_stage(config_stage1, space, desc, evaluator_factory, jobs)
    if not stage1.final_front:
        raise ValueError("stage-1 search produced an empty front")
    pivots = pick(stage1.final_front, max_pivots)
    pivot_runs = []
    for i, pivot_string in enumerate(pivots):
        pivot_genome = decode(pivot_string, space)
        stage2_config = replace(
            config_stage2,
            run_seed=(config_stage2.run_seed + i) & _MASK64,
            base_genome=pivot_genome,
        )
        result = run_single_stage(stage2_config, space, desc, evaluator_factory, jobs)
        pivot_runs.append(PivotRun(pivot=pivot_string, run_seed=stage2_config.run_seed, result=result))
    return TwoStageResult(stage1=stage1, pivot_runs=tuple(pivot_runs))
