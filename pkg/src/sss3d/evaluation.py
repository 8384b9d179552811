"""Candidate evaluation: surrogate accuracy model and early stopping.

The built-in surrogate is a deterministic stand-in for a trained-network
evaluation. It maps a genome to a pseudo mIoU error through closed-form
penalties, then jitters per-batch accuracies with a pinned uniform stream
so that the empirical batch standard deviation is about 0.034. External
evaluator processes (see protocol.py) must match it bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .prng import SplitMix64, fnv1a64
from .space import SUPERNET_SUBSAMPLING, Genome


@dataclass(frozen=True)
class EarlyStopPolicy:
    """Abort accuracy evaluation early for clearly uncompetitive candidates."""

    check_fraction: float = 0.25
    accuracy_threshold: float = 0.30
    total_batches: int = 100

    def __post_init__(self):
        if not 0.0 < self.check_fraction < 1.0:
            raise ValueError(f"check_fraction must be in (0, 1), got {self.check_fraction}")
        if not 0.0 <= self.accuracy_threshold <= 1.0:
            raise ValueError(
                f"accuracy_threshold must be in [0, 1], got {self.accuracy_threshold}"
            )
        if self.total_batches < 1:
            raise ValueError(f"total_batches must be >= 1, got {self.total_batches}")

    @property
    def checkpoint(self) -> int:
        return math.ceil(self.check_fraction * self.total_batches)


@dataclass(frozen=True)
class EvaluationOutcome:
    miou: float
    miou_error: float
    batches_used: int
    early_stopped: bool

    def to_json_dict(self) -> dict:
        return {
            "miou": self.miou,
            "miou_error": self.miou_error,
            "batches_used": self.batches_used,
            "early_stopped": self.early_stopped,
        }


@dataclass(frozen=True)
class SurrogateParams:
    base_error: float = 0.3722
    ratio_penalty: float = 0.015
    stride_penalty: float = 0.004
    subsample_penalty: float = 0.010
    baseline_subsampling: tuple = SUPERNET_SUBSAMPLING
    k_mitigation_span: float = 12.0
    batch_jitter_halfwidth: float = 0.059
    error_floor: float = 0.05
    error_ceiling: float = 0.95


DEFAULT_SURROGATE_PARAMS = SurrogateParams()


def surrogate_error(genome: Genome, params: SurrogateParams = DEFAULT_SURROGATE_PARAMS) -> float:
    """Deterministic pseudo mIoU error for a genome.

    Pruning filters and increasing stride raise the error; subsampling more
    aggressively than the baseline raises it too, mitigated by larger K at
    the same stage.
    """
    error = params.base_error
    error += params.ratio_penalty * sum(1.0 - r for r in genome.filter_ratios)
    error += params.stride_penalty * sum(s - 1 for s in genome.strides)
    for r, k, base in zip(genome.subsampling, genome.k_values, params.baseline_subsampling):
        mitigation = 1.0 - (k - 16) / params.k_mitigation_span
        error += params.subsample_penalty * max(0, r - base) / 2.0 * mitigation
    return min(params.error_ceiling, max(params.error_floor, error))


def _jitter_stream(genome: Genome, run_seed: int) -> SplitMix64:
    seed = fnv1a64(genome.canonical().encode("utf-8")) ^ (run_seed & ((1 << 64) - 1))
    return SplitMix64(seed)


def surrogate_batch_accuracies(
    genome: Genome,
    run_seed: int,
    total_batches: int,
    params: SurrogateParams = DEFAULT_SURROGATE_PARAMS,
) -> list[float]:
    """Per-batch pseudo accuracies over the whole test pass."""
    return surrogate_batch_range(genome, run_seed, 0, total_batches, params)


def surrogate_batch_range(
    genome: Genome,
    run_seed: int,
    batch_start: int,
    batch_end: int,
    params: SurrogateParams = DEFAULT_SURROGATE_PARAMS,
) -> list[float]:
    """Accuracies for batches [batch_start, batch_end) of the pinned stream.

    Batch b always consumes draw b of the genome's stream, so any request
    split yields the same values.
    """
    if batch_start < 0 or batch_end < batch_start:
        raise ValueError(f"bad batch range [{batch_start}, {batch_end})")
    base = 1.0 - surrogate_error(genome, params)
    half = params.batch_jitter_halfwidth
    stream = _jitter_stream(genome, run_seed)
    stream.skip(batch_start)
    out = []
    for _ in range(batch_end - batch_start):
        jitter = -half + stream.next_unit() * (2.0 * half)
        out.append(min(1.0, max(0.0, base + jitter)))
    return out


class EvaluationError(Exception):
    """Evaluator transport or protocol failure for one candidate."""

    def __init__(self, genome_string: str, phase: str, cause: Exception | None = None):
        self.genome_string = genome_string
        self.phase = phase
        self.cause = cause
        detail = f": {cause}" if cause else ""
        super().__init__(f"evaluation failed during {phase} for {genome_string}{detail}")


class BuiltinSurrogateEvaluator:
    """In-process evaluator backed by the deterministic surrogate."""

    name = "builtin-surrogate"

    def __init__(
        self,
        run_seed: int,
        total_batches: int,
        params: SurrogateParams = DEFAULT_SURROGATE_PARAMS,
    ):
        if total_batches < 1:
            raise ValueError(f"total_batches must be >= 1, got {total_batches}")
        self.run_seed = run_seed
        self.total_batches = total_batches
        self.params = params

    def batch_accuracies(self, genome: Genome, batch_start: int, batch_end: int) -> list[float]:
        if not 0 <= batch_start < batch_end <= self.total_batches:
            raise ValueError(
                f"batch range [{batch_start}, {batch_end}) outside [0, {self.total_batches}]"
            )
        return surrogate_batch_range(genome, self.run_seed, batch_start, batch_end, self.params)

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def evaluate_with_early_stopping(
    evaluator, genome: Genome, policy: EarlyStopPolicy
) -> EvaluationOutcome:
    """Run the two-phase evaluation: checkpoint first, full pass if it survives.

    The candidate is stopped iff its mean accuracy over the checkpoint
    batches is strictly below the threshold.
    """
    if policy.total_batches != evaluator.total_batches:
        raise ValueError(
            f"policy total_batches {policy.total_batches} != evaluator "
            f"{evaluator.total_batches}"
        )
    checkpoint = policy.checkpoint
    try:
        head = evaluator.batch_accuracies(genome, 0, checkpoint)
    except Exception as exc:
        raise EvaluationError(genome.canonical(), "checkpoint", exc) from exc
    head_mean = math.fsum(head) / len(head)
    if head_mean < policy.accuracy_threshold:
        return EvaluationOutcome(
            miou=head_mean,
            miou_error=1.0 - head_mean,
            batches_used=checkpoint,
            early_stopped=True,
        )
    if checkpoint < policy.total_batches:
        try:
            tail = evaluator.batch_accuracies(genome, checkpoint, policy.total_batches)
        except Exception as exc:
            raise EvaluationError(genome.canonical(), "full-pass", exc) from exc
    else:
        tail = []
    miou = math.fsum(head + tail) / policy.total_batches
    return EvaluationOutcome(
        miou=miou,
        miou_error=1.0 - miou,
        batches_used=policy.total_batches,
        early_stopped=False,
    )
