import math
import random
import statistics

import pytest

from sss3d.evaluation import (
    BuiltinSurrogateEvaluator,
    EarlyStopPolicy,
    EvaluationError,
    evaluate_with_early_stopping,
    surrogate_batch_accuracies,
    surrogate_batch_range,
    surrogate_error,
)
from sss3d.prng import SplitMix64, fnv1a64
from sss3d.space import Genome, SearchSpace, full_mask, random_genome, supernet_genome

SPACE = SearchSpace.default()
RLA = supernet_genome()


class TestPinnedPrng:
    def test_splitmix64_reference_vectors(self):
        stream = SplitMix64(0)
        assert [stream.next_u64() for _ in range(3)] == [
            0xE220A8397B1DCDAF,
            0x6E789E6AA1B965F4,
            0x06C45D188009454F,
        ]
        stream = SplitMix64(1234567)
        assert [stream.next_u64() for _ in range(3)] == [
            6457827717110365317,
            3203168211198807973,
            9817491932198370423,
        ]

    def test_fnv1a64_reference_vectors(self):
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
        assert fnv1a64(b"foobar") == 0x85944171F73967E8

    def test_skip_equals_sequential_draws(self):
        a = SplitMix64(99)
        for _ in range(17):
            a.next_u64()
        b = SplitMix64(99)
        b.skip(17)
        assert a.next_u64() == b.next_u64()

    def test_unit_range(self):
        stream = SplitMix64(7)
        for _ in range(1000):
            u = stream.next_unit()
            assert 0.0 <= u < 1.0


class TestSurrogateError:
    def test_supernet_baseline_exact(self):
        assert surrogate_error(RLA) == 0.3722

    def test_all_ratios_minimal(self):
        g = Genome((0.4,) * 13, RLA.strides, RLA.k_values, RLA.subsampling)
        assert surrogate_error(g) == pytest.approx(0.3722 + 0.015 * 13 * 0.6, abs=1e-12)
        assert surrogate_error(g) == pytest.approx(0.4892, abs=1e-12)

    def test_subsampling_penalty_with_k16(self):
        g = Genome(RLA.filter_ratios, RLA.strides, RLA.k_values, (8, 4, 4, 4, 2))
        assert surrogate_error(g) == pytest.approx(0.3922, abs=1e-12)

    def test_k_mitigates_subsampling_penalty(self):
        aggressive = Genome(RLA.filter_ratios, RLA.strides, (16,) * 5, (8, 4, 4, 4, 2))
        mitigated = Genome(RLA.filter_ratios, RLA.strides, (22, 16, 16, 16, 16), (8, 4, 4, 4, 2))
        assert surrogate_error(mitigated) < surrogate_error(aggressive)
        assert surrogate_error(mitigated) == pytest.approx(0.3722 + 0.010 * 2 * 0.5, abs=1e-12)

    def test_clamped_to_range(self):
        rng = random.Random(1)
        for _ in range(500):
            e = surrogate_error(random_genome(SPACE, full_mask(), rng))
            assert 0.05 <= e <= 0.95

    def test_monotone_lower_ratio_never_decreases_error(self):
        rng = random.Random(2)
        for _ in range(300):
            g = random_genome(SPACE, full_mask(), rng)
            site = rng.randrange(13)
            lower = [v for v in (0.4, 0.6, 0.8, 1.0) if v < g.filter_ratios[site]]
            if not lower:
                continue
            ratios = list(g.filter_ratios)
            ratios[site] = rng.choice(lower)
            pruned = Genome(ratios, g.strides, g.k_values, g.subsampling)
            assert surrogate_error(pruned) >= surrogate_error(g)

    def test_monotone_higher_stride_never_decreases_error(self):
        rng = random.Random(3)
        for _ in range(300):
            g = random_genome(SPACE, full_mask(), rng)
            site = rng.randrange(6)
            higher = [v for v in (1, 2, 3, 4) if v > g.strides[site]]
            if not higher:
                continue
            strides = list(g.strides)
            strides[site] = rng.choice(higher)
            strided = Genome(g.filter_ratios, strides, g.k_values, g.subsampling)
            assert surrogate_error(strided) >= surrogate_error(g)


class TestBatchAccuracies:
    def test_deterministic(self):
        a = surrogate_batch_accuracies(RLA, 42, 100)
        b = surrogate_batch_accuracies(RLA, 42, 100)
        assert a == b

    def test_seed_changes_stream(self):
        assert surrogate_batch_accuracies(RLA, 1, 50) != surrogate_batch_accuracies(RLA, 2, 50)

    def test_range_requests_agree_with_full_stream(self):
        full = surrogate_batch_accuracies(RLA, 9, 100)
        head = surrogate_batch_range(RLA, 9, 0, 25)
        tail = surrogate_batch_range(RLA, 9, 25, 100)
        assert head + tail == full

    def test_empirical_std_brackets_observed_value(self):
        accs = surrogate_batch_accuracies(RLA, 0, 10_000)
        std = statistics.pstdev(accs)
        assert 0.030 <= std <= 0.038

    def test_mean_tracks_surrogate_error(self):
        accs = surrogate_batch_accuracies(RLA, 0, 10_000)
        assert math.fsum(accs) / len(accs) == pytest.approx(1.0 - 0.3722, abs=0.002)

    def test_values_clamped_to_unit_interval(self):
        rng = random.Random(4)
        for _ in range(20):
            g = random_genome(SPACE, full_mask(), rng)
            for acc in surrogate_batch_accuracies(g, 7, 200):
                assert 0.0 <= acc <= 1.0


class _ListEvaluator:
    """Evaluator fed from a fixed accuracy list, for policy tests."""

    name = "list"

    def __init__(self, accuracies, run_seed=0):
        self.accuracies = list(accuracies)
        self.total_batches = len(self.accuracies)
        self.run_seed = run_seed
        self.requests = []

    def batch_accuracies(self, genome, batch_start, batch_end):
        self.requests.append((batch_start, batch_end))
        return self.accuracies[batch_start:batch_end]

    def close(self):
        pass


class TestEarlyStopping:
    def test_low_accuracy_stops_at_checkpoint(self):
        evaluator = _ListEvaluator([0.20] * 100)
        outcome = evaluate_with_early_stopping(evaluator, RLA, EarlyStopPolicy())
        assert outcome.early_stopped
        assert outcome.batches_used == 25
        assert outcome.miou == pytest.approx(0.20, abs=1e-15)
        assert outcome.miou_error == pytest.approx(0.80, abs=1e-15)
        assert evaluator.requests == [(0, 25)]

    def test_competitive_candidate_runs_full_pass(self):
        evaluator = _ListEvaluator([0.62] * 100)
        outcome = evaluate_with_early_stopping(evaluator, RLA, EarlyStopPolicy())
        assert not outcome.early_stopped
        assert outcome.batches_used == 100
        assert outcome.miou == pytest.approx(0.62, abs=1e-15)
        assert evaluator.requests == [(0, 25), (25, 100)]

    def test_boundary_mean_is_not_stopped(self):
        # Strictly-less-than rule: a checkpoint mean of exactly the
        # threshold continues to the full pass.
        evaluator = _ListEvaluator([0.30] * 100)
        outcome = evaluate_with_early_stopping(evaluator, RLA, EarlyStopPolicy())
        assert not outcome.early_stopped
        assert outcome.batches_used == 100

    def test_just_below_boundary_is_stopped(self):
        accs = [0.30] * 100
        accs[0] = 0.29
        outcome = evaluate_with_early_stopping(_ListEvaluator(accs), RLA, EarlyStopPolicy())
        assert outcome.early_stopped
        assert outcome.batches_used == 25

    def test_miou_error_complements_miou_exactly(self):
        rng = random.Random(5)
        for _ in range(100):
            accs = [rng.random() for _ in range(40)]
            policy = EarlyStopPolicy(total_batches=40)
            outcome = evaluate_with_early_stopping(_ListEvaluator(accs), RLA, policy)
            assert outcome.miou_error + outcome.miou == 1.0

    def test_batches_used_is_checkpoint_or_total(self):
        rng = random.Random(6)
        policy = EarlyStopPolicy()
        for _ in range(200):
            level = rng.random()
            accs = [min(1.0, max(0.0, level + rng.uniform(-0.06, 0.06))) for _ in range(100)]
            evaluator = _ListEvaluator(accs)
            outcome = evaluate_with_early_stopping(evaluator, RLA, policy)
            head_mean = math.fsum(accs[:25]) / 25
            if head_mean < 0.30:
                assert outcome.early_stopped and outcome.batches_used == 25
            else:
                assert not outcome.early_stopped and outcome.batches_used == 100

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            EarlyStopPolicy(check_fraction=0.0)
        with pytest.raises(ValueError):
            EarlyStopPolicy(accuracy_threshold=1.5)
        with pytest.raises(ValueError):
            EarlyStopPolicy(total_batches=0)

    def test_total_batch_mismatch_rejected(self):
        evaluator = _ListEvaluator([0.5] * 60)
        with pytest.raises(ValueError):
            evaluate_with_early_stopping(evaluator, RLA, EarlyStopPolicy(total_batches=100))

    def test_transport_failure_wrapped(self):
        class _Broken:
            name = "broken"
            total_batches = 100
            run_seed = 0

            def batch_accuracies(self, genome, a, b):
                raise ConnectionError("pipe gone")

        with pytest.raises(EvaluationError) as info:
            evaluate_with_early_stopping(_Broken(), RLA, EarlyStopPolicy())
        assert info.value.genome_string == RLA.canonical()
        assert info.value.phase == "checkpoint"


class TestBuiltinEvaluator:
    def test_full_outcome_matches_direct_stream(self):
        policy = EarlyStopPolicy()
        evaluator = BuiltinSurrogateEvaluator(run_seed=3, total_batches=100)
        outcome = evaluate_with_early_stopping(evaluator, RLA, policy)
        accs = surrogate_batch_accuracies(RLA, 3, 100)
        assert outcome.miou == pytest.approx(math.fsum(accs) / 100, abs=0.0)
        assert not outcome.early_stopped

    def test_range_validation(self):
        evaluator = BuiltinSurrogateEvaluator(run_seed=0, total_batches=10)
        with pytest.raises(ValueError):
            evaluator.batch_accuracies(RLA, 5, 11)
        with pytest.raises(ValueError):
            evaluator.batch_accuracies(RLA, -1, 5)
        with pytest.raises(ValueError):
            evaluator.batch_accuracies(RLA, 5, 5)

    def test_high_threshold_forces_early_stop(self):
        # Surrogate accuracy for the supernet is about 0.63, so a 0.9
        # threshold stops it at the checkpoint.
        policy = EarlyStopPolicy(accuracy_threshold=0.9)
        evaluator = BuiltinSurrogateEvaluator(run_seed=1, total_batches=100)
        outcome = evaluate_with_early_stopping(evaluator, RLA, policy)
        assert outcome.early_stopped and outcome.batches_used == 25
