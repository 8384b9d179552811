import random

import pytest

from conftest import worker_command
from sss3d.evaluation import (
    BuiltinSurrogateEvaluator,
    EarlyStopPolicy,
    evaluate_with_early_stopping,
    surrogate_batch_range,
)
from sss3d.protocol import (
    EvaluatorExited,
    EvaluatorProtocolError,
    EvaluatorRemoteError,
    EvaluatorTimeout,
    ExternalProcessEvaluator,
)
from sss3d.space import SearchSpace, full_mask, random_genome, supernet_genome

SPACE = SearchSpace.default()
RLA = supernet_genome()


def spawn(mode="ok", run_seed=0, total_batches=100, timeout_s=10.0):
    return ExternalProcessEvaluator(
        worker_command(mode), run_seed=run_seed, total_batches=total_batches, timeout_s=timeout_s
    )


class TestHappyPath:
    def test_handshake_reports_name(self):
        with spawn() as evaluator:
            assert evaluator.name == "proto-worker[ok]"

    def test_accuracies_match_in_process_stream(self):
        rng = random.Random(0)
        with spawn(run_seed=11) as evaluator:
            for _ in range(5):
                g = random_genome(SPACE, full_mask(), rng)
                got = evaluator.batch_accuracies(g, 0, 25)
                want = surrogate_batch_range(g, 11, 0, 25)
                assert got == pytest.approx(want, abs=1e-12)

    def test_outcome_identical_to_builtin(self):
        policy = EarlyStopPolicy()
        builtin = BuiltinSurrogateEvaluator(run_seed=5, total_batches=100)
        with spawn(run_seed=5) as external:
            a = evaluate_with_early_stopping(builtin, RLA, policy)
            b = evaluate_with_early_stopping(external, RLA, policy)
        assert a == b

    def test_shutdown_exits_cleanly(self):
        evaluator = spawn()
        evaluator.batch_accuracies(RLA, 0, 10)
        evaluator.close()
        assert evaluator.wait() == 0

    def test_multiple_requests_reuse_one_process(self):
        with spawn() as evaluator:
            first = evaluator.batch_accuracies(RLA, 0, 25)
            second = evaluator.batch_accuracies(RLA, 25, 100)
            assert first + second == surrogate_batch_range(RLA, 0, 0, 100)


class TestClientValidation:
    def test_bad_range_rejected_locally(self):
        with spawn() as evaluator:
            with pytest.raises(ValueError):
                evaluator.batch_accuracies(RLA, 0, 101)
            with pytest.raises(ValueError):
                evaluator.batch_accuracies(RLA, 30, 30)


class TestFaultPaths:
    def test_non_json_response(self):
        with spawn("bad-json") as evaluator:
            with pytest.raises(EvaluatorProtocolError):
                evaluator.batch_accuracies(RLA, 0, 10)

    def test_wrong_id_response(self):
        with spawn("wrong-id") as evaluator:
            with pytest.raises(EvaluatorProtocolError, match="id"):
                evaluator.batch_accuracies(RLA, 0, 10)

    def test_error_reply(self):
        with spawn("error-reply") as evaluator:
            with pytest.raises(EvaluatorRemoteError, match="injected"):
                evaluator.batch_accuracies(RLA, 0, 10)

    def test_short_result(self):
        with spawn("short-result") as evaluator:
            with pytest.raises(EvaluatorProtocolError, match="accuracies"):
                evaluator.batch_accuracies(RLA, 0, 10)

    def test_process_exit(self):
        with spawn("exit-after-ready") as evaluator:
            with pytest.raises(EvaluatorExited):
                evaluator.batch_accuracies(RLA, 0, 10)

    def test_timeout(self):
        with spawn("sleep:5", timeout_s=0.5) as evaluator:
            with pytest.raises(EvaluatorTimeout):
                evaluator.batch_accuracies(RLA, 0, 10)

    def test_spawn_failure_raises(self):
        with pytest.raises(Exception):
            ExternalProcessEvaluator(
                ["/nonexistent-evaluator-binary"], run_seed=0, total_batches=10
            )
