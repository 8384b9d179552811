"""Client for external evaluator processes.

One JSON object per line over the child's stdin/stdout:

    -> {"type": "hello", "version": 1, "total_batches": B, "run_seed": u64}
    <- {"type": "ready", "name": str}
    -> {"type": "evaluate", "id": n, "genome": {...}, "batch_start": a, "batch_end": b}
    <- {"type": "result", "id": n, "batch_accuracies": [...]}
       or {"type": "error", "id": n, "message": str}
    -> {"type": "shutdown"}

A single request is in flight per process; the engine runs several
processes for parallelism.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading

from .space import Genome

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_S = 300.0

_EOF = object()


class EvaluatorError(Exception):
    """Base class for external-evaluator transport failures."""


class EvaluatorTimeout(EvaluatorError):
    pass


class EvaluatorProtocolError(EvaluatorError):
    """Malformed response, unexpected type, or request id mismatch."""


class EvaluatorRemoteError(EvaluatorError):
    """The evaluator answered with an explicit error message."""


class EvaluatorExited(EvaluatorError):
    """The evaluator process ended while a response was expected."""


class ExternalProcessEvaluator:
    """Spawns an evaluator command and speaks the line protocol with it."""

    def __init__(
        self,
        command,
        run_seed: int,
        total_batches: int,
        timeout_s: float = DEFAULT_TIMEOUT_S,
    ):
        if total_batches < 1:
            raise ValueError(f"total_batches must be >= 1, got {total_batches}")
        args = shlex.split(command) if isinstance(command, str) else list(command)
        self.run_seed = run_seed
        self.total_batches = total_batches
        self.timeout_s = timeout_s
        self.name = "external"
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                args,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise EvaluatorExited(f"cannot start evaluator {args!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        try:
            self._handshake()
        except Exception:
            self._terminate()
            raise

    def _read_loop(self) -> None:
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(_EOF)

    def _send(self, message: dict) -> None:
        try:
            self._proc.stdin.write(json.dumps(message) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise EvaluatorExited(f"evaluator stdin closed: {exc}") from exc

    def _recv(self) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout_s)
        except queue.Empty:
            raise EvaluatorTimeout(
                f"no response within {self.timeout_s}s from {self.name}"
            ) from None
        if line is _EOF:
            code = self._proc.poll()
            raise EvaluatorExited(f"evaluator process ended (exit code {code})")
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EvaluatorProtocolError(f"response is not JSON: {line!r}") from exc
        if not isinstance(message, dict) or "type" not in message:
            raise EvaluatorProtocolError(f"response has no type: {line!r}")
        return message

    def _handshake(self) -> None:
        self._send(
            {
                "type": "hello",
                "version": PROTOCOL_VERSION,
                "total_batches": self.total_batches,
                "run_seed": self.run_seed,
            }
        )
        ready = self._recv()
        if ready.get("type") != "ready":
            raise EvaluatorProtocolError(f"expected ready, got {ready.get('type')!r}")
        self.name = str(ready.get("name", "external"))

    def batch_accuracies(self, genome: Genome, batch_start: int, batch_end: int) -> list[float]:
        if not 0 <= batch_start < batch_end <= self.total_batches:
            raise ValueError(
                f"batch range [{batch_start}, {batch_end}) outside [0, {self.total_batches}]"
            )
        self._next_id += 1
        request_id = self._next_id
        self._send(
            {
                "type": "evaluate",
                "id": request_id,
                "genome": genome.to_json_dict(),
                "batch_start": batch_start,
                "batch_end": batch_end,
            }
        )
        reply = self._recv()
        kind = reply.get("type")
        if kind == "error":
            raise EvaluatorRemoteError(str(reply.get("message", "unspecified error")))
        if kind != "result":
            raise EvaluatorProtocolError(f"expected result, got {kind!r}")
        if reply.get("id") != request_id:
            raise EvaluatorProtocolError(
                f"response id {reply.get('id')!r} does not match request {request_id}"
            )
        accuracies = reply.get("batch_accuracies")
        if not isinstance(accuracies, list) or len(accuracies) != batch_end - batch_start:
            got = len(accuracies) if isinstance(accuracies, list) else type(accuracies).__name__
            raise EvaluatorProtocolError(
                f"expected {batch_end - batch_start} accuracies, got {got}"
            )
        return [float(a) for a in accuracies]

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._send({"type": "shutdown"})
            except EvaluatorError:
                pass
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._terminate()
        self._close_pipes()

    def _terminate(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._close_pipes()

    def _close_pipes(self) -> None:
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                if stream:
                    stream.close()
            except OSError:
                pass

    @property
    def exit_code(self):
        return self._proc.poll()

    def wait(self, timeout: float = 5.0) -> int:
        return self._proc.wait(timeout=timeout)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
