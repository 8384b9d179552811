"""Request loop: newline-delimited JSON over stdin/stdout.

Expected exchange: a hello first, then evaluate requests answered with
result/error messages, then shutdown. Malformed input never kills the
process; it is reported as an error message with a null id. Nothing but
JSON lines is ever written to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from .surrogate import GenomeError, batch_accuracies, parse_genome

PROTOCOL_VERSION = 1


def _emit(stream, message: dict) -> None:
    stream.write(json.dumps(message) + "\n")
    stream.flush()


def _error(stream, request_id, message: str) -> None:
    _emit(stream, {"type": "error", "id": request_id, "message": message})


def _handle_evaluate(message: dict, total_batches: int, run_seed: int) -> dict:
    request_id = message.get("id")
    if not isinstance(request_id, int):
        raise GenomeError("evaluate request needs an integer id")
    genome = parse_genome(message.get("genome"))
    start = message.get("batch_start")
    end = message.get("batch_end")
    if not isinstance(start, int) or not isinstance(end, int):
        raise GenomeError("batch_start and batch_end must be integers")
    if not 0 <= start < end <= total_batches:
        raise GenomeError(
            f"batch range [{start}, {end}) outside [0, {total_batches}]"
        )
    return {
        "type": "result",
        "id": request_id,
        "batch_accuracies": batch_accuracies(genome, run_seed, start, end),
    }


def serve(stdin, stdout, latency_ms: int = 0) -> int:
    first = stdin.readline()
    if not first:
        return 1
    try:
        hello = json.loads(first)
    except json.JSONDecodeError:
        _error(stdout, None, "expected hello as the first message")
        return 1
    if not isinstance(hello, dict) or hello.get("type") != "hello":
        _error(stdout, None, "expected hello as the first message")
        return 1
    if hello.get("version") != PROTOCOL_VERSION:
        _error(stdout, None, f"unsupported protocol version {hello.get('version')!r}")
        return 1
    total_batches = hello.get("total_batches")
    run_seed = hello.get("run_seed")
    if not isinstance(total_batches, int) or total_batches < 1 or not isinstance(run_seed, int):
        _error(stdout, None, "hello needs integer total_batches and run_seed")
        return 1
    _emit(stdout, {"type": "ready", "name": "example-surrogate-evaluator"})

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            _error(stdout, None, "malformed JSON line")
            continue
        if not isinstance(message, dict):
            _error(stdout, None, "message must be a JSON object")
            continue
        kind = message.get("type")
        if kind == "shutdown":
            return 0
        if kind != "evaluate":
            _error(stdout, message.get("id"), f"unknown message type {kind!r}")
            continue
        try:
            reply = _handle_evaluate(message, total_batches, run_seed)
        except GenomeError as exc:
            _error(stdout, message.get("id"), str(exc))
            continue
        if latency_ms > 0:
            time.sleep(latency_ms / 1000.0)
        _emit(stdout, reply)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sss3d-example-evaluator",
        description="Reference evaluator process speaking the sss3d line protocol.",
    )
    parser.add_argument(
        "--latency-ms",
        type=int,
        default=0,
        help="artificial delay before each result, for timeout testing",
    )
    args = parser.parse_args(argv)
    return serve(sys.stdin, sys.stdout, latency_ms=args.latency_ms)


if __name__ == "__main__":
    sys.exit(main())
