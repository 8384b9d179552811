"""Deterministic surrogate accuracies, reimplemented from the published
generator contract: FNV-1a 64 seeding of a splitmix64 stream, 53-bit
mantissa floats, and closed-form genome penalties. Kept free of any
engine-package imports so agreement with the engine is meaningful."""

from __future__ import annotations

MASK64 = (1 << 64) - 1

BASE_ERROR = 0.3722
RATIO_PENALTY = 0.015
STRIDE_PENALTY = 0.004
SUBSAMPLE_PENALTY = 0.010
BASELINE_SUBSAMPLING = (4, 4, 4, 4, 2)
K_MITIGATION_SPAN = 12.0
JITTER_HALFWIDTH = 0.059
ERROR_FLOOR = 0.05
ERROR_CEILING = 0.95


class GenomeError(ValueError):
    pass


def parse_genome(obj) -> dict:
    if not isinstance(obj, dict):
        raise GenomeError("genome must be a JSON object")
    fields = {"filter_ratios": 13, "strides": 6, "k": 5, "subsampling": 5}
    parsed = {}
    for name, count in fields.items():
        values = obj.get(name)
        if not isinstance(values, list) or len(values) != count:
            raise GenomeError(f"genome field {name!r} must be a list of {count} values")
        parsed[name] = values
    allowed = {
        "filter_ratios": (0.4, 0.6, 0.8, 1.0),
        "strides": (1, 2, 3, 4),
        "k": (16, 18, 20, 22),
        "subsampling": (2, 4, 6, 8),
    }
    for name, values in parsed.items():
        for i, v in enumerate(values):
            if v not in allowed[name]:
                raise GenomeError(f"{name}[{i}]: {v} not in allowed values {allowed[name]}")
    return {
        "filter_ratios": [float(v) for v in parsed["filter_ratios"]],
        "strides": [int(v) for v in parsed["strides"]],
        "k": [int(v) for v in parsed["k"]],
        "subsampling": [int(v) for v in parsed["subsampling"]],
    }


def canonical_string(genome: dict) -> str:
    return "|".join(
        (
            "F:" + ",".join(f"{v:.1f}" for v in genome["filter_ratios"]),
            "S:" + ",".join(str(v) for v in genome["strides"]),
            "K:" + ",".join(str(v) for v in genome["k"]),
            "R:" + ",".join(str(v) for v in genome["subsampling"]),
        )
    )


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & MASK64
    return h


def splitmix64_draw(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def pseudo_error(genome: dict) -> float:
    error = BASE_ERROR
    error += RATIO_PENALTY * sum(1.0 - r for r in genome["filter_ratios"])
    error += STRIDE_PENALTY * sum(s - 1 for s in genome["strides"])
    for r, k, base in zip(genome["subsampling"], genome["k"], BASELINE_SUBSAMPLING):
        mitigation = 1.0 - (k - 16) / K_MITIGATION_SPAN
        error += SUBSAMPLE_PENALTY * max(0, r - base) / 2.0 * mitigation
    return min(ERROR_CEILING, max(ERROR_FLOOR, error))


def batch_accuracies(genome: dict, run_seed: int, batch_start: int, batch_end: int) -> list[float]:
    base = 1.0 - pseudo_error(genome)
    state = fnv1a64(canonical_string(genome).encode("utf-8")) ^ (run_seed & MASK64)
    # Batch b always consumes draw b, regardless of request splits.
    state = (state + batch_start * 0x9E3779B97F4A7C15) & MASK64
    out = []
    for _ in range(batch_end - batch_start):
        state, bits = splitmix64_draw(state)
        unit = (bits >> 11) / float(1 << 53)
        jitter = -JITTER_HALFWIDTH + unit * (2.0 * JITTER_HALFWIDTH)
        out.append(min(1.0, max(0.0, base + jitter)))
    return out
