"""Command-line entry point.

Commands: search, two-stage, cost, eval, export. Option precedence is
flags > config file > SSS3D_SEED environment variable > defaults. Search
runs write a self-describing output directory: the resolved config, one
front CSV per generation, a summary JSON, and a manifest.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .cost import StructuralError, SupernetDescription, count_flops, count_params
from .engine import (
    FLOPS,
    MIOU_ERROR,
    PARAMS,
    SearchConfig,
    SearchResult,
    builtin_evaluator_factory,
    external_evaluator_factory,
    run_single_stage,
    run_two_stage,
)
from .evaluation import EarlyStopPolicy, evaluate_with_early_stopping
from .protocol import EvaluatorError
from .space import Genome, GenomeParseError, MaskMode, SearchSpace, supernet_genome
from .space import decode as decode_genome
from .supernet import reference_description

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EVALUATOR = 3

SEED_ENV_VAR = "SSS3D_SEED"


class ConfigError(ValueError):
    pass


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None


def _load_genome(path: str) -> Genome:
    obj = _load_json(path)
    genome = Genome.from_json_dict(obj)
    SearchSpace.default().validate_genome(genome)
    return genome


def _load_supernet(path: str | None) -> SupernetDescription:
    if path is None:
        return reference_description()
    try:
        desc = SupernetDescription.from_json(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    desc.ensure_complete()
    return desc


def _resolve_seed(flag_seed, config_obj: dict):
    if flag_seed is not None:
        return flag_seed
    if "run_seed" in config_obj:
        return int(config_obj["run_seed"])
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR}={env!r} is not an integer") from None
    return 0


def _search_config(obj: dict, seed) -> SearchConfig:
    policy_obj = obj.get("early_stop", {})
    policy = EarlyStopPolicy(
        check_fraction=policy_obj.get("check_fraction", 0.25),
        accuracy_threshold=policy_obj.get("accuracy_threshold", 0.30),
        total_batches=policy_obj.get("total_batches", 100),
    )
    base = obj.get("base_genome")
    if isinstance(base, dict):
        base_genome = Genome.from_json_dict(base)
    elif isinstance(base, str):
        base_genome = decode_genome(base)
    else:
        base_genome = None
    try:
        return SearchConfig(
            population_size=int(obj["population_size"]),
            max_generations=int(obj["max_generations"]),
            objectives=tuple(obj.get("objectives", [MIOU_ERROR, PARAMS])),
            mask_mode=MaskMode(obj.get("mask_mode", "full")),
            run_seed=seed,
            mutation_prob=float(obj.get("mutation_prob", 1.0 / 29)),
            hd_epsilon=float(obj.get("hd_epsilon", 0.01)),
            hd_window=int(obj.get("hd_window", 5)),
            early_stop=policy,
            base_genome=base_genome,
        )
    except KeyError as exc:
        raise ConfigError(f"config missing required key {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _evaluator_factory(obj: dict, args):
    command = getattr(args, "evaluator_cmd", None)
    if command is None:
        evaluator_obj = obj.get("evaluator", {})
        if evaluator_obj.get("kind", "builtin") == "external":
            command = evaluator_obj.get("command")
            if not command:
                raise ConfigError("external evaluator config needs a 'command'")
    if command is None:
        return builtin_evaluator_factory(), "builtin"
    timeout = float(obj.get("evaluator", {}).get("timeout_s", 300.0))
    return external_evaluator_factory(command, timeout), "external"


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _front_csv_rows(front):
    for entry in front:
        yield {
            "genome": entry.genome,
            "miou_error": repr(entry.miou_error),
            "params": entry.params,
            "flops": entry.flops,
            "rank": 0,
            "crowding": "",
        }


def _write_front_csv(path: Path, front, crowding=None) -> None:
    fields = ["genome", "miou_error", "params", "flops", "rank", "crowding"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for i, row in enumerate(_front_csv_rows(front)):
            if crowding is not None:
                row["crowding"] = repr(crowding[i])
            writer.writerow(row)


def _front_crowding(front, objectives):
    from .nsga2 import ObjectiveVector, crowding_distance

    vectors = [
        ObjectiveVector(tuple(e.objectives[label] for label in objectives), tuple(objectives))
        for e in front
    ]
    return crowding_distance(vectors)


def _write_run_artifacts(out_dir: Path, result: SearchResult, config_obj: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "config.json", config_obj)
    for record in result.history:
        crowding = _front_crowding(record.front, result.config.objectives)
        _write_front_csv(out_dir / f"front_gen_{record.generation:04d}.csv", record.front, crowding)
    _write_json(out_dir / "summary.json", result.to_json_dict())


def _write_manifest(out_dir: Path, config_path: str, seed: int, started: str) -> None:
    _write_json(
        out_dir / "manifest.json",
        {
            "config_path": str(config_path),
            "output_dir": str(out_dir),
            "started_at": started,
            "finished_at": _utc_now(),
            "tool_version": __version__,
            "run_seed": seed,
        },
    )


def _resolved_config_obj(obj: dict, config: SearchConfig, evaluator_kind: str) -> dict:
    resolved = dict(config.to_json_dict())
    resolved["evaluator"] = obj.get("evaluator", {"kind": evaluator_kind})
    return resolved


def cmd_search(args) -> int:
    obj = _load_json(args.config)
    seed = _resolve_seed(args.seed, obj)
    config = _search_config(obj, seed)
    desc = _load_supernet(args.supernet or obj.get("supernet"))
    factory, kind = _evaluator_factory(obj, args)
    started = _utc_now()
    try:
        result = run_single_stage(config, SearchSpace.default(), desc, factory, jobs=args.jobs)
    except EvaluatorError as exc:
        print(f"evaluator failure: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    out_dir = Path(args.out)
    _write_run_artifacts(out_dir, result, _resolved_config_obj(obj, config, kind))
    _write_manifest(out_dir, args.config, seed, started)
    print(
        f"search done: {len(result.history)} generations, "
        f"{result.total_evaluations} evaluations, front size {len(result.final_front)}"
    )
    return EXIT_OK


def cmd_two_stage(args) -> int:
    obj = _load_json(args.config)
    stage1_obj = obj.get("stage1")
    stage2_obj = obj.get("stage2")
    if not isinstance(stage1_obj, dict) or not isinstance(stage2_obj, dict):
        raise ConfigError("two-stage config needs 'stage1' and 'stage2' objects")
    seed = _resolve_seed(args.seed, stage1_obj)
    stage1_obj.setdefault("mask_mode", "sampling_only")
    stage1_obj.setdefault("objectives", [MIOU_ERROR, FLOPS])
    stage2_obj.setdefault("mask_mode", "architectural_only")
    stage2_obj.setdefault("objectives", [MIOU_ERROR, PARAMS])
    config1 = _search_config(stage1_obj, seed)
    config2 = _search_config(stage2_obj, _resolve_seed(args.seed, stage2_obj))
    desc = _load_supernet(args.supernet or obj.get("supernet"))
    factory, kind = _evaluator_factory(obj, args)
    started = _utc_now()
    try:
        result = run_two_stage(
            config1,
            config2,
            SearchSpace.default(),
            desc,
            factory,
            jobs=args.jobs,
            max_pivots=args.pivots,
        )
    except EvaluatorError as exc:
        print(f"evaluator failure: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    out_dir = Path(args.out)
    _write_run_artifacts(out_dir / "stage1", result.stage1, _resolved_config_obj(stage1_obj, config1, kind))
    for i, pivot_run in enumerate(result.pivot_runs, start=1):
        pivot_dir = out_dir / f"pivot_{i}"
        pivot_obj = _resolved_config_obj(stage2_obj, pivot_run.result.config, kind)
        _write_run_artifacts(pivot_dir, pivot_run.result, pivot_obj)
        _write_json(pivot_dir / "pivot.json", {"pivot": pivot_run.pivot, "run_seed": pivot_run.run_seed})
    _write_json(
        out_dir / "summary.json",
        {
            "stage1_generations": config1.max_generations,
            "stage2_generations": config2.max_generations,
            "stage1_population": config1.population_size,
            "stage2_population": config2.population_size,
            "pivots": [p.pivot for p in result.pivot_runs],
            "total_evaluations": result.total_evaluations(),
            "evaluation_budget": config1.evaluation_budget()
            + len(result.pivot_runs) * config2.evaluation_budget(),
        },
    )
    _write_manifest(out_dir, args.config, seed, started)
    print(
        f"two-stage done: {len(result.pivot_runs)} pivot runs, "
        f"{result.total_evaluations()} evaluations"
    )
    return EXIT_OK


def cmd_cost(args) -> int:
    genome = _load_genome(args.genome)
    desc = _load_supernet(args.supernet)
    supernet = supernet_genome()
    params = count_params(genome, desc)
    flops = count_flops(genome, desc)
    sup_params = count_params(supernet, desc)
    sup_flops = count_flops(supernet, desc)
    report = {
        "params": params,
        "flops": flops,
        "params_millions": params / 1e6,
        "flops_g": flops / 1e9,
        "params_pct_of_supernet": 100.0 * params / sup_params,
        "flops_pct_of_supernet": 100.0 * flops / sup_flops,
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_eval(args) -> int:
    genome = _load_genome(args.genome)
    policy = EarlyStopPolicy(
        accuracy_threshold=args.threshold,
        total_batches=args.batches,
    )
    if args.evaluator_cmd:
        factory = external_evaluator_factory(args.evaluator_cmd, args.timeout)
    else:
        factory = builtin_evaluator_factory()
    try:
        evaluator = factory(args.seed, policy.total_batches)
    except EvaluatorError as exc:
        print(f"evaluator failure: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    try:
        outcome = evaluate_with_early_stopping(evaluator, genome, policy)
    except Exception as exc:
        print(f"evaluation failure: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    finally:
        evaluator.close()
    print(json.dumps(outcome.to_json_dict(), indent=2))
    return EXIT_OK


def cmd_export(args) -> int:
    summary_path = Path(args.run) / "summary.json"
    try:
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {summary_path}: {exc}") from None
    if "history" not in summary:
        raise ConfigError(f"{summary_path} is not a single-stage run summary")
    fields = ["generation", "genome", "miou_error_percent", "params_millions", "flops_g"]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for record in summary["history"]:
            for entry in record["front"]:
                writer.writerow(
                    {
                        "generation": record["generation"],
                        "genome": entry["genome"],
                        "miou_error_percent": repr(100.0 * entry["miou_error"]),
                        "params_millions": repr(entry["params"] / 1e6),
                        "flops_g": repr(entry["flops"] / 1e9),
                    }
                )
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sss3d",
        description="Multi-objective evolutionary search over a point-cloud segmentation supernet.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    search = sub.add_parser("search", help="run a single-stage search")
    search.add_argument("--config", required=True, help="search config JSON")
    search.add_argument("--out", required=True, help="output directory")
    search.add_argument("--seed", type=int, default=None, help="run seed override")
    search.add_argument("--jobs", type=int, default=1, help="evaluator pool size")
    search.add_argument("--supernet", default=None, help="supernet description JSON")
    search.add_argument("--evaluator-cmd", default=None, help="external evaluator command")
    search.set_defaults(func=cmd_search)

    two = sub.add_parser("two-stage", help="run the sampling-then-architecture schedule")
    two.add_argument("--config", required=True, help="two-stage config JSON")
    two.add_argument("--out", required=True, help="output directory")
    two.add_argument("--seed", type=int, default=None, help="run seed override")
    two.add_argument("--jobs", type=int, default=1, help="evaluator pool size")
    two.add_argument("--pivots", type=int, default=3, help="max stage-2 pivot runs")
    two.add_argument("--supernet", default=None, help="supernet description JSON")
    two.add_argument("--evaluator-cmd", default=None, help="external evaluator command")
    two.set_defaults(func=cmd_two_stage)

    cost = sub.add_parser("cost", help="report a genome's parameter/FLOP costs")
    cost.add_argument("--genome", required=True, help="genome JSON file")
    cost.add_argument("--supernet", default=None, help="supernet description JSON")
    cost.set_defaults(func=cmd_cost)

    ev = sub.add_parser("eval", help="evaluate one genome with early stopping")
    ev.add_argument("--genome", required=True, help="genome JSON file")
    ev.add_argument("--seed", type=int, default=0, help="run seed")
    ev.add_argument("--batches", type=int, default=100, help="total test batches")
    ev.add_argument("--threshold", type=float, default=0.30, help="early-stop accuracy threshold")
    ev.add_argument("--timeout", type=float, default=300.0, help="external evaluator timeout (s)")
    ev.add_argument("--evaluator-cmd", default=None, help="external evaluator command")
    ev.set_defaults(func=cmd_eval)

    export = sub.add_parser("export", help="flatten a run's fronts into one plot-ready CSV")
    export.add_argument("--run", required=True, help="run output directory")
    export.add_argument("--out", required=True, help="CSV file to write")
    export.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GenomeParseError, StructuralError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
