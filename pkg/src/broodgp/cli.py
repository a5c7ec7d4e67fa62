"""Command-line entry point: ``broodgp run|batch|sweep|compare``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import harness
from .engine import GPConfig, run
from .exprtree import ConfigurationError
from .operators import Operator

log = logging.getLogger("broodgp")


def _ratio(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"ratio must lie in (0, 1), got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat YAML file with GPConfig keys")
    common.add_argument("--operator", choices=[op.value for op in Operator])
    common.add_argument("--problem", choices=["P1", "P2", "P3"])
    common.add_argument("--seed", help="unsigned 64-bit integer or 'time'")
    common.add_argument("--generations", type=int, dest="max_generations")
    common.add_argument("--population", type=int, dest="population_size")
    common.add_argument("--brood-n", type=int, dest="brood_n")
    common.add_argument("--switch-ratio", type=_ratio, dest="switch_ratio")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    multi = argparse.ArgumentParser(add_help=False)
    multi.add_argument("--runs", type=int, default=30)
    multi.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    parser = argparse.ArgumentParser(prog="broodgp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single seeded run")
    sub.add_parser("batch", parents=[common, multi], help="multi-run batch")
    sweep = sub.add_parser("sweep", parents=[common, multi], help="msbc switch-ratio sweep")
    sweep.add_argument(
        "--ratios",
        type=_ratio,
        nargs="+",
        default=list(harness.TABLE_RATIOS),
        help="switch ratios in (0, 1); default 0.1 .. 0.9",
    )
    sweep.add_argument("--problems", nargs="+", choices=["P1", "P2", "P3"], help="sweep several problems")
    compare = sub.add_parser("compare", parents=[common, multi], help="operator comparison table")
    compare.add_argument("--problems", nargs="+", choices=["P1", "P2", "P3"], default=["P1", "P2", "P3"])
    return parser


OVERRIDE_KEYS = ("operator", "problem", "seed", "max_generations", "population_size", "brood_n", "switch_ratio")


def resolve_config(args: argparse.Namespace) -> GPConfig:
    overrides = {k: getattr(args, k) for k in OVERRIDE_KEYS if getattr(args, k, None) is not None}
    if args.config is not None:
        return harness.load_config(args.config, overrides)
    return harness.config_from_mapping(overrides)


def _cmd_run(args, config: GPConfig) -> None:
    result = run(config)
    out = harness.ensure_dir(args.out)
    harness.write_run_csv(result, out / "run_0.csv")
    print(f"seed {result.seed_used}: best fitness {result.best_fitness!r} at generation {result.best_found_at}")
    print(f"best program: {result.best_individual.genome}")


def _cmd_batch(args, config: GPConfig) -> None:
    report = harness.run_batch(config, args.runs, config.seed, args.workers)
    harness.write_batch(report, args.out)
    s = report.summary
    print(
        f"{config.problem} {config.operator.value}: {args.runs} runs, master seed {report.master_seed}; "
        f"best {s.best_fitness!r}, median best {s.median_best_fitness!r}, "
        f"median generation-of-best {s.median_best_found_at}"
    )


def _cmd_sweep(args, config: GPConfig) -> None:
    problems = args.problems or [config.problem]
    for problem in problems:
        base = harness.config_from_mapping({"problem": problem}, config)
        rows = harness.ratio_sweep(base, args.ratios, args.runs, config.seed, args.workers)
        out = args.out / problem if len(problems) > 1 else args.out
        harness.write_sweep(problem, rows, out)
        print(f"{problem}: first/second phase -> best fitness at generation")
        for row in rows:
            print(
                f"  {row.first_phase_pct:3d}% / {100 - row.first_phase_pct:3d}%  "
                f"{row.best_fitness!r} at gen-{row.best_found_at}"
            )


def _cmd_compare(args, config: GPConfig) -> None:
    batches = harness.compare_operators(config, args.problems, tuple(Operator), args.runs, config.seed, args.workers)
    harness.write_comparison(batches, args.out)
    print("problem operator  median_best_fitness  median_gen_of_best")
    for problem, op, _, _, median, _, gen in harness.comparison_rows(batches):
        print(f"{problem:7s} {op:8s}  {median:<19.6g}  {gen}")
    for problem, fastest in harness.msbc_fastest(batches).items():
        verdict = "msbc reaches its best earliest" if fastest else "msbc is NOT the earliest"
        print(f"{problem}: {verdict}")


COMMANDS = {"run": _cmd_run, "batch": _cmd_batch, "sweep": _cmd_sweep, "compare": _cmd_compare}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = resolve_config(args)
        if config.seed == "time":
            config = config.with_seed(harness.time_seed())
        if args.command in ("batch", "sweep", "compare") and args.runs < 1:
            raise ConfigurationError("--runs must be >= 1")
        started = time.perf_counter()
        COMMANDS[args.command](args, config)
        log.info("finished in %.1fs", time.perf_counter() - started)
    except (ConfigurationError, OSError, harness.BatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
