"""Experiment harness: config files, seeded multi-run batches, ratio sweeps, CSV reports."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import yaml

from .engine import SEED_MASK, GenerationStats, GPConfig, RunResult, run, time_seed
from .exprtree import ConfigurationError
from .operators import BroodConfig, Operator

log = logging.getLogger(__name__)

STATS_HEADER = ("generation", "best_fitness", "mean_fitness", "best_size", "invalid_count")
SUMMARY_HEADER = ("run_id", "seed", "best_fitness", "best_found_at")
SWEEP_HEADER = (
    "problem",
    "first_phase_pct",
    "second_phase_pct",
    "ratio",
    "best_fitness",
    "best_found_at",
    "median_best_fitness",
    "median_best_found_at",
)
COMPARISON_HEADER = (
    "problem",
    "operator",
    "runs",
    "best_fitness",
    "median_best_fitness",
    "mean_best_fitness",
    "median_best_found_at",
)

BROOD_KEYS = ("brood_n", "switch_ratio", "max_retries")
CONFIG_KEYS = frozenset(f.name for f in dataclasses.fields(GPConfig) if f.name != "brood") | set(BROOD_KEYS)

TABLE_RATIOS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def config_from_mapping(values: Mapping[str, Any], base: GPConfig | None = None) -> GPConfig:
    """Build a GPConfig from flat keys; anything absent keeps the ``base`` value."""
    unknown = sorted(set(values) - CONFIG_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown config key(s) {unknown}; valid keys: {sorted(CONFIG_KEYS)}")
    base = base or GPConfig()
    rest = {k: v for k, v in values.items() if k not in BROOD_KEYS}
    if "seed" in rest:
        rest["seed"] = parse_seed(rest["seed"])
    try:
        brood = dataclasses.replace(base.brood, **{k: values[k] for k in BROOD_KEYS if k in values})
        return dataclasses.replace(base, brood=brood, **rest)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc


def parse_seed(value: int | str) -> int | str:
    if isinstance(value, str):
        if value == "time":
            return value
        try:
            value = int(value, 0)
        except ValueError:
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer or 'time', got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= SEED_MASK:
        raise ConfigurationError(f"seed must be an unsigned 64-bit integer or 'time', got {value!r}")
    return value


def load_config(path: str | Path, overrides: Mapping[str, Any] | None = None) -> GPConfig:
    """Read a flat YAML key/value file; keys are GPConfig field names plus brood settings."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        values = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigurationError(f"cannot parse config {path}{where}: {exc}") from exc
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise ConfigurationError(f"config {path} must be a key/value mapping")
    values = {**values, **(overrides or {})}
    return config_from_mapping(values)


def config_digest(config: GPConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True)


def split_seed(master_seed: int, index: int) -> int:
    """Seed for run ``index`` of a batch: splitmix64 of the master seed advanced ``index + 1`` steps."""
    z = (master_seed + (index + 1) * 0x9E3779B97F4A7C15) & SEED_MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & SEED_MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & SEED_MASK
    return z ^ (z >> 31)


@dataclass(frozen=True)
class BatchSummary:
    best_fitness: float
    median_best_fitness: float
    mean_best_fitness: float
    median_best_found_at: float

    @classmethod
    def of(cls, runs: Sequence[RunResult]) -> BatchSummary:
        best = [r.best_fitness for r in runs]
        return cls(
            best_fitness=min(best),
            median_best_fitness=statistics.median(best),
            mean_best_fitness=statistics.fmean(best),
            median_best_found_at=statistics.median(r.best_found_at for r in runs),
        )


@dataclass(frozen=True)
class BatchReport:
    config: GPConfig
    master_seed: int
    runs: tuple[RunResult, ...]
    summary: BatchSummary

    @property
    def config_digest(self) -> str:
        return config_digest(self.config)

    @property
    def best_run(self) -> RunResult:
        # earliest run wins ties so the choice is independent of scheduling
        return min(self.runs, key=lambda r: r.best_individual.fitness)


@dataclass(frozen=True)
class SweepRow:
    ratio: float
    best_fitness: float
    best_found_at: int
    batch: BatchReport

    @property
    def first_phase_pct(self) -> int:
        return round(self.ratio * 100)


class BatchError(RuntimeError):
    def __init__(self, run_id: int, seed: int, cause: BaseException):
        super().__init__(f"run {run_id} (seed {seed}) failed: {cause}")
        self.run_id = run_id
        self.seed = seed


def _run_one(config: GPConfig) -> RunResult:
    return run(config)


def run_batch(config: GPConfig, run_count: int = 30, master_seed: int | str | None = None, workers: int = 1) -> BatchReport:
    """Execute ``run_count`` independently seeded runs.

    Run ``i`` always gets ``split_seed(master_seed, i)``, so the report does not
    depend on ``workers`` or on completion order.
    """
    if run_count < 1:
        raise ConfigurationError("run_count must be >= 1")
    if master_seed is None:
        master_seed = config.seed
    if master_seed == "time":
        master_seed = time_seed()
    master_seed = parse_seed(master_seed)
    configs = [config.with_seed(split_seed(master_seed, i)) for i in range(run_count)]

    results: list[RunResult] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, c) for c in configs]
            for i, fut in enumerate(futures):
                try:
                    results.append(fut.result())
                except Exception as exc:
                    raise BatchError(i, configs[i].seed, exc) from exc
    else:
        for i, c in enumerate(configs):
            try:
                results.append(run(c))
            except Exception as exc:
                raise BatchError(i, c.seed, exc) from exc
            log.debug("run %d/%d done: best %.6g", i + 1, run_count, results[-1].best_fitness)
    return BatchReport(config.with_seed(master_seed), master_seed, tuple(results), BatchSummary.of(results))


def ratio_sweep(
    base_config: GPConfig,
    ratios: Iterable[float] = (0.5,),
    run_count: int = 30,
    master_seed: int | str | None = None,
    workers: int = 1,
) -> list[SweepRow]:
    """One msbc batch per switch ratio, all sharing the master seed."""
    if master_seed is None:
        master_seed = base_config.seed
    if master_seed == "time":
        master_seed = time_seed()
    rows = []
    for ratio in ratios:
        brood = BroodConfig(base_config.brood.brood_n, ratio, base_config.brood.max_retries)
        config = dataclasses.replace(base_config, operator=Operator.MSBC, brood=brood)
        batch = run_batch(config, run_count, master_seed, workers)
        best = batch.best_run
        rows.append(SweepRow(ratio, best.best_fitness, best.best_found_at, batch))
    return rows


def compare_operators(
    base_config: GPConfig,
    problems: Sequence[str] = ("P1", "P2", "P3"),
    operators: Sequence[Operator | str] = tuple(Operator),
    run_count: int = 30,
    master_seed: int | str | None = None,
    workers: int = 1,
) -> dict[tuple[str, Operator], BatchReport]:
    """Run one batch per (problem, operator); every cell reuses the same run seeds."""
    if master_seed is None:
        master_seed = base_config.seed
    if master_seed == "time":
        master_seed = time_seed()
    out = {}
    for problem in problems:
        for op in map(Operator.parse, operators):
            config = dataclasses.replace(base_config, problem=problem, operator=op)
            out[(problem, op)] = run_batch(config, run_count, master_seed, workers)
    return out


def format_number(value: float | int) -> str:
    # repr gives the shortest round-trip decimal; inf/nan render as 'inf'/'nan'
    return str(value) if isinstance(value, int) else repr(float(value))


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_number(v) if isinstance(v, (int, float)) else v for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_run_csv(result: RunResult, path: str | Path) -> Path:
    return _write_csv(
        Path(path),
        STATS_HEADER,
        ([s.generation, s.best_fitness, s.mean_fitness, s.best_size, s.invalid_count] for s in result.stats),
    )


def read_run_csv(path: str | Path) -> list[GenerationStats]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != STATS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            GenerationStats(
                generation=int(row["generation"]),
                best_fitness=float(row["best_fitness"]),
                mean_fitness=float(row["mean_fitness"]),
                best_size=int(row["best_size"]),
                invalid_count=int(row["invalid_count"]),
            )
            for row in reader
        ]


def ensure_dir(out_dir: str | Path) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def write_batch(report: BatchReport, out_dir: str | Path) -> list[Path]:
    """Per-run generation CSVs, the per-run summary, the config echo and the best programs."""
    out = ensure_dir(out_dir)
    written = [write_run_csv(r, out / f"run_{i}.csv") for i, r in enumerate(report.runs)]
    written.append(
        _write_csv(
            out / "summary.csv",
            SUMMARY_HEADER,
            ([i, r.seed_used, r.best_fitness, r.best_found_at] for i, r in enumerate(report.runs)),
        )
    )
    written.append(
        _write_csv(
            out / "best_programs.csv",
            ("run_id", "best_fitness", "size", "program"),
            ([i, r.best_fitness, len(r.best_individual.genome), str(r.best_individual.genome)] for i, r in enumerate(report.runs)),
        )
    )
    config_path = out / "config.json"
    config_path.write_text(json.dumps(report.config.to_dict(), sort_keys=True, indent=2) + "\n")
    written.append(config_path)
    return written


def sweep_table_rows(problem: str, rows: Sequence[SweepRow]) -> list[list[Any]]:
    return [
        [
            problem,
            row.first_phase_pct,
            100 - row.first_phase_pct,
            row.ratio,
            row.best_fitness,
            row.best_found_at,
            row.batch.summary.median_best_fitness,
            row.batch.summary.median_best_found_at,
        ]
        for row in rows
    ]


def write_sweep(problem: str, rows: Sequence[SweepRow], out_dir: str | Path, per_run: bool = True) -> list[Path]:
    out = ensure_dir(out_dir)
    written = [_write_csv(out / "sweep.csv", SWEEP_HEADER, sweep_table_rows(problem, rows))]
    if per_run:
        for row in rows:
            written.extend(write_batch(row.batch, out / f"ratio_{row.first_phase_pct:02d}"))
    return written


def comparison_rows(batches: Mapping[tuple[str, Operator], BatchReport]) -> list[list[Any]]:
    return [
        [
            problem,
            op.value,
            len(b.runs),
            b.summary.best_fitness,
            b.summary.median_best_fitness,
            b.summary.mean_best_fitness,
            b.summary.median_best_found_at,
        ]
        for (problem, op), b in batches.items()
    ]


def msbc_fastest(batches: Mapping[tuple[str, Operator], BatchReport]) -> dict[str, bool]:
    """Per problem: does msbc have the smallest median generation-of-best?"""
    out = {}
    for problem in dict.fromkeys(p for p, _ in batches):
        medians = {op: b.summary.median_best_found_at for (p, op), b in batches.items() if p == problem}
        if Operator.MSBC in medians:
            others = [m for op, m in medians.items() if op is not Operator.MSBC]
            out[problem] = all(medians[Operator.MSBC] < m for m in others)
    return out


def write_comparison(batches: Mapping[tuple[str, Operator], BatchReport], out_dir: str | Path, per_run: bool = True) -> list[Path]:
    out = ensure_dir(out_dir)
    written = [_write_csv(out / "comparison.csv", COMPARISON_HEADER, comparison_rows(batches))]
    if per_run:
        for (problem, op), batch in batches.items():
            written.extend(write_batch(batch, out / problem / op.value))
    return written

