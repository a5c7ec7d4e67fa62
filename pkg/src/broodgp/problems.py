"""Benchmark regression problems and the error-based fitness evaluator."""
from __future__ import annotations

import csv
import enum
import math
import random
from dataclasses import dataclass, field
from functools import total_ordering
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .exprtree import ExprTree, PrimitiveSet, evaluate


class ProblemId(str, enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"


# The targets are written with the same numpy operations, in the same order,
# that a tree encoding them would perform, so an exact encoding scores 0.0.

def _target_p1(x, p, q, r, s):
    return np.add(
        np.multiply(np.multiply(np.cos(np.sqrt(np.abs(np.sin(q)))), np.cos(p)), np.sin(x)),
        np.tan(np.subtract(r, s)),
    )


def _target_p2(x):
    x2 = np.multiply(x, x)
    x4 = np.multiply(x2, x2)
    return np.add(np.subtract(np.multiply(x4, x2), np.add(x4, x4)), x2)


def _target_p3(x):
    x2 = np.multiply(x, x)
    return np.add(np.subtract(np.add(x2, x2), np.add(np.add(x, x), x)), 4.0)


@dataclass(frozen=True)
class ProblemSpec:
    id: ProblemId
    variable_names: tuple[str, ...]
    target: Callable = field(compare=False, repr=False)
    case_count: int
    sampling_interval: tuple[float, float]
    functions: tuple[str, ...]
    ephemeral_constant_range: tuple[float, float] | None = None
    description: str = ""

    def primitive_set(self, functions: Sequence[str] | None = None) -> PrimitiveSet:
        return PrimitiveSet.from_names(
            self.functions if functions is None else functions,
            self.variable_names,
            self.ephemeral_constant_range,
        )


PROBLEMS: dict[ProblemId, ProblemSpec] = {
    ProblemId.P1: ProblemSpec(
        ProblemId.P1,
        ("x", "p", "q", "r", "s"),
        _target_p1,
        case_count=50,
        sampling_interval=(0.0, 1.0),
        functions=("add", "sub", "mul", "sqrt", "sin", "cos", "tan"),
        description="cos(sqrt(sin(q))) * cos(p) * sin(x) + tan(r - s)",
    ),
    ProblemId.P2: ProblemSpec(
        ProblemId.P2,
        ("x",),
        _target_p2,
        case_count=20,
        sampling_interval=(-1.0, 1.0),
        functions=("add", "sub", "mul"),
        description="x^6 - 2x^4 + x^2",
    ),
    ProblemId.P3: ProblemSpec(
        ProblemId.P3,
        ("x",),
        _target_p3,
        case_count=20,
        sampling_interval=(-1.0, 1.0),
        functions=("add", "sub", "mul"),
        ephemeral_constant_range=(0.0, 1.0),
        description="2x^2 - 3x + 4",
    ),
}


def get_problem(problem_id: str | ProblemId) -> ProblemSpec:
    try:
        return PROBLEMS[ProblemId(problem_id)]
    except ValueError:
        raise ValueError(
            f"unknown problem {problem_id!r}; expected one of {[p.value for p in ProblemId]}"
        ) from None


def target_eval(problem: ProblemSpec, row: Sequence[float]) -> float:
    if len(row) != len(problem.variable_names):
        raise ValueError(
            f"{problem.id.value} takes {len(problem.variable_names)} inputs, got {len(row)}"
        )
    with np.errstate(all="ignore"):
        return float(problem.target(*(np.float64(v) for v in row)))


@dataclass(frozen=True)
class FitnessCases:
    variable_names: tuple[str, ...]
    inputs: np.ndarray  # (case_count, n_variables)
    targets: np.ndarray  # (case_count,)

    def __post_init__(self):
        if self.inputs.shape != (len(self.targets), len(self.variable_names)):
            raise ValueError(
                f"inputs shape {self.inputs.shape} does not match "
                f"{len(self.targets)} targets x {len(self.variable_names)} variables"
            )
        self.inputs.setflags(write=False)
        self.targets.setflags(write=False)

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def bindings(self) -> dict[str, np.ndarray]:
        return {name: self.inputs[:, j] for j, name in enumerate(self.variable_names)}

    def __eq__(self, other):
        if not isinstance(other, FitnessCases):
            return NotImplemented
        return (
            self.variable_names == other.variable_names
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.targets, other.targets)
        )

    __hash__ = None

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([*self.variable_names, "target"])
            for row, target in zip(self.inputs, self.targets):
                writer.writerow([repr(float(v)) for v in (*row, target)])


def generate_cases(
    problem: ProblemSpec,
    rng: random.Random,
    case_count: int | None = None,
    interval: tuple[float, float] | None = None,
) -> FitnessCases:
    """Sample fitness cases uniformly, row by row, from the problem's interval."""
    n = problem.case_count if case_count is None else case_count
    lo, hi = problem.sampling_interval if interval is None else interval
    if n < 1:
        raise ValueError("case_count must be positive")
    if not lo <= hi:
        raise ValueError(f"bad sampling interval ({lo}, {hi})")
    k = len(problem.variable_names)
    inputs = np.array([[rng.uniform(lo, hi) for _ in range(k)] for _ in range(n)], dtype=float)
    # rng.uniform can round to hi + ulp for some (lo, hi); keep rows in bounds
    np.clip(inputs, lo, hi, out=inputs)
    with np.errstate(all="ignore"):
        targets = np.asarray(problem.target(*inputs.T), dtype=float)
    return FitnessCases(problem.variable_names, inputs, targets)


@total_ordering
@dataclass(frozen=True)
class Fitness:
    """Error value where lower is better.

    An invalid fitness (some case evaluated to inf/nan) compares greater than
    every valid one and equal to other invalid ones.
    """

    value: float
    valid: bool = True

    @classmethod
    def invalid(cls) -> Fitness:
        return _INVALID

    def _key(self):
        return (0, self.value) if self.valid else (1, 0.0)

    def __eq__(self, other):
        if not isinstance(other, Fitness):
            return NotImplemented
        return self._key() == other._key()

    def __lt__(self, other):
        if not isinstance(other, Fitness):
            return NotImplemented
        return self._key() < other._key()

    def __hash__(self):
        return hash(self._key())

    def __float__(self) -> float:
        return self.value if self.valid else math.inf

    def __repr__(self):
        return f"Fitness({self.value!r})" if self.valid else "Fitness.invalid()"


_INVALID = Fitness(math.inf, valid=False)

METRICS = ("mse", "mae")


def fitness_of(tree: ExprTree, cases: FitnessCases, metric: str = "mse") -> Fitness:
    out = evaluate(tree, cases.bindings)
    predictions = np.broadcast_to(np.asarray(out, dtype=float), cases.targets.shape)
    with np.errstate(all="ignore"):
        residual = predictions - cases.targets
        if metric == "mse":
            error = float(np.mean(residual * residual))
        elif metric == "mae":
            error = float(np.mean(np.abs(residual)))
        else:
            raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if not math.isfinite(error):
        return _INVALID
    return Fitness(error)
