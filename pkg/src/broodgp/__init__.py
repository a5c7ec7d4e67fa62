"""Tree-based genetic programming for symbolic regression with brood crossover variants."""
from .engine import GenerationStats, GPConfig, RunResult, run
from .operators import BroodConfig, Individual, Operator
from .problems import Fitness, ProblemId, get_problem

__all__ = [
    "BroodConfig",
    "Fitness",
    "GPConfig",
    "GenerationStats",
    "Individual",
    "Operator",
    "ProblemId",
    "RunResult",
    "get_problem",
    "run",
]

__version__ = "0.1.0"
