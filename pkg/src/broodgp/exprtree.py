"""Expression-tree genotype.

Trees are stored as immutable pre-order (prefix) sequences of primitives, so a
subtree is always a contiguous slice. Evaluation works on plain floats or on
numpy arrays holding one value per fitness case.
"""
from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Mapping

import numpy as np

FUNCTION = "function"
VARIABLE = "variable"
CONSTANT = "constant"

# below this magnitude a divisor / log argument is treated as zero
PROTECTION_EPS = 1e-9


class ConfigurationError(ValueError):
    """Raised when a primitive set or size bounds cannot produce a tree."""


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


def _pdiv(a, b):
    b_small = np.abs(b) < PROTECTION_EPS
    safe_b = np.where(b_small, 1.0, b)
    return np.where(b_small, 1.0, np.divide(a, safe_b))


def _plog(a):
    a_small = np.abs(a) < PROTECTION_EPS
    safe_a = np.where(a_small, 1.0, np.abs(a))
    return np.where(a_small, 0.0, np.log(safe_a))


def _psqrt(a):
    return np.sqrt(np.abs(a))


# name -> (arity, implementation)
FUNCTIONS: dict[str, tuple[int, Callable]] = {
    "add": (2, np.add),
    "sub": (2, np.subtract),
    "mul": (2, np.multiply),
    "div": (2, _pdiv),
    "sqrt": (1, _psqrt),
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "tan": (1, np.tan),
    "exp": (1, np.exp),
    "log": (1, _plog),
}

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Primitive:
    name: str
    kind: str
    arity: int = 0
    value: float | None = None

    def __post_init__(self):
        if self.kind not in (FUNCTION, VARIABLE, CONSTANT):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if (self.arity >= 1) != (self.kind == FUNCTION):
            raise ValueError(f"primitive {self.name!r}: arity >= 1 iff kind is function")
        if self.kind == CONSTANT:
            if self.value is None or not math.isfinite(self.value):
                raise ValueError("constant primitive needs a finite value")
        elif self.value is not None:
            raise ValueError("only constants carry a value")

    @property
    def is_leaf(self) -> bool:
        return self.arity == 0


def function(name: str) -> Primitive:
    """Look up one of the built-in functions (add, sub, mul, div, sqrt, ...)."""
    try:
        arity, _ = FUNCTIONS[name]
    except KeyError:
        raise KeyError(f"unknown function {name!r}; known: {sorted(FUNCTIONS)}") from None
    return Primitive(name, FUNCTION, arity)


def variable(name: str) -> Primitive:
    if not _NAME_RE.match(name) or name in FUNCTIONS:
        raise ValueError(f"invalid variable name {name!r}")
    return Primitive(name, VARIABLE)


def constant(value: float) -> Primitive:
    value = float(value)
    return Primitive(repr(value), CONSTANT, 0, value)


@dataclass(frozen=True)
class PrimitiveSet:
    functions: tuple[Primitive, ...]
    variables: tuple[Primitive, ...]
    ephemeral_constant_range: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        object.__setattr__(self, "variables", tuple(self.variables))
        if not self.variables and self.ephemeral_constant_range is None:
            raise ConfigurationError("primitive set has no terminals")
        names = [p.name for p in self.functions + self.variables]
        if len(names) != len(set(names)):
            raise ConfigurationError(f"duplicate primitive names in {names}")
        if any(p.kind != FUNCTION for p in self.functions):
            raise ConfigurationError("functions must all be of kind 'function'")
        if any(p.kind != VARIABLE for p in self.variables):
            raise ConfigurationError("variables must all be of kind 'variable'")
        if self.ephemeral_constant_range is not None:
            lo, hi = map(float, self.ephemeral_constant_range)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ConfigurationError(f"bad ephemeral range {self.ephemeral_constant_range}")
            object.__setattr__(self, "ephemeral_constant_range", (lo, hi))

    @classmethod
    def from_names(
        cls,
        functions: Iterable[str],
        variables: Iterable[str],
        ephemeral_constant_range: tuple[float, float] | None = None,
    ) -> PrimitiveSet:
        return cls(
            tuple(function(f) for f in functions),
            tuple(variable(v) for v in variables),
            ephemeral_constant_range,
        )

    @property
    def arities(self) -> frozenset[int]:
        return frozenset(f.arity for f in self.functions)

    def achievable_sizes(self, min_size: int, max_size: int) -> list[int]:
        return [s for s in range(max(min_size, 1), max_size + 1) if _reachable(self.arities, s - 1)]

    def random_terminal(self, rng: random.Random) -> Primitive:
        n_choices = len(self.variables) + (self.ephemeral_constant_range is not None)
        i = rng.randrange(n_choices)
        if i < len(self.variables):
            return self.variables[i]
        lo, hi = self.ephemeral_constant_range
        return constant(rng.uniform(lo, hi))


@lru_cache(maxsize=None)
def _reachable(arities: frozenset[int], total: int) -> bool:
    """Whether ``total`` is a sum of function arities (a tree of size total+1 exists)."""
    if total == 0:
        return True
    return any(a <= total and _reachable(arities, total - a) for a in arities)


@dataclass(frozen=True)
class ExprTree:
    nodes: tuple[Primitive, ...]

    def __post_init__(self):
        nodes = tuple(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        open_slots = 1
        for p in nodes:
            if not open_slots:
                raise ValueError("malformed prefix sequence: dangling nodes")
            open_slots += p.arity - 1
        if open_slots:
            raise ValueError("malformed prefix sequence: missing children")

    @cached_property
    def _ends(self) -> tuple[int, ...]:
        # end index (exclusive) of the subtree rooted at each node
        nodes = self.nodes
        ends = [0] * len(nodes)
        stack: list[int] = []
        for i in range(len(nodes) - 1, -1, -1):
            end = i + 1
            for _ in range(nodes[i].arity):
                end = stack.pop()
            stack.append(end)
            ends[i] = end
        return tuple(ends)

    def __len__(self) -> int:
        return len(self.nodes)

    def __str__(self) -> str:
        return to_text(self)

    def subtree_span(self, index: int) -> slice:
        if not 0 <= index < len(self.nodes):
            raise IndexError(f"node index {index} out of range for tree of size {len(self.nodes)}")
        return slice(index, self._ends[index])

    def subtree(self, index: int) -> ExprTree:
        return ExprTree(self.nodes[self.subtree_span(index)])

    def variables(self) -> set[str]:
        return {p.name for p in self.nodes if p.kind == VARIABLE}


def size(tree: ExprTree) -> int:
    return len(tree.nodes)


def replace_subtree(tree: ExprTree, index: int, replacement: ExprTree) -> ExprTree:
    """Return a copy of ``tree`` with the subtree at pre-order ``index`` swapped out."""
    span = tree.subtree_span(index)
    return ExprTree(tree.nodes[: span.start] + replacement.nodes + tree.nodes[span.stop :])


def grow_tree(pset: PrimitiveSet, min_size: int, max_size: int, rng: random.Random) -> ExprTree:
    """Grow a random tree whose node count lies in ``[min_size, max_size]``.

    A target size is drawn uniformly from the sizes the function arities can
    actually form. Function nodes are then picked one by one so their arities
    add up to the target, leaves fill the remaining slots, and the node
    sequence is shuffled and rotated into the unique valid prefix order
    (cycle lemma). Every tree with the chosen node multiset is equally likely.
    """
    if min_size < 1 or min_size > max_size:
        raise ConfigurationError(f"invalid size bounds [{min_size}, {max_size}]")
    sizes = pset.achievable_sizes(min_size, max_size)
    if not sizes:
        raise ConfigurationError(
            f"no tree with size in [{min_size}, {max_size}] can be built from arities "
            f"{sorted(pset.arities)}"
        )
    target = sizes[rng.randrange(len(sizes))]

    arities = pset.arities
    remaining = target - 1
    nodes: list[Primitive] = []
    while remaining:
        options = [
            f for f in pset.functions if f.arity <= remaining and _reachable(arities, remaining - f.arity)
        ]
        chosen = options[rng.randrange(len(options))]
        nodes.append(chosen)
        remaining -= chosen.arity
    nodes.extend(pset.random_terminal(rng) for _ in range(target - len(nodes)))
    rng.shuffle(nodes)
    return ExprTree(_rotate_to_prefix(nodes))


def _rotate_to_prefix(nodes: list[Primitive]) -> list[Primitive]:
    # sum(arity - 1) == -1, so exactly one rotation is a valid prefix sequence:
    # the one starting right after the first minimum of the running sum
    running, lowest, cut = 0, 1, 0
    for i, p in enumerate(nodes):
        running += p.arity - 1
        if running < lowest:
            lowest, cut = running, i + 1
    return nodes[cut:] + nodes[:cut]


def evaluate(tree: ExprTree, bindings: Mapping[str, float | np.ndarray]):
    """Evaluate ``tree`` with variables bound to floats or equal-length arrays.

    Scalar bindings give a float; array bindings give an array with one value
    per row. Overflow in exp/tan yields inf/nan rather than an exception.
    """
    stack: list = []
    with np.errstate(all="ignore"):
        for p in reversed(tree.nodes):
            if p.kind == VARIABLE:
                stack.append(bindings[p.name])
            elif p.kind == CONSTANT:
                stack.append(p.value)
            elif p.arity == 1:
                stack.append(FUNCTIONS[p.name][1](stack.pop()))
            else:
                args = [stack.pop() for _ in range(p.arity)]
                stack.append(FUNCTIONS[p.name][1](*args))
    result = stack.pop()
    if np.ndim(result) == 0:
        return float(result)
    return result


def to_text(tree: ExprTree) -> str:
    out: list[str] = []
    pending: list[int] = []
    for p in tree.nodes:
        if p.kind == FUNCTION:
            out.append("(" + p.name)
            pending.append(p.arity)
            continue
        out.append(repr(p.value) if p.kind == CONSTANT else p.name)
        while pending:
            pending[-1] -= 1
            if pending[-1]:
                break
            pending.pop()
            out[-1] += ")"
    return " ".join(out)


_TOKEN_RE = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")


def parse(text: str, functions: Mapping[str, int] | None = None) -> ExprTree:
    """Parse prefix notation such as ``"(add x (sin 0.5))"``.

    ``functions`` maps function names to arities and defaults to the built-in
    set. Bare identifiers become variables and numeric tokens constants.
    """
    if functions is None:
        functions = {name: arity for name, (arity, _) in FUNCTIONS.items()}
    tokens: list[tuple[str, str, int]] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip():
                raise ParseError("unexpected character", pos)
            break
        kind = "(" if m.group(1) else ")" if m.group(2) else "atom"
        tokens.append((kind, m.group(m.lastindex), m.start(m.lastindex)))
        pos = m.end()

    nodes: list[Primitive] = []

    def atom(tok: str, at: int) -> Primitive:
        if tok in functions:
            raise ParseError(f"function {tok!r} used without parentheses", at)
        try:
            value = float(tok)
        except ValueError:
            if not _NAME_RE.match(tok):
                raise ParseError(f"invalid token {tok!r}", at) from None
            return Primitive(tok, VARIABLE)
        if not math.isfinite(value):
            raise ParseError(f"non-finite constant {tok!r}", at)
        return constant(value)

    def expr(i: int) -> int:
        if i >= len(tokens):
            raise ParseError("unexpected end of input", len(text))
        kind, tok, at = tokens[i]
        if kind == "atom":
            nodes.append(atom(tok, at))
            return i + 1
        if kind == ")":
            raise ParseError("unexpected ')'", at)
        if i + 1 >= len(tokens) or tokens[i + 1][0] != "atom":
            at = tokens[i + 1][2] if i + 1 < len(tokens) else len(text)
            raise ParseError("expected function name after '('", at)
        _, name, name_at = tokens[i + 1]
        if name not in functions:
            raise ParseError(f"unknown function {name!r}", name_at)
        nodes.append(Primitive(name, FUNCTION, functions[name]))
        i += 2
        for _ in range(functions[name]):
            if i < len(tokens) and tokens[i][0] == ")":
                raise ParseError(f"too few arguments for {name!r}", tokens[i][2])
            i = expr(i)
        if i >= len(tokens) or tokens[i][0] != ")":
            at = tokens[i][2] if i < len(tokens) else len(text)
            raise ParseError(f"expected ')' closing {name!r}", at)
        return i + 1

    end = expr(0)
    if end != len(tokens):
        raise ParseError("trailing input", tokens[end][2])
    return ExprTree(tuple(nodes))
