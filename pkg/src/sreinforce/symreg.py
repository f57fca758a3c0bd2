"""Genetic-programming symbolic regression.

Programs are :mod:`sreinforce.exprtree` trees. Fitness is mean squared error
plus a per-node parsimony penalty; lower is better. One generation runs
tournament selection followed by exactly one genetic operation per offspring,
with the best program of the previous generation copied into slot 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exprtree import (
    BINARY_OPS,
    BasisSet,
    Binary,
    Constant,
    Expr,
    Unary,
    Variable,
    evaluate,
    evaluate_columns,
    nodes,
    ramped_half_and_half,
    random_terminal,
    random_tree,
    replace_subtree,
    subtree,
)

log = logging.getLogger(__name__)

POINT_REPLACE = 0.05


class GpConfigError(ValueError):
    pass


@dataclass
class GpConfig:
    population_size: int = 2000
    tournament_size: int = 20
    p_crossover: float = 0.7
    p_subtree_mutation: float = 0.1
    p_hoist_mutation: float = 0.05
    p_point_mutation: float = 0.1
    parsimony_coefficient: float = 0.005
    generations: int = 20
    basis: BasisSet = field(default_factory=BasisSet)
    init_depth: tuple[int, int] = (2, 6)
    max_depth: int = 17
    max_length: int = 64
    seed: int = 0
    warm_start: bool = False

    def validate(self) -> None:
        probs = self.operator_probabilities
        if any(p < 0 for p in probs) or sum(probs) > 1 + 1e-12:
            raise GpConfigError(f"operator probabilities must be >= 0 and sum to <= 1, got {probs}")
        if not self.population_size >= self.tournament_size >= 1:
            raise GpConfigError("need population_size >= tournament_size >= 1")
        if self.generations < 1:
            raise GpConfigError("generations must be >= 1")
        lo, hi = self.init_depth
        if not 1 <= lo <= hi <= self.max_depth:
            raise GpConfigError(f"init_depth {self.init_depth} outside [1, {self.max_depth}]")
        if self.parsimony_coefficient < 0:
            raise GpConfigError("parsimony_coefficient must be >= 0")

    @property
    def operator_probabilities(self) -> tuple[float, float, float, float]:
        return (
            self.p_crossover,
            self.p_subtree_mutation,
            self.p_hoist_mutation,
            self.p_point_mutation,
        )


@dataclass
class FitReport:
    program: Expr
    raw_fitness: float
    fitness: float
    best_history: list[float]
    mean_history: list[float]
    population: list[Expr] = field(default_factory=list, repr=False)

    def __str__(self) -> str:
        return f"{self.program}  (mse={self.raw_fitness:.6g}, penalized={self.fitness:.6g})"


def raw_fitness(program: Expr, X: np.ndarray, y: np.ndarray) -> float:
    with np.errstate(all="ignore"):
        mse = float(np.mean((evaluate(program, X) - y) ** 2))
    return mse if np.isfinite(mse) else np.inf


def penalized(raw: float, program: Expr, coefficient: float) -> float:
    return raw + coefficient * program.length


def rank_order(population: list[Expr], fitness: np.ndarray) -> np.ndarray:
    """Rank of each program under (fitness, length, index); 0 is best."""
    lengths = np.array([p.length for p in population])
    order = np.lexsort((np.arange(len(population)), lengths, fitness))
    ranks = np.empty(len(population), dtype=np.int64)
    ranks[order] = np.arange(len(population))
    return ranks


def tournament(
    population: list[Expr], fitness: np.ndarray, k: int, rng: np.random.Generator, ranks=None
) -> int:
    """Index of the fittest of ``k`` distinct, uniformly drawn contestants.

    Ties go to the shorter program, then to the lower index. ``ranks`` from
    :func:`rank_order` may be passed to skip recomputing the ordering.
    """
    if ranks is None:
        ranks = rank_order(population, fitness)
    contenders = rng.choice(len(population), size=k, replace=False)
    return int(contenders[np.argmin(ranks[contenders])])


def _fits(expr: Expr, cfg: GpConfig) -> bool:
    return expr.depth <= cfg.max_depth and expr.length <= cfg.max_length


def crossover(winner: Expr, donor: Expr, rng: np.random.Generator, cfg: GpConfig | None = None) -> Expr:
    """Replace a random subtree of ``winner`` with a random subtree of ``donor``."""
    cfg = cfg or GpConfig()
    i = int(rng.integers(winner.length))
    j = int(rng.integers(donor.length))
    child = replace_subtree(winner, i, subtree(donor, j))
    return child if _fits(child, cfg) else winner


def subtree_mutation(winner: Expr, rng: np.random.Generator, cfg: GpConfig, d: int) -> Expr:
    i = int(rng.integers(winner.length))
    fresh = random_tree(rng, cfg.basis, d, cfg.init_depth, "grow")
    child = replace_subtree(winner, i, fresh)
    return child if _fits(child, cfg) else winner


def hoist_mutation(winner: Expr, rng: np.random.Generator) -> Expr:
    i = int(rng.integers(winner.length))
    a = subtree(winner, i)
    b = subtree(a, int(rng.integers(a.length)))
    return replace_subtree(winner, i, b)


def point_mutation(winner: Expr, rng: np.random.Generator, cfg: GpConfig, d: int) -> Expr:
    """Swap each node, with probability 0.05, for a random node of equal arity."""
    basis = cfg.basis

    def walk(node: Expr) -> Expr:
        hit = rng.random() < POINT_REPLACE
        if isinstance(node, (Constant, Variable)):
            return random_terminal(rng, basis, d) if hit else node
        if isinstance(node, Unary):
            op = basis.unary[int(rng.integers(len(basis.unary)))] if hit and basis.unary else node.op
            return Unary(op, walk(node.child))
        op = basis.binary[int(rng.integers(len(basis.binary)))] if hit and basis.binary else node.op
        left = walk(node.left)
        return Binary(op, left, walk(node.right))

    return walk(winner)


def _score(population, cols, y, coefficient, cache):
    # programs are immutable, so a program copied forward keeps its score
    raw = np.empty(len(population))
    for i, p in enumerate(population):
        hit = cache.get(id(p))
        if hit is None:
            with np.errstate(all="ignore"):
                mse = float(np.mean((evaluate_columns(p, cols) - y) ** 2))
            hit = cache[id(p)] = (p, mse if np.isfinite(mse) else np.inf)
        raw[i] = hit[1]
    pen = raw + coefficient * np.array([p.length for p in population])
    return raw, pen


def evolve_generation(
    population: list[Expr],
    fitness: np.ndarray,
    cfg: GpConfig,
    rng: np.random.Generator,
    d: int,
) -> list[Expr]:
    """Breed the next generation from scored ``population``.

    ``fitness`` holds penalized fitness for each program. Slot 0 receives
    the current best program unchanged; every other slot is a tournament
    winner passed through one operator picked by the configured
    probabilities (the leftover probability mass copies the winner).
    """
    n = cfg.population_size
    ranks = rank_order(population, fitness)
    cuts = np.cumsum(cfg.operator_probabilities)
    k = min(cfg.tournament_size, len(population))
    offspring = [population[int(np.argmin(ranks))]]
    while len(offspring) < n:
        parent = population[tournament(population, fitness, k, rng, ranks)]
        u = rng.random()
        if u < cuts[0]:
            donor = population[tournament(population, fitness, k, rng, ranks)]
            child = crossover(parent, donor, rng, cfg)
        elif u < cuts[1]:
            child = subtree_mutation(parent, rng, cfg, d)
        elif u < cuts[2]:
            child = hoist_mutation(parent, rng)
        elif u < cuts[3]:
            child = point_mutation(parent, rng, cfg, d)
        else:
            child = parent
        offspring.append(child)
    return offspring


def fit(
    X,
    y,
    cfg: GpConfig,
    initial_population: list[Expr] | None = None,
) -> FitReport:
    """Evolve a program mapping rows of ``X`` to ``y``.

    ``cfg.generations`` populations are scored, the random initial one
    included. Passing ``initial_population`` (e.g. the final population of an
    earlier fit) replaces random initialisation.
    """
    cfg.validate()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"expected X of shape (T, d) and y of shape (T,), got {X.shape}, {y.shape}")
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    d = X.shape[1]

    if np.all(y == y[0]):
        program = Constant(float(y[0]))
        pen = penalized(0.0, program, cfg.parsimony_coefficient)
        return FitReport(program, 0.0, pen, [pen] * cfg.generations, [pen] * cfg.generations, [program])

    rng = np.random.default_rng(cfg.seed)
    if initial_population:
        population = [p for p in initial_population if p.max_var < d][: cfg.population_size]
        population += ramped_half_and_half(rng, cfg.basis, d, cfg.init_depth, cfg.population_size - len(population))
    else:
        population = ramped_half_and_half(rng, cfg.basis, d, cfg.init_depth, cfg.population_size)

    cols = np.ascontiguousarray(X.T)
    cache: dict = {}
    best_hist, mean_hist = [], []
    for gen in range(cfg.generations):
        if gen:
            population = evolve_generation(population, pen, cfg, rng, d)
        raw, pen = _score(population, cols, y, cfg.parsimony_coefficient, cache)
        best_hist.append(float(pen.min()))
        finite = pen[np.isfinite(pen)]
        mean_hist.append(float(finite.mean()) if finite.size else np.inf)

    best = int(np.argmin(rank_order(population, pen)))
    log.debug("gp fit: %s mse=%.3g", population[best], raw[best])
    return FitReport(population[best], float(raw[best]), float(pen[best]), best_hist, mean_hist, population)


def closure_ok(expr: Expr, d: int, cfg: GpConfig) -> bool:
    """True if ``expr`` satisfies every structural invariant under ``cfg``."""
    for n in nodes(expr):
        if isinstance(n, Variable) and n.index >= d:
            return False
        if isinstance(n, Constant) and not np.isfinite(n.value):
            return False
        if isinstance(n, Binary) and n.op not in BINARY_OPS:
            return False
    return _fits(expr, cfg)
