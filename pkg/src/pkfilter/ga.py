"""Genetic algorithm over the six-dimensional parameter box.

Each generation keeps the best ``floor(alpha * size)`` members, crosses them
over along the direction between a better and a worse parent with a step of
``L_i / (L_i + L_j) * temperature``, adds uniform mutants and keeps the best
``floor(alpha * pool)`` of parents + children + mutants.  The loop stops when
the population quantiles stop moving (EC) or after ``max_loops`` generations.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Callable, Sequence

import numpy as np

from .errors import OptimizationFailedError, UndefinedECError
from .model import DEFAULT_PARAMS, PARAM_NAMES, PkParams

logger = logging.getLogger(__name__)

Fitness = Callable[[PkParams], float]


@dataclass(frozen=True)
class ParamSpace:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(x) for x in self.lower)
        upper = tuple(float(x) for x in self.upper)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if len(lower) != 6 or len(upper) != 6:
            raise ValueError("bounds need six entries each")
        for name, lo, hi in zip(PARAM_NAMES, lower, upper):
            if not 0 < lo < hi:
                raise ValueError(f"{name}: need 0 < lower < upper, got [{lo}, {hi}]")

    @classmethod
    def around(cls, center: PkParams, factor: float = 10.0) -> "ParamSpace":
        """The box [center / factor, center * factor]."""
        c = center.as_array()
        return cls(tuple(c / factor), tuple(c * factor))

    @classmethod
    def from_csv(cls, path: str | Path) -> "ParamSpace":
        """Read ``name,lower,upper`` rows, one per parameter."""
        with open(path, newline="") as fh:
            rows = {r["name"].strip(): r for r in csv.DictReader(line for line in fh if not line.startswith("#"))}
        missing = set(PARAM_NAMES) - set(rows)
        if missing:
            raise ValueError(f"{path}: missing bounds for {sorted(missing)}")
        return cls(
            tuple(float(rows[n]["lower"]) for n in PARAM_NAMES),
            tuple(float(rows[n]["upper"]) for n in PARAM_NAMES),
        )

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    def contains(self, theta: np.ndarray) -> bool:
        theta = np.asarray(theta)
        return bool(np.all(theta >= self.lo) and np.all(theta <= self.hi))


DEFAULT_SPACE = ParamSpace.around(DEFAULT_PARAMS)


@dataclass(frozen=True)
class GaConfig:
    """GA settings.

    ``crossover_runs=None`` uses the number of selected parents, and
    ``mutation_count=None`` reuses ``pop_size``.
    """

    pop_size: int = 100
    alpha: float = 0.05
    temperature: float = 0.75
    crossover_runs: int | None = None
    mutation_count: int | None = None
    ec_quantiles: tuple[float, ...] = (0.2, 0.4, 0.5, 0.6, 0.8)
    ec_threshold: float = 1e-5
    max_loops: int = 100

    def __post_init__(self):
        object.__setattr__(self, "ec_quantiles", tuple(float(a) for a in self.ec_quantiles))
        if self.pop_size < 2:
            raise ValueError("pop_size must be at least 2")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        q = self.ec_quantiles
        if not q or any(not 0 < a < 1 for a in q) or any(b <= a for a, b in zip(q, q[1:])):
            raise ValueError("ec_quantiles must be strictly increasing inside (0, 1)")
        if self.max_loops < 1:
            raise ValueError("max_loops must be at least 1")

    @property
    def n_mutants(self) -> int:
        return self.pop_size if self.mutation_count is None else self.mutation_count


@dataclass
class Population:
    """Members sorted by ascending fitness: ``thetas`` is (size, 6)."""

    thetas: np.ndarray
    fitness: np.ndarray

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        self.fitness = np.asarray(self.fitness, dtype=float)
        if len(self.thetas) != len(self.fitness):
            raise ValueError("thetas and fitness must have the same length")

    def __len__(self) -> int:
        return len(self.fitness)

    @property
    def best(self) -> PkParams:
        return PkParams.from_array(self.thetas[0])

    def mean(self) -> PkParams:
        return PkParams.from_array(self.thetas.mean(axis=0))


def init_population(space: ParamSpace, s: int, rng: np.random.Generator) -> np.ndarray:
    """``s`` uniform draws from the box, as an (s, 6) array."""
    if s < 2:
        raise ValueError(f"population needs at least 2 members, got {s}")
    return rng.uniform(space.lo, space.hi, size=(s, 6))


def mutate(space: ParamSpace, count: int, rng: np.random.Generator) -> np.ndarray:
    if count < 0:
        raise ValueError("mutation count must be non-negative")
    return rng.uniform(space.lo, space.hi, size=(count, 6))


def crossover_probs(losses: Sequence[float]) -> np.ndarray:
    """p_i = (L_{i+1} - L_i) / (L_C - L_1) for i = 1..C-1; uniform when fitness is flat."""
    losses = np.asarray(losses, dtype=float)
    if len(losses) < 2:
        raise ValueError("crossover needs at least two members")
    spread = losses[-1] - losses[0]
    if spread <= 0:
        return np.full(len(losses) - 1, 1.0 / (len(losses) - 1))
    return np.diff(losses) / spread


def crossover_pair(
    theta_i: np.ndarray,
    theta_j: np.ndarray,
    l_i: float,
    l_j: float,
    temperature: float,
    space: ParamSpace,
) -> tuple[np.ndarray, np.ndarray]:
    """Two children of the better parent ``theta_i`` and the worse ``theta_j``.

    A child coordinate that leaves the box is replaced by
    ``(3 * theta_i + bound) / 4`` using the violated bound.
    """
    theta_i = np.asarray(theta_i, dtype=float)
    theta_j = np.asarray(theta_j, dtype=float)
    total = l_i + l_j
    weight = 0.5 if total == 0 else l_i / total
    step = (theta_i - theta_j) * weight * temperature
    return _clamp(theta_i + step, theta_i, space), _clamp(theta_i - step, theta_i, space)


def _clamp(child: np.ndarray, parent: np.ndarray, space: ParamSpace) -> np.ndarray:
    lo, hi = space.lo, space.hi
    child = np.where(child > hi, (3 * parent + hi) / 4, child)
    return np.where(child < lo, (3 * parent + lo) / 4, child)


def accept(thetas: np.ndarray, fitness: np.ndarray, alpha: float) -> Population:
    """Sort candidates and keep the best ``floor(alpha * count)`` (at least 2).

    Candidates with non-finite fitness are discarded first.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    fitness = np.asarray(fitness, dtype=float)
    if len(fitness) == 0:
        raise ValueError("no candidates to accept")
    keep = max(2, math.floor(alpha * len(fitness)))
    finite = np.isfinite(fitness)
    thetas, fitness = thetas[finite], fitness[finite]
    order = np.argsort(fitness, kind="stable")[:keep]
    return Population(thetas[order], fitness[order])


def ec_metric(prev: np.ndarray, nxt: np.ndarray, quantiles: Sequence[float]) -> float:
    """Relative drift of the coordinate quantiles between two generations.

    EC = (1/a) * sum_j sum_k |(q_prev[k, j] - q_next[k, j]) / q_prev[k, j]|.
    """
    prev = np.atleast_2d(np.asarray(prev, dtype=float))
    nxt = np.atleast_2d(np.asarray(nxt, dtype=float))
    if len(prev) == 0 or len(nxt) == 0:
        raise ValueError("EC needs two non-empty populations")
    q_prev = np.quantile(prev, quantiles, axis=0)
    q_next = np.quantile(nxt, quantiles, axis=0)
    if np.any(q_prev == 0):
        raise UndefinedECError("a quantile of the previous population is zero")
    return float(np.sum(np.abs((q_prev - q_next) / q_prev)) / len(quantiles))


@dataclass
class Generation:
    generation: int
    best_fitness: float
    mean_fitness: float
    ec: float
    population_size: int
    best_theta: PkParams


@dataclass
class GaResult:
    theta_hat: PkParams
    best_theta: PkParams
    history: list[Generation] = field(default_factory=list)
    converged: bool = False

    def write_history(self, dest: str | Path | IO[str]) -> None:
        if isinstance(dest, (str, Path)):
            with open(dest, "w", newline="") as fh:
                self.write_history(fh)
            return
        writer = csv.writer(dest, lineterminator="\n")
        writer.writerow(("generation", "best_fitness", "mean_fitness", "ec", "population_size"))
        for g in self.history:
            writer.writerow((g.generation, repr(g.best_fitness), repr(g.mean_fitness), repr(g.ec), g.population_size))


def _evaluate(thetas: np.ndarray, fitness: Fitness) -> np.ndarray:
    return np.array([fitness(PkParams.from_array(t)) for t in thetas], dtype=float)


def _crossover_children(pop: Population, runs: int, cfg: GaConfig, space: ParamSpace, rng) -> np.ndarray:
    size = len(pop)
    if size < 2 or runs == 0:
        return np.empty((0, 6))
    probs = crossover_probs(pop.fitness)
    children = []
    for _ in range(runs):
        i = int(rng.choice(size - 1, p=probs))
        j = int(rng.choice([x for x in range(size) if x != i]))
        if pop.fitness[j] < pop.fitness[i]:
            i, j = j, i
        children.extend(
            crossover_pair(pop.thetas[i], pop.thetas[j], pop.fitness[i], pop.fitness[j], cfg.temperature, space)
        )
    return np.array(children)


def run_ga(space: ParamSpace, cfg: GaConfig, fitness: Fitness, rng: np.random.Generator) -> GaResult:
    """Minimize ``fitness`` over ``space``; the estimate is the mean of the last population.

    Fitness values of surviving members are cached, never re-evaluated, so
    the best fitness cannot increase from one generation to the next.
    """
    thetas = init_population(space, cfg.pop_size, rng)
    values = _evaluate(thetas, fitness)
    if not np.any(np.isfinite(values)):
        raise OptimizationFailedError("no finite fitness in the initial population")
    order = np.argsort(values, kind="stable")
    pop = Population(thetas[order], values[order])

    history: list[Generation] = []
    converged = False
    for loop in range(1, cfg.max_loops + 1):
        # accepted populations are already the front alpha share of their pool
        n_selected = min(len(pop), max(2, math.floor(cfg.alpha * len(pop)))) if loop == 1 else len(pop)
        finite = np.isfinite(pop.fitness[:n_selected])
        selected = Population(pop.thetas[:n_selected][finite], pop.fitness[:n_selected][finite])
        runs = len(selected) if cfg.crossover_runs is None else cfg.crossover_runs

        children = _crossover_children(selected, runs, cfg, space, rng)
        mutants = mutate(space, cfg.n_mutants, rng)
        fresh = np.concatenate([children.reshape(-1, 6), mutants])
        fresh_fitness = _evaluate(fresh, fitness)

        pool = np.concatenate([selected.thetas, fresh])
        pool_fitness = np.concatenate([selected.fitness, fresh_fitness])
        if not np.any(np.isfinite(pool_fitness)):
            raise OptimizationFailedError(f"generation {loop}: every candidate has infinite loss")
        nxt = accept(pool, pool_fitness, cfg.alpha)

        ec = ec_metric(pop.thetas, nxt.thetas, cfg.ec_quantiles)
        history.append(
            Generation(loop, float(nxt.fitness[0]), float(nxt.fitness.mean()), ec, len(nxt), nxt.best)
        )
        logger.debug("generation %d: best %.6g, EC %.3g, size %d", loop, nxt.fitness[0], ec, len(nxt))
        pop = nxt
        if ec <= cfg.ec_threshold:
            converged = True
            break

    return GaResult(pop.mean(), pop.best, history, converged)
