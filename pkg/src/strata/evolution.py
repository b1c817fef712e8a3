"""Single- and multi-objective evolutionary search over unit-box genotypes.

Objectives follow a signed-weight convention: a fitness vector ``f`` is
compared through ``w_i * f_i``, maximized, so ``w=(-1, -1)`` minimizes both
objectives. NSGA-II is the multi-objective default; a scalar GA and a
(mu+lambda) evolution strategy cover single-objective use. Every loop is a
pure function of its config seed: initialization, variation, and each
evaluation draw from substreams derived by label, so results are identical
under any evaluation parallelism.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError, LengthMismatch, MissingFitness
from .kernel import derive_seed, rng_substream
from .schemas import Schema, repair, sample

Weights = tuple[float, ...]
# Objective functional: (genotype in the unit box, evaluation seed) -> fitness vector.
Objective = Callable[[np.ndarray, int], Sequence[float]]


def check_weights(w: Weights) -> Weights:
    w = tuple(float(x) for x in w)
    if not w or any(x == 0.0 for x in w):
        raise ValueError("weights must be non-empty and non-zero")
    return w


@dataclass
class Individual:
    genotype: np.ndarray
    fitness: tuple[float, ...] | None = None
    rank: int | None = None
    crowding: float | None = None

    def copy(self) -> "Individual":
        return Individual(self.genotype.copy(), self.fitness, self.rank, self.crowding)


@dataclass(frozen=True)
class EvolutionConfig:
    pop_size: int = 24
    generations: int = 8
    cx_prob: float = 0.9
    mut_prob: float = 1.0
    sbx_eta: float = 15.0
    pm_eta: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.pop_size < 2 or self.pop_size % 2:
            raise ValueError("pop_size must be even and >= 2 (pairwise crossover)")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("cx_prob", "mut_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.sbx_eta <= 0 or self.pm_eta <= 0:
            raise ValueError("distribution indices must be positive")


# ---------------------------------------------------------------------------
# Dominance, sorting, crowding
# ---------------------------------------------------------------------------

def dominates(a: Sequence[float], b: Sequence[float], w: Weights) -> bool:
    """True iff ``a`` is at least as good as ``b`` on every signed objective
    and strictly better on at least one."""
    if len(a) != len(b) or len(a) != len(w):
        raise LengthMismatch("fitness/weight lengths differ")
    at_least = True
    strict = False
    for ai, bi, wi in zip(a, b, w):
        sa, sb = wi * ai, wi * bi
        if sa < sb:
            at_least = False
            break
        if sa > sb:
            strict = True
    return at_least and strict


def fast_nondominated_sort(pop: Sequence[Individual], w: Weights) -> list[list[int]]:
    """Deb's fast non-dominated sort. Returns fronts of ascending indices and
    sets ``rank`` on each individual."""
    w = check_weights(w)
    n = len(pop)
    for ind in pop:
        if ind.fitness is None:
            raise MissingFitness("all individuals must be evaluated before sorting")
    dominated: list[list[int]] = [[] for _ in range(n)]
    counts = [0] * n
    fronts: list[list[int]] = [[]]
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            if dominates(pop[p].fitness, pop[q].fitness, w):
                dominated[p].append(q)
            elif dominates(pop[q].fitness, pop[p].fitness, w):
                counts[p] += 1
        if counts[p] == 0:
            pop[p].rank = 0
            fronts[0].append(p)
    i = 0
    while fronts[i]:
        nxt: list[int] = []
        for p in fronts[i]:
            for q in dominated[p]:
                counts[q] -= 1
                if counts[q] == 0:
                    pop[q].rank = i + 1
                    nxt.append(q)
        i += 1
        fronts.append(sorted(nxt))
    fronts.pop()
    return fronts


def crowding_distance(front: Sequence[Individual], w: Weights) -> list[float]:
    """Normalized neighbor-gap sum per objective; sort-boundary individuals
    get +inf. Ties in an objective are ordered by original index so the
    assignment is deterministic. Sets ``crowding`` on each individual."""
    w = check_weights(w)
    n = len(front)
    if n == 0:
        raise ValueError("front must be non-empty")
    dist = [0.0] * n
    m = len(w)
    for obj in range(m):
        order = sorted(range(n), key=lambda i: (front[i].fitness[obj], i))
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        lo = front[order[0]].fitness[obj]
        hi = front[order[-1]].fitness[obj]
        if hi == lo:
            continue
        for k in range(1, n - 1):
            i = order[k]
            if dist[i] != math.inf:
                gap = front[order[k + 1]].fitness[obj] - front[order[k - 1]].fitness[obj]
                dist[i] += gap / (hi - lo)
    for ind, d in zip(front, dist):
        ind.crowding = d
    return dist


def nsga2_select(combined: Sequence[Individual], mu: int, w: Weights) -> list[Individual]:
    """Environmental selection: fill by ascending front, split the last
    admitted front by descending crowding, ties to the lower index."""
    fronts = fast_nondominated_sort(combined, w)
    selected: list[Individual] = []
    for front_idx in fronts:
        front = [combined[i] for i in front_idx]
        crowding_distance(front, w)
        if len(selected) + len(front) <= mu:
            selected.extend(front)
        else:
            need = mu - len(selected)
            order = sorted(range(len(front)), key=lambda k: (-front[k].crowding, front_idx[k]))
            selected.extend(front[k] for k in order[:need])
        if len(selected) == mu:
            break
    return selected


# ---------------------------------------------------------------------------
# Variation operators
# ---------------------------------------------------------------------------

def sbx_crossover(p1: np.ndarray, p2: np.ndarray, eta: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Simulated binary crossover on every coordinate, then box repair."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape:
        raise LengthMismatch("parents must have equal length")
    u = rng.random(p1.shape)
    beta = np.where(u <= 0.5, (2.0 * u) ** (1.0 / (eta + 1.0)),
                    (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0)))
    mean = 0.5 * (p1 + p2)
    spread = 0.5 * beta * (p2 - p1)  # zero where parents agree, exactly
    return repair(mean - spread), repair(mean + spread)


def polynomial_mutation(g: np.ndarray, eta: float, per_gene_prob: float, rng) -> np.ndarray:
    """Polynomial mutation in the unit box, then repair. Consumes one
    uniform pair decision per gene so the draw count is shape-stable."""
    g = np.asarray(g, dtype=float)
    mask = rng.random(g.shape) < per_gene_prob
    u = rng.random(g.shape)
    delta = np.where(u < 0.5, (2.0 * u) ** (1.0 / (eta + 1.0)) - 1.0,
                     1.0 - (2.0 * (1.0 - u)) ** (1.0 / (eta + 1.0)))
    return repair(np.where(mask, g + delta, g))


# ---------------------------------------------------------------------------
# Logbook and hall of fame
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogRow:
    gen: int
    nevals: int
    obj: tuple[dict[str, float], ...]  # one {"min","mean","max"} per objective


def _stats_row(gen: int, nevals: int, pop: Sequence[Individual]) -> LogRow:
    fits = np.array([ind.fitness for ind in pop], dtype=float)
    obj = tuple(
        {"min": float(fits[:, j].min()), "mean": float(fits[:, j].mean()), "max": float(fits[:, j].max())}
        for j in range(fits.shape[1])
    )
    return LogRow(gen, nevals, obj)


def logbook_to_jsonl(rows: Sequence[LogRow]) -> str:
    return "".join(
        json.dumps({"gen": r.gen, "nevals": r.nevals, "obj": list(r.obj)}) + "\n" for r in rows
    )


class HallOfFame:
    """Archive of best individuals.

    Multi-objective mode keeps the all-time mutually non-dominated set,
    truncated to ``max_size`` by descending crowding distance (insertion
    order breaks ties). Single-objective mode keeps the best ``max_size``
    individuals by signed fitness.
    """

    def __init__(self, w: Weights, max_size: int = 64):
        self.w = check_weights(w)
        self.max_size = max_size
        self.items: list[Individual] = []

    @property
    def multi(self) -> bool:
        return len(self.w) > 1

    def update(self, pop: Sequence[Individual]) -> None:
        for ind in pop:
            if ind.fitness is None:
                raise MissingFitness("cannot archive unevaluated individuals")
            self._insert(ind)
        if self.multi and len(self.items) > self.max_size:
            work = [it.copy() for it in self.items]
            crowding_distance(work, self.w)
            order = sorted(range(len(work)), key=lambda i: (-work[i].crowding, i))
            keep = sorted(order[: self.max_size])
            self.items = [self.items[i] for i in keep]
        elif not self.multi:
            order = sorted(range(len(self.items)),
                           key=lambda i: (-self.w[0] * self.items[i].fitness[0], i))
            self.items = [self.items[i] for i in order[: self.max_size]]

    def _insert(self, ind: Individual) -> None:
        if not self.multi:
            self.items.append(ind.copy())
            return
        for kept in self.items:
            if dominates(kept.fitness, ind.fitness, self.w):
                return
            if kept.fitness == ind.fitness and np.array_equal(kept.genotype, ind.genotype):
                return
        self.items = [k for k in self.items if not dominates(ind.fitness, k.fitness, self.w)]
        self.items.append(ind.copy())

    def to_json(self) -> str:
        return json.dumps(
            [{"genotype": [float(v) for v in it.genotype],
              "fitness": [float(v) for v in it.fitness]} for it in self.items],
            indent=2,
        ) + "\n"


# ---------------------------------------------------------------------------
# Search loops
# ---------------------------------------------------------------------------

def _evaluate(pop: Sequence[Individual], f: Objective, run_seed: int, gen: int,
              n_obj: int, jobs: int = 1) -> None:
    """Evaluate in place. Each individual gets a seed derived from
    (run seed, generation, index), so any execution order gives the same
    result; a thread pool is used when jobs > 1 purely as a convenience."""
    pending = [(i, ind) for i, ind in enumerate(pop) if ind.fitness is None]

    def one(arg):
        i, ind = arg
        try:
            return tuple(float(v) for v in f(ind.genotype, derive_seed(run_seed, f"eval:{gen}:{i}")))
        except EvaluationError:
            raise
        except Exception as err:
            raise EvaluationError(gen, i, err) from err

    if jobs > 1 and len(pending) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, pending))
    else:
        results = [one(p) for p in pending]
    for (i, ind), fit in zip(pending, results):
        if len(fit) != n_obj:
            raise EvaluationError(gen, i, LengthMismatch(
                f"objective returned {len(fit)} values, expected {n_obj}"))
        if not all(math.isfinite(v) for v in fit):
            raise EvaluationError(gen, i, ValueError(f"non-finite fitness {fit!r}"))
        ind.fitness = fit


def _crowded_better(a: Individual, ia: int, b: Individual, ib: int) -> bool:
    """Crowded-comparison: lower rank, then higher crowding, then lower index."""
    if a.rank != b.rank:
        return a.rank < b.rank
    if a.crowding != b.crowding:
        return a.crowding > b.crowding
    return ia < ib


def _tournament_nsga2(pop: Sequence[Individual], rng) -> Individual:
    i, j = int(rng.integers(len(pop))), int(rng.integers(len(pop)))
    return pop[i] if _crowded_better(pop[i], i, pop[j], j) else pop[j]


def _make_offspring(pop: Sequence[Individual], config: EvolutionConfig, rng,
                    select: Callable[[Sequence[Individual]], Individual]) -> list[Individual]:
    offspring: list[Individual] = []
    n = len(pop[0].genotype)
    per_gene = 1.0 / n if n else 0.0
    while len(offspring) < config.pop_size:
        p1, p2 = select(pop), select(pop)
        if rng.random() < config.cx_prob:
            c1, c2 = sbx_crossover(p1.genotype, p2.genotype, config.sbx_eta, rng)
        else:
            c1, c2 = p1.genotype.copy(), p2.genotype.copy()
        if rng.random() < config.mut_prob:
            c1 = polynomial_mutation(c1, config.pm_eta, per_gene, rng)
        if rng.random() < config.mut_prob:
            c2 = polynomial_mutation(c2, config.pm_eta, per_gene, rng)
        offspring.append(Individual(c1))
        offspring.append(Individual(c2))
    return offspring[: config.pop_size]


OnGeneration = Callable[[int, list[Individual], HallOfFame], None]


def run_nsga2(
    config: EvolutionConfig,
    space: Schema,
    f: Objective,
    w: Weights,
    hof_size: int = 64,
    jobs: int = 1,
    on_generation: OnGeneration | None = None,
) -> tuple[HallOfFame, list[LogRow]]:
    """Generational NSGA-II over the schema's unit box.

    On evaluation failure the partial logbook and archive are attached to the
    raised :class:`EvaluationError` so callers can persist them.
    """
    w = check_weights(w)
    hof = HallOfFame(w, hof_size)
    logbook: list[LogRow] = []
    rng_init = rng_substream(config.seed, "init")
    pop = [Individual(sample(space, rng_init)) for _ in range(config.pop_size)]
    try:
        _evaluate(pop, f, config.seed, 0, len(w), jobs)
        for front_idx in fast_nondominated_sort(pop, w):
            crowding_distance([pop[i] for i in front_idx], w)
        hof.update(pop)
        logbook.append(_stats_row(0, len(pop), pop))
        if on_generation:
            on_generation(0, pop, hof)
        for gen in range(1, config.generations + 1):
            rng_var = rng_substream(config.seed, f"var:{gen}")
            offspring = _make_offspring(pop, config, rng_var,
                                        lambda ps: _tournament_nsga2(ps, rng_var))
            _evaluate(offspring, f, config.seed, gen, len(w), jobs)
            pop = nsga2_select(list(pop) + offspring, config.pop_size, w)
            hof.update(offspring)
            logbook.append(_stats_row(gen, len(offspring), pop))
            if on_generation:
                on_generation(gen, pop, hof)
    except EvaluationError as err:
        err.partial_logbook = logbook
        err.partial_hof = hof
        raise
    return hof, logbook


def run_simple_ga(
    config: EvolutionConfig,
    space: Schema,
    f: Objective,
    maximize: bool = True,
    hof_size: int = 10,
    jobs: int = 1,
) -> tuple[HallOfFame, list[LogRow]]:
    """Scalar GA: binary tournament, SBX + polynomial mutation, elitism of 1."""
    w: Weights = (1.0,) if maximize else (-1.0,)
    hof = HallOfFame(w, hof_size)
    logbook: list[LogRow] = []
    sign = w[0]

    def better(a: Individual, ia: int, b: Individual, ib: int) -> bool:
        if a.fitness[0] != b.fitness[0]:
            return sign * a.fitness[0] > sign * b.fitness[0]
        return ia < ib

    rng_init = rng_substream(config.seed, "init")
    pop = [Individual(sample(space, rng_init)) for _ in range(config.pop_size)]
    try:
        _evaluate(pop, f, config.seed, 0, 1, jobs)
        hof.update(pop)
        logbook.append(_stats_row(0, len(pop), pop))
        for gen in range(1, config.generations + 1):
            rng_var = rng_substream(config.seed, f"var:{gen}")

            def tournament(ps):
                i, j = int(rng_var.integers(len(ps))), int(rng_var.integers(len(ps)))
                return ps[i] if better(ps[i], i, ps[j], j) else ps[j]

            offspring = _make_offspring(pop, config, rng_var, tournament)
            _evaluate(offspring, f, config.seed, gen, 1, jobs)
            elite = max(range(len(pop)), key=lambda i: (sign * pop[i].fitness[0], -i))
            worst = min(range(len(offspring)), key=lambda i: (sign * offspring[i].fitness[0], -i))
            if better(pop[elite], elite, offspring[worst], worst):
                offspring[worst] = pop[elite].copy()
            pop = offspring
            hof.update(pop)
            logbook.append(_stats_row(gen, config.pop_size, pop))
    except EvaluationError as err:
        err.partial_logbook = logbook
        err.partial_hof = hof
        raise
    return hof, logbook


SIGMA_FLOOR = 1e-12


def run_mu_plus_lambda_es(
    config: EvolutionConfig,
    space: Schema,
    f: Objective,
    sigma0: float,
    lam: int | None = None,
    maximize: bool = True,
    hof_size: int = 10,
    jobs: int = 1,
    on_generation: Callable[[int, list[Individual], HallOfFame, float], None] | None = None,
) -> tuple[HallOfFame, list[LogRow]]:
    """(mu+lambda) evolution strategy with isotropic Gaussian steps and
    1/5th-success-rule sigma adaptation. ``config.pop_size`` is mu; lambda
    defaults to 4*mu. Sigma never drops below ``SIGMA_FLOOR``."""
    if sigma0 <= 0:
        raise ValueError("sigma0 must be positive")
    mu = config.pop_size
    lam = 4 * mu if lam is None else lam
    w: Weights = (1.0,) if maximize else (-1.0,)
    sign = w[0]
    hof = HallOfFame(w, hof_size)
    logbook: list[LogRow] = []
    sigma = float(sigma0)
    alpha = 0.82  # shrink factor of the 1/5th rule

    rng_init = rng_substream(config.seed, "init")
    pop = [Individual(sample(space, rng_init)) for _ in range(mu)]
    try:
        _evaluate(pop, f, config.seed, 0, 1, jobs)
        hof.update(pop)
        logbook.append(_stats_row(0, mu, pop))
        for gen in range(1, config.generations + 1):
            rng_var = rng_substream(config.seed, f"var:{gen}")
            parents = [pop[int(rng_var.integers(mu))] for _ in range(lam)]
            offspring = [
                Individual(repair(p.genotype + sigma * rng_var.normal(size=p.genotype.shape)))
                for p in parents
            ]
            _evaluate(offspring, f, config.seed, gen, 1, jobs)
            successes = sum(
                1 for p, c in zip(parents, offspring)
                if sign * c.fitness[0] > sign * p.fitness[0]
            )
            rate = successes / lam
            if rate > 0.2:
                sigma /= alpha
            elif rate < 0.2:
                sigma *= alpha
            sigma = max(sigma, SIGMA_FLOOR)
            combined = list(pop) + offspring
            order = sorted(range(len(combined)), key=lambda i: (-sign * combined[i].fitness[0], i))
            pop = [combined[i] for i in order[:mu]]
            hof.update(offspring)
            logbook.append(_stats_row(gen, lam, pop))
            if on_generation:
                on_generation(gen, pop, hof, sigma)
    except EvaluationError as err:
        err.partial_logbook = logbook
        err.partial_hof = hof
        raise
    return hof, logbook


# ---------------------------------------------------------------------------
# Hypervolume (2-objective, minimization in signed space)
# ---------------------------------------------------------------------------

def hypervolume_2d(points: Sequence[Sequence[float]], ref: Sequence[float],
                   w: Weights = (-1.0, -1.0)) -> float:
    """Exact dominated hypervolume for two objectives w.r.t. ``ref``.

    Points and the reference are given in raw objective space; ``w`` maps
    them to the canonical minimization orientation first. Points not strictly
    better than the reference contribute nothing.
    """
    w = check_weights(w)
    if len(w) != 2:
        raise LengthMismatch("hypervolume_2d handles exactly two objectives")
    rx, ry = -w[0] * ref[0], -w[1] * ref[1]
    pts = [(-w[0] * p[0], -w[1] * p[1]) for p in points]
    pts = [(x, y) for x, y in pts if x < rx and y < ry]
    if not pts:
        return 0.0
    pts.sort()
    hv = 0.0
    prev_y = ry
    for x, y in pts:
        if y < prev_y:
            hv += (rx - x) * (prev_y - y)
            prev_y = y
    return hv
