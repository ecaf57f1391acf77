"""Bi-objective GA over binary placement genomes, with a hybrid offline/online controller.

Objectives are acceptance ratio (maximized) and average latency (minimized).
Internally both are turned into minimization keys ``(-ar, latency)``.
"""

from __future__ import annotations

import csv
import enum
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import InvalidArgumentError, InvalidGenomeError, UnsetFitnessError
from .netmodel import Embedding, SfcInstanceGraph, SfcRequest, Topology, decode_embedding, expand_sfcr, genome_shape
from .oracle import OnlineEvaluator

AR_ZERO_LATENCY_MS = 50000.0


# -- genome operators ------------------------------------------------------


def random_genome(shape: tuple[int, int], p_deploy: float, rng: np.random.Generator) -> np.ndarray:
    """Each row gets exactly one uniformly chosen host bit with probability ``p_deploy``."""
    if not 0.0 <= p_deploy <= 1.0:
        raise InvalidArgumentError(f"p_deploy {p_deploy} not in [0, 1]")
    rows, cols = shape
    genome = np.zeros(shape, dtype=np.uint8)
    on = rng.random(rows) < p_deploy
    hosts = rng.integers(0, cols, size=rows)
    genome[np.flatnonzero(on), hosts[on]] = 1
    return genome


def two_point_crossover(
    a: np.ndarray, b: np.ndarray, rng: np.random.Generator | None = None, cuts: tuple[int, int] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Swap the flat segment ``[i, j)`` between two genomes.

    Cut points are two distinct values in ``0..size`` unless given.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise InvalidGenomeError(f"crossover of shapes {a.shape} and {b.shape}")
    n = a.size
    if cuts is None:
        if rng is None:
            raise InvalidArgumentError("need rng or explicit cuts")
        i, j = sorted(int(c) for c in rng.choice(n + 1, size=2, replace=False))
    else:
        i, j = sorted(cuts)
        if not 0 <= i <= j <= n:
            raise InvalidArgumentError(f"cut points {cuts} outside 0..{n}")
    fa, fb = a.ravel().copy(), b.ravel().copy()
    fa[i:j], fb[i:j] = b.ravel()[i:j], a.ravel()[i:j]
    return fa.reshape(a.shape), fb.reshape(b.shape)


def mutate_genome(genome: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= rate <= 1.0:
        raise InvalidArgumentError(f"mutation rate {rate} not in [0, 1]")
    flips = rng.random(genome.shape) < rate
    return genome ^ flips.astype(genome.dtype)


# -- individuals -----------------------------------------------------------


class FitnessSource(enum.IntEnum):
    UNSET = 0
    APPROXIMATED = 1
    MEASURED = 2


@dataclass(eq=False)
class Individual:
    genome: np.ndarray
    fitness: tuple[float, float] | None = None  # (acceptance ratio, avg latency ms)
    source: FitnessSource = FitnessSource.UNSET
    approximated: tuple[float, float] | None = None
    measured: tuple[float, float] | None = None

    def set_fitness(self, fitness: tuple[float, float], source: FitnessSource) -> None:
        if source < self.source or source == FitnessSource.UNSET:
            raise InvalidArgumentError(f"fitness source cannot move from {self.source.name} to {source.name}")
        fitness = (float(fitness[0]), float(fitness[1]))
        self.fitness = fitness
        self.source = source
        if source == FitnessSource.APPROXIMATED:
            self.approximated = fitness
        else:
            self.measured = fitness


def random_individual(dims: tuple[int, int], p_deploy: float, rng: np.random.Generator) -> Individual:
    return Individual(random_genome(dims, p_deploy, rng))


def mutate(individual: Individual, rate: float, rng: np.random.Generator) -> Individual:
    return Individual(mutate_genome(individual.genome, rate, rng))


# -- NSGA-II ---------------------------------------------------------------


def _objectives(population: Sequence[Individual]) -> np.ndarray:
    if any(ind.fitness is None for ind in population):
        raise UnsetFitnessError("every individual needs a fitness before selection")
    f = np.array([ind.fitness for ind in population], dtype=float).reshape(-1, 2)
    return np.column_stack([-f[:, 0], f[:, 1]])


def dominates(fa: tuple[float, float], fb: tuple[float, float]) -> bool:
    """Whether fitness ``fa`` Pareto-dominates ``fb`` (max AR, min latency)."""
    return fa[0] >= fb[0] and fa[1] <= fb[1] and (fa[0] > fb[0] or fa[1] < fb[1])


def fast_non_dominated_sort(objectives: np.ndarray) -> list[np.ndarray]:
    """Fronts of a minimization problem, each an ascending index array."""
    obj = np.asarray(objectives, dtype=float)
    if obj.shape[0] == 0:
        return []
    if obj.shape[1] == 2:
        return _fronts_2d(obj)
    le = (obj[:, None, :] <= obj[None, :, :]).all(axis=2)
    lt = (obj[:, None, :] < obj[None, :, :]).any(axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    count = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(count == 0)
    assigned = np.zeros(obj.shape[0], dtype=bool)
    while current.size:
        fronts.append(current)
        assigned[current] = True
        count = count - dom[current].sum(axis=0)
        current = np.flatnonzero((count == 0) & ~assigned)
    return fronts


def _fronts_2d(obj: np.ndarray) -> list[np.ndarray]:
    # Points visited in lexicographic order; each front's latest member has the
    # smallest second objective so far, and it alone decides whether a new point
    # is dominated by that front. Domination by front k implies domination by
    # every earlier front, so the target front is found by bisection.
    order = np.lexsort((obj[:, 1], obj[:, 0]))
    last: list[tuple[float, float]] = []
    members: list[list[int]] = []
    for i in order:
        p = (obj[i, 0], obj[i, 1])
        lo, hi = 0, len(last)
        while lo < hi:
            mid = (lo + hi) // 2
            q = last[mid]
            if q[1] <= p[1] and q != p:
                lo = mid + 1
            else:
                hi = mid
        if lo == len(last):
            last.append(p)
            members.append([int(i)])
        else:
            last[lo] = p
            members[lo].append(int(i))
    return [np.array(sorted(m), dtype=np.int64) for m in members]


def crowding_distance(objectives: np.ndarray) -> np.ndarray:
    obj = np.asarray(objectives, dtype=float)
    n, m = obj.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(m):
        order = np.argsort(obj[:, k], kind="stable")
        lo, hi = obj[order[0], k], obj[order[-1], k]
        dist[order[0]] = dist[order[-1]] = np.inf
        if hi > lo:
            dist[order[1:-1]] += (obj[order[2:], k] - obj[order[:-2], k]) / (hi - lo)
    return dist


def rank_and_crowding(population: Sequence[Individual]) -> tuple[np.ndarray, np.ndarray]:
    obj = _objectives(population)
    rank = np.zeros(len(population), dtype=np.int64)
    crowd = np.zeros(len(population))
    for r, front in enumerate(fast_non_dominated_sort(obj)):
        rank[front] = r
        crowd[front] = crowding_distance(obj[front])
    return rank, crowd


def nsga2_select(population: Sequence[Individual], k: int, rng: np.random.Generator) -> list[Individual]:
    """``k`` parents by binary tournament on (rank, crowding); ties go to the lower index."""
    rank, crowd = rank_and_crowding(population)
    n = len(population)
    pairs = rng.integers(0, n, size=(k, 2))
    a, b = pairs.min(axis=1), pairs.max(axis=1)
    a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] >= crowd[b]))
    return [population[i] for i in np.where(a_wins, a, b)]


def survivors(population: Sequence[Individual], k: int) -> list[Individual]:
    """Elitist truncation: whole fronts first, the split front by descending crowding."""
    obj = _objectives(population)
    keep: list[int] = []
    for front in fast_non_dominated_sort(obj):
        if len(keep) + front.size <= k:
            keep.extend(front.tolist())
            if len(keep) == k:
                break
            continue
        crowd = crowding_distance(obj[front])
        order = np.lexsort((front, -crowd))
        keep.extend(front[order[: k - len(keep)]].tolist())
        break
    return [population[i] for i in keep]


def best_individual(population: Sequence[Individual]) -> Individual:
    """From the first front: highest AR, then lowest latency, then lowest index."""
    obj = _objectives(population)
    front = fast_non_dominated_sort(obj)[0]
    i = front[np.lexsort((front, obj[front, 1], obj[front, 0]))[0]]
    return population[i]


# -- problem & evaluation --------------------------------------------------


@dataclass(eq=False)
class Problem:
    topology: Topology
    sfcrs: Sequence[SfcRequest]
    traffic: object
    gateway: int = 0
    graphs: list[SfcInstanceGraph] = field(init=False)

    def __post_init__(self):
        self.graphs = [expand_sfcr(s) for s in self.sfcrs]

    @property
    def shape(self) -> tuple[int, int]:
        return genome_shape(self.sfcrs, self.topology)

    def decode(self, genome: np.ndarray) -> Embedding:
        return decode_embedding(genome, self.sfcrs, self.topology, self.gateway, self.graphs)


class OfflineEvaluator(Protocol):
    def evaluate(self, genomes: Sequence[np.ndarray]) -> np.ndarray: ...


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 2000
    max_generations: int = 500
    p_deploy: float = 0.9
    mutation_rate: float | None = None  # None: one expected flip per genome
    crossover_rate: float = 1.0
    min_ar: float = 1.0
    max_latency_ms: float = 150.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.population_size < 2 or self.population_size % 2:
            raise InvalidArgumentError("population size must be even and at least 2")
        if self.max_generations < 0:
            raise InvalidArgumentError("max_generations must be non-negative")
        for name in ("p_deploy", "crossover_rate", "min_ar"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidArgumentError(f"{name} must be in [0, 1]")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise InvalidArgumentError("mutation_rate must be in [0, 1]")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be at least 1")

    def meets(self, fitness: tuple[float, float] | None) -> bool:
        return fitness is not None and fitness[0] >= self.min_ar and fitness[1] <= self.max_latency_ms

    def mutation_for(self, shape: tuple[int, int]) -> float:
        return self.mutation_rate if self.mutation_rate is not None else 1.0 / (shape[0] * shape[1])


HYBRID_DEFAULTS = EvolutionConfig()
ONLINE_DEFAULTS = EvolutionConfig(population_size=10, max_generations=10)

LOG_HEADER = [
    "gen", "phase", "ar_min", "ar_mean", "ar_max", "lat_min", "lat_mean", "lat_max",
    "offline_evals", "online_evals", "elapsed_s",
]


@dataclass(frozen=True)
class GenerationRow:
    gen: int
    phase: str  # "offline" or "online"
    ar: tuple[float, float, float]
    lat: tuple[float, float, float]
    offline_evals: int
    online_evals: int
    elapsed_s: float


@dataclass
class GenerationLog:
    rows: list[GenerationRow] = field(default_factory=list)

    def add(self, gen, phase, fitnesses, offline, online, elapsed) -> None:
        f = np.asarray(fitnesses, dtype=float).reshape(-1, 2)
        stats = lambda c: (float(c.min()), float(c.mean()), float(c.max()))  # noqa: E731
        self.rows.append(GenerationRow(gen, phase, stats(f[:, 0]), stats(f[:, 1]), offline, online, elapsed))

    def render(self, include_elapsed: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_HEADER if include_elapsed else LOG_HEADER[:-1])
        for r in self.rows:
            row = [r.gen, r.phase, *(repr(v) for v in r.ar), *(repr(v) for v in r.lat), r.offline_evals, r.online_evals]
            if include_elapsed:
                row.append(f"{r.elapsed_s:.3f}")
            w.writerow(row)
        return buf.getvalue()

    def write_csv(self, path: str | Path, include_elapsed: bool = True) -> None:
        Path(path).write_text(self.render(include_elapsed))

    @classmethod
    def read_csv(cls, path: str | Path) -> "GenerationLog":
        log = cls()
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                log.rows.append(GenerationRow(
                    int(rec["gen"]), rec["phase"],
                    tuple(float(rec[f"ar_{s}"]) for s in ("min", "mean", "max")),
                    tuple(float(rec[f"lat_{s}"]) for s in ("min", "mean", "max")),
                    int(rec["offline_evals"]), int(rec["online_evals"]),
                    float(rec.get("elapsed_s") or 0.0),
                ))
        return log


@dataclass(eq=False)
class EvolutionResult:
    best: Individual
    log: GenerationLog
    converged: bool
    generations: int
    offline_evals: int
    online_evals: int

    @property
    def explored(self) -> int:
        return self.offline_evals + self.online_evals


def measured_fitness(evaluator: OnlineEvaluator, problem: Problem, genome: np.ndarray, key: Sequence[int]) -> tuple[float, float]:
    embedding = problem.decode(genome)
    ar = embedding.acceptance_ratio
    if embedding.n_deployed == 0:
        return ar, AR_ZERO_LATENCY_MS
    return ar, evaluator.measure(embedding, problem.traffic, key=key).average_ms


def _evaluate_offline(surrogate: OfflineEvaluator, genomes: list[np.ndarray], workers: int) -> np.ndarray:
    if workers == 1 or len(genomes) < 2 * workers:
        return surrogate.evaluate(genomes)
    bounds = np.linspace(0, len(genomes), workers + 1).astype(int)
    chunks = [genomes[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(surrogate.evaluate, chunks))
    return np.concatenate(parts)


def _offspring(parents: list[Individual], config: EvolutionConfig, shape, rng: np.random.Generator) -> list[Individual]:
    rate = config.mutation_for(shape)
    children = []
    for a, b in zip(parents[0::2], parents[1::2]):
        if rng.random() < config.crossover_rate:
            ga, gb = two_point_crossover(a.genome, b.genome, rng)
        else:
            ga, gb = a.genome.copy(), b.genome.copy()
        children.append(Individual(mutate_genome(ga, rate, rng)))
        children.append(Individual(mutate_genome(gb, rate, rng)))
    return children


def _run(
    config: EvolutionConfig,
    problem: Problem,
    evaluate: Callable[[list[Individual], int], None],
    verify: Callable[[list[Individual], int], Individual | None] | None,
    counters: dict,
    phase: str,
) -> EvolutionResult:
    start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    shape = problem.shape
    log = GenerationLog()
    population = [random_individual(shape, config.p_deploy, rng) for _ in range(config.population_size)]
    evaluate(population, 0)
    gen = 0
    while True:
        log.add(gen, phase, [i.fitness for i in population], counters["offline"], counters["online"], time.perf_counter() - start)
        winner = verify(population, gen) if verify else None
        if verify and counters["online_this_gen"]:
            log.add(gen, "online", [i.fitness for i in population], counters["offline"], counters["online"], time.perf_counter() - start)
        if winner is None and phase == "online":
            winner = next((i for i in population if config.meets(i.fitness)), None)
        if winner is not None:
            return EvolutionResult(winner, log, True, gen, counters["offline"], counters["online"])
        if gen >= config.max_generations:
            break
        parents = nsga2_select(population, config.population_size, rng)
        children = _offspring(parents, config, shape, rng)
        gen += 1
        evaluate(children, gen)
        population = survivors(population + children, config.population_size)
    return EvolutionResult(best_individual(population), log, False, gen, counters["offline"], counters["online"])


def hybrid_evolve(
    config: EvolutionConfig, surrogate: OfflineEvaluator, online_evaluator: OnlineEvaluator, problem: Problem
) -> EvolutionResult:
    """Surrogate-driven GA; individuals meeting the threshold offline are verified online.

    Qualifiers are measured best-approximated-latency first and the run stops at
    the first one whose measured fitness also meets the threshold. Failed
    qualifiers keep their measured fitness; any later genome decoding to the
    same embedding reuses it.
    """
    counters = {"offline": 0, "online": 0, "online_this_gen": 0}
    measured_cache: dict[tuple, tuple[float, float]] = {}

    def phenotype(genome: np.ndarray) -> tuple:
        return tuple(e.placement for e in problem.decode(genome).sfcs)

    def evaluate(individuals: list[Individual], gen: int) -> None:
        fits = _evaluate_offline(surrogate, [i.genome for i in individuals], config.workers)
        counters["offline"] += len(individuals)
        for ind, fit in zip(individuals, fits):
            ind.set_fitness((fit[0], fit[1]), FitnessSource.APPROXIMATED)

    def verify(population: list[Individual], gen: int) -> Individual | None:
        counters["online_this_gen"] = 0
        idx = [i for i, ind in enumerate(population) if ind.source == FitnessSource.APPROXIMATED and config.meets(ind.fitness)]
        idx.sort(key=lambda i: (population[i].fitness[1], i))
        for i in idx:
            ind = population[i]
            key = phenotype(ind.genome)
            fit = measured_cache.get(key)
            if fit is None:
                fit = measured_fitness(online_evaluator, problem, ind.genome, (config.seed, gen, i))
                measured_cache[key] = fit
                counters["online"] += 1
                counters["online_this_gen"] += 1
            ind.set_fitness(fit, FitnessSource.MEASURED)
            if config.meets(fit):
                return ind
        return None

    return _run(config, problem, evaluate, verify, counters, "offline")


def online_only_evolve(config: EvolutionConfig, online_evaluator: OnlineEvaluator, problem: Problem) -> EvolutionResult:
    """Same GA with every fitness evaluation measured online."""
    counters = {"offline": 0, "online": 0, "online_this_gen": 0}

    def evaluate(individuals: list[Individual], gen: int) -> None:
        for i, ind in enumerate(individuals):
            ind.set_fitness(
                measured_fitness(online_evaluator, problem, ind.genome, (config.seed, gen, i)),
                FitnessSource.MEASURED,
            )
            counters["online"] += 1

    return _run(config, problem, evaluate, None, counters, "online")
