"""DIVEA: steady-state evolutionary entropy maximization.

Each iteration mutates one uniformly chosen solution. An offspring that meets
the quality threshold and the budget joins the population, which then drops
the solution whose removal leaves the highest entropy.
"""

import math

import msgspec
import numpy as np

from . import logger
from .core import (
    CostKind,
    CostModel,
    InfeasiblePopulationException,
    InvariantViolationException,
    ObjectiveOracle,
    ParameterException,
    Population,
    Solution,
)
from .diversity import ENTROPY_TERM_MAX, EntropyState, entropy

# Absolute slack for entropy comparisons made with floating point sums
ENTROPY_TOLERANCE = 1e-9


class DiveaConfig(msgspec.Struct, frozen=True):
    """DIVEA run settings.

    Attributes
    ----------
    t_max : int
        Number of iterations. Defaults to 10000
    mutation_rate : float | None
        Per-element flip probability; None means 1/n
    f_min : float
        Quality threshold every solution must keep
    seed : int
        Seed of the run's random generator
    log_interval : int
        Iterations between entropy trajectory samples. Defaults to 100
    check_invariants : bool
        Verify entropy monotonicity, population size, occurrence counts and
        feasibility after every iteration
    """

    t_max: int = 10_000
    mutation_rate: float | None = None
    f_min: float = 0.0
    seed: int = 0
    log_interval: int = 100
    check_invariants: bool = False

    def __post_init__(self) -> None:
        if self.t_max < 1:
            raise ParameterException(f"t_max must be >= 1, got {self.t_max}")
        if self.mutation_rate is not None and not 0.0 < self.mutation_rate <= 1.0:
            raise ParameterException(
                f"mutation_rate must lie in (0, 1], got {self.mutation_rate}"
            )
        if self.f_min < 0:
            raise ParameterException(f"f_min must be >= 0, got {self.f_min}")
        if self.log_interval < 1:
            raise ParameterException(
                f"log_interval must be >= 1, got {self.log_interval}"
            )


class TrajectoryPoint(msgspec.Struct, frozen=True, array_like=True):
    iteration: int
    entropy: float


class DiveaResult(msgspec.Struct):
    """Outcome of a DIVEA run.

    Attributes
    ----------
    population : Population
        Final population of mu solutions
    trajectory : list[TrajectoryPoint]
        Entropy at iteration 0, every log_interval iterations and at the end
    accepted : int
        Offspring that passed threshold and budget
    last_improvement : int
        Last iteration that strictly increased the entropy
    """

    population: Population
    trajectory: list[TrajectoryPoint]
    accepted: int
    last_improvement: int

    @property
    def entropy(self) -> float:
        return self.trajectory[-1].entropy


def mutate(
    parent: Solution, rate: float, rng: np.random.Generator, n: int
) -> Solution:
    """Flip the membership of each of the n elements with probability `rate`."""
    flips = np.flatnonzero(rng.random(n) < rate)
    return parent.symmetric_difference(flips.tolist())


def _acceptable(
    solution: Solution, oracle: ObjectiveOracle, model: CostModel, f_min: float
) -> bool:
    # Cost first; it avoids an objective evaluation for over-budget offspring
    if not model.fits(solution.cost_under(model), model.budget):
        return False
    return solution.evaluate(oracle) >= f_min


def _verify_initial(
    pop: Population, oracle: ObjectiveOracle, model: CostModel, f_min: float
) -> None:
    for index, solution in enumerate(pop):
        if not model.fits(solution.cost_under(model), model.budget):
            raise InfeasiblePopulationException(
                f"Initial solution {index} costs {solution.cost_under(model)} "
                f"over budget {model.budget}",
                index,
            )
        if solution.evaluate(oracle) < f_min:
            raise InfeasiblePopulationException(
                f"Initial solution {index} scores {solution.evaluate(oracle)} "
                f"below threshold {f_min}",
                index,
            )


def _removal_index(state: EntropyState) -> int:
    """Index whose removal leaves the highest entropy; ties go to the last."""
    best_index = 0
    best_value = -np.inf
    for index in range(len(state.population)):
        value = state.without(index)
        if value >= best_value:
            best_index, best_value = index, value
    return best_index


def check_invariants(
    state: EntropyState,
    oracle: ObjectiveOracle,
    model: CostModel,
    f_min: float,
    previous: float,
) -> None:
    """Raise InvariantViolationException if the population lost a property."""
    pop = state.population
    problems: list[str] = []
    if len(pop) != pop.mu:
        problems.append(f"population holds {len(pop)} solutions, expected {pop.mu}")
    if not pop.counts_consistent():
        problems.append("occurrence counts disagree with a recount")
    if state.value < previous - ENTROPY_TOLERANCE:
        problems.append(f"entropy decreased from {previous} to {state.value}")
    if abs(state.value - entropy(pop)) > ENTROPY_TOLERANCE:
        problems.append(
            f"tracked entropy {state.value} differs from recomputed {entropy(pop)}"
        )
    if state.value > ENTROPY_TERM_MAX * pop.n + ENTROPY_TOLERANCE:
        problems.append(f"entropy {state.value} exceeds the per-element ceiling")
    if model.kind == CostKind.UNIFORM and pop.mu >= 3:
        ceiling = model.budget * math.log2(pop.mu)
        if state.value > ceiling + ENTROPY_TOLERANCE:
            problems.append(f"entropy {state.value} exceeds B*log2(mu) = {ceiling}")
    for index, solution in enumerate(pop):
        if not _acceptable(solution, oracle, model, f_min):
            problems.append(f"solution {index} violates threshold or budget")
    if problems:
        logger.error("DIVEA invariant violation: %s", "; ".join(problems))
        raise InvariantViolationException("; ".join(problems))


def divea(
    initial: Population,
    oracle: ObjectiveOracle,
    model: CostModel,
    config: DiveaConfig,
) -> DiveaResult:
    """Maximize population entropy subject to f >= f_min and cost <= B.

    The initial population is copied, never modified.

    Raises:
        InfeasiblePopulationException: If an initial solution violates the
            threshold or the budget.
        InvariantViolationException: In check mode, if an invariant fails.
    """
    mu = initial.mu
    n = oracle.n
    if len(initial) != mu:
        raise ParameterException(
            f"Initial population holds {len(initial)} solutions, expected {mu}"
        )
    if initial.n != n:
        raise ParameterException(
            f"Population ground set size {initial.n} differs from oracle's {n}"
        )
    _verify_initial(initial, oracle, model, config.f_min)

    rate = config.mutation_rate if config.mutation_rate is not None else 1.0 / n
    rng = np.random.default_rng(config.seed)
    state = EntropyState(initial.copy())
    trajectory = [TrajectoryPoint(0, state.value)]
    accepted = 0
    last_improvement = 0

    for t in range(1, config.t_max + 1):
        before = state.value
        parent = state.population[int(rng.integers(mu))]
        offspring = mutate(parent, rate, rng, n)
        if _acceptable(offspring, oracle, model, config.f_min):
            accepted += 1
            state.add(offspring)
            state.remove(_removal_index(state))
            if state.value > before + ENTROPY_TOLERANCE:
                last_improvement = t
        if config.check_invariants:
            check_invariants(state, oracle, model, config.f_min, before)
        if t % config.log_interval == 0 or t == config.t_max:
            trajectory.append(TrajectoryPoint(t, state.value))

    logger.debug(
        "DIVEA finished: entropy %.4f after %s iterations, %s accepted, "
        "last improvement at %s",
        state.value,
        config.t_max,
        accepted,
        last_improvement,
    )
    return DiveaResult(
        population=state.population,
        trajectory=trajectory,
        accepted=accepted,
        last_improvement=last_improvement,
    )


def threshold_of(pop: Population, oracle: ObjectiveOracle) -> float:
    """Quality threshold of a population, min_i f(P_i)."""
    return min(pop.values(oracle))
