"""Diversifying greedy samplers.

DGS (uniform constraints) and GDGS (knapsack constraints) build one greedy
core with budget B - m and complete it into mu solutions by spending the
held-back margin on uniformly random elements.
"""

import math

import msgspec
import numpy as np

from . import logger
from .core import (
    CostKind,
    CostModel,
    InvariantViolationException,
    ObjectiveOracle,
    ParameterException,
    Population,
    Solution,
)

# Degenerate run flags
FLAG_SMALL_GROUND_SET = "ground_set_smaller_than_budget"
FLAG_NO_AFFORDABLE = "no_affordable_element"
FLAG_SINGLETON_FALLBACK = "singleton_fallback"
FLAG_EMPTY = "empty_solution"


class InsertionStep(msgspec.Struct, frozen=True, array_like=True):
    """One greedy selection: the element and the gain observed at that time."""

    element: int
    gain: float


class GreedyTrace(msgspec.Struct):
    """Record of the greedy phase of one sampler run.

    Attributes
    ----------
    core_solution : Solution
        S for DGS; the selected T for GDGS
    insertion_order : list[InsertionStep]
        Greedy insertions in order with their marginal gains
    best_singleton : InsertionStep | None
        GDGS only: the element v with the largest f({v}) among affordable
        singletons, stored with f({v}) as its gain
    selected_singleton : bool
        GDGS only: whether T = {v} was chosen over S
    rejected : int
        GDGS only: candidates dropped because they no longer fit B - m
    degenerate_flags : list[str]
        Degenerate situations met during the run
    """

    core_solution: Solution
    insertion_order: list[InsertionStep]
    best_singleton: InsertionStep | None = None
    selected_singleton: bool = False
    rejected: int = 0
    degenerate_flags: list[str] = []

    @property
    def degenerate(self) -> bool:
        return bool(self.degenerate_flags)


def _check_mu(mu: int) -> None:
    if mu < 1:
        raise ParameterException(f"Population size mu must be >= 1, got {mu}")


def dgs(
    oracle: ObjectiveOracle, model: CostModel, mu: int, rng_seed: int
) -> tuple[Population, GreedyTrace]:
    """Diversifying greedy sampling under a uniform constraint.

    The core S takes B - m greedy steps (largest marginal gain, ties to the
    lowest index). Each of the mu solutions is S plus m elements drawn
    without replacement from V \\ S.

    Args:
        oracle: Monotone objective.
        model: Uniform cost model carrying B and m.
        mu: Number of solutions.
        rng_seed: Seed for the random completions.

    Returns:
        The population and the greedy trace.

    Raises:
        ParameterException: On a non-uniform model, non-integer B or m, or mu < 1.
        InvariantViolationException: If a completion scores below f(S).
    """
    _check_mu(mu)
    if model.kind != CostKind.UNIFORM:
        raise ParameterException(
            "DGS needs a uniform cost model; use GDGS for knapsack"
        )
    if not model.integral:
        raise ParameterException(
            f"DGS needs integer B and m, got B={model.budget}, m={model.margin}"
        )

    n = oracle.n
    budget = int(model.budget)
    greedy_steps = int(model.greedy_limit)
    flags: list[str] = []
    if n < budget:
        logger.warning(
            "Ground set of %s elements is smaller than budget %s; filling to %s",
            n,
            budget,
            n,
        )
        flags.append(FLAG_SMALL_GROUND_SET)

    core = Solution()
    candidates = list(range(n))
    order: list[InsertionStep] = []
    while len(core) < greedy_steps and candidates:
        gains = oracle.marginal_gains(core, candidates)
        best = int(np.argmax(gains))
        element = candidates.pop(best)
        core.add(element)
        order.append(InsertionStep(element, float(gains[best])))

    core_value = core.evaluate(oracle)
    rng = np.random.default_rng(rng_seed)
    pool = np.array(candidates, dtype=np.intp)
    extra = min(budget, n) - len(core)

    pop = Population(n, mu)
    for _ in range(mu):
        solution = core.copy()
        solution.update(rng.permutation(pool)[:extra].tolist())
        if solution.evaluate(oracle) < core_value:
            raise InvariantViolationException(
                f"DGS completion {solution!r} scores {solution.evaluate(oracle)} "
                f"below the greedy core value {core_value}"
            )
        pop.append(solution)

    logger.debug(
        "DGS core of %s elements with f(S)=%s, %s solutions sampled",
        len(core),
        core_value,
        mu,
    )
    return pop, GreedyTrace(
        core_solution=core, insertion_order=order, degenerate_flags=flags
    )


def _affordable(
    model: CostModel, spent: float, costs: np.ndarray, limit: float
) -> np.ndarray:
    totals = spent + costs
    if model.integral:
        return totals <= limit
    return totals <= limit + 1e-9 * max(1.0, abs(limit))


def _best_singleton(
    oracle: ObjectiveOracle, model: CostModel, costs: np.ndarray, limit: float
) -> InsertionStep | None:
    affordable = np.flatnonzero(_affordable(model, 0.0, costs, limit))
    if affordable.size == 0:
        return None
    empty: frozenset[int] = frozenset()
    values = oracle.marginal_gains(empty, affordable.tolist()) + oracle.evaluate(empty)
    best = int(np.argmax(values))
    return InsertionStep(int(affordable[best]), float(values[best]))


def gdgs(
    oracle: ObjectiveOracle, model: CostModel, mu: int, rng_seed: int
) -> tuple[Population, GreedyTrace]:
    """Generalized diversifying greedy sampling under a knapsack constraint.

    The greedy phase repeatedly takes the candidate with the largest
    gain-to-cost ratio among those still fitting B - m (ties to the lowest
    index). T is the better of S and the best single element costing at most
    B - m. Each solution starts from T and adds elements of V \\ T in a
    random order whenever they fit the full budget B.

    Args:
        oracle: Monotone objective.
        model: Knapsack cost model carrying item costs, B and m.
        mu: Number of solutions.
        rng_seed: Seed for the random completions.

    Returns:
        The population and the greedy trace.

    Raises:
        ParameterException: On a non-knapsack model, cost vector of the wrong
            length, or mu < 1.
        InvariantViolationException: If a completion scores below f(T) or
            exceeds the budget.
    """
    _check_mu(mu)
    if model.kind != CostKind.KNAPSACK or model.item_costs is None:
        raise ParameterException("GDGS needs a knapsack cost model")
    n = oracle.n
    if len(model.item_costs) != n:
        raise ParameterException(
            f"Cost model has {len(model.item_costs)} item costs for {n} elements"
        )

    costs = np.asarray(model.item_costs, dtype=np.float64)
    limit = model.greedy_limit
    flags: list[str] = []

    core = Solution()
    spent = 0.0
    candidates = np.arange(n, dtype=np.intp)
    order: list[InsertionStep] = []
    rejected = 0
    while candidates.size:
        # c(S) only grows, so a candidate that does not fit now never will
        fits = _affordable(model, spent, costs[candidates], limit)
        rejected += int(np.count_nonzero(~fits))
        candidates = candidates[fits]
        if not candidates.size:
            break
        gains = oracle.marginal_gains(core, candidates.tolist())
        best = int(np.argmax(gains / costs[candidates]))
        element = int(candidates[best])
        core.add(element)
        spent = core.cost_under(model)
        order.append(InsertionStep(element, float(gains[best])))
        candidates = np.delete(candidates, best)

    singleton = _best_singleton(oracle, model, costs, limit)
    core_value = core.evaluate(oracle)
    selected_singleton = False
    if singleton is not None and singleton.gain > core_value:
        selected = Solution([singleton.element])
        selected_singleton = True
    elif singleton is not None:
        selected = core
    else:
        flags.append(FLAG_NO_AFFORDABLE)
        singleton = _best_singleton(oracle, model, costs, model.budget)
        if singleton is not None:
            flags.append(FLAG_SINGLETON_FALLBACK)
            selected = Solution([singleton.element])
            selected_singleton = True
        else:
            flags.append(FLAG_EMPTY)
            selected = Solution()
        logger.warning(
            "No element costs at most B - m = %s; degenerate GDGS run (%s)",
            limit,
            ", ".join(flags),
        )

    selected_value = selected.evaluate(oracle)
    selected_cost = selected.cost_under(model)
    rng = np.random.default_rng(rng_seed)
    pool = np.array(
        [v for v in range(n) if v not in selected], dtype=np.intp
    )

    pop = Population(n, mu)
    for _ in range(mu):
        solution = selected.copy()
        total = selected_cost
        for element in rng.permutation(pool).tolist():
            if model.fits(total + costs[element], model.budget):
                solution.add(element)
                total += costs[element]
        if not model.fits(solution.cost_under(model), model.budget):
            raise InvariantViolationException(
                f"GDGS completion costs {solution.cost_under(model)} "
                f"over budget {model.budget}"
            )
        if solution.evaluate(oracle) < selected_value:
            raise InvariantViolationException(
                f"GDGS completion scores {solution.evaluate(oracle)} "
                f"below f(T) = {selected_value}"
            )
        pop.append(solution)

    logger.debug(
        "GDGS core of %s elements (cost %s), T=%s with f(T)=%s, %s rejected",
        len(core),
        spent,
        "singleton" if selected_singleton else "S",
        selected_value,
        rejected,
    )
    return pop, GreedyTrace(
        core_solution=selected,
        insertion_order=order,
        best_singleton=singleton,
        selected_singleton=selected_singleton,
        rejected=rejected,
        degenerate_flags=flags,
    )


def dgs_solution_count_bound(n: int, B: int, m: int) -> tuple[int, int]:
    """Counting bounds for DGS populations.

    Returns:
        (sum_{i=0}^{m} C(n-B+m, i), C(n-B+m, m)): the number of feasible
        solutions at least as good as S, and the size of the pool each
        solution is sampled from.
    """
    if not 0 <= m <= B <= n:
        raise ParameterException(
            f"Counting bound needs 0 <= m <= B <= n, got n={n}, B={B}, m={m}"
        )
    pool = n - B + m
    total = sum(math.comb(pool, i) for i in range(m + 1))
    return total, math.comb(pool, m)


def gdgs_solution_count_bound(
    n: int, B: float, m: float, c_min: float, c_max: float
) -> int:
    """Lower bound on distinct feasible solutions at least as good as T.

    sum_{i=1}^{floor(m/c_max)} C(n - floor((B-m)/c_min), i); 0 when m < c_max.
    """
    if not 0 < c_min <= c_max:
        raise ParameterException(
            f"Need 0 < c_min <= c_max, got c_min={c_min}, c_max={c_max}"
        )
    if not 0 <= m <= B:
        raise ParameterException(f"Need 0 <= m <= B, got m={m}, B={B}")
    # Absorb representation error such as 0.3 / 0.1 = 2.9999999999999996
    slots = math.floor(m / c_max + 1e-9)
    core_size = math.floor((B - m) / c_min + 1e-9)
    if core_size > n:
        raise ParameterException(
            f"floor((B-m)/c_min) = {core_size} exceeds the ground set size {n}"
        )
    if slots == 0:
        logger.warning(
            "GDGS counting bound is vacuous: m=%s is below c_max=%s", m, c_max
        )
        return 0
    return sum(math.comb(n - core_size, i) for i in range(1, slots + 1))


def uniform_guarantee(B: float, m: float, alpha: float = 1.0) -> float:
    """Approximation factor of every DGS solution: 1 - (1 - alpha/B)^(B-m)."""
    return 1.0 - (1.0 - alpha / B) ** (B - m)


def knapsack_guarantee(B: float, m: float, L: int, alpha: float = 1.0) -> float:
    """Finite-form GDGS factor (alpha/2) * (1 - (1 - alpha*(B-m)/((L+1)*B))^(L+1)).

    L is the number of greedy insertions.
    """
    return (alpha / 2.0) * (1.0 - (1.0 - alpha * (B - m) / ((L + 1) * B)) ** (L + 1))
