"""Exhaustive ground truth for small instances.

Exact optima, threshold counting and submodularity ratios by enumeration,
and checks of the sampler guarantees against them.
"""

from collections.abc import Iterator

import msgspec
import numpy as np

from . import logger
from .core import (
    CostKind,
    CostModel,
    ObjectiveOracle,
    ParameterException,
    SizeLimitException,
)
from .greedy import (
    dgs,
    dgs_solution_count_bound,
    gdgs,
    gdgs_solution_count_bound,
    knapsack_guarantee,
    uniform_guarantee,
)

MAX_BRUTE_FORCE_N = 22
MAX_RATIO_N = 14
MAX_GUARANTEE_N = 18

# Relative tolerance for comparisons on real-valued objectives
VALUE_TOLERANCE = 1e-9


class BruteForceResult(msgspec.Struct):
    """Exact optimum of an instance.

    Attributes
    ----------
    opt_value : float
        f(OPT)
    opt_witness : list[int]
        Sorted members of the first optimal set in enumeration order
    enumerated : int
        Feasible subsets examined
    threshold : float | None
        Threshold used for counting
    feasible_count_at_threshold : int | None
        Feasible subsets with f >= threshold, None without a threshold
    """

    opt_value: float
    opt_witness: list[int]
    enumerated: int
    threshold: float | None = None
    feasible_count_at_threshold: int | None = None


class RatioWitness(msgspec.Struct, frozen=True):
    A: list[int]
    B: list[int]
    v: int


class SubmodularityReport(msgspec.Struct):
    """Exact submodularity ratio.

    Attributes
    ----------
    alpha_f : float
        min over A <= B, v not in B of (f(A+v) - f(A)) / (f(B+v) - f(B)),
        taken over positive denominators; 1.0 when none exists
    witness : RatioWitness | None
        A triple attaining the minimum
    pairs_examined : int
        Triples with a positive denominator
    """

    alpha_f: float
    witness: RatioWitness | None
    pairs_examined: int


class GuaranteeReport(msgspec.Struct):
    """Approximation factor check over repeated sampler runs."""

    algorithm: str
    alpha_f: float
    opt_value: float
    factor: float
    bound: float
    trials: int
    solutions_checked: int
    min_ratio: float
    violations: int
    guaranteed: bool = True

    @property
    def passed(self) -> bool:
        return self.violations == 0


class CountReport(msgspec.Struct):
    """Counting bound check over repeated sampler runs."""

    algorithm: str
    bound: int
    min_count: int | None
    trials: int
    violations: int
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return self.violations == 0


def meets_threshold(value: float, threshold: float, resolution: int | None) -> bool:
    """value >= threshold, exactly for values on a 1/resolution grid."""
    if resolution is not None:
        return round(value * resolution) >= round(threshold * resolution)
    return value >= threshold - VALUE_TOLERANCE * max(1.0, abs(threshold))


def _feasible_subsets(
    n: int, model: CostModel
) -> Iterator[list[int]]:
    """Yield every feasible subset once, in index order, pruning on cost."""
    costs = [model.item_cost(v) for v in range(n)]
    members: list[int] = []
    # Stack of (next candidate, cost so far)
    stack: list[tuple[int, float]] = [(0, 0.0)]
    yield members
    while stack:
        start, spent = stack[-1]
        advanced = False
        for v in range(start, n):
            total = spent + costs[v]
            if model.fits(total, model.budget):
                stack[-1] = (v + 1, spent)
                members.append(v)
                stack.append((v + 1, total))
                yield members
                advanced = True
                break
        if not advanced:
            stack.pop()
            if members:
                members.pop()


def _check_size(n: int, cap: int, what: str) -> None:
    if n > cap:
        raise SizeLimitException(f"{what} supports n <= {cap}, got n = {n}")


def brute_force_opt(
    oracle: ObjectiveOracle, model: CostModel, threshold: float | None = None
) -> BruteForceResult:
    """Maximize f over all subsets with cost <= B.

    Raises:
        SizeLimitException: If n exceeds MAX_BRUTE_FORCE_N.
    """
    n = oracle.n
    _check_size(n, MAX_BRUTE_FORCE_N, "Exact optimization")
    if model.item_costs is not None and len(model.item_costs) != n:
        raise ParameterException(
            f"Cost model has {len(model.item_costs)} item costs for {n} elements"
        )

    best_value = -np.inf
    best_members: list[int] = []
    enumerated = 0
    count = 0
    for members in _feasible_subsets(n, model):
        value = oracle.evaluate(members)
        enumerated += 1
        if value > best_value:
            best_value, best_members = value, list(members)
        if threshold is not None and meets_threshold(
            value, threshold, oracle.resolution
        ):
            count += 1

    return BruteForceResult(
        opt_value=float(best_value),
        opt_witness=best_members,
        enumerated=enumerated,
        threshold=threshold,
        feasible_count_at_threshold=count if threshold is not None else None,
    )


def _mask_members(mask: int, n: int) -> list[int]:
    return [i for i in range(n) if mask >> i & 1]


def submodularity_ratio(
    oracle: ObjectiveOracle, n: int | None = None
) -> SubmodularityReport:
    """Exact submodularity ratio by enumerating every subset.

    For each v, the smallest gain over subsets A of B is found for all B at
    once with a subset-minimum pass over the bitmask lattice. Pairs with a
    zero denominator are skipped.

    Raises:
        SizeLimitException: If n exceeds MAX_RATIO_N.
    """
    n = oracle.n if n is None else n
    if n != oracle.n:
        raise ParameterException(f"n = {n} differs from the oracle's {oracle.n}")
    _check_size(n, MAX_RATIO_N, "Submodularity ratio enumeration")

    size = 1 << n
    masks = np.arange(size)
    values = np.array(
        [oracle.evaluate(_mask_members(mask, n)) for mask in range(size)],
        dtype=np.float64,
    )
    if oracle.resolution is not None:
        values = np.rint(values * oracle.resolution)
    subset_sizes = np.array([mask.bit_count() for mask in range(size)])

    alpha = np.inf
    witness: tuple[int, int, int] | None = None
    pairs = 0
    for v in range(n):
        bit = 1 << v
        outside = masks[(masks & bit) == 0]
        gains = np.full(size, np.nan)
        gains[outside] = values[outside | bit] - values[outside]

        smallest = gains.copy()
        argmin = masks.copy()
        for i in range(n):
            if i == v:
                continue
            b = 1 << i
            holders = masks[(masks & b) != 0]
            dropped = holders ^ b
            better = smallest[dropped] < smallest[holders]
            smallest[holders[better]] = smallest[dropped[better]]
            argmin[holders[better]] = argmin[dropped[better]]

        denominators = gains[outside]
        positive = outside[denominators > 0]
        pairs += int(np.sum(2 ** subset_sizes[positive]))
        if not positive.size:
            continue
        ratios = smallest[positive] / gains[positive]
        best = int(np.argmin(ratios))
        if ratios[best] < alpha:
            alpha = float(ratios[best])
            witness = (int(argmin[positive[best]]), int(positive[best]), v)

    if witness is None:
        return SubmodularityReport(alpha_f=1.0, witness=None, pairs_examined=0)
    a_mask, b_mask, v = witness
    return SubmodularityReport(
        alpha_f=alpha,
        witness=RatioWitness(
            A=_mask_members(a_mask, n), B=_mask_members(b_mask, n), v=v
        ),
        pairs_examined=pairs,
    )


def _alpha(oracle: ObjectiveOracle) -> float:
    if oracle.certified_submodular:
        return 1.0
    return submodularity_ratio(oracle).alpha_f


def _at_least(value: float, bound: float) -> bool:
    return value >= bound - VALUE_TOLERANCE * max(1.0, abs(bound))


def theorem1_check(
    oracle: ObjectiveOracle,
    model: CostModel,
    m: int,
    trials: int,
    seed: int,
    mu: int = 5,
) -> GuaranteeReport:
    """Check f(P_i) >= (1 - (1 - alpha/B)^(B-m)) * f(OPT) over DGS runs.

    alpha is 1 for certified submodular objectives and enumerated otherwise.
    """
    if model.kind != CostKind.UNIFORM:
        raise ParameterException("The DGS guarantee applies to uniform constraints")
    _check_size(oracle.n, MAX_GUARANTEE_N, "Guarantee checking")
    model = model.with_margin(m)
    alpha = _alpha(oracle)
    opt = brute_force_opt(oracle, model)
    factor = uniform_guarantee(model.budget, m, alpha)
    bound = factor * opt.opt_value

    min_ratio = np.inf
    checked = 0
    violations = 0
    for trial in range(trials):
        pop, _ = dgs(oracle, model, mu, seed + trial)
        for value in pop.values(oracle):
            checked += 1
            if opt.opt_value > 0:
                min_ratio = min(min_ratio, value / opt.opt_value)
            if not _at_least(value, bound):
                violations += 1
                logger.error(
                    "DGS guarantee violated: f(P_i)=%s < %s * f(OPT)=%s",
                    value,
                    factor,
                    bound,
                )

    return GuaranteeReport(
        algorithm="DGS",
        alpha_f=alpha,
        opt_value=opt.opt_value,
        factor=factor,
        bound=bound,
        trials=trials,
        solutions_checked=checked,
        min_ratio=float(min_ratio) if np.isfinite(min_ratio) else 1.0,
        violations=violations,
    )


def knapsack_guarantee_check(
    oracle: ObjectiveOracle,
    model: CostModel,
    trials: int,
    seed: int,
    mu: int = 5,
) -> GuaranteeReport:
    """Check f(P_i) >= knapsack_guarantee(B, m, |S|, alpha) * f(OPT) over GDGS runs.

    The bound is guaranteed for m = 0 only; with a margin the optimum may use
    elements the greedy phase could never afford, so the report is marked
    not guaranteed.
    """
    if model.kind != CostKind.KNAPSACK:
        raise ParameterException("The GDGS guarantee applies to knapsack constraints")
    _check_size(oracle.n, MAX_GUARANTEE_N, "Guarantee checking")
    alpha = _alpha(oracle)
    opt = brute_force_opt(oracle, model)

    min_ratio = np.inf
    checked = 0
    violations = 0
    factor = 1.0
    bound = 0.0
    for trial in range(trials):
        pop, trace = gdgs(oracle, model, mu, seed + trial)
        factor = knapsack_guarantee(
            model.budget, model.margin, len(trace.insertion_order), alpha
        )
        bound = factor * opt.opt_value
        for value in pop.values(oracle):
            checked += 1
            if opt.opt_value > 0:
                min_ratio = min(min_ratio, value / opt.opt_value)
            if not _at_least(value, bound):
                violations += 1

    guaranteed = model.margin == 0
    if violations and guaranteed:
        logger.error("GDGS guarantee violated in %s solutions", violations)
    return GuaranteeReport(
        algorithm="GDGS",
        alpha_f=alpha,
        opt_value=opt.opt_value,
        factor=factor,
        bound=bound,
        trials=trials,
        solutions_checked=checked,
        min_ratio=float(min_ratio) if np.isfinite(min_ratio) else 1.0,
        violations=violations if guaranteed else 0,
        guaranteed=guaranteed,
    )


def theorem2_check(
    oracle: ObjectiveOracle,
    model: CostModel,
    trials: int,
    seed: int,
    mu: int = 5,
) -> CountReport:
    """Count feasible sets with f >= f(S) against the DGS counting bound."""
    if model.kind != CostKind.UNIFORM:
        raise ParameterException(
            "The DGS counting bound applies to uniform constraints"
        )
    n = oracle.n
    budget, margin = int(model.budget), int(model.margin)
    bound, _ = dgs_solution_count_bound(n, budget, margin)

    counts: dict[float, int] = {}
    violations = 0
    for trial in range(trials):
        _, trace = dgs(oracle, model, mu, seed + trial)
        level = trace.core_solution.evaluate(oracle)
        if level not in counts:
            result = brute_force_opt(oracle, model, threshold=level)
            counts[level] = result.feasible_count_at_threshold or 0
        if counts[level] < bound:
            violations += 1
            logger.error(
                "DGS counting bound violated: %s sets reach f(S)=%s, bound %s",
                counts[level],
                level,
                bound,
            )

    return CountReport(
        algorithm="DGS",
        bound=bound,
        min_count=min(counts.values()) if counts else None,
        trials=trials,
        violations=violations,
    )


def gdgs_count_check(
    oracle: ObjectiveOracle,
    model: CostModel,
    trials: int,
    seed: int,
    mu: int = 5,
) -> CountReport:
    """Count feasible sets with f >= f(T) against the GDGS counting bound.

    Degenerate runs are skipped.
    """
    if model.kind != CostKind.KNAPSACK:
        raise ParameterException(
            "The GDGS counting bound applies to knapsack constraints"
        )
    bound = gdgs_solution_count_bound(
        oracle.n, model.budget, model.margin, model.c_min, model.c_max
    )

    counts: dict[float, int] = {}
    violations = 0
    skipped = 0
    for trial in range(trials):
        _, trace = gdgs(oracle, model, mu, seed + trial)
        if trace.degenerate:
            skipped += 1
            continue
        level = trace.core_solution.evaluate(oracle)
        if level not in counts:
            result = brute_force_opt(oracle, model, threshold=level)
            counts[level] = result.feasible_count_at_threshold or 0
        if counts[level] < bound:
            violations += 1
            logger.error(
                "GDGS counting bound violated: %s sets reach f(T)=%s, bound %s",
                counts[level],
                level,
                bound,
            )

    return CountReport(
        algorithm="GDGS",
        bound=bound,
        min_count=min(counts.values()) if counts else None,
        trials=trials,
        violations=violations,
        skipped=skipped,
    )
