"""Ground sets, solutions, populations and the oracle/cost abstractions."""

import math
from abc import ABC, abstractmethod
from collections.abc import Collection, Iterable, Iterator, Sequence
from enum import Enum
from functools import cached_property

import msgspec
import numpy as np

# ==============================================================================
# Exceptions
# ==============================================================================


class DivGreedyException(Exception):
    """Base exception class for divgreedy.

    Parameters
    ----------
    message : str
        Exception message
    """

    def __init__(self, message):
        super().__init__(message)


class ParameterException(DivGreedyException, ValueError):
    """Exception raised when an algorithm or model parameter is invalid.

    Parameters
    ----------
    message : str
        Exception message
    """

    def __init__(self, message):
        super().__init__(message)


class InfeasiblePopulationException(ParameterException):
    """Exception raised when a starting population violates threshold or budget.

    Parameters
    ----------
    message : str
        Exception message
    index : int
        Position of the offending solution in the population

    Attributes
    ----------
    index : int
        Position of the offending solution in the population
    """

    def __init__(self, message, index: int):
        super().__init__(message)
        self.index = index

    def __reduce__(self):
        return (type(self), (self.args[0], self.index))


class InstanceException(DivGreedyException):
    """Exception raised when an instance file cannot be read or parsed.

    Parameters
    ----------
    message : str
        Exception message
    path : str | None
        Path of the instance file
    line_number : int | None
        1-based line number of the malformed line, if any

    Attributes
    ----------
    path : str | None
        Path of the instance file
    line_number : int | None
        1-based line number of the malformed line, if any
    """

    def __init__(
        self, message, path: str | None = None, line_number: int | None = None
    ):
        super().__init__(message)
        self.path = path
        self.line_number = line_number

    def __reduce__(self):
        return (type(self), (self.args[0], self.path, self.line_number))


class SizeLimitException(DivGreedyException):
    """Exception raised when an exhaustive computation exceeds its size cap.

    Parameters
    ----------
    message : str
        Exception message
    """

    def __init__(self, message):
        super().__init__(message)


class InvariantViolationException(DivGreedyException):
    """Exception raised when an asserted algorithmic property does not hold.

    Parameters
    ----------
    message : str
        Exception message
    """

    def __init__(self, message):
        super().__init__(message)


# ==============================================================================
# Ground set and solutions
# ==============================================================================


class GroundSet(msgspec.Struct, frozen=True):
    """The ground set V, identified by dense indices 0..n-1.

    Attributes
    ----------
    n : int
        Number of elements
    """

    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ParameterException(
                f"Ground set needs at least one element, got {self.n}"
            )

    def __contains__(self, element: object) -> bool:
        return isinstance(element, int | np.integer) and 0 <= element < self.n

    def validate(self, members: Iterable[int]) -> None:
        """Check that every member is a valid element index.

        Raises:
            ParameterException: If a member is outside 0..n-1.
        """
        for v in members:
            if not 0 <= v < self.n:
                raise ParameterException(
                    f"Element {v} is outside the ground set 0..{self.n - 1}"
                )


class Solution:
    """A subset of the ground set with cached objective value and cost.

    The caches remember which oracle or cost model produced them and are
    cleared by every mutation of the members.
    """

    __slots__ = ("_members", "_value", "_value_source", "_cost", "_cost_source")

    def __init__(self, members: Iterable[int] = ()) -> None:
        self._members: set[int] = {int(v) for v in members}
        self._value: float | None = None
        self._value_source: object | None = None
        self._cost: float | None = None
        self._cost_source: object | None = None

    @property
    def members(self) -> frozenset[int]:
        return frozenset(self._members)

    @property
    def cached_value(self) -> float | None:
        return self._value

    @property
    def cached_cost(self) -> float | None:
        return self._cost

    def _invalidate(self) -> None:
        self._value = None
        self._value_source = None
        self._cost = None
        self._cost_source = None

    def add(self, element: int) -> None:
        self._members.add(int(element))
        self._invalidate()

    def discard(self, element: int) -> None:
        self._members.discard(int(element))
        self._invalidate()

    def update(self, elements: Iterable[int]) -> None:
        self._members.update(int(v) for v in elements)
        self._invalidate()

    def symmetric_difference(self, elements: Iterable[int]) -> "Solution":
        """Return a new solution with the membership of `elements` flipped."""
        return Solution(self._members.symmetric_difference(int(v) for v in elements))

    def evaluate(self, oracle: "ObjectiveOracle") -> float:
        """Return f(members), evaluating the oracle only on a cache miss."""
        if self._value is None or self._value_source is not oracle:
            self._value = float(oracle.evaluate(self._members))
            self._value_source = oracle
        return self._value

    def cost_under(self, model: "CostModel") -> float:
        """Return the cost of the members under `model`, cached."""
        if self._cost is None or self._cost_source is not model:
            self._cost = model.cost_of(self._members)
            self._cost_source = model
        return self._cost

    def indices(self) -> np.ndarray:
        return np.fromiter(self._members, dtype=np.intp, count=len(self._members))

    def sorted_members(self) -> list[int]:
        return sorted(self._members)

    def copy(self) -> "Solution":
        clone = Solution()
        clone._members = set(self._members)
        clone._value = self._value
        clone._value_source = self._value_source
        clone._cost = self._cost
        clone._cost_source = self._cost_source
        return clone

    def __len__(self) -> int:
        return len(self._members)

    def __iter__(self) -> Iterator[int]:
        return iter(self._members)

    def __contains__(self, element: object) -> bool:
        return element in self._members

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Solution):
            return NotImplemented
        return self._members == other._members

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Solution({self.sorted_members()})"


class Population:
    """Ordered multiset of solutions with per-element occurrence counts.

    `occurrence_counts[i]` is the number of solutions containing element i.
    A working population may temporarily hold mu + 1 solutions between an
    insertion and the following removal.

    Attributes
    ----------
    n : int
        Ground set size
    mu : int
        Target population size
    solutions : list[Solution]
        The solutions, duplicates permitted
    occurrence_counts : np.ndarray
        Integer array of length n
    """

    def __init__(self, n: int, mu: int, solutions: Iterable[Solution] = ()) -> None:
        if mu < 1:
            raise ParameterException(f"Population size mu must be >= 1, got {mu}")
        self.ground_set = GroundSet(n)
        self.n = n
        self.mu = mu
        self.solutions: list[Solution] = []
        self.occurrence_counts = np.zeros(n, dtype=np.int64)
        for solution in solutions:
            self.append(solution)

    def append(self, solution: Solution) -> None:
        self.ground_set.validate(solution)
        self.solutions.append(solution)
        self.occurrence_counts[solution.indices()] += 1

    def pop(self, index: int) -> Solution:
        if not -len(self.solutions) <= index < len(self.solutions):
            raise IndexError(
                f"Solution index {index} out of range for population of "
                f"size {len(self.solutions)}"
            )
        solution = self.solutions.pop(index)
        self.occurrence_counts[solution.indices()] -= 1
        return solution

    def recount(self) -> np.ndarray:
        """Count occurrences from scratch."""
        counts = np.zeros(self.n, dtype=np.int64)
        for solution in self.solutions:
            counts[solution.indices()] += 1
        return counts

    def counts_consistent(self) -> bool:
        return bool(np.array_equal(self.occurrence_counts, self.recount()))

    def copy(self) -> "Population":
        return Population(self.n, self.mu, (s.copy() for s in self.solutions))

    def values(self, oracle: "ObjectiveOracle") -> list[float]:
        return [s.evaluate(oracle) for s in self.solutions]

    def __len__(self) -> int:
        return len(self.solutions)

    def __iter__(self) -> Iterator[Solution]:
        return iter(self.solutions)

    def __getitem__(self, index: int) -> Solution:
        return self.solutions[index]


# ==============================================================================
# Objective oracles
# ==============================================================================


class ObjectiveOracle(ABC):
    """Evaluation interface for monotone set functions f: 2^V -> R+.

    Implementations are immutable after construction and deterministic for a
    fixed construction seed, so one instance can serve concurrent runs.

    Attributes
    ----------
    name : str
        Human-readable objective name
    resolution : int | None
        Values are integer multiples of 1/resolution (1 for integral
        objectives); None for general real values
    certified_submodular : bool
        Whether the implementation is submodular by construction
    """

    name: str = "objective"
    resolution: int | None = None
    certified_submodular: bool = False

    def __init__(self, n: int) -> None:
        self.ground_set = GroundSet(n)

    @property
    def n(self) -> int:
        return self.ground_set.n

    @abstractmethod
    def evaluate(self, members: Collection[int]) -> float:
        """Return f(members)."""

    def marginal_gains(
        self, members: Collection[int], candidates: Sequence[int]
    ) -> np.ndarray:
        """Return f(members + {v}) - f(members) for every candidate v.

        Subclasses override this with a vectorized computation.
        """
        current = set(members)
        base = self.evaluate(current)
        return np.array(
            [self.evaluate(current | {int(v)}) - base for v in candidates],
            dtype=np.float64,
        )

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, n={self.n})"


# ==============================================================================
# Cost models
# ==============================================================================

# Relative tolerance for feasibility checks on non-integral costs
COST_TOLERANCE = 1e-9


class CostKind(str, Enum):
    """Enumeration of cost models.

    Attributes
    ----------
    UNIFORM : str
        c(X) = |X|
    KNAPSACK : str
        c(X) = sum of per-element costs
    """

    UNIFORM = "uniform"
    KNAPSACK = "knapsack"


class CostModel(msgspec.Struct, frozen=True, dict=True):
    """Additive cost with budget B and margin m.

    Attributes
    ----------
    kind : CostKind
        Uniform or knapsack
    budget : float
        Constraint bound B
    margin : float
        Budget m held back from the greedy phase, 0 <= m <= B
    item_costs : tuple[float, ...] | None
        Per-element costs c(v) > 0 (knapsack only)
    """

    kind: CostKind
    budget: float
    margin: float = 0.0
    item_costs: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.budget > 0:
            raise ParameterException(f"Budget must be positive, got {self.budget}")
        if not 0 <= self.margin <= self.budget:
            raise ParameterException(
                f"Margin must satisfy 0 <= m <= B, got m={self.margin}, "
                f"B={self.budget}"
            )
        if self.kind == CostKind.KNAPSACK:
            if not self.item_costs:
                raise ParameterException("Knapsack cost model needs item costs")
            if any(not c > 0 for c in self.item_costs):
                raise ParameterException("Knapsack item costs must be positive")
        elif self.item_costs is not None:
            raise ParameterException("Uniform cost model takes no item costs")

    @classmethod
    def uniform(cls, budget: float, margin: float = 0.0) -> "CostModel":
        return cls(kind=CostKind.UNIFORM, budget=budget, margin=margin)

    @classmethod
    def knapsack(
        cls, costs: Iterable[float], budget: float, margin: float = 0.0
    ) -> "CostModel":
        return cls(
            kind=CostKind.KNAPSACK,
            budget=budget,
            margin=margin,
            item_costs=tuple(float(c) for c in costs),
        )

    def with_margin(self, margin: float) -> "CostModel":
        return msgspec.structs.replace(self, margin=margin)

    @property
    def c_min(self) -> float:
        return min(self.item_costs) if self.item_costs else 1.0

    @property
    def c_max(self) -> float:
        return max(self.item_costs) if self.item_costs else 1.0

    @cached_property
    def integral(self) -> bool:
        """Whether budget, margin and all costs are whole numbers."""
        values = [self.budget, self.margin, *(self.item_costs or ())]
        return all(float(v).is_integer() for v in values)

    @property
    def greedy_limit(self) -> float:
        """Budget available to the greedy phase, B - m."""
        return self.budget - self.margin

    def item_cost(self, element: int) -> float:
        if self.item_costs is None:
            return 1.0
        return self.item_costs[element]

    def cost_of(self, members: Collection[int]) -> float:
        if self.item_costs is None:
            return float(len(members))
        costs = self.item_costs
        return math.fsum(costs[v] for v in members)

    def fits(self, total: float, limit: float) -> bool:
        """Compare a cost against a limit, exactly for integral models."""
        if self.integral:
            return total <= limit
        return total <= limit + COST_TOLERANCE * max(1.0, abs(limit))


def cost(model: CostModel, x: Solution) -> float:
    """Return c(x): |x| for uniform models, the sum of item costs otherwise."""
    return x.cost_under(model)


def is_feasible(model: CostModel, x: Solution, slack: float = 0.0) -> bool:
    """Return whether cost(x) <= B - slack.

    Raises:
        ParameterException: If slack is negative or exceeds the budget.
    """
    if not 0 <= slack <= model.budget:
        raise ParameterException(
            f"Slack must satisfy 0 <= slack <= B, got {slack} with B={model.budget}"
        )
    return model.fits(cost(model, x), model.budget - slack)
