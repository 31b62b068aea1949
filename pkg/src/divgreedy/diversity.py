"""Entropy diversity measure for populations.

H(P) = -sum_i p(v_i) * log2 p(v_i), where p(v_i) is the fraction of the mu
solutions containing element v_i. Elements contained in no solution or in
every solution contribute nothing.
"""

import math

import numpy as np

from .core import ParameterException, Population, Solution

# Largest contribution of a single element: -p*log2(p) peaks at p = 1/e
ENTROPY_TERM_MAX = math.log2(math.e) / math.e

# Incremental updates between two from-scratch recomputations
REFRESH_INTERVAL = 4096


def entropy_terms(counts: np.ndarray, mu: int) -> np.ndarray:
    """Return -p*log2(p) per element for p = counts / mu, with 0*log2(0) = 0.

    Counts above mu (a working population of mu + 1) are allowed and give
    negative terms; they cancel when the matching solution is removed.
    """
    counts = np.asarray(counts)
    p = counts / mu
    terms = np.zeros(p.shape, dtype=np.float64)
    present = counts > 0
    terms[present] = -p[present] * np.log2(p[present])
    return terms


def term_table(mu: int, max_count: int) -> np.ndarray:
    """Per-count entropy terms for counts 0..max_count."""
    return entropy_terms(np.arange(max_count + 1), mu)


def entropy(pop: Population) -> float:
    """Return H(P) in bits, computed from scratch."""
    return float(np.sum(entropy_terms(pop.occurrence_counts, pop.mu)))


class EntropyState:
    """Incrementally maintained entropy of a population.

    The value is a running sum of per-count terms from a lookup table, so
    adding or removing a solution touches only its members. A from-scratch
    refresh happens every REFRESH_INTERVAL updates to bound drift.

    Attributes
    ----------
    population : Population
        The tracked population; mutate it only through this state
    mu : int
        Denominator for the fractions p(v_i)
    """

    def __init__(self, population: Population) -> None:
        self.population = population
        self.mu = population.mu
        max_count = max(self.mu + 1, int(population.occurrence_counts.max(initial=0)))
        self._table = term_table(self.mu, max_count)
        self._value = 0.0
        self._updates = 0
        self.refresh()

    @property
    def value(self) -> float:
        return self._value

    @property
    def counts(self) -> np.ndarray:
        return self.population.occurrence_counts

    def refresh(self) -> None:
        self._value = float(np.sum(self._table[self.counts]))
        self._updates = 0

    def _tick(self) -> None:
        self._updates += 1
        if self._updates >= REFRESH_INTERVAL:
            self.refresh()

    def add(self, solution: Solution) -> None:
        """Append a solution to the population and update the entropy."""
        if len(self.population) > self.mu:
            raise ParameterException(
                f"Working population already holds {len(self.population)} "
                f"solutions (mu={self.mu})"
            )
        self.population.append(solution)
        after = self.counts[solution.indices()]
        self._value += float(np.sum(self._table[after] - self._table[after - 1]))
        self._tick()

    def remove(self, index: int) -> Solution:
        """Remove the solution at `index` and update the entropy."""
        solution = self.population.pop(index)
        after = self.counts[solution.indices()]
        self._value += float(np.sum(self._table[after] - self._table[after + 1]))
        self._tick()
        return solution

    def without(self, index: int) -> float:
        """Entropy after removing the solution at `index`, without mutating."""
        if not 0 <= index < len(self.population):
            raise IndexError(
                f"Solution index {index} out of range for population of "
                f"size {len(self.population)}"
            )
        before = self.counts[self.population[index].indices()]
        return self._value - float(
            np.sum(self._table[before] - self._table[before - 1])
        )


def entropy_without(pop: Population, index_of_removed: int) -> float:
    """Return H(P without one solution) with denominator mu, leaving pop intact.

    Raises:
        IndexError: If index_of_removed is out of range.
    """
    return EntropyState(pop).without(index_of_removed)


def dgs_entropy_upper_bound(n: int, B: float, m: float) -> float:
    """Ceiling on the entropy of any DGS population: -m*log2(m/(n-B+m)).

    The B-m greedy elements are shared by every solution and contribute
    nothing; the remaining occurrences spread over n-B+m elements.
    """
    if m == 0:
        return 0.0
    if not 0 < m <= B <= n:
        raise ParameterException(
            f"Entropy bound needs 0 < m <= B <= n, got n={n}, B={B}, m={m}"
        )
    return -m * math.log2(m / (n - B + m))


def onemax_max_entropy(n: int, B: int, mu: int) -> float:
    """Entropy of the equal-distribution OneMax population, -B*log2(B/n).

    Every element appears in a fraction B/n of the solutions; the value does
    not depend on mu.
    """
    if n < 1 or not 1 <= B <= n:
        raise ParameterException(
            f"OneMax entropy needs n >= 1 and 1 <= B <= n, got n={n}, B={B}"
        )
    return -B * math.log2(B / n)


def balanced_entropy(n: int, occurrences: int, mu: int) -> float:
    """Largest entropy of `occurrences` member slots spread over n elements.

    By concavity of -p*log2(p) the optimum has occurrence counts that differ
    by at most one.
    """
    if mu < 1 or n < 1:
        raise ParameterException(f"Need n >= 1 and mu >= 1, got n={n}, mu={mu}")
    if not 0 <= occurrences <= n * mu:
        raise ParameterException(
            f"Cannot place {occurrences} occurrences on {n} elements with mu={mu}"
        )
    q, r = divmod(occurrences, n)
    low, high = entropy_terms(np.array([q, q + 1]), mu)
    return float(r * high + (n - r) * low)


def uniform_entropy_target(n: int, B: int, mu: int) -> float:
    """Entropy optimum for mu solutions of exactly B elements each.

    Equals B*log2(mu) whenever mu*B <= n.
    """
    return balanced_entropy(n, min(mu * B, n * mu), mu)
