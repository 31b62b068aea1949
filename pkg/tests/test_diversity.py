"""Tests for divgreedy diversity module."""

import math

import numpy as np
import pytest

from divgreedy.core import ParameterException, Population, Solution
from divgreedy.diversity import (
    ENTROPY_TERM_MAX,
    EntropyState,
    balanced_entropy,
    dgs_entropy_upper_bound,
    entropy,
    entropy_terms,
    entropy_without,
    onemax_max_entropy,
    uniform_entropy_target,
)


def random_population(
    rng: np.random.Generator, n: int, mu: int, size: int
) -> Population:
    return Population(
        n,
        mu,
        (Solution(rng.choice(n, size=size, replace=False)) for _ in range(mu)),
    )


class TestEntropy:
    """Test from-scratch entropy computation."""

    def test_single_half_term(self) -> None:
        """Test p = (1, 0.5, 0) gives H = 0.5."""
        pop = Population(3, 2, [Solution([0]), Solution([0, 1])])
        assert entropy(pop) == pytest.approx(0.5)

    def test_identical_solutions_have_zero_entropy(self) -> None:
        """Test that elements present everywhere contribute nothing."""
        pop = Population(5, 4, [Solution([1, 2]) for _ in range(4)])
        assert entropy(pop) == 0.0

    def test_disjoint_solutions(self) -> None:
        """Test mu disjoint B-sets give B*log2(mu)."""
        pop = Population(
            12, 4, [Solution(range(3 * i, 3 * i + 3)) for i in range(4)]
        )
        assert entropy(pop) == pytest.approx(3 * math.log2(4))

    def test_term_is_zero_for_absent_elements(self) -> None:
        """Test that 0*log2(0) is treated as 0."""
        terms = entropy_terms(np.array([0, 2, 4]), 4)
        assert terms[0] == 0.0
        assert terms[1] == pytest.approx(0.5)
        assert terms[2] == 0.0

    def test_term_ceiling(self) -> None:
        """Test that no term exceeds the peak at p = 1/e."""
        terms = entropy_terms(np.arange(0, 101), 100)
        assert terms.max() <= ENTROPY_TERM_MAX


class TestEntropyState:
    """Test incremental entropy maintenance."""

    def test_matches_recompute_through_updates(self, rng: np.random.Generator) -> None:
        """Test that add/remove keep the running sum equal to a recompute."""
        pop = random_population(rng, 20, 6, 4)
        state = EntropyState(pop)
        for _ in range(200):
            state.add(Solution(rng.choice(20, size=4, replace=False)))
            state.remove(int(rng.integers(0, len(pop))))
            assert state.value == pytest.approx(entropy(pop), abs=1e-12)
        assert len(pop) == 6

    def test_add_beyond_working_size(self) -> None:
        """Test that only one extra solution may be held."""
        state = EntropyState(Population(3, 1, [Solution([0])]))
        state.add(Solution([1]))
        with pytest.raises(ParameterException):
            state.add(Solution([2]))

    def test_without_leaves_population_intact(self, rng: np.random.Generator) -> None:
        """Test that without() does not mutate the population."""
        pop = random_population(rng, 10, 5, 3)
        state = EntropyState(pop)
        counts = pop.occurrence_counts.copy()
        state.without(2)
        np.testing.assert_array_equal(pop.occurrence_counts, counts)
        assert len(pop) == 5


class TestEntropyWithout:
    """Test entropy_without against from-scratch recomputation."""

    def test_matches_recompute(self, rng: np.random.Generator) -> None:
        """Test agreement within 1e-12 over 10^4 random removals."""
        removals = 0
        while removals < 10_000:
            n = int(rng.integers(2, 30))
            mu = int(rng.integers(1, 15))
            size = int(rng.integers(1, n + 1))
            pop = random_population(rng, n, mu, size)
            # Working population of mu + 1 solutions
            pop.append(Solution(rng.choice(n, size=size, replace=False)))
            for index in range(len(pop)):
                expected_pop = pop.copy()
                expected_pop.pop(index)
                assert entropy_without(pop, index) == pytest.approx(
                    entropy(expected_pop), abs=1e-12
                )
                removals += 1

    @pytest.mark.parametrize("index", [-1, 3])
    def test_invalid_index(self, index: int) -> None:
        """Test that an out-of-range index raises IndexError."""
        pop = Population(4, 3, [Solution([0]), Solution([1]), Solution([2])])
        with pytest.raises(IndexError):
            entropy_without(pop, index)


class TestBounds:
    """Test analytic entropy bounds and targets."""

    def test_dgs_bound_zero_margin(self) -> None:
        """Test that m = 0 leaves no room for diversity."""
        assert dgs_entropy_upper_bound(450, 10, 0) == 0.0

    def test_dgs_bound_value(self) -> None:
        """Test -m*log2(m/(n-B+m)) on a small case."""
        assert dgs_entropy_upper_bound(10, 4, 2) == pytest.approx(-2 * math.log2(2 / 8))

    def test_dgs_bound_invalid(self) -> None:
        """Test that m > B is rejected."""
        with pytest.raises(ParameterException):
            dgs_entropy_upper_bound(10, 2, 3)

    def test_onemax_max_entropy(self) -> None:
        """Test -B*log2(B/n)."""
        expected = -10 * math.log2(10 / 450)
        assert onemax_max_entropy(450, 10, 15) == pytest.approx(expected)

    @pytest.mark.parametrize(
        ("mu", "expected"),
        [(5, 23.2193), (10, 33.2193), (15, 39.0689), (20, 43.2193)],
    )
    def test_uniform_target(self, mu: int, expected: float) -> None:
        """Test the coverage optima for n=450, B=10."""
        assert uniform_entropy_target(450, 10, mu) == pytest.approx(expected, abs=1e-4)

    def test_balanced_entropy_saturated(self) -> None:
        """Test that counts equal to mu everywhere give zero entropy."""
        assert balanced_entropy(4, 12, 3) == 0.0

    def test_balanced_entropy_too_many_occurrences(self) -> None:
        """Test that more occurrences than n*mu are rejected."""
        with pytest.raises(ParameterException):
            balanced_entropy(4, 13, 3)


class TestEntropyProperties:
    """Test symmetry, concavity and the ceiling on random populations."""

    def test_invariant_under_order_and_relabeling(
        self, rng: np.random.Generator
    ) -> None:
        """Test that shuffling solutions or renaming elements keeps H(P)."""
        for _ in range(300):
            n = int(rng.integers(3, 25))
            mu = int(rng.integers(1, 12))
            pop = random_population(rng, n, mu, int(rng.integers(1, n + 1)))
            expected = entropy(pop)
            solutions = list(pop)
            order = rng.permutation(mu)
            shuffled = Population(n, mu, (solutions[i] for i in order))
            labels = rng.permutation(n)
            relabeled = Population(
                n, mu, (Solution(labels[s.indices()]) for s in solutions)
            )
            assert entropy(shuffled) == pytest.approx(expected, abs=1e-12)
            assert entropy(relabeled) == pytest.approx(expected, abs=1e-12)

    def test_moving_occurrence_to_rarer_element(self, rng: np.random.Generator) -> None:
        """Test that counts (a, b) -> (a-1, b+1) with a >= b+2 never lower H(P)."""
        moves = 0
        for _ in range(1000):
            n = int(rng.integers(4, 16))
            mu = int(rng.integers(2, 12))
            pop = random_population(rng, n, mu, int(rng.integers(1, n)))
            counts = pop.occurrence_counts
            pairs = [
                (u, v)
                for u in range(n)
                for v in range(n)
                if counts[u] >= counts[v] + 2
            ]
            if not pairs:
                continue
            u, v = pairs[int(rng.integers(0, len(pairs)))]
            solutions = list(pop)
            index = next(
                i
                for i, s in enumerate(solutions)
                if u in s.members and v not in s.members
            )
            moved = Solution((solutions[index].members - {u}) | {v})
            solutions[index] = moved
            after = Population(n, mu, solutions)
            assert after.occurrence_counts[u] == counts[u] - 1
            assert after.occurrence_counts[v] == counts[v] + 1
            assert entropy(after) >= entropy(pop) - 1e-12
            moves += 1
        assert moves > 500

    def test_population_entropy_ceiling(self, rng: np.random.Generator) -> None:
        """Test H(P) <= 0.5307*n for populations with varying solution sizes."""
        for _ in range(2000):
            n = int(rng.integers(1, 40))
            mu = int(rng.integers(1, 30))
            solutions = [
                Solution(np.flatnonzero(rng.random(n) < rng.random()).tolist())
                for _ in range(mu)
            ]
            pop = Population(n, mu, solutions)
            assert entropy(pop) <= ENTROPY_TERM_MAX * n + 1e-12
        assert ENTROPY_TERM_MAX == pytest.approx(0.5307, abs=1e-4)
