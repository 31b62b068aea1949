"""Tests for divgreedy core module."""

import pickle

import msgspec
import numpy as np
import pytest

from divgreedy.core import (
    CostKind,
    CostModel,
    GroundSet,
    InfeasiblePopulationException,
    InstanceException,
    ParameterException,
    Population,
    Solution,
    cost,
    is_feasible,
)
from divgreedy.problems import OneMax
from tests.conftest import SquaredSize


class TestGroundSet:
    """Test GroundSet struct."""

    def test_membership(self) -> None:
        """Test that only indices 0..n-1 belong to the ground set."""
        ground = GroundSet(4)
        assert 0 in ground
        assert 3 in ground
        assert 4 not in ground
        assert -1 not in ground

    def test_empty_ground_set_rejected(self) -> None:
        """Test that n < 1 raises ParameterException."""
        with pytest.raises(ParameterException):
            GroundSet(0)

    def test_validate_out_of_range(self) -> None:
        """Test that validate rejects an invalid member."""
        with pytest.raises(ParameterException, match="outside the ground set"):
            GroundSet(3).validate([0, 5])


class TestSolution:
    """Test Solution value and caching behaviour."""

    def test_members_are_a_set(self) -> None:
        """Test that duplicate members collapse."""
        solution = Solution([3, 1, 3])
        assert len(solution) == 2
        assert solution.sorted_members() == [1, 3]

    def test_evaluate_caches_per_oracle(self) -> None:
        """Test that the cached value is reused and invalidated by mutation."""
        oracle = OneMax(5)
        solution = Solution([0, 1])
        assert solution.evaluate(oracle) == 2.0
        assert solution.cached_value == 2.0
        solution.add(4)
        assert solution.cached_value is None
        assert solution.evaluate(oracle) == 3.0

    def test_cache_is_keyed_by_oracle(self) -> None:
        """Test that a different oracle triggers a fresh evaluation."""
        first, second = OneMax(5), OneMax(5)
        solution = Solution([0])
        solution.evaluate(first)
        solution.discard(0)
        solution.add(1)
        assert solution.evaluate(second) == 1.0

    def test_symmetric_difference_leaves_original(self) -> None:
        """Test that flipping returns a new solution."""
        parent = Solution([0, 1])
        child = parent.symmetric_difference([1, 2])
        assert parent.sorted_members() == [0, 1]
        assert child.sorted_members() == [0, 2]

    def test_equality_by_members(self) -> None:
        """Test that solutions compare by their members."""
        assert Solution([1, 2]) == Solution([2, 1])
        assert Solution([1]) != Solution([2])

    def test_unhashable(self) -> None:
        """Test that mutable solutions cannot be hashed."""
        with pytest.raises(TypeError):
            hash(Solution([1]))

    def test_copy_is_independent(self) -> None:
        """Test that copies do not share members."""
        original = Solution([0])
        clone = original.copy()
        clone.add(1)
        assert original.sorted_members() == [0]


class TestPopulation:
    """Test Population occurrence counting."""

    def test_counts_track_appends_and_pops(self) -> None:
        """Test that occurrence counts follow insertions and removals."""
        pop = Population(4, 2, [Solution([0, 1]), Solution([1, 2])])
        assert pop.occurrence_counts.tolist() == [1, 2, 1, 0]
        removed = pop.pop(0)
        assert removed.sorted_members() == [0, 1]
        assert pop.occurrence_counts.tolist() == [0, 1, 1, 0]
        assert pop.counts_consistent()

    def test_duplicates_allowed(self) -> None:
        """Test that the population is a multiset."""
        pop = Population(3, 2, [Solution([0]), Solution([0])])
        assert len(pop) == 2
        assert pop.occurrence_counts[0] == 2

    def test_pop_out_of_range(self) -> None:
        """Test that an invalid index raises IndexError."""
        pop = Population(3, 1, [Solution([0])])
        with pytest.raises(IndexError):
            pop.pop(3)

    def test_append_validates_members(self) -> None:
        """Test that members outside the ground set are rejected."""
        pop = Population(3, 1)
        with pytest.raises(ParameterException):
            pop.append(Solution([7]))

    def test_invalid_mu(self) -> None:
        """Test that mu < 1 is rejected."""
        with pytest.raises(ParameterException):
            Population(3, 0)

    def test_copy_does_not_share_state(self) -> None:
        """Test that a copied population is independent."""
        pop = Population(3, 1, [Solution([0])])
        clone = pop.copy()
        clone.pop(0)
        assert len(pop) == 1
        assert pop.occurrence_counts[0] == 1


class TestCostModel:
    """Test CostModel construction and feasibility."""

    def test_uniform_cost_is_cardinality(self) -> None:
        """Test that uniform cost counts members."""
        model = CostModel.uniform(3, 1)
        assert cost(model, Solution([0, 4, 7])) == 3.0
        assert is_feasible(model, Solution([0, 4, 7]))
        assert not is_feasible(model, Solution([0, 4, 7, 8]))

    def test_knapsack_cost_sums_items(self) -> None:
        """Test that knapsack cost sums the item costs."""
        model = CostModel.knapsack([1, 2, 3], 4)
        assert cost(model, Solution([0, 2])) == 4.0
        assert is_feasible(model, Solution([0, 2]))
        assert not is_feasible(model, Solution([1, 2]))

    def test_slack(self) -> None:
        """Test feasibility against B - slack."""
        model = CostModel.uniform(3)
        assert is_feasible(model, Solution([0, 1]), slack=1)
        assert not is_feasible(model, Solution([0, 1, 2]), slack=1)

    def test_slack_out_of_range(self) -> None:
        """Test that slack outside [0, B] is rejected."""
        with pytest.raises(ParameterException):
            is_feasible(CostModel.uniform(3), Solution(), slack=4)

    @pytest.mark.parametrize(
        ("budget", "margin"),
        [(0, 0), (3, 4), (3, -1)],
    )
    def test_invalid_budget_or_margin(self, budget: float, margin: float) -> None:
        """Test that B <= 0 or m outside [0, B] raises ParameterException."""
        with pytest.raises(ParameterException):
            CostModel.uniform(budget, margin)

    def test_knapsack_needs_positive_costs(self) -> None:
        """Test that zero item costs are rejected."""
        with pytest.raises(ParameterException, match="positive"):
            CostModel.knapsack([1, 0], 3)

    def test_properties(self) -> None:
        """Test c_min, c_max, greedy_limit and integrality."""
        model = CostModel.knapsack([2, 5, 3], 10, 4)
        assert model.kind == CostKind.KNAPSACK
        assert model.c_min == 2.0
        assert model.c_max == 5.0
        assert model.greedy_limit == 6.0
        assert model.integral
        assert not CostModel.knapsack([0.5], 1.0).integral

    def test_with_margin(self) -> None:
        """Test that with_margin keeps the item costs."""
        model = CostModel.knapsack([1, 2], 5).with_margin(2)
        assert model.margin == 2
        assert model.item_costs == (1.0, 2.0)

    def test_fractional_costs_use_tolerance(self) -> None:
        """Test that rounding noise does not make a set infeasible."""
        model = CostModel.knapsack([0.1, 0.2], 0.3)
        assert is_feasible(model, Solution([0, 1]))

    def test_integrality_computed_once(self) -> None:
        """Test that integrality is cached without touching equality or encoding."""
        model = CostModel.knapsack([2, 5, 3], 10, 4)
        assert "integral" not in model.__dict__
        assert model.integral
        assert model.__dict__["integral"] is True
        assert pickle.loads(pickle.dumps(model)) == model
        assert model == CostModel.knapsack([2, 5, 3], 10, 4)
        assert "integral" not in msgspec.json.decode(msgspec.json.encode(model))

    def test_knapsack_cost_is_additive(self, rng: np.random.Generator) -> None:
        """Test c(A | B) = c(A) + c(B) for disjoint A and B."""
        for _ in range(500):
            n = int(rng.integers(2, 30))
            costs = rng.uniform(0.1, 10.0, size=n).tolist()
            model = CostModel.knapsack(costs, sum(costs))
            labels = rng.integers(0, 3, size=n)
            a = Solution(np.flatnonzero(labels == 0).tolist())
            b = Solution(np.flatnonzero(labels == 1).tolist())
            union = Solution(a.members | b.members)
            assert cost(model, union) == pytest.approx(
                cost(model, a) + cost(model, b), rel=1e-12, abs=1e-12
            )
            assert cost(model, Solution()) == 0.0


class TestExceptions:
    """Test exception payloads."""

    def test_infeasible_population_index_survives_pickling(self) -> None:
        """Test that the offending index crosses process boundaries."""
        error = pickle.loads(pickle.dumps(InfeasiblePopulationException("bad", 3)))
        assert error.index == 3
        assert str(error) == "bad"

    def test_instance_exception_fields_survive_pickling(self) -> None:
        """Test that path and line number are kept."""
        error = pickle.loads(
            pickle.dumps(InstanceException("broken", "g.txt", line_number=7))
        )
        assert error.path == "g.txt"
        assert error.line_number == 7

    def test_parameter_exception_is_value_error(self) -> None:
        """Test that invalid parameters are ValueErrors."""
        assert issubclass(ParameterException, ValueError)


class TestMarginalGains:
    """Test the default marginal gain fallback."""

    def test_default_matches_evaluate(self) -> None:
        """Test that gains equal differences of evaluations."""
        oracle = SquaredSize(4)
        gains = oracle.marginal_gains({0, 1}, [1, 2, 3])
        np.testing.assert_array_equal(gains, [0.0, 5.0, 5.0])
