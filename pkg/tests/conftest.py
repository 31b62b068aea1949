"""Pytest configuration and fixtures for divgreedy tests."""

from collections.abc import Collection
from pathlib import Path

import numpy as np
import pytest

from divgreedy.core import ObjectiveOracle
from divgreedy.problems import (
    CoverageInstance,
    Graph,
    coverage_from_graph,
    ingest_graph,
)

DATA_DIR = Path(__file__).parent / "data"
FRB30_PATH = DATA_DIR / "frb30-15-01.clq"


def pytest_collection_modifyitems(
    config: pytest.Config, items: list[pytest.Item]
) -> None:
    """Skip frb30 tests when the benchmark instance is not available."""
    if FRB30_PATH.exists():
        return
    skip = pytest.mark.skip(reason=f"{FRB30_PATH.name} not present in tests/data")
    for item in items:
        if "frb30" in item.keywords:
            item.add_marker(skip)


class SquaredSize(ObjectiveOracle):
    """f(X) = |X|^2, monotone but supermodular."""

    name = "squared-size"
    resolution = 1

    def evaluate(self, members: Collection[int]) -> float:
        return float(len(members) ** 2)


class Modular(ObjectiveOracle):
    """f(X) = sum of fixed weights."""

    name = "modular"
    certified_submodular = True

    def __init__(self, weights: list[float]) -> None:
        super().__init__(len(weights))
        self.weights = weights

    def evaluate(self, members: Collection[int]) -> float:
        return float(sum(self.weights[v] for v in members))


def random_coverage(
    rng: np.random.Generator, n: int, universe_size: int, max_set: int = 4
) -> CoverageInstance:
    """Random coverage instance with non-empty sets."""
    sets = [
        rng.choice(universe_size, size=int(rng.integers(1, max_set + 1)), replace=False)
        for _ in range(n)
    ]
    return CoverageInstance(universe_size, [s.tolist() for s in sets])


@pytest.fixture
def data_dir() -> Path:
    """Fixture providing the directory of instance files."""
    return DATA_DIR


@pytest.fixture
def path3_graph() -> Graph:
    """Fixture providing the path 0-1-2."""
    return ingest_graph(DATA_DIR / "path3.dimacs", symmetrize=True)


@pytest.fixture
def star6_graph() -> Graph:
    """Fixture providing a star with centre 0 and five leaves."""
    return ingest_graph(DATA_DIR / "star6.dimacs", symmetrize=True)


@pytest.fixture
def adversarial_coverage() -> CoverageInstance:
    """Fixture providing the 12-vertex instance where greedy misses the optimum."""
    return coverage_from_graph(ingest_graph(DATA_DIR / "adversarial12.dimacs"))


@pytest.fixture
def frb30_graph() -> Graph:
    """Fixture providing the frb30-15-01 benchmark graph."""
    return ingest_graph(FRB30_PATH, symmetrize=True)


@pytest.fixture
def rng() -> np.random.Generator:
    """Fixture providing a seeded generator for randomized tests."""
    return np.random.default_rng(20240611)
