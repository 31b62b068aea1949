"""Benchmark objectives, graph ingestion and cost models."""

from collections.abc import Collection, Iterable, Sequence
from pathlib import Path

import msgspec
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, shortest_path

from . import logger
from .config import CascadeParams, GraphFormat, ProblemKind
from .core import (
    CostKind,
    CostModel,
    InstanceException,
    ObjectiveOracle,
    ParameterException,
    Solution,
)

# Candidates per vectorized gain block in the cascade evaluator
GAIN_CHUNK = 256


# ==============================================================================
# Graphs
# ==============================================================================


class GraphMetadata(msgspec.Struct):
    """Ingestion report of a graph.

    Attributes
    ----------
    num_vertices : int
        Number of vertices after ingestion
    undirected_edges : int
        Distinct unordered vertex pairs
    arcs : int
        Directed arcs after cleanup and symmetrization
    self_loops_dropped : int
        Self-loops removed during cleanup
    duplicates_collapsed : int
        Repeated edges removed during cleanup
    symmetrized : bool
        Whether reverse arcs were added
    declared_vertices : int | None
        Vertex count from the file header, if any
    declared_edges : int | None
        Edge count from the file header, if any
    labels : list[str] | None
        Original vertex labels by dense index, None when labels are the
        indices themselves (or 1-based DIMACS ids)
    source : str | None
        Path the graph was read from
    """

    num_vertices: int
    undirected_edges: int = 0
    arcs: int = 0
    self_loops_dropped: int = 0
    duplicates_collapsed: int = 0
    symmetrized: bool = False
    declared_vertices: int | None = None
    declared_edges: int | None = None
    labels: list[str] | None = None
    source: str | None = None


class Graph:
    """Directed graph with per-arc activation probabilities.

    Arcs are stored as parallel numpy arrays. Self-loops and repeated edges
    are removed on construction. With `undirected=True`, (u, v) and (v, u)
    count as the same edge.

    Attributes
    ----------
    num_vertices : int
        Number of vertices
    sources, targets : np.ndarray
        Arc endpoints
    probabilities : np.ndarray
        Activation probability of each arc
    edges : np.ndarray
        Distinct unordered pairs (u, v) with u < v, shape (k, 2)
    metadata : GraphMetadata
        Ingestion report
    """

    def __init__(
        self,
        num_vertices: int,
        arcs: Iterable[tuple[int, int]],
        probabilities: Sequence[float] | float = 0.05,
        *,
        undirected: bool = False,
        symmetrize: bool = False,
        metadata: GraphMetadata | None = None,
    ) -> None:
        if num_vertices < 1:
            raise ParameterException(
                f"Graph needs at least one vertex, got {num_vertices}"
            )
        arc_list = [(int(u), int(v)) for u, v in arcs]
        if isinstance(probabilities, int | float):
            probs = [float(probabilities)] * len(arc_list)
        else:
            probs = [float(p) for p in probabilities]
        if len(probs) != len(arc_list):
            raise ParameterException(
                f"Got {len(probs)} probabilities for {len(arc_list)} arcs"
            )

        kept: dict[tuple[int, int], float] = {}
        seen_edges: set[tuple[int, int]] = set()
        self_loops = 0
        duplicates = 0
        for (u, v), p in zip(arc_list, probs, strict=True):
            if not (0 <= u < num_vertices and 0 <= v < num_vertices):
                raise ParameterException(
                    f"Arc ({u}, {v}) is outside vertices 0..{num_vertices - 1}"
                )
            if not 0.0 <= p <= 1.0:
                raise ParameterException(
                    f"Arc ({u}, {v}) has probability {p} outside [0, 1]"
                )
            if u == v:
                self_loops += 1
                continue
            key = (min(u, v), max(u, v)) if undirected else (u, v)
            if key in seen_edges:
                duplicates += 1
                continue
            seen_edges.add(key)
            kept[(u, v)] = p

        if symmetrize:
            for (u, v), p in list(kept.items()):
                kept.setdefault((v, u), p)

        self.num_vertices = num_vertices
        pairs = np.array(list(kept), dtype=np.intp).reshape(-1, 2)
        self.sources = pairs[:, 0].copy()
        self.targets = pairs[:, 1].copy()
        self.probabilities = np.array(list(kept.values()), dtype=np.float64)
        if len(pairs):
            self.edges = np.unique(np.sort(pairs, axis=1), axis=0)
        else:
            self.edges = pairs

        self.metadata = metadata or GraphMetadata(num_vertices=num_vertices)
        self.metadata.num_vertices = num_vertices
        self.metadata.undirected_edges = len(self.edges)
        self.metadata.arcs = len(self.sources)
        self.metadata.self_loops_dropped = self_loops
        self.metadata.duplicates_collapsed = duplicates
        self.metadata.symmetrized = symmetrize

    @property
    def num_arcs(self) -> int:
        return len(self.sources)

    def out_degrees(self) -> np.ndarray:
        return np.bincount(self.sources, minlength=self.num_vertices)

    def __repr__(self) -> str:
        return f"Graph(num_vertices={self.num_vertices}, arcs={self.num_arcs})"


def _detect_format(lines: list[str]) -> GraphFormat:
    for line in lines:
        tokens = line.split()
        if not tokens or tokens[0] in ("c", "#", "%"):
            continue
        return GraphFormat.DIMACS if tokens[0] in ("p", "e") else GraphFormat.EDGELIST
    return GraphFormat.EDGELIST


def _parse_dimacs(
    lines: list[str], path: str
) -> tuple[int, list[tuple[int, int]], GraphMetadata]:
    num_vertices: int | None = None
    declared_edges: int | None = None
    arcs: list[tuple[int, int]] = []
    for line_number, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens or tokens[0] == "c":
            continue
        try:
            if tokens[0] == "p" and len(tokens) == 4:
                num_vertices, declared_edges = int(tokens[2]), int(tokens[3])
                continue
            if tokens[0] == "e" and len(tokens) == 3:
                if num_vertices is None:
                    raise InstanceException(
                        f"{path}:{line_number}: edge line before the 'p' header",
                        path,
                        line_number,
                    )
                u, v = int(tokens[1]), int(tokens[2])
                if not (1 <= u <= num_vertices and 1 <= v <= num_vertices):
                    raise InstanceException(
                        f"{path}:{line_number}: vertex id outside 1..{num_vertices}",
                        path,
                        line_number,
                    )
                arcs.append((u - 1, v - 1))
                continue
        except ValueError:
            pass
        raise InstanceException(
            f"{path}:{line_number}: malformed line {line.strip()!r}", path, line_number
        )

    if num_vertices is None:
        raise InstanceException(f"{path}: missing 'p edge <n> <m>' header", path)
    metadata = GraphMetadata(
        num_vertices=num_vertices,
        declared_vertices=num_vertices,
        declared_edges=declared_edges,
        source=path,
    )
    return num_vertices, arcs, metadata


def _parse_edgelist(
    lines: list[str], path: str, default_probability: float
) -> tuple[int, list[tuple[int, int]], list[float], GraphMetadata]:
    raw: list[tuple[str, str]] = []
    probabilities: list[float] = []
    for line_number, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens or tokens[0].startswith(("#", "%")):
            continue
        if len(tokens) not in (2, 3):
            raise InstanceException(
                f"{path}:{line_number}: expected '<u> <v> [p]', got {line.strip()!r}",
                path,
                line_number,
            )
        p = default_probability
        if len(tokens) == 3:
            try:
                p = float(tokens[2])
            except ValueError:
                raise InstanceException(
                    f"{path}:{line_number}: invalid probability {tokens[2]!r}",
                    path,
                    line_number,
                ) from None
            if not 0.0 <= p <= 1.0:
                raise InstanceException(
                    f"{path}:{line_number}: probability {p} outside [0, 1]",
                    path,
                    line_number,
                )
        raw.append((tokens[0], tokens[1]))
        probabilities.append(p)

    labels = list(dict.fromkeys(label for pair in raw for label in pair))
    if all(label.lstrip("-").isdigit() for label in labels):
        labels.sort(key=int)
    index = {label: i for i, label in enumerate(labels)}
    identity = labels == [str(i) for i in range(len(labels))]

    metadata = GraphMetadata(
        num_vertices=len(labels),
        labels=None if identity else labels,
        source=path,
    )
    arcs = [(index[u], index[v]) for u, v in raw]
    return len(labels), arcs, probabilities, metadata


def ingest_graph(
    path: str | Path,
    fmt: GraphFormat | str = GraphFormat.AUTO,
    symmetrize: bool = True,
    default_probability: float = 0.05,
) -> Graph:
    """Read a DIMACS or edge-list graph.

    DIMACS files use `c` comments, one `p edge <n> <m>` header and
    `e <u> <v>` lines with 1-based ids. Edge lists hold `<u> <v> [p]` per
    line; the optional third column overrides the default probability.

    Args:
        path: Instance file.
        fmt: File format, detected from the first significant line on auto.
        symmetrize: Add the reverse of every arc.
        default_probability: Probability of arcs without an explicit one.

    Returns:
        The cleaned graph with its ingestion metadata.

    Raises:
        InstanceException: If the file is unreadable or has a malformed line.
    """
    path_str = str(path)
    try:
        lines = Path(path).read_text().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise InstanceException(
            f"Cannot read instance {path_str}: {e}", path_str
        ) from None

    fmt = GraphFormat(fmt)
    if fmt == GraphFormat.AUTO:
        fmt = _detect_format(lines)

    if fmt == GraphFormat.DIMACS:
        n, arcs, metadata = _parse_dimacs(lines, path_str)
        if n < 1:
            raise InstanceException(f"{path_str}: graph has no vertices", path_str)
        graph = Graph(
            n,
            arcs,
            default_probability,
            undirected=True,
            symmetrize=symmetrize,
            metadata=metadata,
        )
    else:
        n, arcs, probabilities, metadata = _parse_edgelist(
            lines, path_str, default_probability
        )
        if n < 1:
            raise InstanceException(f"{path_str}: graph has no edges", path_str)
        graph = Graph(n, arcs, probabilities, symmetrize=symmetrize, metadata=metadata)

    meta = graph.metadata
    if meta.declared_edges is not None and meta.declared_edges != meta.undirected_edges:
        logger.warning(
            "%s: header declares %s edges, found %s distinct edges",
            path_str,
            meta.declared_edges,
            meta.undirected_edges,
        )
    logger.info(
        "Loaded %s: %s vertices, %s edges, %s arcs "
        "(%s self-loops dropped, %s duplicates collapsed)",
        path_str,
        meta.num_vertices,
        meta.undirected_edges,
        meta.arcs,
        meta.self_loops_dropped,
        meta.duplicates_collapsed,
    )
    return graph


# ==============================================================================
# Objectives
# ==============================================================================


def _as_indices(members: Collection[int]) -> np.ndarray:
    return np.fromiter(members, dtype=np.intp, count=len(members))


class CoverageInstance(ObjectiveOracle):
    """Maximum coverage: f(X) = |union of the sets V_i for i in X|.

    Attributes
    ----------
    universe_size : int
        Size of the universe U
    sets : tuple[frozenset[int], ...]
        The sets V_1..V_n
    """

    name = "max-coverage"
    resolution = 1
    certified_submodular = True

    def __init__(self, universe_size: int, sets: Sequence[Iterable[int]]) -> None:
        super().__init__(len(sets))
        if universe_size < 0:
            raise ParameterException(f"Universe size must be >= 0, got {universe_size}")
        self.universe_size = universe_size
        self.sets = tuple(frozenset(int(u) for u in s) for s in sets)
        self._matrix = np.zeros((len(self.sets), universe_size), dtype=bool)
        for i, covered in enumerate(self.sets):
            if any(not 0 <= u < universe_size for u in covered):
                raise ParameterException(
                    f"Set {i} has elements outside the universe 0..{universe_size - 1}"
                )
            self._matrix[i, list(covered)] = True

    @classmethod
    def from_sets(
        cls, universe_size: int, sets: Sequence[Iterable[int]]
    ) -> "CoverageInstance":
        return cls(universe_size, sets)

    @property
    def set_sizes(self) -> np.ndarray:
        return self._matrix.sum(axis=1)

    def covered(self, members: Collection[int]) -> np.ndarray:
        """Boolean mask over U of the elements covered by `members`."""
        return self._matrix[_as_indices(members)].any(axis=0)

    def evaluate(self, members: Collection[int]) -> float:
        return float(np.count_nonzero(self.covered(members)))

    def marginal_gains(
        self, members: Collection[int], candidates: Sequence[int]
    ) -> np.ndarray:
        uncovered = ~self.covered(members)
        rows = self._matrix[np.asarray(candidates, dtype=np.intp)]
        return np.count_nonzero(rows & uncovered, axis=1).astype(np.float64)


class CascadeEvaluator(ObjectiveOracle):
    """Expected independent cascade spread over live-edge samples.

    R live-edge graphs are drawn once from `evaluation_seed`, each arc kept
    with its probability. The spread of X is the mean number of vertices
    reachable from X, so with fixed samples f is a deterministic, monotone
    and submodular function whose values are multiples of 1/R. Identical
    samples share one reachability matrix.

    With `fresh_sampling=True` every evaluation draws new samples. Values
    then vary between calls and the evaluator must not be shared between
    concurrent runs.
    """

    name = "influence-ic"

    def __init__(
        self,
        graph: Graph,
        num_simulations: int = 100,
        evaluation_seed: int = 0,
        fresh_sampling: bool = False,
    ) -> None:
        super().__init__(graph.num_vertices)
        if num_simulations < 1:
            raise ParameterException(
                f"num_simulations must be >= 1, got {num_simulations}"
            )
        self.graph = graph
        self.num_simulations = num_simulations
        self.evaluation_seed = evaluation_seed
        self.fresh_sampling = fresh_sampling
        self.resolution = None if fresh_sampling else num_simulations
        self.certified_submodular = not fresh_sampling
        self._rng = np.random.default_rng(evaluation_seed)

        if fresh_sampling:
            self._reach = np.zeros((0, self.n, self.n), dtype=bool)
            self._weights = np.zeros(0, dtype=np.int64)
            return

        live = self._draw()
        if graph.num_arcs == 0:
            patterns = live[:1]
            inverse = np.zeros(num_simulations, dtype=np.intp)
        else:
            patterns, inverse = np.unique(live, axis=0, return_inverse=True)
        self._weights = np.bincount(inverse.reshape(-1), minlength=len(patterns))
        self._reach = np.stack([self._closure(mask) for mask in patterns])
        logger.debug(
            "Cascade evaluator: %s samples, %s distinct live-edge graphs",
            num_simulations,
            len(patterns),
        )

    @property
    def distinct_samples(self) -> int:
        return len(self._weights)

    def _draw(self) -> np.ndarray:
        shape = (self.num_simulations, self.graph.num_arcs)
        return self._rng.random(shape) < self.graph.probabilities

    def _live_adjacency(self, mask: np.ndarray, size: int) -> csr_matrix:
        g = self.graph
        sources, targets = g.sources[mask], g.targets[mask]
        data = np.ones(len(sources), dtype=np.int8)
        return csr_matrix((data, (sources, targets)), shape=(size, size))

    def _closure(self, mask: np.ndarray) -> np.ndarray:
        """Reachability matrix of one live-edge graph, diagonal included."""
        adjacency = self._live_adjacency(mask, self.n)
        distances = shortest_path(adjacency, directed=True, unweighted=True)
        return np.isfinite(distances)

    def reached(self, members: Collection[int]) -> np.ndarray:
        """Per distinct sample, the boolean mask of vertices reached from X."""
        return self._reach[:, _as_indices(members), :].any(axis=1)

    def _fresh_spread(self, members: Collection[int]) -> float:
        if not members:
            return 0.0
        source = self.n
        total = 0
        for mask in self._draw():
            adjacency = self._live_adjacency(mask, self.n + 1).tolil()
            adjacency[source, _as_indices(members)] = 1
            order = breadth_first_order(
                adjacency.tocsr(), source, directed=True, return_predecessors=False
            )
            total += len(order) - 1
        return total / self.num_simulations

    def evaluate(self, members: Collection[int]) -> float:
        if self.fresh_sampling:
            return self._fresh_spread(members)
        counts = self.reached(members).sum(axis=1)
        return int(counts @ self._weights) / self.num_simulations

    def marginal_gains(
        self, members: Collection[int], candidates: Sequence[int]
    ) -> np.ndarray:
        if self.fresh_sampling:
            return super().marginal_gains(members, candidates)
        missing = ~self.reached(members)
        candidates = np.asarray(candidates, dtype=np.intp)
        gains = np.empty(len(candidates), dtype=np.float64)
        for start in range(0, len(candidates), GAIN_CHUNK):
            block = candidates[start : start + GAIN_CHUNK]
            new = self._reach[:, block, :] & missing[:, None, :]
            counts = new.sum(axis=2)
            gains[start : start + GAIN_CHUNK] = (
                self._weights @ counts
            ) / self.num_simulations
        return gains


class OneMax(ObjectiveOracle):
    """f(X) = |X|."""

    name = "onemax"
    resolution = 1
    certified_submodular = True

    def evaluate(self, members: Collection[int]) -> float:
        return float(len(members))

    def marginal_gains(
        self, members: Collection[int], candidates: Sequence[int]
    ) -> np.ndarray:
        present = set(members)
        return np.array(
            [0.0 if int(v) in present else 1.0 for v in candidates], dtype=np.float64
        )


def coverage_from_graph(g: Graph) -> CoverageInstance:
    """Build V_i = {i} plus the neighbours of i with a higher index."""
    sets: list[set[int]] = [{i} for i in range(g.num_vertices)]
    for u, v in g.edges.tolist():
        sets[u].add(v)
    return CoverageInstance(g.num_vertices, sets)


def coverage_value(inst: CoverageInstance, x: Solution) -> int:
    return int(x.evaluate(inst))


def cascade_spread(evaluator: CascadeEvaluator, x: Solution) -> float:
    return x.evaluate(evaluator)


def onemax(x: Solution) -> int:
    return len(x)


# ==============================================================================
# Cost models
# ==============================================================================


def degree_cost_model(g: Graph, B: float, m: float) -> CostModel:
    """Knapsack model with c(v) = outdegree(v) + 1."""
    return CostModel.knapsack(g.out_degrees() + 1, B, m)


def set_size_cost_model(inst: CoverageInstance, B: float, m: float) -> CostModel:
    """Knapsack model with c(V_i) = |V_i|."""
    sizes = inst.set_sizes
    if np.any(sizes == 0):
        raise ParameterException("Set-size costs need non-empty sets")
    return CostModel.knapsack(sizes, B, m)


def build_oracle(
    problem: ProblemKind,
    *,
    graph: Graph | None = None,
    n: int | None = None,
    cascade: CascadeParams | None = None,
    evaluation_seed: int = 0,
) -> ObjectiveOracle:
    """Build the objective of a benchmark problem.

    Raises:
        ParameterException: If a graph-based problem gets no graph, or
            OneMax gets neither a graph nor n.
    """
    if problem == ProblemKind.ONEMAX:
        size = graph.num_vertices if graph is not None else n
        if size is None:
            raise ParameterException("OneMax needs a graph or a ground set size n")
        return OneMax(size)
    if graph is None:
        raise ParameterException(f"Problem {problem.value} needs a graph instance")
    if problem == ProblemKind.COVERAGE:
        return coverage_from_graph(graph)
    cascade = cascade or CascadeParams()
    return CascadeEvaluator(
        graph,
        num_simulations=cascade.num_simulations,
        evaluation_seed=evaluation_seed,
        fresh_sampling=cascade.fresh_sampling,
    )


def build_cost_model(
    oracle: ObjectiveOracle,
    constraint: CostKind,
    budget: float,
    margin: float,
    graph: Graph | None = None,
) -> CostModel:
    """Cost model of a benchmark configuration.

    Coverage knapsack costs are set sizes and graph problems use outdegree
    plus one. OneMax without a graph gets unit item costs.
    """
    if constraint == CostKind.UNIFORM:
        return CostModel.uniform(budget, margin)
    if isinstance(oracle, CoverageInstance):
        return set_size_cost_model(oracle, budget, margin)
    if graph is not None:
        return degree_cost_model(graph, budget, margin)
    return CostModel.knapsack([1.0] * oracle.n, budget, margin)


def build_problem(
    problem: ProblemKind,
    constraint: CostKind,
    *,
    budget: float,
    margin: float,
    graph: Graph | None = None,
    n: int | None = None,
    cascade: CascadeParams | None = None,
    evaluation_seed: int = 0,
) -> tuple[ObjectiveOracle, CostModel]:
    """Build the objective and cost model of one benchmark configuration."""
    oracle = build_oracle(
        problem, graph=graph, n=n, cascade=cascade, evaluation_seed=evaluation_seed
    )
    return oracle, build_cost_model(oracle, constraint, budget, margin, graph)
