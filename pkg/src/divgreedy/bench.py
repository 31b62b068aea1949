"""Experiment grid runner.

Every (B, m, mu, repetition) cell runs the greedy sampler matching the
constraint, sets f_min to the population's minimum value and starts DIVEA
from that population. Runs are distributed over a process pool and merged in
a fixed order, so parallelism never changes the output.
"""

import asyncio
import csv
import hashlib
import time
from collections import defaultdict
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path
from typing import TextIO

import msgspec
import numpy as np

from . import logger
from .config import (
    Algorithm,
    CascadeParams,
    GraphFormat,
    ProblemKind,
    decode_config_file,
)
from .core import CostKind, ObjectiveOracle, ParameterException
from .diversity import dgs_entropy_upper_bound, entropy
from .evo import ENTROPY_TOLERANCE, DiveaConfig, divea, threshold_of
from .greedy import dgs, gdgs
from .oracle import meets_threshold
from .problems import Graph, build_cost_model, build_oracle, ingest_graph

CSV_COLUMNS = (
    "problem",
    "constraint",
    "B",
    "m",
    "mu",
    "seed",
    "algorithm",
    "threshold",
    "entropy",
    "accepted_iters",
    "wall_time_ms",
    "flags",
)

_ALGORITHM_RANK = {
    Algorithm.DGS.value: 0,
    Algorithm.GDGS.value: 1,
    Algorithm.DIVEA.value: 2,
}


# ==============================================================================
# Grid definition
# ==============================================================================


class ExperimentGrid(msgspec.Struct, frozen=True):
    """A full factorial experiment.

    Attributes
    ----------
    problem : ProblemKind
        Objective to optimize
    constraint : CostKind
        Uniform (DGS) or knapsack (GDGS)
    budgets, margins, population_sizes : list
        Values of B, m and mu; every combination is run
    repetitions : int
        Seeds per cell. Defaults to 30
    base_seed : int
        Root of the per-run seed derivation; also the cascade sample seed
    instance : str | None
        Graph file; OneMax may use `n` instead
    n : int | None
        OneMax ground set size without an instance
    graph_format : GraphFormat
        Format of the instance file
    run_divea : bool
        Whether to follow every greedy run with DIVEA
    divea : DiveaConfig
        DIVEA settings; f_min and seed are set per run
    cascade : CascadeParams
        Independent cascade settings for influence problems
    """

    problem: ProblemKind
    constraint: CostKind
    budgets: list[float]
    margins: list[float]
    population_sizes: list[int]
    repetitions: int = 30
    base_seed: int = 0
    instance: str | None = None
    n: int | None = None
    graph_format: GraphFormat = GraphFormat.AUTO
    run_divea: bool = True
    divea: DiveaConfig = msgspec.field(default_factory=DiveaConfig)
    cascade: CascadeParams = msgspec.field(default_factory=CascadeParams)

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ParameterException(
                f"repetitions must be >= 1, got {self.repetitions}"
            )
        if not (self.budgets and self.margins and self.population_sizes):
            raise ParameterException("Grid needs at least one B, m and mu value")
        for mu in self.population_sizes:
            if mu < 1:
                raise ParameterException(f"Grid cell mu={mu}: mu must be >= 1")
        for budget in self.budgets:
            for margin in self.margins:
                if not 0 <= margin <= budget or budget <= 0:
                    raise ParameterException(
                        f"Grid cell B={budget}, m={margin}: need 0 <= m <= B and B > 0"
                    )
                if self.constraint == CostKind.UNIFORM and not (
                    float(budget).is_integer() and float(margin).is_integer()
                ):
                    raise ParameterException(
                        f"Grid cell B={budget}, m={margin}: uniform constraints "
                        "need integers"
                    )

    def cells(self) -> list[tuple[float, float, int]]:
        return [
            (float(budget), float(margin), mu)
            for budget in self.budgets
            for margin in self.margins
            for mu in self.population_sizes
        ]


# Large mu cells on frb30 still improve after 10^5 iterations
PRESET_T_MAX = 300_000

# DIVEA runs whose last entropy gain comes after this share of t_max get
# flagged as still improving
STILL_IMPROVING_FRACTION = 0.9
FLAG_STILL_IMPROVING = "still_improving"


def _uniform_preset(
    problem: ProblemKind, budgets: list[float], **kwargs
) -> ExperimentGrid:
    return ExperimentGrid(
        problem=problem,
        constraint=CostKind.UNIFORM,
        budgets=budgets,
        margins=[2, 5, 8],
        population_sizes=[5, 10, 15, 20],
        divea=DiveaConfig(t_max=PRESET_T_MAX),
        **kwargs,
    )


def _knapsack_preset(problem: ProblemKind) -> ExperimentGrid:
    return ExperimentGrid(
        problem=problem,
        constraint=CostKind.KNAPSACK,
        budgets=[100],
        margins=[10, 20, 30],
        population_sizes=[5, 10, 15, 20],
        divea=DiveaConfig(t_max=PRESET_T_MAX),
    )


PRESETS: dict[str, ExperimentGrid] = {
    "onemax-uniform": _uniform_preset(ProblemKind.ONEMAX, [10], n=450),
    "coverage-uniform": _uniform_preset(ProblemKind.COVERAGE, [10, 15]),
    "influence-uniform": _uniform_preset(ProblemKind.INFLUENCE, [10]),
    "coverage-knapsack": _knapsack_preset(ProblemKind.COVERAGE),
    "influence-knapsack": _knapsack_preset(ProblemKind.INFLUENCE),
}


def load_grid(path: str | Path) -> ExperimentGrid:
    """Read an ExperimentGrid from a YAML or JSON file.

    Raises:
        ValueError: If the file is unreadable or invalid.
    """
    return decode_config_file(path, ExperimentGrid)


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from JSON-encodable parts.

    The first 8 bytes of BLAKE2b over the JSON encoding of the parts, read
    big endian with the top bit cleared.
    """
    digest = hashlib.blake2b(msgspec.json.encode(list(parts)), digest_size=8).digest()
    return int.from_bytes(digest, "big") & 0x7FFF_FFFF_FFFF_FFFF


# ==============================================================================
# Records
# ==============================================================================


class RunRecord(msgspec.Struct, frozen=True):
    """One algorithm's result on one seeded cell, in CSV column order."""

    problem: str
    constraint: str
    B: float
    m: float
    mu: int
    seed: int
    algorithm: str
    threshold: float
    entropy: float
    accepted_iters: int
    wall_time_ms: int
    flags: list[str] = []
    last_improvement: int = 0

    def sort_key(self) -> tuple:
        return (self.seed, _ALGORITHM_RANK.get(self.algorithm, len(_ALGORITHM_RANK)))

    def reproducible_view(self) -> tuple:
        """All fields except the measured wall time."""
        fields = msgspec.structs.astuple(self)
        return fields[:10] + fields[11:]


class RunResult(msgspec.Struct):
    records: list[RunRecord]
    checks: dict[str, bool]


class InstanceKey(msgspec.Struct, frozen=True):
    problem: ProblemKind
    instance: str | None
    n: int | None
    graph_format: GraphFormat
    cascade: CascadeParams
    evaluation_seed: int


class RunTask(msgspec.Struct, frozen=True):
    key: InstanceKey
    constraint: CostKind
    B: float
    m: float
    mu: int
    seed: int
    run_divea: bool
    divea: DiveaConfig


@lru_cache(maxsize=4)
def _load_instance(key: InstanceKey) -> tuple[Graph | None, ObjectiveOracle]:
    graph = None
    if key.instance is not None:
        graph = ingest_graph(
            key.instance,
            key.graph_format,
            symmetrize=key.cascade.symmetrize,
            default_probability=key.cascade.probability,
        )
    oracle = build_oracle(
        key.problem,
        graph=graph,
        n=key.n,
        cascade=key.cascade,
        evaluation_seed=key.evaluation_seed,
    )
    return graph, oracle


def _elapsed_ms(start: int) -> int:
    return (time.perf_counter_ns() - start) // 1_000_000


def _format_number(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else f"{value:.6f}"


def run_task(task: RunTask) -> RunResult:
    """Run one seeded cell: the greedy sampler, then DIVEA from its population."""
    graph, oracle = _load_instance(task.key)
    model = build_cost_model(oracle, task.constraint, task.B, task.m, graph)
    uniform = task.constraint == CostKind.UNIFORM
    sampler, algorithm = (dgs, Algorithm.DGS) if uniform else (gdgs, Algorithm.GDGS)
    base = {
        "problem": task.key.problem.value,
        "constraint": task.constraint.value,
        "B": task.B,
        "m": task.m,
        "mu": task.mu,
        "seed": task.seed,
    }
    checks: dict[str, bool] = {}

    start = time.perf_counter_ns()
    pop, trace = sampler(oracle, model, task.mu, task.seed)
    threshold = threshold_of(pop, oracle)
    greedy_entropy = entropy(pop)
    records = [
        RunRecord(
            **base,
            algorithm=algorithm.value,
            threshold=threshold,
            entropy=greedy_entropy,
            accepted_iters=0,
            wall_time_ms=_elapsed_ms(start),
            flags=list(trace.degenerate_flags),
        )
    ]
    checks["budget"] = all(model.fits(s.cost_under(model), model.budget) for s in pop)
    if uniform and oracle.n >= task.B:
        ceiling = dgs_entropy_upper_bound(oracle.n, task.B, task.m)
        checks["entropy_ceiling"] = greedy_entropy <= ceiling + ENTROPY_TOLERANCE

    if task.run_divea:
        config = msgspec.structs.replace(
            task.divea,
            f_min=threshold,
            seed=derive_seed(task.seed, Algorithm.DIVEA.value),
        )
        start = time.perf_counter_ns()
        result = divea(pop, oracle, model, config)
        final = result.population
        divea_threshold = threshold_of(final, oracle)
        divea_entropy = entropy(final)
        flags: list[str] = []
        if result.last_improvement > STILL_IMPROVING_FRACTION * config.t_max:
            flags.append(FLAG_STILL_IMPROVING)
        records.append(
            RunRecord(
                **base,
                algorithm=Algorithm.DIVEA.value,
                threshold=divea_threshold,
                entropy=divea_entropy,
                accepted_iters=result.accepted,
                wall_time_ms=_elapsed_ms(start),
                flags=flags,
                last_improvement=result.last_improvement,
            )
        )
        checks["budget"] = checks["budget"] and all(
            model.fits(s.cost_under(model), model.budget) for s in final
        )
        checks["pairing_threshold"] = meets_threshold(
            divea_threshold, threshold, oracle.resolution
        )
        checks["pairing_entropy"] = divea_entropy >= greedy_entropy - ENTROPY_TOLERANCE

    failed = [name for name, passed in checks.items() if not passed]
    if failed:
        logger.error(
            "Run checks failed for %s B=%s m=%s mu=%s seed=%s: %s",
            task.key.problem.value,
            task.B,
            task.m,
            task.mu,
            task.seed,
            ", ".join(failed),
        )
    return RunResult(records=records, checks=checks)


def build_tasks(grid: ExperimentGrid) -> list[RunTask]:
    """Expand a grid into seeded tasks.

    Raises:
        ParameterException: If the problem needs an instance the grid lacks.
    """
    if grid.instance is None and not (
        grid.problem == ProblemKind.ONEMAX and grid.n is not None
    ):
        raise ParameterException(
            f"Grid for {grid.problem.value} needs an instance file"
            + (" or n" if grid.problem == ProblemKind.ONEMAX else "")
        )
    key = InstanceKey(
        problem=grid.problem,
        instance=grid.instance,
        n=grid.n,
        graph_format=grid.graph_format,
        cascade=grid.cascade,
        evaluation_seed=grid.base_seed,
    )
    tasks = []
    for budget, margin, mu in grid.cells():
        for repetition in range(grid.repetitions):
            seed = derive_seed(
                grid.base_seed,
                grid.problem.value,
                grid.constraint.value,
                budget,
                margin,
                mu,
                repetition,
            )
            tasks.append(
                RunTask(
                    key=key,
                    constraint=grid.constraint,
                    B=budget,
                    m=margin,
                    mu=mu,
                    seed=seed,
                    run_divea=grid.run_divea,
                    divea=grid.divea,
                )
            )
    return tasks


# ==============================================================================
# Aggregation
# ==============================================================================


class CellAggregate(msgspec.Struct):
    """Mean and sample standard deviation of one (cell, algorithm) group."""

    problem: str
    constraint: str
    B: float
    m: float
    mu: int
    algorithm: str
    samples: int
    threshold_mean: float
    threshold_std: float
    entropy_mean: float
    entropy_std: float
    accepted_mean: float
    flags: list[str] = []
    last_improvement_mean: float = 0.0
    last_improvement_max: int = 0


class CheckTally(msgspec.Struct):
    passed: int = 0
    failed: int = 0


class GridSummary(msgspec.Struct):
    """JSON summary of a grid run."""

    grid: ExperimentGrid
    cells: list[CellAggregate]
    checks: dict[str, CheckTally]
    total_runs: int
    wall_time_s: float

    @property
    def checks_passed(self) -> bool:
        return all(tally.failed == 0 for tally in self.checks.values())


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    array = np.asarray(values, dtype=np.float64)
    if len(array) < 2:
        return float(array.mean()), 0.0
    return float(array.mean()), float(array.std(ddof=1))


def _cell_key(record: RunRecord) -> tuple:
    return (
        record.problem,
        record.constraint,
        record.B,
        record.m,
        record.mu,
        _ALGORITHM_RANK.get(record.algorithm, len(_ALGORITHM_RANK)),
        record.algorithm,
    )


def aggregate(
    records: Iterable[RunRecord],
    expected: Iterable[tuple[float, float, int]] | None = None,
) -> list[CellAggregate]:
    """Group records by cell and algorithm into means and sample stds.

    Args:
        records: Run records.
        expected: (B, m, mu) cells that should be present; missing ones are
            reported with a warning.

    Returns:
        Aggregates ordered by problem, constraint, B, m, mu and algorithm.
    """
    groups: dict[tuple, list[RunRecord]] = defaultdict(list)
    for record in records:
        groups[_cell_key(record)].append(record)

    if expected is not None:
        present = {(key[2], key[3], key[4]) for key in groups}
        for cell in expected:
            if cell not in present:
                logger.warning(
                    "No records for cell B=%s m=%s mu=%s; excluded", *cell
                )

    cells = []
    for key in sorted(groups):
        group = groups[key]
        threshold_mean, threshold_std = _mean_std([r.threshold for r in group])
        entropy_mean, entropy_std = _mean_std([r.entropy for r in group])
        improvements = [r.last_improvement for r in group]
        flags = sorted({flag for r in group for flag in r.flags})
        if len(group) == 1:
            flags.append("single_sample")
        cells.append(
            CellAggregate(
                problem=key[0],
                constraint=key[1],
                B=key[2],
                m=key[3],
                mu=key[4],
                algorithm=key[6],
                samples=len(group),
                threshold_mean=threshold_mean,
                threshold_std=threshold_std,
                entropy_mean=entropy_mean,
                entropy_std=entropy_std,
                accepted_mean=float(np.mean([r.accepted_iters for r in group])),
                flags=flags,
                last_improvement_mean=float(np.mean(improvements)),
                last_improvement_max=max(improvements),
            )
        )
    return cells


def render_table(cells: Sequence[CellAggregate]) -> str:
    """Text table with threshold, greedy entropy and DIVEA entropy per cell.

    Means and standard deviations are rounded to four decimals.
    """
    rows: dict[tuple, dict[str, CellAggregate]] = defaultdict(dict)
    for cell in cells:
        key = (cell.problem, cell.constraint, cell.B, cell.m, cell.mu)
        rows[key][cell.algorithm] = cell

    header = [
        "problem",
        "constraint",
        "B",
        "m",
        "mu",
        "greedy",
        "threshold",
        "std",
        "greedy H",
        "std",
        "DIVEA H",
        "std",
    ]
    lines = [header]
    for key in sorted(rows):
        by_algorithm = rows[key]
        greedy = by_algorithm.get(Algorithm.DGS.value) or by_algorithm.get(
            Algorithm.GDGS.value
        )
        evolved = by_algorithm.get(Algorithm.DIVEA.value)
        line = [
            key[0],
            key[1],
            _format_number(key[2]),
            _format_number(key[3]),
            str(key[4]),
        ]
        if greedy is not None:
            line += [
                greedy.algorithm,
                f"{greedy.threshold_mean:.4f}",
                f"{greedy.threshold_std:.4f}",
                f"{greedy.entropy_mean:.4f}",
                f"{greedy.entropy_std:.4f}",
            ]
        else:
            line += ["-"] * 5
        if evolved is not None:
            line += [f"{evolved.entropy_mean:.4f}", f"{evolved.entropy_std:.4f}"]
        else:
            line += ["-", "-"]
        lines.append(line)

    widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
    return "\n".join(
        "  ".join(value.rjust(width) for value, width in zip(row, widths, strict=True))
        for row in lines
    )


# ==============================================================================
# Output
# ==============================================================================


def write_csv(records: Iterable[RunRecord], sink: TextIO) -> None:
    """Write records in CSV_COLUMNS order with six-decimal floats."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.problem,
                r.constraint,
                f"{r.B:.6f}",
                f"{r.m:.6f}",
                r.mu,
                r.seed,
                r.algorithm,
                f"{r.threshold:.6f}",
                f"{r.entropy:.6f}",
                r.accepted_iters,
                r.wall_time_ms,
                ";".join(r.flags),
            ]
        )


def _tally(results: Iterable[RunResult]) -> dict[str, CheckTally]:
    tallies: dict[str, CheckTally] = {}
    for result in results:
        for name, passed in result.checks.items():
            tally = tallies.setdefault(name, CheckTally())
            if passed:
                tally.passed += 1
            else:
                tally.failed += 1
    return dict(sorted(tallies.items()))


# ==============================================================================
# Execution
# ==============================================================================


async def run_grid_async(
    grid: ExperimentGrid, workers: int | None = None
) -> tuple[list[RunRecord], GridSummary]:
    """Run every task of a grid and aggregate the results.

    Args:
        grid: The experiment grid.
        workers: Process count; None uses every CPU, 1 or less runs the
            tasks one after another in a worker thread.

    Returns:
        Records sorted by seed then algorithm, and the summary.

    Raises:
        InstanceException: If the instance cannot be read.
        ParameterException: If the grid is incomplete.
    """
    tasks = build_tasks(grid)
    if grid.instance is not None:
        # Fail fast on a bad instance before any worker starts
        _load_instance(tasks[0].key)

    started = time.perf_counter()
    results: list[RunResult] = []
    total = len(tasks)
    logger.info("Running %s tasks over %s cells", total, len(grid.cells()))

    if workers is not None and workers <= 1:
        for done, task in enumerate(tasks, start=1):
            results.append(await asyncio.to_thread(run_task, task))
            logger.info("Finished run %s/%s", done, total)
    else:
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [loop.run_in_executor(pool, run_task, task) for task in tasks]
            for done, future in enumerate(asyncio.as_completed(futures), start=1):
                results.append(await future)
                logger.info("Finished run %s/%s", done, total)

    records = sorted(
        (record for result in results for record in result.records),
        key=RunRecord.sort_key,
    )
    summary = GridSummary(
        grid=grid,
        cells=aggregate(records, expected=grid.cells()),
        checks=_tally(results),
        total_runs=len(records),
        wall_time_s=round(time.perf_counter() - started, 3),
    )
    for name, tally in summary.checks.items():
        if tally.failed:
            logger.error("Check %s failed in %s runs", name, tally.failed)
    return records, summary


def write_outputs(
    records: Sequence[RunRecord],
    summary: GridSummary,
    csv_path: str | Path | None = None,
    summary_path: str | Path | None = None,
) -> None:
    if csv_path is not None:
        with open(csv_path, "w", newline="") as f:
            write_csv(records, f)
    if summary_path is not None:
        encoded = msgspec.json.encode(summary)
        Path(summary_path).write_bytes(msgspec.json.format(encoded))


def run_grid(
    grid: ExperimentGrid,
    csv_path: str | Path | None = None,
    summary_path: str | Path | None = None,
    workers: int | None = None,
) -> GridSummary:
    """Synchronous wrapper around run_grid_async that also writes the outputs."""
    records, summary = asyncio.run(run_grid_async(grid, workers))
    write_outputs(records, summary, csv_path, summary_path)
    return summary

