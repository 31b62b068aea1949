"""Main entry point for divgreedy."""

import argparse
import asyncio
import sys
from typing import TextIO

import msgspec

from . import bench, logger
from .config import (
    Algorithm,
    CascadeParams,
    CliConfig,
    GraphFormat,
    LogLevel,
    ProblemKind,
)
from .core import (
    CostKind,
    DivGreedyException,
    InstanceException,
    InvariantViolationException,
    ParameterException,
    Population,
    SizeLimitException,
)
from .diversity import entropy
from .evo import DiveaConfig, divea, threshold_of
from .greedy import dgs, gdgs
from .oracle import (
    gdgs_count_check,
    knapsack_guarantee_check,
    theorem1_check,
    theorem2_check,
)
from .problems import Graph, build_problem, ingest_graph

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INSTANCE = 3
EXIT_INVARIANT = 4


def _add_problem_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "instance",
        nargs="?",
        default=None,
        help="Graph instance file (DIMACS or edge list)",
    )
    parser.add_argument(
        "--problem",
        choices=[p.value for p in ProblemKind],
        default=ProblemKind.COVERAGE.value,
        help="Objective (default: coverage)",
    )
    parser.add_argument(
        "--constraint",
        choices=[c.value for c in CostKind],
        default=CostKind.UNIFORM.value,
        help="Cost model (default: uniform)",
    )
    parser.add_argument("--B", dest="budget", type=float, default=10.0, help="Budget B")
    parser.add_argument("--m", dest="margin", type=float, default=2.0, help="Margin m")
    parser.add_argument("--mu", type=int, default=5, help="Population size")
    parser.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    parser.add_argument(
        "--n", type=int, default=None, help="OneMax size without an instance"
    )
    _add_graph_arguments(parser)


def _add_graph_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--format",
        dest="graph_format",
        choices=[f.value for f in GraphFormat],
        default=GraphFormat.AUTO.value,
        help="Instance format (default: auto)",
    )
    parser.add_argument(
        "--R", dest="num_simulations", type=int, default=100, help="Live-edge samples"
    )
    parser.add_argument(
        "--p",
        dest="probability",
        type=float,
        default=0.05,
        help="Default arc probability",
    )
    parser.add_argument(
        "--symmetrize",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="Add the reverse of every arc (default: on)",
    )
    parser.add_argument(
        "--fresh-sampling",
        action="store_true",
        help="Draw new live-edge samples on every evaluation",
    )


def setup_argument_parser() -> argparse.ArgumentParser:
    """Set up command line argument parser.

    Returns:
        argparse.ArgumentParser: Configured argument parser.
    """
    parser = argparse.ArgumentParser(
        description="divgreedy - diversifying greedy sampling and DIVEA",
        prog="divgreedy",
    )
    parser.add_argument(
        "--loglevel",
        choices=[level.value for level in LogLevel],
        default=LogLevel.INFO.value,
        help="Log level (default: info)",
    )
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    solve = subparsers.add_parser("solve", help="Sample one population")
    _add_problem_arguments(solve)
    solve.add_argument("--divea", action="store_true", help="Run DIVEA afterwards")
    solve.add_argument("--t-max", type=int, default=10_000, help="DIVEA iterations")
    solve.add_argument("--output", default=None, help="Output file (default: stdout)")

    bench_parser = subparsers.add_parser("bench", help="Run an experiment grid")
    bench_parser.add_argument(
        "instance", nargs="?", default=None, help="Graph instance"
    )
    source = bench_parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--grid", default=None, help="Grid file (YAML or JSON)")
    source.add_argument(
        "--preset", choices=sorted(bench.PRESETS), default=None, help="Built-in grid"
    )
    bench_parser.add_argument("--csv", default=None, help="Per-run CSV output")
    bench_parser.add_argument("--summary", default=None, help="JSON summary output")
    bench_parser.add_argument("--workers", type=int, default=None, help="Processes")
    bench_parser.add_argument("--repetitions", type=int, default=None)
    bench_parser.add_argument("--t-max", type=int, default=None)
    bench_parser.add_argument("--seed", type=int, default=None, help="Base seed")

    oracle_parser = subparsers.add_parser(
        "oracle", help="Check guarantees by enumeration"
    )
    _add_problem_arguments(oracle_parser)
    oracle_parser.add_argument("--trials", type=int, default=20, help="Sampler runs")

    inspect = subparsers.add_parser("inspect", help="Report instance ingestion")
    inspect.add_argument("instance", help="Graph instance file")
    _add_graph_arguments(inspect)

    return parser


def _cascade_params(args: argparse.Namespace) -> CascadeParams:
    return CascadeParams(
        num_simulations=args.num_simulations,
        probability=args.probability,
        symmetrize=args.symmetrize,
        fresh_sampling=args.fresh_sampling,
    )


def _cli_config(args: argparse.Namespace) -> CliConfig:
    return CliConfig(
        subcommand=args.subcommand,
        instance=args.instance,
        problem=ProblemKind(args.problem),
        constraint=CostKind(args.constraint),
        budget=args.budget,
        margin=args.margin,
        mu=args.mu,
        seed=args.seed,
        t_max=getattr(args, "t_max", 10_000),
        divea=getattr(args, "divea", False),
        n=args.n,
        graph_format=GraphFormat(args.graph_format),
        cascade=_cascade_params(args),
        output=getattr(args, "output", None),
        trials=getattr(args, "trials", 20),
    )


def _load_graph(cfg: CliConfig) -> Graph | None:
    if cfg.instance is None:
        return None
    return ingest_graph(
        cfg.instance,
        cfg.graph_format,
        symmetrize=cfg.cascade.symmetrize,
        default_probability=cfg.cascade.probability,
    )


def _write_population(
    sink: TextIO,
    cfg: CliConfig,
    algorithm: str,
    pop: Population,
    threshold: float,
    value: float,
    graph: Graph | None,
) -> None:
    sink.write(f"# problem: {cfg.problem.value}\n")
    sink.write(f"# constraint: {cfg.constraint.value}\n")
    sink.write(f"# algorithm: {algorithm}\n")
    sink.write(f"# threshold: {threshold:.6f}\n")
    sink.write(f"# entropy: {value:.6f}\n")
    sink.write(f"# seed: {cfg.seed}\n")
    if graph is not None and graph.metadata.labels is not None:
        sink.write(f"# labels: {' '.join(graph.metadata.labels)}\n")
    for solution in pop:
        sink.write(" ".join(str(v) for v in solution.sorted_members()) + "\n")


def solve(cfg: CliConfig) -> int:
    """Run the greedy sampler, optionally DIVEA, and write the population."""
    graph = _load_graph(cfg)
    oracle, model = build_problem(
        cfg.problem,
        cfg.constraint,
        budget=cfg.budget,
        margin=cfg.margin,
        graph=graph,
        n=cfg.n,
        cascade=cfg.cascade,
        evaluation_seed=cfg.seed,
    )
    if cfg.constraint == CostKind.UNIFORM:
        pop, _ = dgs(oracle, model, cfg.mu, cfg.seed)
        algorithm = Algorithm.DGS
    else:
        pop, _ = gdgs(oracle, model, cfg.mu, cfg.seed)
        algorithm = Algorithm.GDGS
    threshold = threshold_of(pop, oracle)

    if cfg.divea:
        config = DiveaConfig(
            t_max=cfg.t_max,
            f_min=threshold,
            seed=bench.derive_seed(cfg.seed, Algorithm.DIVEA.value),
        )
        pop = divea(pop, oracle, model, config).population
        algorithm = Algorithm.DIVEA
    value = entropy(pop)
    final_threshold = threshold_of(pop, oracle)

    label = algorithm.value
    if cfg.output is None:
        _write_population(sys.stdout, cfg, label, pop, final_threshold, value, graph)
    else:
        with open(cfg.output, "w") as f:
            _write_population(f, cfg, label, pop, final_threshold, value, graph)
        print(
            f"{label}: {len(pop)} solutions, threshold {final_threshold:.4f}, "
            f"entropy {value:.4f} -> {cfg.output}"
        )
    logger.info(
        "%s finished: threshold %.4f, entropy %.4f", label, final_threshold, value
    )
    return EXIT_OK


async def run_bench(args: argparse.Namespace) -> int:
    """Run a grid from a file or preset and print the aggregate table."""
    grid = bench.load_grid(args.grid) if args.grid else bench.PRESETS[args.preset]
    overrides: dict[str, object] = {}
    if args.instance is not None:
        overrides["instance"] = args.instance
    if args.repetitions is not None:
        overrides["repetitions"] = args.repetitions
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.t_max is not None:
        overrides["divea"] = msgspec.structs.replace(grid.divea, t_max=args.t_max)
    if overrides:
        # Rebuild through the constructor so validation runs again
        fields = msgspec.structs.asdict(grid) | overrides
        grid = bench.ExperimentGrid(**fields)

    records, summary = await bench.run_grid_async(grid, args.workers)
    bench.write_outputs(records, summary, args.csv, args.summary)
    print(bench.render_table(summary.cells))
    return EXIT_OK if summary.checks_passed else EXIT_INVARIANT


def run_oracle(cfg: CliConfig) -> int:
    """Check the sampler guarantees against exhaustive enumeration."""
    graph = _load_graph(cfg)
    oracle, model = build_problem(
        cfg.problem,
        cfg.constraint,
        budget=cfg.budget,
        margin=cfg.margin,
        graph=graph,
        n=cfg.n,
        cascade=cfg.cascade,
        evaluation_seed=cfg.seed,
    )
    if cfg.constraint == CostKind.UNIFORM and model.budget > oracle.n:
        raise ParameterException(
            f"Budget B={cfg.budget:g} exceeds the ground set size n={oracle.n}"
        )
    if cfg.constraint == CostKind.UNIFORM:
        guarantee = theorem1_check(
            oracle, model, int(cfg.margin), cfg.trials, cfg.seed, mu=cfg.mu
        )
        count = theorem2_check(oracle, model, cfg.trials, cfg.seed, mu=cfg.mu)
    else:
        guarantee = knapsack_guarantee_check(
            oracle, model, cfg.trials, cfg.seed, mu=cfg.mu
        )
        count = gdgs_count_check(oracle, model, cfg.trials, cfg.seed, mu=cfg.mu)

    report = {"guarantee": guarantee, "count": count}
    print(msgspec.json.format(msgspec.json.encode(report)).decode())
    if not (guarantee.passed and count.passed):
        logger.error("Guarantee check failed on %s", cfg.instance or f"n={cfg.n}")
        return EXIT_INVARIANT
    return EXIT_OK


def run_inspect(args: argparse.Namespace) -> int:
    """Print the ingestion metadata of an instance as JSON."""
    graph = ingest_graph(
        args.instance,
        args.graph_format,
        symmetrize=args.symmetrize,
        default_probability=args.probability,
    )
    print(msgspec.json.format(msgspec.json.encode(graph.metadata)).decode())
    return EXIT_OK


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the process exit code."""
    if isinstance(error, InstanceException):
        return EXIT_INSTANCE
    if isinstance(error, InvariantViolationException):
        return EXIT_INVARIANT
    if isinstance(error, ParameterException | SizeLimitException | ValueError):
        return EXIT_USAGE
    return EXIT_FAILURE


async def _async_main(argv: list[str] | None = None) -> int:
    """Main async entry point."""
    parser = setup_argument_parser()
    args = parser.parse_args(argv)

    # Set log level
    logger.set_level(args.loglevel)

    try:
        if args.subcommand == "bench":
            return await run_bench(args)
        if args.subcommand == "inspect":
            return await asyncio.to_thread(run_inspect, args)
        cfg = _cli_config(args)
        if args.subcommand == "oracle":
            return await asyncio.to_thread(run_oracle, cfg)
        return await asyncio.to_thread(solve, cfg)
    except DivGreedyException as e:
        code = exit_code_for(e)
        logger.error("%s", e, exc_info=code == EXIT_INVARIANT)
        return code
    except ValueError as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except OSError as e:
        logger.error("Cannot write output: %s", e)
        return EXIT_FAILURE


def main(argv: list[str] | None = None) -> None:
    """Main entry point."""
    try:
        if sys.platform == "win32":
            import winloop  # type: ignore[import]

            code = winloop.run(_async_main(argv))
        else:
            import uvloop  # type: ignore[import]

            code = uvloop.run(_async_main(argv))
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        sys.exit(130)
    except Exception as e:
        logger.error("Unexpected error: %s", e, exc_info=True)
        sys.exit(EXIT_FAILURE)
    sys.exit(code)

