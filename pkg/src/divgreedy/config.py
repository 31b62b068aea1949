"""divgreedy configuration processing module."""

from enum import Enum
from pathlib import Path
from typing import TypeVar

import msgspec

from .core import CostKind, ParameterException

T = TypeVar("T")


class LogLevel(Enum):
    """Log level enumeration."""

    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"
    CRITICAL = "critical"


class ProblemKind(str, Enum):
    """Enumeration of benchmark objectives.

    Attributes
    ----------
    COVERAGE : str
        Maximum coverage over graph neighbourhood sets
    INFLUENCE : str
        Influence maximization under the independent cascade model
    ONEMAX : str
        f(X) = |X|
    """

    COVERAGE = "coverage"
    INFLUENCE = "influence"
    ONEMAX = "onemax"


class Algorithm(str, Enum):
    """Enumeration of algorithms that produce a population."""

    DGS = "DGS"
    GDGS = "GDGS"
    DIVEA = "DIVEA"


class GraphFormat(str, Enum):
    """Enumeration of accepted graph file formats."""

    AUTO = "auto"
    DIMACS = "dimacs"
    EDGELIST = "edgelist"


class CascadeParams(msgspec.Struct, frozen=True):
    """Independent cascade settings for influence maximization.

    Attributes
    ----------
    num_simulations : int
        Number R of live-edge samples. Defaults to 100
    probability : float
        Default activation probability of every arc. Defaults to 0.05
    symmetrize : bool
        Turn each undirected edge into two opposing arcs. Defaults to True
    fresh_sampling : bool
        Draw new live-edge samples on every evaluation. Defaults to False
    """

    num_simulations: int = 100
    probability: float = 0.05
    symmetrize: bool = True
    fresh_sampling: bool = False

    def __post_init__(self) -> None:
        if self.num_simulations < 1:
            raise ParameterException(
                f"num_simulations must be >= 1, got {self.num_simulations}"
            )
        if not 0.0 <= self.probability <= 1.0:
            raise ParameterException(
                f"probability must lie in [0, 1], got {self.probability}"
            )


class CliConfig(msgspec.Struct):
    """Parsed flags of one command-line invocation.

    Numeric values are validated against the algorithm preconditions before
    any instance is loaded.
    """

    subcommand: str
    instance: str | None = None
    problem: ProblemKind = ProblemKind.COVERAGE
    constraint: CostKind = CostKind.UNIFORM
    budget: float = 10.0
    margin: float = 2.0
    mu: int = 5
    seed: int = 0
    t_max: int = 10_000
    divea: bool = False
    n: int | None = None
    graph_format: GraphFormat = GraphFormat.AUTO
    cascade: CascadeParams = msgspec.field(default_factory=CascadeParams)
    output: str | None = None
    trials: int = 20

    def __post_init__(self) -> None:
        if self.mu < 1:
            raise ParameterException(f"--mu must be >= 1, got {self.mu}")
        if not self.budget > 0:
            raise ParameterException(f"--B must be positive, got {self.budget}")
        if not 0 <= self.margin <= self.budget:
            raise ParameterException(
                f"--m must satisfy 0 <= m <= B, got m={self.margin}, B={self.budget}"
            )
        if self.constraint == CostKind.UNIFORM and not (
            float(self.budget).is_integer() and float(self.margin).is_integer()
        ):
            raise ParameterException("Uniform constraints need integer --B and --m")
        if self.t_max < 1:
            raise ParameterException(f"--t-max must be >= 1, got {self.t_max}")
        if self.trials < 1:
            raise ParameterException(f"--trials must be >= 1, got {self.trials}")
        if self.n is not None and self.n < 1:
            raise ParameterException(f"--n must be >= 1, got {self.n}")
        if self.instance is None and self.problem != ProblemKind.ONEMAX:
            raise ParameterException(
                f"Problem {self.problem.value} needs an instance file"
            )
        if self.instance is None and self.n is None:
            raise ParameterException("OneMax without an instance needs --n")


def decode_config_file(path: str | Path, type_: type[T]) -> T:
    """Decode a typed configuration file.

    YAML is used for `.yaml`/`.yml` files and JSON otherwise.

    Args:
        path: Path of the configuration file.
        type_: Target msgspec type.

    Returns:
        The decoded configuration.

    Raises:
        ValueError: If the file cannot be read, parsed or validated.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ValueError(f"Cannot read configuration file {path}: {e}") from None

    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            return msgspec.yaml.decode(raw, type=type_)
        return msgspec.json.decode(raw, type=type_)
    except (msgspec.DecodeError, ValueError, TypeError) as e:
        raise ValueError(f"Invalid configuration file {path}: {e}") from None
