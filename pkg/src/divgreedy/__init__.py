"""divgreedy - Diversifying greedy sampling and evolutionary diversity optimization."""

__version__ = "0.1.0"
__description__ = "Diversifying greedy sampling and evolutionary diversity optimization"

from .cli import main

__all__ = ["main", "__version__", "__description__"]
