from gmix.config import ExperimentConfig, load_config, parse_config
from gmix.core import ExperimentResult, run
from gmix.version import __version__

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "load_config",
    "parse_config",
    "run",
    "__version__",
]
