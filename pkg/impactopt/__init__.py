"""Impact-resistant topology optimization with phase-field damage and exact adjoints."""

from __future__ import annotations

from importlib import metadata

from .config import RunConfig, parse_config, parse_config_dict
from .errors import BudgetExceededError, ConfigError, ImpactOptError, InvalidArgumentError, SolverError
from .scenarios import ImpactProblem

try:
    __version__ = metadata.version("impactopt")
except metadata.PackageNotFoundError:
    __version__ = "0.0.0+unknown"

__all__ = [
    "BudgetExceededError",
    "ConfigError",
    "ImpactOptError",
    "ImpactProblem",
    "InvalidArgumentError",
    "RunConfig",
    "SolverError",
    "__version__",
    "parse_config",
    "parse_config_dict",
]
