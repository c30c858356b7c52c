"""Exception hierarchy shared by every impactopt module."""

from __future__ import annotations

from typing import Any, Mapping, Sequence


class ImpactOptError(Exception):
    """Base class for all errors raised by impactopt."""


class InvalidArgumentError(ImpactOptError, ValueError):
    """A public operation was called outside its preconditions."""


class ConfigError(ImpactOptError, ValueError):
    """A run configuration failed validation.

    ``violations`` lists every problem found, not only the first one.
    """

    def __init__(self, violations: Sequence[str]) -> None:
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"{len(self.violations)} configuration violation(s):\n{lines}")


class SolverError(ImpactOptError, RuntimeError):
    """A time step or an optimization iteration failed to converge."""

    def __init__(
        self,
        message: str,
        *,
        step: int | None = None,
        diagnostics: Mapping[str, Any] | None = None,
    ) -> None:
        self.step = step
        self.diagnostics = dict(diagnostics or {})
        prefix = f"step {step}: " if step is not None else ""
        super().__init__(prefix + message)


class BudgetExceededError(ImpactOptError):
    """A verification run exceeded its wall-time budget."""

    def __init__(self, message: str, partial: Any = None) -> None:
        self.partial = partial
        super().__init__(message)
