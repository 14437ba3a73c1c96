"""Planner exceptions shared by the three models and the CLI."""


class PlanningError(RuntimeError):
    """Base class; ``details`` carries machine-readable diagnostics."""

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


class InfeasibleError(PlanningError):
    """The model has no feasible solution (structurally or after solving)."""


class TargetUnreachableError(InfeasibleError):
    """A reliability or detection threshold is at or above the server reliability."""


class BudgetExhaustedError(PlanningError):
    """The branch-and-bound node budget ran out before optimality was proven."""
