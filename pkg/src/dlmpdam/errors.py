"""Exception hierarchy shared by every stage of the clearing pipeline."""

from __future__ import annotations


class DlmpError(Exception):
    """Base class; ``stage`` is filled in by the runner when re-raising."""

    stage: str | None = None


class InputError(DlmpError, ValueError):
    """Malformed or inconsistent input data."""


class TopologyError(InputError):
    """The line list does not describe a tree rooted at node 0."""


class CaseValidationError(InputError):
    """A case file violates its schema; ``location`` points at the field."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class PowerFlowDivergence(DlmpError):
    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")


class SolverError(DlmpError):
    """Infeasible/unbounded model or an LP re-solve that failed."""


class SolverTimeout(SolverError):
    def __init__(self, message: str, incumbent=None):
        self.incumbent = incumbent
        super().__init__(message)


class EnumerationTooLarge(DlmpError):
    """Brute-force oracle refused an instance that is too large to enumerate."""
