"""Exception hierarchy for riskprof.

Every error carries a machine-readable payload (``to_dict``) so the CLI can
emit it as JSON without inspecting messages.
"""

from __future__ import annotations

from typing import Any


class RiskProfError(ValueError):
    """Base class for all input and contract violations."""

    def __init__(self, message: str, **context: Any) -> None:
        super().__init__(message)
        self.context = context

    def to_dict(self) -> dict[str, Any]:
        return {"error": type(self).__name__, "message": str(self), **self.context}


class NegativeProbability(RiskProfError):
    pass


class SumNotOne(RiskProfError):
    pass


class BelowFloor(RiskProfError):
    pass


class GridMismatch(RiskProfError):
    pass


class DimensionMismatch(RiskProfError):
    pass


class InvalidPortfolio(RiskProfError):
    pass


class InvalidGrid(RiskProfError):
    pass


class AverageCaseNotSupported(RiskProfError):
    pass


class InvariantViolation(RiskProfError):
    pass


class InfeasibleStart(RiskProfError):
    pass


class InvalidTolerance(RiskProfError):
    pass


class BudgetExceeded(RiskProfError):
    pass


class Infeasible(RiskProfError):
    pass


class Unbounded(RiskProfError):
    pass


class NotOnCentLattice(RiskProfError):
    pass


class InsufficientData(RiskProfError):
    pass


class NonPositivePrice(RiskProfError):
    pass


class InvalidPriceSeries(RiskProfError):
    pass
