"""Exception hierarchy shared by all modules."""


class BranchkitError(Exception):
    """Base class for every error raised by this package."""


class DomainError(BranchkitError, ValueError):
    """An argument lies outside the region where the quantity is defined."""


class DegenerateInputError(BranchkitError, ValueError):
    """The input is too short or too trivial for the requested operation."""


class InvalidLawError(BranchkitError, ValueError):
    """An offspring law violates its invariants."""


class PoleError(DomainError):
    """A closed form was evaluated at one of its poles."""


class ConvergenceError(BranchkitError, ArithmeticError):
    """A numerical procedure did not reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class UnderflowError(BranchkitError, ArithmeticError):
    """A quantity became too small to be represented meaningfully."""
