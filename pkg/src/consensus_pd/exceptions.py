"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not match the problem or network."""


class AssumptionViolation(ValueError):
    """A standing assumption on the problem data or the network fails.

    Parameters
    ----------
    message : str
        Human readable description.
    assumption : int
        1 (convexity / feasibility), 2 (regularity of the optimum) or
        3 (communication weights).
    """

    def __init__(self, message, assumption):
        super().__init__(f"Assumption {assumption} violated: {message}")
        self.assumption = assumption


class InfeasibleProblemError(AssumptionViolation):
    def __init__(self, message):
        super().__init__(message, assumption=1)


class DegenerateProblemError(AssumptionViolation):
    def __init__(self, message):
        super().__init__(message, assumption=2)


class ComplementarityError(ValueError):
    """A multiplier is positive on a constraint classified as inactive."""


class ConnectivityError(AssumptionViolation):
    def __init__(self, message):
        super().__init__(message, assumption=3)


class StabilityError(ArithmeticError):
    """The consensus matrix is not Schur, so no Lyapunov solution exists."""


class NumericOverflowError(ArithmeticError):
    """NaN or Inf produced while iterating.

    Attributes
    ----------
    iteration : int
        Index of the iteration whose update produced the bad value.
    """

    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class ConsistencyError(RuntimeError):
    """An internally constructed object fails its defining property."""


class LedgerError(ValueError):
    """A constant of the stability certificate is not strictly positive."""

    def __init__(self, name, value):
        super().__init__(f"ledger constant {name} = {value!r} is not strictly positive")
        self.name = name
        self.value = value


class CertificateRefused(ValueError):
    """Requested stepsize lies outside the certified range."""
