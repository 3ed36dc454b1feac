class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is finite or defined."""


class InfeasibleParameter(DomainError):
    """A parameter vector lies outside the model's feasible set."""


class InadmissibleEstimator(DomainError):
    """The (model, divergence, kernel, parameter) combination makes the estimate infinite."""


class IntegrationError(RuntimeError):
    """Quadrature could not meet its tolerance."""


class IntegrationDivergence(IntegrationError):
    """The integral appears to be infinite."""


class OptimizationError(RuntimeError):
    """An optimizer could not produce a finite value."""
