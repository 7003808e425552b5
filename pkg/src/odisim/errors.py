"""Exception and warning types shared across the package."""


class OdisimError(Exception):
    """Base class for all package errors."""


class ConfigError(OdisimError, ValueError):
    """Invalid configuration: parse failure or invariant violation."""


class MathDomainError(OdisimError, ValueError):
    """An operation was evaluated outside its mathematical domain."""


class DegenerateDenominatorError(MathDomainError):
    """The discounted-score denominator is zero; the coefficient is undefined."""


class GrowthBoundError(MathDomainError):
    """A drift/diffusion evaluation violated the configured growth bound."""

    def __init__(self, magnitude: float, bound: float):
        self.magnitude = magnitude
        self.bound = bound
        super().__init__(
            f"growth bound violated: |value| = {magnitude:.6g} exceeds {bound:.6g}"
        )


class BoundaryLeakError(OdisimError):
    """Quadrature grid too small: boundary nodes carry non-negligible mass."""


class RefinementError(OdisimError):
    """Partition refinement exhausted its depth budget."""


class NonConvergenceError(OdisimError):
    """An iterative refinement did not meet its tolerance within budget."""


class ValidationFailure(OdisimError):
    """One or more property suites failed their gate."""


class DistinctDiscountWarning(UserWarning):
    """Two players share a discount rate; formulas tolerate it but the model assumes distinct rates."""


class DegenerateTotalWarning(UserWarning):
    """All past scores are zero; the team discounted total vanishes."""
