"""Exception types shared across the package."""


class WeakCouplingError(Exception):
    """Base class for all package errors."""


class NonPositiveDefinite(WeakCouplingError):
    """A precision matrix failed the SPD (Cholesky) check."""


class IllConditionedTransform(WeakCouplingError):
    """Free transport would produce a precision block too ill-conditioned to trust."""


class IncompatibleState(WeakCouplingError):
    """State particle count (or shape) does not match the requested operation."""


class NonConvergentEstimate(WeakCouplingError):
    """Monte Carlo relative standard error exceeded the configured cap."""


class DivergentLimit(WeakCouplingError):
    """The limiting formula is +infinity (the ds1 integral diverges when phi_hat(0) != 0)."""


class ToleranceNotMet(WeakCouplingError):
    """Doubled-resolution discretization error estimate exceeded the configured tolerance."""


class DimensionTooHigh(WeakCouplingError):
    """Tensor-grid oracle requested above its dimension cap."""


class StabilityViolation(WeakCouplingError):
    """Explicit time step violates the stability guard dt * L <= 0.5."""


class PotentialVanishes(WeakCouplingError):
    """A study requiring phi_hat(0) != 0 was given a vanishing potential."""


class PotentialNonVanishing(WeakCouplingError):
    """A study requiring the Theorem-class potential was given phi_hat(0) != 0 or too low order."""


class ConfigError(WeakCouplingError):
    """Malformed configuration file, flag, or study specification."""


class IoError(WeakCouplingError):
    """Report emission failed at the filesystem level."""
