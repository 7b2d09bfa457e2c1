"""Exception hierarchy shared by all modules."""


class HeisenkernError(Exception):
    """Base class for every error raised by the package."""


class InputError(HeisenkernError, ValueError):
    """Invalid argument: wrong shape, non-finite entries, nonpositive parameter."""


class StructuralError(InputError):
    """Input violates a structural requirement (e.g. odd dimension)."""


class NumericError(HeisenkernError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance.

    ``diagnostics`` carries whatever the failing routine knew at the time
    (residuals, panel counts, best iterate, ...).
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class CapabilityError(HeisenkernError):
    """Requested quantity needs information the field does not provide."""


class ResourceError(HeisenkernError, MemoryError):
    """Operation would exceed its memory budget."""


class NonConvergenceError(NumericError):
    """Optimizer stopped without satisfying its constraint tolerance."""
