"""Heat kernel, Brownian motion, log-Sobolev and distance computations on
non-isotropic Heisenberg groups."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CapabilityError,
    HeisenkernError,
    InputError,
    NonConvergenceError,
    NumericError,
    ResourceError,
    StructuralError,
)
from .group import AlgebraElement, GroupContext, GroupElement  # noqa: E402

__all__ = [
    "AlgebraElement", "CapabilityError", "GroupContext", "GroupElement", "HeisenkernError",
    "InputError", "NonConvergenceError", "NumericError", "ResourceError", "StructuralError",
    "__version__",
]
