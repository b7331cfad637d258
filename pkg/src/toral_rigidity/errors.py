"""Exception hierarchy shared by all subpackages."""


class ToralError(Exception):
    """Base class for every error raised by this package."""


class CapacityError(ToralError):
    """Input exceeds a configured desk-scale limit."""


class PrecisionError(ToralError):
    """A decision could not be certified at the allowed working precision."""


class DegenerateError(ToralError):
    """An exact quantity that must be nonzero vanished."""


class ParseError(ToralError):
    """Malformed matrix, map or config file."""


class NonInvertibleError(ToralError):
    """Newton inversion of a map node failed to converge."""


class RefinementError(ToralError):
    """Periodic-point refinement diverged or hit a singular Jacobian."""


class DivergenceError(ToralError):
    """A fixed-point solver stopped contracting."""


class UnsupportedError(ToralError):
    """The requested computation is outside the supported class of maps."""


class InversionError(ToralError):
    """Inverting a displacement field failed to converge."""


class IllConditionedError(ToralError):
    """Subspace intersection is numerically ill-posed."""


class IndeterminateError(ToralError):
    """A classification sits on a degenerate boundary."""


class ConditioningError(ToralError):
    """A transported frame collapsed along an orbit."""


class LeafPairingError(ToralError):
    """Two points presented as a leaf pair do not contract together."""


class InsufficientScaleError(ToralError):
    """Too few usable scales for a regression."""


class DerivativeEstimationError(ToralError):
    """Finite-difference derivative estimates do not converge."""


class FitError(ToralError):
    """A least-squares fit has too few usable rows."""
