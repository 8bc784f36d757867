"""Exception hierarchy shared by every ineqlab module."""


class IneqLabError(Exception):
    """Base class for all errors raised by ineqlab."""


class NonFinite(IneqLabError):
    """A grid function or input contains NaN or infinite entries."""


class BadExponent(IneqLabError):
    """An exponent lies outside the admissible range of an operation."""


class SpecMismatch(IneqLabError):
    """Two grid objects live on incompatible grids."""


class EmptyDomain(IneqLabError):
    """A tabulated convex function is identically +inf."""


class OutOfDomain(IneqLabError):
    """A point lies outside the tabulated domain."""


class NotConvex(IneqLabError):
    """A table that must be convex has decreasing slopes."""


class NotDominated(IneqLabError):
    """The ordering E <= F fails on a shared knot."""


class PreconditionViolated(IneqLabError):
    """A subgradient precondition fails; the message carries the distance."""


class DomainMismatch(IneqLabError):
    """Two rate functions are tabulated on different intervals."""


class DegenerateInput(IneqLabError):
    """Inputs coincide where distinct inputs are required."""


class NotUnit(IneqLabError):
    """A function expected to have unit norm does not."""


class NotConverged(IneqLabError):
    """A refinement or iteration failed its convergence certificate."""


class DidNotConverge(IneqLabError):
    """An optimizer exhausted its iteration budget."""


class BadInput(IneqLabError):
    """A scalar input is outside its admissible range."""


class RootBracketFailure(IneqLabError):
    """Root finding could not bracket a sign change."""


class StabilityViolation(IneqLabError):
    """A time step produced non-finite values."""


class NegativityClipExceeded(IneqLabError):
    """Clipping negative densities removed more mass than allowed."""


class MonotonicityViolation(IneqLabError):
    """A deficit increased by more than its budget along a flow."""


class ConfigParse(IneqLabError):
    """A configuration file could not be parsed."""


class UnknownSuite(IneqLabError):
    """The requested verification suite does not exist."""


class TruncationWarning(UserWarning):
    """A profile has not decayed to the requested level at the box edge."""
