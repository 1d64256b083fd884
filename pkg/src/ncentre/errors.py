"""Exception hierarchy shared by all ncentre modules."""


class NCentreError(Exception):
    """Base class for all errors raised by this package."""


class CollisionPoint(NCentreError):
    """A configuration-space point lies within the collision guard of a centre."""


class NonpositiveEnergy(NCentreError):
    """An operation requiring E > 0 was called with E <= 0."""


class DegenerateElements(NCentreError):
    """Osculating data falls outside the validity region of the pericentral chart."""


class ExactCollision(NCentreError):
    """A zero-angular-momentum radial orbit reached the centre inside a step."""


class NotHyperbolic(NCentreError):
    """Asymptote geometry requested for a non-hyperbolic local orbit."""


class BelowPericentre(NCentreError):
    """Ball radius below the pericentre distance of the orbit."""


class CollisionAbort(NCentreError):
    """Integration was aborted because the state entered the collision guard."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class StepLimit(NCentreError):
    """Integration exceeded the configured maximum number of steps."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class NoConvergence(NCentreError):
    """An iterative limit (extrapolation ladder or Newton solve) failed to contract."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class StencilFailure(NCentreError):
    """A finite-difference stencil could not be evaluated even after shrinking."""


class NotTwoCentres(NCentreError):
    """Two-centre machinery invoked on a configuration with n != 2."""


class WrongItinerary(NCentreError):
    """A converged periodic orbit visits centres in an order other than its word."""

    def __init__(self, message, orbit=None):
        super().__init__(message)
        self.orbit = orbit


class ParseError(NCentreError):
    """Configuration text could not be parsed."""

    def __init__(self, message, line=None, column=None):
        loc = "" if line is None else f" (line {line}, column {column or 1})"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class ValidationError(NCentreError):
    """A parsed configuration violates a module invariant."""
