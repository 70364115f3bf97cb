"""Exception hierarchy shared by all modules."""


class MABarrierError(Exception):
    """Base class for every error raised by the package."""


class DomainMembershipError(MABarrierError, ValueError):
    """A point lies outside the set on which the operation is defined."""


class BoundaryError(MABarrierError, ValueError):
    """A point that should lie on the boundary is too far from it."""


class StructureError(MABarrierError, ValueError):
    """Right-hand-side parameters violate the admissible parameter range."""


class ResolutionError(MABarrierError, ValueError):
    """Grid spacing too coarse for the domain."""


class GeometryError(MABarrierError, ValueError):
    """A geometric precondition (e.g. ball containment) failed."""


class ConfigError(MABarrierError, ValueError):
    """Invalid solver or experiment configuration."""


class DivergenceError(MABarrierError, RuntimeError):
    """Iteration residual kept growing; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InsufficientDataError(MABarrierError, ValueError):
    """Too few usable samples for a fit."""


class LevelError(MABarrierError, ValueError):
    """Requested sublevel set is empty."""
