"""Exception hierarchy shared by all modules."""


class FinslerError(Exception):
    """Base class for every error raised by :mod:`blfinsler`."""


class InputError(FinslerError, ValueError):
    """Malformed or non-finite input."""


class DomainError(FinslerError, ValueError):
    """A point, segment or stencil left the domain."""


class InvalidSpecError(FinslerError, ValueError):
    """A metric, map or twist description does not define a valid object."""


class InvalidStructureError(FinslerError):
    """A Finsler structure produced a non-positive value where positivity is required."""


class NumericalError(FinslerError, ArithmeticError):
    """Integration or inversion failed numerically."""


class EvaluationError(FinslerError):
    """A user supplied function produced a non-finite value."""


class ConfigurationError(FinslerError, ValueError):
    """Unsupported parameter combination or mismatched grids."""


class ResolutionError(FinslerError):
    """The discretisation is too coarse for the requested computation."""


class DegenerateMapError(FinslerError):
    """A map has a singular differential at a test point."""
