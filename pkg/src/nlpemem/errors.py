"""Exception types shared across the toolkit."""


class NlpeError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(NlpeError, ValueError):
    """A parameter lies outside its allowed domain."""


class NumericDomainError(ParameterError):
    """Non-finite input handed to a numerical routine."""


class EmptyEnsembleError(ParameterError):
    pass


class SchedulingError(NlpeError):
    """A pulse schedule cannot be laid out in the requested intervals."""


class SchemeError(NlpeError):
    """A pump step addresses a level the level scheme does not define."""


class ShapeError(NlpeError, ValueError):
    pass


class FitError(NlpeError):
    """A fit could not be attempted (rank-deficient or degenerate data)."""


class AmbiguityError(FitError):
    """Data do not determine an oscillation frequency."""


class NoRootError(NlpeError):
    pass


class ConfigurationError(NlpeError):
    pass


class ConductorDomainError(ParameterError):
    """Field requested at a point lying on a conductor."""
