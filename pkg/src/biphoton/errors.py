"""Exception hierarchy shared by all modules."""


class BiphotonError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(BiphotonError, ValueError):
    pass


class SingularDenominatorError(InvalidParameterError):
    """A resonance denominator of a rate or amplitude formula vanishes."""


class ForbiddenChannelError(InvalidParameterError):
    """A decay channel has zero strength, so its decay time is infinite."""


class NearFieldDomainError(BiphotonError, ValueError):
    """The compact far-field two-photon exchange was evaluated below its
    validity threshold; use the quadrature form instead."""


class GeometryDomainError(BiphotonError, ValueError):
    pass


class PoleInDomainError(BiphotonError, ValueError):
    pass


class NonConvergenceError(BiphotonError, RuntimeError):
    pass


class StepUnderflowError(BiphotonError, RuntimeError):
    pass


class MaxStepsError(BiphotonError, RuntimeError):
    pass


class NonFiniteError(BiphotonError, FloatingPointError):
    pass


class DegenerateTrajectoryError(BiphotonError, ValueError):
    pass


class ConfigError(BiphotonError, ValueError):
    pass
