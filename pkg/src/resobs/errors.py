"""Exception types shared across the package."""


class ResobsError(Exception):
    """Base class for all package errors."""


class DimensionError(ResobsError):
    """Operands have incompatible or invalid shapes."""


class DefinitenessError(ResobsError):
    """A matrix required to be positive definite is not.

    ``pivot`` is the zero-based index of the Cholesky pivot that failed,
    ``context`` names the offending object (edge, node, ...).
    """

    def __init__(self, message, pivot=None, context=None):
        super().__init__(message)
        self.pivot = pivot
        self.context = context


class IntegrationError(ResobsError):
    """A derivative evaluation produced non-finite values at time ``t``."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ParameterError(ResobsError):
    """A scalar design or model parameter is out of its admissible range."""


class InfeasibilityError(ResobsError):
    """A Riccati solution lost positivity or boundedness at time ``t``.

    Signals that the requested attenuation level is not achievable on the
    given horizon. ``stage`` is "detector" or "observer", ``node`` the
    zero-based node index.
    """

    def __init__(self, message, t=None, gamma=None, node=None, stage=None):
        super().__init__(message)
        self.t = t
        self.gamma = gamma
        self.node = node
        self.stage = stage


class DivergenceError(ResobsError):
    """The simulated coupled state became non-finite at time ``t``."""

    def __init__(self, message, t=None, node=None):
        super().__init__(message)
        self.t = t
        self.node = node


class ScenarioError(ResobsError):
    """A scenario file failed to parse or validate. ``field`` names the culprit."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
