"""Exception hierarchy shared by all modules."""


class PulseSwitchError(Exception):
    """Base class for every error raised by this package."""


class IntegrationError(PulseSwitchError):
    pass


class DivergenceError(IntegrationError):
    """A state component exceeded the divergence bound."""


class StepUnderflowError(IntegrationError):
    """Step size fell below what the time variable can resolve."""


class NonFiniteStateError(IntegrationError, ValueError):
    pass


class UnknownParameterError(PulseSwitchError, KeyError):
    pass


class NoConvergenceError(PulseSwitchError):
    pass


class NotStableError(PulseSwitchError):
    pass


class DefectiveError(PulseSwitchError):
    pass


class DominanceTieError(PulseSwitchError):
    pass


class HorizonExceededError(PulseSwitchError):
    pass


class BadOrderError(PulseSwitchError, ValueError):
    pass


class NonNegativeLambdaError(PulseSwitchError, ValueError):
    pass


class NoBracketError(PulseSwitchError):
    pass


class UnreachableError(PulseSwitchError):
    pass


class PreconditionViolatedError(PulseSwitchError, ValueError):
    pass


class NoValidCandidateError(PulseSwitchError):
    pass


class RankDeficientError(PulseSwitchError):
    pass


class DefectiveTError(PulseSwitchError):
    pass


class NoDominantRealModeError(PulseSwitchError):
    pass


class ConfigError(PulseSwitchError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
