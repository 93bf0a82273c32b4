"""Exception hierarchy."""


class CACError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(CACError, ValueError):
    """A traffic class or scenario parameter violates its constraints."""


class InvalidAllocationError(CACError, ValueError):
    """An allocated bandwidth lies outside ``(0, beta_r]``."""


class UndefinedResidualError(CACError):
    """The residual non-real-time capacity was requested with no non-real-time call active."""


class InfeasibleStateError(CACError):
    """A cell census cannot be served even with every call at its handover floor."""


class DegenerateScenarioError(CACError):
    """The scenario admits no call at all (base capacity of zero calls)."""


class NumericalError(CACError, ArithmeticError):
    """The stationary distribution could not be stabilized."""


class ConvergenceError(CACError):
    """The handover-rate fixed point did not converge.

    Attributes:
        last_iterate: the last handover arrival rate computed.
        residual: absolute change at the last iteration.
        iterations: number of iterations performed.
    """

    def __init__(self, message, last_iterate, residual, iterations):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations


class SimulationInvariantError(CACError, RuntimeError):
    """The event loop detected an internal inconsistency."""


class ConfigError(CACError, ValueError):
    """An experiment configuration failed validation.

    ``violations`` lists every problem found, not only the first.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
