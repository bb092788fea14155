"""Exception and warning types shared across the package."""


class ParameterError(ValueError):
    """A model, simulation or constraint parameter violates its invariants."""


class DomainError(ValueError):
    """An input lies outside the domain of an operation (e.g. a negative state)."""


class UnsupportedCaseError(ValueError):
    """A closed form or oracle was requested outside the cases it covers."""


class SimulationError(RuntimeError):
    """A simulated trajectory produced a non-finite value."""

    def __init__(self, message, path_index=None, step=None):
        super().__init__(message)
        self.path_index = path_index
        self.step = step


class NegativeControlWarning(UserWarning):
    """The controlled ODE went negative and was clamped at zero."""


class WeakConvergenceWarning(UserWarning):
    """A control violates the positivity conditions for convergence in law."""


class WeightDegeneracyWarning(UserWarning):
    """Importance weights have a small effective sample size."""
