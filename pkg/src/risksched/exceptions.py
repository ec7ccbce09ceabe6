"""Exception types shared across the package."""


class ContractError(ValueError):
    """An argument violated a documented precondition (shape, range, symmetry)."""


class NumericalError(RuntimeError):
    """A computation failed for numerical reasons (singularity, divergence)."""


class SingularContactError(NumericalError):
    """Contact-space inertia is numerically singular.

    Carries the phase / time context it occurred in, when known.
    """

    def __init__(self, message, phase=None, step=None):
        super().__init__(message)
        self.phase = phase
        self.step = step


class NeuroticBreakdown(NumericalError):
    """The Gaussian expectation of the exponential value function diverged.

    Raised when the completion matrix loses positive definiteness, i.e. the
    risk sensitivity is too large for the current noise level and value
    curvature.  ``step`` is the backward-pass time index (set by the caller
    that knows it) and ``eigenvalue`` the offending smallest eigenvalue.
    """

    def __init__(self, message, step=None, eigenvalue=None):
        super().__init__(message)
        self.step = step
        self.eigenvalue = eigenvalue


class RegularizationError(NumericalError):
    """Control Hessian stayed indefinite at the maximum regularization."""


class NotFittedError(RuntimeError):
    """A solver method that requires a completed fit was called before fit."""
