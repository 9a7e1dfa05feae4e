"""Exception types shared across the package."""


class TdasDickeError(Exception):
    """Base class for all package errors."""


class DomainError(TdasDickeError):
    """A formula was evaluated outside its validity regime (negative radicand etc.)."""


class InvariantViolation(TdasDickeError):
    """Input violates a structural invariant (e.g. r^2 + s^2 != 2)."""


class NotAFixedPoint(TdasDickeError):
    """The requested fixed point does not exist at these parameters."""


class DegenerateFixedPoint(TdasDickeError):
    """Linearization requires |j_z| bounded away from zero."""


class StepTooLarge(TdasDickeError):
    """Integration step exceeds the delay, so the stepper would leap over history."""


class NonFiniteState(TdasDickeError):
    """The integrated state diverged or became non-finite."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class SearchFailed(TdasDickeError):
    """No characteristic-root candidate survived Newton refinement."""

    def __init__(self, message, candidates=(), residuals=()):
        super().__init__(message)
        self.candidates = list(candidates)
        self.residuals = list(residuals)


class SingularAtFrequency(TdasDickeError):
    """The Fourier-space transfer matrix is singular at this frequency."""

    def __init__(self, message, nu=None):
        super().__init__(message)
        self.nu = nu


class DivergentFluctuations(TdasDickeError):
    """The steady-state fluctuation integral diverges (marginal or unstable mode)."""

    def __init__(self, message, nu=None):
        super().__init__(message)
        self.nu = nu


class ConfigError(TdasDickeError):
    """Invalid or unknown configuration input."""
