"""Exception hierarchy shared by all modules."""


class QuartetError(Exception):
    """Base class for package errors."""


class ValidationError(QuartetError, ValueError):
    """Invalid input: out-of-range parameter, mismatched shapes, bad config."""


class NumericalError(QuartetError, RuntimeError):
    """A numerical procedure failed (integrator, optimizer, null space, ...)."""


class LabelingError(NumericalError):
    """Eigenstates could not be unambiguously identified with Fock states."""


class ClosureError(NumericalError):
    """An operator basis is not closed under the adjoint generator."""


class NoStopbandError(NumericalError):
    """Transmission never drops below the stopband threshold."""
