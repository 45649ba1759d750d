"""Exception types raised across the package."""


class DickePrepError(Exception):
    """Base class for all package errors."""


class NonNormalizableError(DickePrepError, ValueError):
    """A Gaussian exponent with non-positive real part was supplied."""


class DegenerateStateError(DickePrepError, ValueError):
    """A zero-norm state was passed where a physical state is required."""


class RotatedOperatorError(DickePrepError, ValueError):
    """A rotated-quadrature interaction was requested at finite epsilon."""


class SynthesisError(DickePrepError):
    """Planning a protocol for a target state failed."""


class ComplexRootsError(SynthesisError):
    """The target polynomial has complex roots; use the complex solver."""


class PresqueezeInfeasibleError(SynthesisError):
    """Pre-squeezing requires ``N * epsilon < 1``."""


class NoAdmissibleRootError(SynthesisError):
    """The quartic of the two-step complex solver has no usable root."""


class DegreeOverflowError(SynthesisError):
    """The target degree exceeds the requested truncation."""


class ScheduleMismatchError(DickePrepError, ValueError):
    """Outcome vector or grid does not match the number of schedule steps."""
