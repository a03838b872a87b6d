"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`ShrinkGapError`, so callers (and the command line harness) can
separate numerical failures from validation problems.
"""


class ShrinkGapError(Exception):
    """Base class for all package errors."""


class ValidationError(ShrinkGapError, ValueError):
    """Input outside the documented parameter domain."""


class ConfigError(ValidationError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class BoundVacuous(ValidationError):
    """The diffusion exponent formula has a non-positive denominator."""


class PositivityViolated(ValidationError):
    """A drive amplitude that must stay positive does not."""


class NumericalError(ShrinkGapError):
    """Base class for failures of an iterative or numerical procedure."""


class SmallDivisor(NumericalError):
    """Two diagonal blocks have (nearly) overlapping spectra."""


class GapConditionViolated(NumericalError):
    """The diagonal correction is too large for the small divisor estimate."""


class SmallnessViolated(NumericalError):
    """A perturbation exceeds the admissible size (strict mode only).

    ``measured`` and ``threshold`` carry the two numbers compared.
    """

    def __init__(self, message, measured=None, threshold=None):
        self.measured = measured
        self.threshold = threshold
        super().__init__(message)


class NoConvergence(NumericalError):
    """Progressive diagonalization hit its step cap."""


class SeriesNotConverged(NumericalError):
    """A commutator series hit its term cap before reaching tolerance."""


class NotCommuting(NumericalError):
    """A family assumed to commute at different times does not."""


class StepUnstable(NumericalError):
    """Norm drift during propagation exceeded the hard limit."""

    def __init__(self, period, drift):
        self.period = period
        self.drift = drift
        super().__init__(f"norm drift {drift:.3e} at period {period}")


class DegenerateTrace(NumericalError):
    """An energy trace cannot be fitted in log-log coordinates."""


class BoundViolation(ShrinkGapError):
    """A certified inequality failed while running in strict mode."""

    def __init__(self, checks):
        self.checks = list(checks)
        names = ", ".join(c.name for c in self.checks)
        super().__init__(f"bound check(s) failed: {names}")
