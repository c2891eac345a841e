"""Exception hierarchy for the sgfb package.

Every failure mode raised by the library derives from :class:`SgfbError`,
so callers (and the CLI) can distinguish configuration problems from
runtime/numeric ones with two except clauses.
"""


class SgfbError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SgfbError):
    """Invalid configuration: bad keys, inconsistent rates, unusable values."""


class ParameterError(SgfbError):
    """An argument violates an operation's precondition."""


class DimensionError(SgfbError):
    """Shapes of the involved arrays do not agree."""


class AsymmetryError(SgfbError):
    """A matrix required to be symmetric is not, beyond tolerance."""


class ConvergenceError(SgfbError):
    """An iterative routine hit its iteration cap before converging."""


class RankDeficiencyError(SgfbError):
    """A matrix required to be positive definite is (near) rank deficient.

    Carries the offending eigenvalue in :attr:`eigenvalue`.
    """

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class DegenerateSystemError(SgfbError):
    """A linear system is singular or indefinite; the caller must back off."""


class FilterDesignError(SgfbError):
    """Band-pass design failed: band edges unusable at the sampling rate."""


class SignalLengthError(SgfbError):
    """A signal is too short for the requested filtering operation."""


class EmptyClassError(SgfbError):
    """No trials available for a class that must be represented."""


class SolverError(SgfbError):
    """The sparse solver produced a non-finite objective or failed to make
    progress.  Carries the objective trace up to the failure point."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = tuple(trace)


class DatasetFormatError(SgfbError):
    """A dataset container failed to parse or validate.

    Carries the byte offset at which the problem was detected.
    """

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class ReportFormatError(SgfbError):
    """A report file failed to parse."""


class FoldError(SgfbError):
    """Cross-validation cannot be set up with the requested fold count."""


class SamplingError(SgfbError):
    """A training-fraction subsample would be too small to stratify."""
