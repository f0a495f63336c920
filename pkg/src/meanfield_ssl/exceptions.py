"""Exception types raised by the library.

Every error derives from :class:`ValueError` (or :class:`RuntimeError` for
solver failures) so callers that only care about bad input can catch the
builtin type.
"""


class InvalidArgumentError(ValueError):
    """An argument is outside its documented domain."""


class InfeasibleStratificationError(ValueError):
    """Fewer labeled slots than classes, so every class cannot be labeled."""


class DatasetFormatError(ValueError):
    """A dataset file could not be turned into a valid dataset."""


class NonNumericFeatureError(DatasetFormatError):
    """A feature cell could not be parsed as a finite float."""


class TooFewClassesError(DatasetFormatError):
    """The label column holds fewer than two distinct classes."""


class DegenerateBandwidthError(ValueError):
    """The tuned RBF bandwidth is zero (all k-th neighbor distances vanish)."""


class SizeGuardError(ValueError):
    """Exhaustive enumeration was requested on an instance that is too large."""


class NoRootError(RuntimeError):
    """No positive root of the tuning equation could be bracketed."""


class ConfigError(ValueError):
    """An experiment configuration is invalid."""
