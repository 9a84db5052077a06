"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`L1MongeError`, so callers can catch the whole family at once.
"""


class L1MongeError(Exception):
    """Base class for all package errors."""


class BadAlpha(L1MongeError, ValueError):
    """Decay exponent is not strictly above 5/2."""


class DecayViolation(L1MongeError, ValueError):
    """A covariance sequence breaks ``c[i+1] <= c[i] / i**alpha``."""


class GridTooLarge(L1MongeError, ValueError):
    pass


class BadDimension(L1MongeError, ValueError):
    pass


class MissingPotential(L1MongeError, ValueError):
    """The potential-restricted cost was requested without a potential."""


class Infeasible(L1MongeError):
    pass


class Unbounded(L1MongeError):
    pass


class NumericFailure(L1MongeError):
    pass


class TooLarge(L1MongeError, ValueError):
    pass


class NonMonotoneLadder(L1MongeError):
    """Transport costs along an epsilon ladder move the wrong way."""


class EntropyUndefined(L1MongeError):
    pass


class OutOfBox(L1MongeError, ValueError):
    """Mass lies outside the bounding box of the entropy grid."""


class IncompatibleGrid(L1MongeError, ValueError):
    pass


class MissingValue(L1MongeError, ValueError):
    pass


class InsufficientSamples(L1MongeError):
    pass


class ConfigError(L1MongeError, ValueError):
    pass


class IOFailure(L1MongeError, OSError):
    pass


class MeasureMismatch(L1MongeError, ValueError):
    """Two objects that must describe the same pair of measures do not."""
