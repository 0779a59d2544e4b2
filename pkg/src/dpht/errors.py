"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`DphtError`.
The intermediate classes map onto CLI exit codes: :class:`TableError` is a
data problem (3), :class:`DegenerateError` a numeric one (4) and
:class:`TooLarge` an infeasible enumeration (5).
"""


class DphtError(Exception):
    """Base class for all package errors."""


# -- input tables ------------------------------------------------------------


class TableError(DphtError, ValueError):
    """Malformed or invalid table input."""


class EmptyInput(TableError):
    pass


class NonRectangular(TableError):
    pass


class NegativeCount(TableError):
    pass


class NonIntegerCount(TableError):
    pass


class UnknownFixture(TableError, KeyError):
    pass


class OutOfRange(DphtError, ValueError):
    """A value that must lie in a closed interval does not."""


# -- noise -------------------------------------------------------------------


class NonPositiveEpsilon(DphtError, ValueError):
    pass


class NonPositiveSensitivity(DphtError, ValueError):
    pass


# -- numeric degeneracy ------------------------------------------------------


class DegenerateError(DphtError, ArithmeticError):
    """A statistic or estimate is undefined for the given (noisy) input."""


class DegenerateMargins(DegenerateError):
    pass


class DegenerateTotal(DegenerateError):
    pass


class DegeneratePooledCell(DegenerateError):
    pass


class ZeroThetaCell(DegenerateError):
    pass


class ZeroExpectedCell(DegenerateError):
    pass


class SamplerFailure(DegenerateError):
    """A null sampler produced non-finite reference values."""


# -- testbed -----------------------------------------------------------------


class UnsupportedShape(DphtError, ValueError):
    pass


class TooLarge(DphtError):
    """Brute-force enumeration would exceed the configured table cap."""
