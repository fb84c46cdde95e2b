"""Exception hierarchy.

``DataError`` subclasses signal bad input data (CLI exit code 3); they are
all ``ValueError`` so library callers can catch them generically.
"""


class DataError(ValueError):
    """Input data violates a shape, pattern or format contract."""


class IndexOutOfRange(DataError):
    pass


class DuplicateEntry(DataError):
    pass


class ParseError(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class PatternMismatch(DataError):
    """Censor mask has an entry that the regression targets do not."""


class FormatError(DataError):
    pass


class VersionError(FormatError):
    pass


class UnknownFold(DataError):
    pass


class InvalidSpec(ValueError):
    pass


class NonFiniteGradient(ArithmeticError):
    pass
