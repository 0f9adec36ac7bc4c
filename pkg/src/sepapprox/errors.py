class ParameterError(ValueError):
    """Invalid input parameter (out of range, wrong length, non-positive)."""


class DomainError(ValueError):
    """Operation not defined for the requested element or configuration."""


class SingularSystemError(ArithmeticError):
    """A linear system could not be factorized or solved."""


class ConvergenceError(ArithmeticError):
    """An iterative procedure hit its iteration cap."""


class MeshConstructionError(RuntimeError):
    pass


class TableError(Exception):
    """Base class for table file problems."""


class TableFormatError(TableError):
    pass


class TableVersionError(TableError):
    pass


class TableTruncatedError(TableError):
    pass


class TableHashError(TableError):
    pass


class TableHashWarning(UserWarning):
    pass


class RangeError(ValueError):
    """Query outside the tabulated material range."""


class ConfigurationError(RuntimeError):
    pass


class DegenerateVariationError(ArithmeticError):
    """The exact compliance barely varies, so a relative error is undefined."""
