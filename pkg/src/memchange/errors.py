"""Exception types shared across the package."""


class MemchangeError(Exception):
    """Base class for all package errors."""


class InvalidSeries(MemchangeError, ValueError):
    pass


class InvalidInterval(MemchangeError, ValueError):
    pass


class DegenerateDenominator(MemchangeError, ArithmeticError):
    """A variance estimate in a ratio vanished (e.g. a constant window)."""

    def __init__(self, k, message=None):
        self.k = int(k)
        super().__init__(message or f"degenerate variance estimate at k={self.k}")


class WindowTooShort(MemchangeError, ValueError):
    pass


class TableError(MemchangeError):
    pass


class ChecksumError(TableError):
    pass


class SchemaError(TableError):
    pass


class MissingTable(TableError, KeyError):
    def __init__(self, key, message=None):
        self.key = key
        super().__init__(message or f"no quantile table for {key}")

    def __str__(self):
        return self.args[0]


class ConfigError(MemchangeError, ValueError):
    pass
