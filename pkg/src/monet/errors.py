"""Exception types shared across the package."""


class MonetError(Exception):
    """Base class for all package errors."""


class ParseError(MonetError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ConfigError(MonetError, ValueError):
    pass


class DimensionError(MonetError, ValueError):
    pass


class NumericalError(MonetError, ArithmeticError):
    pass


class DatasetMissingError(MonetError, FileNotFoundError):
    pass
