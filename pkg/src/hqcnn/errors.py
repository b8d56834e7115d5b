"""Exception hierarchy shared by every module."""


class HqcnnError(Exception):
    """Base class; the CLI maps any subclass to exit code 1."""


class ShapeError(HqcnnError, ValueError):
    pass


class EncodingError(HqcnnError, ValueError):
    """Raised when a segment cannot be amplitude-encoded (zero norm)."""


class NumericsError(HqcnnError, ArithmeticError):
    pass


class ParseError(HqcnnError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(HqcnnError, ValueError):
    pass


class MetricError(HqcnnError, ValueError):
    pass


class DegenerateError(HqcnnError, ValueError):
    pass


class ConfigError(HqcnnError, ValueError):
    pass
