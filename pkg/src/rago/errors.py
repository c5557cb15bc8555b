"""Exception types shared across the package."""


class RagoError(Exception):
    """Base class for all package errors."""


class DegenerateInput(RagoError, ValueError):
    pass


class ParseError(RagoError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DisconnectedGraph(RagoError, ValueError):
    pass


class DuplicateEdge(RagoError, ValueError):
    pass


class ConfigError(RagoError, ValueError):
    pass


class ShapeMismatch(RagoError, ValueError):
    pass


class VersionMismatch(RagoError, ValueError):
    pass


class CorruptFile(RagoError, ValueError):
    pass


class NonFiniteLoss(RagoError, FloatingPointError):
    pass
