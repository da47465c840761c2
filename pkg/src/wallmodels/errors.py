"""Exception types shared across the wall-model toolkit."""


class WallModelError(Exception):
    """Base class for all toolkit errors."""


class InvalidOrderError(WallModelError, ValueError):
    pass


class InvalidDomainError(WallModelError, ValueError):
    pass


class InvalidGridError(WallModelError, ValueError):
    pass


class InvalidStateError(WallModelError, ValueError):
    pass


class InvalidMeshError(WallModelError, ValueError):
    pass


class ConfigurationError(WallModelError, ValueError):
    pass


class RangeError(WallModelError, ValueError):
    pass


class NumericalError(WallModelError, ArithmeticError):
    """Iterative kernel failed; ``index`` identifies the offending item if known."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(WallModelError, ArithmeticError):
    """Raised when an iterative solve exhausts its iteration budget."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SaturationError(WallModelError):
    """Error target not reachable below the point-count cap."""

    def __init__(self, message, cap, best_error):
        super().__init__(message)
        self.cap = cap
        self.best_error = best_error


class ProfileParseError(WallModelError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ProfileDataError(WallModelError, ValueError):
    pass
