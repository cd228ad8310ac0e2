"""Exception hierarchy shared by the library and the CLI."""


class McvdError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DomainError(McvdError, ValueError):
    """An argument lies outside the domain of the operation."""

    exit_code = 2


class ConfigError(McvdError, ValueError):
    exit_code = 2


class InfeasibleError(McvdError, ValueError):
    """Bounds admit no feasible schedule or allocation."""

    exit_code = 2


class NumericError(McvdError, ArithmeticError):
    """A numerical routine failed to reach its accuracy target."""

    exit_code = 3

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
