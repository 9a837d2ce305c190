"""Exception hierarchy shared by all modules."""


class ParselError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameter(ParselError, ValueError):
    """A parameter is outside its documented domain."""


class DegenerateInput(ParselError, ValueError):
    """Input statistics make a formula undefined (e.g. two zero variances)."""


class NumericalFailure(ParselError, ArithmeticError):
    """Root finding, quadrature or a linear solve did not converge."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in sorted(self.diagnostics.items()))
        return f"{base} ({extra})"


class ProtocolViolation(ParselError, RuntimeError):
    """A master/worker message broke the protocol contract."""


class EngineError(ParselError, RuntimeError):
    """An executor aborted (worker failure, deadlock)."""


class ConfigError(ParselError, ValueError):
    """Invalid or missing configuration key."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
