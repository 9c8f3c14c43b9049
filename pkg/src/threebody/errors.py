"""Exception hierarchy shared by the library and the CLI."""


class ThreeBodyError(Exception):
    """Base class for all package errors."""


class ValidationError(ThreeBodyError, ValueError):
    """Invalid physical parameters or inputs (CLI exit code 2)."""


class SingularConfigurationError(ValidationError):
    """Configuration sits on (or numerically at) a singular wall of the potential."""


class NumericalError(ThreeBodyError, RuntimeError):
    """A numerical procedure failed (CLI exit code 3)."""


class IntegrationError(NumericalError):
    pass


class AsymptoticRegimeError(NumericalError):
    """Trajectory stopped before the free-motion regime was reached."""


class EigensolverError(NumericalError):
    pass
