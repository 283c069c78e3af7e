"""Exception hierarchy shared by all lroom modules.

The CLI maps these onto process exit codes (see ``lroom.cli``).
"""


class LroomError(Exception):
    """Base class for all package errors."""


class ConfigurationError(LroomError, ValueError):
    """Invalid user input: bad parameter ranges, unknown tags, malformed files."""


class AssemblyError(LroomError):
    """Mesh or operator construction failed (degenerate elements, ambiguous nodes)."""


class NumericalError(LroomError, ArithmeticError):
    """A linear solve broke down or produced non-finite values."""

    def __init__(self, message, s=None):
        super().__init__(message)
        self.s = s


class FittingError(NumericalError):
    """Rational fitting did not reach the requested accuracy."""

    def __init__(self, message, misfit=None):
        super().__init__(message)
        self.misfit = misfit


class ParameterError(NumericalError):
    """Weeks parameters would overflow the time reconstruction."""


class MissingArtifactError(LroomError, FileNotFoundError):
    """An upstream archive or file required by a command is absent."""
