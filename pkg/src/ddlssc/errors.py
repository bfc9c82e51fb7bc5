"""Exception hierarchy shared by every module."""


class DdlSscError(Exception):
    """Base class for all library errors."""


class InvalidInput(DdlSscError, ValueError):
    """Argument violates an operation's preconditions."""


class SingularSylvester(DdlSscError, ArithmeticError):
    """The spectra of A and -B overlap, so AW + WB = Q has no unique solution."""


class FormatError(DdlSscError, ValueError):
    """A file on disk does not match its declared layout."""


class DegenerateData(DdlSscError, ValueError):
    """Input carries no usable variation (e.g. all samples identical)."""


class IoError(DdlSscError, OSError):
    """Reading or writing an output artifact failed."""
