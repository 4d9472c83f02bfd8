"""Exception hierarchy shared by every module of the package."""


class LcdError(Exception):
    """Base class for all errors raised by graphlcd."""


class FormatError(LcdError, ValueError):
    """Bad magic, unsupported version or otherwise malformed file."""


class CorruptionError(LcdError, ValueError):
    """File payload is shorter or longer than its header declares."""


class DimensionError(LcdError, ValueError):
    """Descriptor dimension disagrees with what the caller expects."""


class EmptyCorpusError(LcdError, ValueError):
    pass


class ConfigError(LcdError, ValueError):
    pass


class StateError(LcdError, RuntimeError):
    """Operation called on an object in the wrong lifecycle state."""


class SequenceError(LcdError, ValueError):
    """Frame ids were added out of order."""


class InsufficientSequenceError(LcdError, ValueError):
    """Training needs at least two frames."""


class InsufficientPointsError(LcdError, ValueError):
    pass


class DegenerateTriangulationError(LcdError, ValueError):
    """All input points are collinear, so no triangulation exists."""


class ProjectionAtInfinityError(LcdError, ArithmeticError):
    pass


class ParseError(LcdError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.path = path
        self.line = line


class ZeroDriftWarning(UserWarning):
    """No compact group was tracked more than once, so the mean drift is 0."""
