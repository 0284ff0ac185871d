"""Exception types shared across the package."""


class PipeRouteError(Exception):
    """Base class for domain errors."""


class GenerationExhausted(PipeRouteError):
    """Every scene redraw failed the solvability check."""


class ParseError(PipeRouteError, ValueError):
    """Malformed scene or path file."""

    def __init__(self, message, field=None, line=None):
        loc = []
        if field is not None:
            loc.append(f"field {field!r}")
        if line is not None:
            loc.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.field = field
        self.line = line


class IllegalAction(PipeRouteError):
    """A step was requested for an action the mask forbids."""


class NotSuccessful(PipeRouteError):
    """A trajectory that never reached the end was used where success is required."""


class NoPath(PipeRouteError):
    """The end cell is unreachable from the start cell."""


class InvalidPath(PipeRouteError, ValueError):
    """Path cells are not adjacent, collide, or do not span start to end."""


class AllMasked(PipeRouteError):
    """Every action is masked; the state is trapped."""


class ShapeMismatch(PipeRouteError, ValueError):
    pass


class FormatError(PipeRouteError):
    """Checkpoint magic, version, CRC or length is wrong."""


class LayoutMismatch(FormatError):
    """Checkpoint was trained against a different observation layout."""


class NonFiniteLoss(PipeRouteError, FloatingPointError):
    pass


class ConfigError(PipeRouteError, ValueError):
    pass
